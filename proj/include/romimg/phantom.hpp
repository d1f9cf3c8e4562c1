#ifndef ROMIMG_PHANTOM_HPP
#define ROMIMG_PHANTOM_HPP

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "romimg/media.hpp"

namespace romimg {

namespace detail {

// Half-sample symmetric reflection of an index into [0, n).
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

inline std::vector<double> gaussian_kernel(double width_cells) {
  if (width_cells <= 0.0) return {1.0};
  const int half = static_cast<int>(std::ceil(3.0 * width_cells));
  std::vector<double> k(static_cast<std::size_t>(2 * half + 1));
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    const double v = std::exp(-0.5 * (i / width_cells) * (i / width_cells));
    k[static_cast<std::size_t>(i + half)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace detail

/// Kinematic model by separable truncated-Gaussian convolution. The widths
/// are the kernel standard deviations in meters; edges are extended by
/// reflection, so the output stays within [min c, max c].
inline VelocityModel gaussian_smooth_velocity(const VelocityModel& model, double width_x, double width_y) {
  model.validate();
  require(width_x >= 0.0 && width_y >= 0.0, "smoothing widths must be non-negative");
  const auto& g = model.grid;
  const auto kx = detail::gaussian_kernel(width_x / g.h);
  const auto ky = detail::gaussian_kernel(width_y / g.h);
  const int hx = static_cast<int>(kx.size() / 2), hy = static_cast<int>(ky.size() / 2);

  Vector tmp(g.size());
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      double s = 0.0;
      for (int d = -hx; d <= hx; ++d)
        s += kx[static_cast<std::size_t>(d + hx)] * model.c[g.index(detail::reflect_index(ix + d, g.nx), iy)];
      tmp[g.index(ix, iy)] = s;
    }
  VelocityModel out = model;
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      double s = 0.0;
      for (int d = -hy; d <= hy; ++d)
        s += ky[static_cast<std::size_t>(d + hy)] * tmp[g.index(ix, detail::reflect_index(iy + d, g.ny))];
      out.c[g.index(ix, iy)] = s;
    }
  // Convex weights keep the range; clamp the last-ulp excursions.
  const double lo = model.c.minCoeff(), hi = model.c.maxCoeff();
  out.c = out.c.cwiseMax(lo).cwiseMin(hi);
  return out;
}

enum class PhantomKind { two_reflectors, layered, point, circular_phantom };

inline PhantomKind phantom_kind_from_string(const std::string& s) {
  if (s == "two_reflectors") return PhantomKind::two_reflectors;
  if (s == "layered") return PhantomKind::layered;
  if (s == "point") return PhantomKind::point;
  if (s == "circular_phantom") return PhantomKind::circular_phantom;
  throw ValidationError("unknown phantom kind '" + s + "'");
}

struct Layer {
  double top_depth = 0.0;  // meters below the top edge
  double velocity = 0.0;
};

struct Inclusion {
  double cx = 0.0, cy = 0.0;  // center, meters from the grid origin
  double radius = 0.0;        // meters
  double velocity = 0.0;
  int star_points = 0;        // 0 = round, otherwise a star with this many lobes
};

/// Parameters for the synthetic models. Geometry is in meters relative to
/// the grid origin; unused fields are ignored by the other kinds.
struct PhantomParams {
  Grid2D grid{80, 80, 10.0};
  BoundaryLabels boundary{};

  // Smooth background: linear in depth plus a lateral undulation.
  double c_top = 2000.0;
  double c_bottom = 3000.0;
  double lateral_amplitude = 0.0;  // fraction of the local background

  // two_reflectors: a branching upper reflector and a deeper flat one, each
  // `reflector_thickness` nodes thick.
  double reflector_velocity = 1000.0;
  int reflector_thickness = 2;
  double upper_depth = 0.0;    // 0 = 35% of the depth
  double lower_depth = 0.0;    // 0 = 65% of the depth
  double branch_drop = 0.0;    // extra depth reached by the branch, 0 = 12% of the depth
  double reflector_x0 = 0.0;   // lateral extent, 0/0 = 20%..80% of the width
  double reflector_x1 = 0.0;

  // layered
  std::vector<Layer> layers;

  // point: disk of `point_radius` meters (0 = single node) at (point_x, point_y)
  double point_x = 0.0, point_y = 0.0;
  double point_radius = 0.0;
  double contrast = 0.1;  // relative velocity perturbation

  // circular_phantom
  double phantom_diameter = 0.17;
  double coupling_velocity = 1500.0;
  double tissue_velocity = 1540.0;
  double fat_velocity = 1470.0;
  double fat_thickness = 0.01;
  double fat_roughness = 0.002;
  std::vector<Inclusion> inclusions;  // empty = six default lesions
};

/// Model together with its reflector-free background and ground-truth masks
/// (one node list per reflector).
struct Phantom {
  VelocityModel model;
  VelocityModel background;
  std::vector<std::vector<int>> reflectors;
};

namespace detail {

inline Vector smooth_background(const PhantomParams& p) {
  const auto& g = p.grid;
  Vector c(g.size());
  const double depth = (g.ny - 1) * g.h, width = (g.nx - 1) * g.h;
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      const double z = iy * g.h / depth;
      const double base = p.c_top + (p.c_bottom - p.c_top) * z;
      const double lat = 1.0 + p.lateral_amplitude * std::sin(2.0 * std::numbers::pi * ix * g.h / width) *
                                   std::sin(std::numbers::pi * z);
      c[g.index(ix, iy)] = base * lat;
    }
  return c;
}

// Rasterize a thick polyline segment: nodes whose depth index lies in
// [row(x), row(x) + thickness) for x between the endpoints.
inline void draw_segment(const Grid2D& g, double x0, double y0, double x1, double y1, int thickness,
                         std::vector<int>& out) {
  const int ix0 = static_cast<int>(std::lround(std::min(x0, x1) / g.h));
  const int ix1 = static_cast<int>(std::lround(std::max(x0, x1) / g.h));
  for (int ix = ix0; ix <= ix1; ++ix) {
    const double t = x1 == x0 ? 0.0 : (ix * g.h - x0) / (x1 - x0);
    const int iy = static_cast<int>(std::lround((y0 + t * (y1 - y0)) / g.h));
    for (int d = 0; d < thickness; ++d) {
      require(g.contains(ix, iy + d) && ix > 0 && ix < g.nx - 1 && iy + d > 0 && iy + d < g.ny - 1,
              "reflector outside the domain interior");
      out.push_back(g.index(ix, iy + d));
    }
  }
}

inline void unique_sort(std::vector<int>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace detail

/// Deterministic synthetic velocity models.
inline Phantom make_phantom(PhantomKind kind, const PhantomParams& p) {
  const auto& g = p.grid;
  g.validate();
  Phantom out;
  out.background = VelocityModel{g, detail::smooth_background(p), p.boundary};
  const double depth = (g.ny - 1) * g.h, width = (g.nx - 1) * g.h;

  switch (kind) {
    case PhantomKind::two_reflectors: {
      const double x0 = p.reflector_x0 > 0 ? p.reflector_x0 : 0.2 * width;
      const double x1 = p.reflector_x1 > 0 ? p.reflector_x1 : 0.8 * width;
      const double zu = p.upper_depth > 0 ? p.upper_depth : 0.35 * depth;
      const double zl = p.lower_depth > 0 ? p.lower_depth : 0.65 * depth;
      const double drop = p.branch_drop > 0 ? p.branch_drop : 0.12 * depth;
      std::vector<int> upper, lower;
      // Upper reflector: flat, then splits into a flat continuation and a
      // downward-dipping branch.
      const double xm = 0.5 * (x0 + x1);
      detail::draw_segment(g, x0, zu, x1, zu, p.reflector_thickness, upper);
      detail::draw_segment(g, xm, zu, x1, zu + drop, p.reflector_thickness, upper);
      detail::draw_segment(g, x0, zl, x1, zl, p.reflector_thickness, lower);
      detail::unique_sort(upper);
      detail::unique_sort(lower);
      out.reflectors = {upper, lower};
      break;
    }
    case PhantomKind::layered: {
      require(!p.layers.empty(), "layered phantom needs at least one layer");
      out.background.c.setConstant(p.layers.front().velocity);
      // Layers are the model itself; the background is the top layer velocity.
      break;
    }
    case PhantomKind::point: {
      const int cx = static_cast<int>(std::lround(p.point_x / g.h));
      const int cy = static_cast<int>(std::lround(p.point_y / g.h));
      require(cx > 0 && cy > 0 && cx < g.nx - 1 && cy < g.ny - 1, "point reflector outside the domain interior");
      std::vector<int> nodes;
      const int r = static_cast<int>(std::ceil(p.point_radius / g.h));
      for (int iy = cy - r; iy <= cy + r; ++iy)
        for (int ix = cx - r; ix <= cx + r; ++ix) {
          const double d = std::hypot(ix - cx, iy - cy) * g.h;
          if (d <= p.point_radius + 1e-9 * g.h) {
            require(ix > 0 && iy > 0 && ix < g.nx - 1 && iy < g.ny - 1, "point reflector outside the domain interior");
            nodes.push_back(g.index(ix, iy));
          }
        }
      out.reflectors = {nodes};
      break;
    }
    case PhantomKind::circular_phantom: {
      out.background.c.setConstant(p.coupling_velocity);
      break;
    }
  }

  out.model = out.background;
  switch (kind) {
    case PhantomKind::two_reflectors:
      for (const auto& r : out.reflectors)
        for (int i : r) out.model.c[i] = p.reflector_velocity;
      break;
    case PhantomKind::layered: {
      std::vector<Layer> layers = p.layers;
      std::sort(layers.begin(), layers.end(), [](const Layer& a, const Layer& b) { return a.top_depth < b.top_depth; });
      for (std::size_t l = 1; l < layers.size(); ++l) {
        require(layers[l].top_depth > 0 && layers[l].top_depth < depth, "layer interface outside the domain");
        const int iy = static_cast<int>(std::lround(layers[l].top_depth / g.h));
        std::vector<int> iface;
        for (int ix = 0; ix < g.nx; ++ix) iface.push_back(g.index(ix, iy));
        out.reflectors.push_back(iface);
      }
      for (int iy = 0; iy < g.ny; ++iy) {
        double v = layers.front().velocity;
        for (const auto& L : layers)
          if (iy * g.h >= L.top_depth - 1e-9 * g.h) v = L.velocity;
        for (int ix = 0; ix < g.nx; ++ix) out.model.c[g.index(ix, iy)] = v;
      }
      break;
    }
    case PhantomKind::point:
      for (int i : out.reflectors.front()) out.model.c[i] *= (1.0 + p.contrast);
      break;
    case PhantomKind::circular_phantom: {
      const double cxm = 0.5 * width, cym = 0.5 * depth;
      const double R = 0.5 * p.phantom_diameter;
      require(R < 0.5 * std::min(width, depth), "phantom does not fit in the domain");
      std::vector<Inclusion> inc = p.inclusions;
      if (inc.empty()) {
        // Four round (benign) and two star-shaped (malignant) lesions.
        const double s = R;
        inc = {{cxm - 0.45 * s, cym - 0.40 * s, 0.12 * s, 1580.0, 5},
               {cxm + 0.40 * s, cym - 0.35 * s, 0.10 * s, 1560.0, 0},
               {cxm - 0.35 * s, cym + 0.20 * s, 0.09 * s, 1565.0, 0},
               {cxm + 0.30 * s, cym + 0.25 * s, 0.11 * s, 1555.0, 0},
               {cxm + 0.00 * s, cym - 0.05 * s, 0.08 * s, 1570.0, 0},
               {cxm + 0.05 * s, cym + 0.55 * s, 0.12 * s, 1585.0, 6}};
      }
      std::vector<std::vector<int>> masks(inc.size());
      for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) {
          const double x = ix * g.h - cxm, y = iy * g.h - cym;
          const double r = std::hypot(x, y);
          const double phi = std::atan2(y, x);
          if (r > R) continue;
          const double inner = R - p.fat_thickness + p.fat_roughness * std::sin(9.0 * phi) * std::cos(4.0 * phi);
          const int i = g.index(ix, iy);
          out.model.c[i] = r > inner ? p.fat_velocity : p.tissue_velocity;
          for (std::size_t k = 0; k < inc.size(); ++k) {
            const auto& q = inc[k];
            const double dx = ix * g.h - q.cx, dy = iy * g.h - q.cy;
            const double rr = std::hypot(dx, dy);
            const double lobe = q.star_points > 0 ? 1.0 + 0.35 * std::cos(q.star_points * std::atan2(dy, dx)) : 1.0;
            if (rr <= q.radius * lobe) {
              out.model.c[i] = q.velocity;
              masks[k].push_back(i);
            }
          }
        }
      out.reflectors = masks;
      break;
    }
  }
  out.model.validate();
  out.background.validate();
  return out;
}

}  // namespace romimg

#endif  // ROMIMG_PHANTOM_HPP
