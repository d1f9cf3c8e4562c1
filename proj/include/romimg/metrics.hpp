#ifndef ROMIMG_METRICS_HPP
#define ROMIMG_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "romimg/imaging.hpp"

namespace romimg {

/// Node mask grown by `radius` cells (Chebyshev distance).
inline std::vector<char> dilate_mask(const Grid2D& g, const std::vector<int>& nodes, int radius) {
  std::vector<char> mask(static_cast<std::size_t>(g.size()), 0);
  for (int i : nodes) {
    const int cx = i % g.nx, cy = i / g.nx;
    for (int iy = std::max(0, cy - radius); iy <= std::min(g.ny - 1, cy + radius); ++iy)
      for (int ix = std::max(0, cx - radius); ix <= std::min(g.nx - 1, cx + radius); ++ix)
        mask[static_cast<std::size_t>(g.index(ix, iy))] = 1;
  }
  return mask;
}

namespace detail {

// Cumulative one-way vertical travel time down column ix.
inline std::vector<double> vertical_time(const VelocityModel& v, int ix) {
  const auto& g = v.grid;
  std::vector<double> t(static_cast<std::size_t>(g.ny), 0.0);
  for (int iy = 1; iy < g.ny; ++iy)
    t[static_cast<std::size_t>(iy)] =
        t[static_cast<std::size_t>(iy - 1)] + 0.5 * g.h * (1.0 / v.at(ix, iy - 1) + 1.0 / v.at(ix, iy));
  return t;
}

// Depth index whose travel time is closest to t, or -1 past the bottom.
inline int depth_for_time(const std::vector<double>& times, double t) {
  if (t > times.back()) return -1;
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  int j = static_cast<int>(it - times.begin());
  if (j > 0 && (j == static_cast<int>(times.size()) || t - times[static_cast<std::size_t>(j - 1)] < *it - t)) --j;
  return j;
}

}  // namespace detail

/// Move mask nodes to the depth where a kinematic model places them: per
/// column, the depth in c_o with the same vertical travel time as in the
/// true model. Identity when the two models agree above the reflector.
inline std::vector<std::vector<int>> remap_masks(const std::vector<std::vector<int>>& masks,
                                                 const VelocityModel& truth, const VelocityModel& c_o) {
  require(truth.grid == c_o.grid, "models are on different grids");
  const auto& g = truth.grid;
  std::vector<std::vector<int>> out;
  for (const auto& mask : masks) {
    std::vector<int> mapped;
    for (int i : mask) {
      const int ix = i % g.nx, iy = i / g.nx;
      const auto t = detail::vertical_time(truth, ix), to = detail::vertical_time(c_o, ix);
      const int best = detail::depth_for_time(to, t[static_cast<std::size_t>(iy)]);
      mapped.push_back(g.index(ix, best < 0 ? g.ny - 1 : best));
    }
    std::sort(mapped.begin(), mapped.end());
    mapped.erase(std::unique(mapped.begin(), mapped.end()), mapped.end());
    out.push_back(std::move(mapped));
  }
  return out;
}

/// Where first-order multiples between the surface and the reflectors land
/// in an image formed with c_o: per column, the depth in c_o whose vertical
/// two-way time matches the multiple's arrival in the true model. Covers the
/// surface multiple of each reflector, peg-legs t_i + t_j and interbed
/// multiples 2 t_j - t_i (j deeper than i).
inline std::vector<std::vector<int>> multiple_masks(const std::vector<std::vector<int>>& masks,
                                                    const VelocityModel& truth, const VelocityModel& c_o) {
  require(truth.grid == c_o.grid, "models are on different grids");
  const auto& g = truth.grid;
  const int R = static_cast<int>(masks.size());
  // Shallowest mask row per reflector and column, -1 when absent.
  std::vector<std::vector<int>> top(static_cast<std::size_t>(R), std::vector<int>(static_cast<std::size_t>(g.nx), -1));
  for (int r = 0; r < R; ++r)
    for (int i : masks[static_cast<std::size_t>(r)]) {
      int& t = top[static_cast<std::size_t>(r)][static_cast<std::size_t>(i % g.nx)];
      if (t < 0 || i / g.nx < t) t = i / g.nx;
    }
  std::vector<std::vector<int>> out;
  auto add = [&](std::vector<int>& mask, int ix, const std::vector<double>& to, double t_two_way) {
    const int iy = detail::depth_for_time(to, 0.5 * t_two_way);
    if (iy >= 0) mask.push_back(g.index(ix, iy));
  };
  for (int i = 0; i < R; ++i)
    for (int j = i; j < R; ++j) {
      std::vector<int> peg, inter;
      for (int ix = 0; ix < g.nx; ++ix) {
        const int yi = top[static_cast<std::size_t>(i)][static_cast<std::size_t>(ix)];
        const int yj = top[static_cast<std::size_t>(j)][static_cast<std::size_t>(ix)];
        if (yi < 0 || yj < 0) continue;
        const auto t = detail::vertical_time(truth, ix), to = detail::vertical_time(c_o, ix);
        const double ti = 2.0 * t[static_cast<std::size_t>(yi)], tj = 2.0 * t[static_cast<std::size_t>(yj)];
        add(peg, ix, to, ti + tj);
        if (tj > ti) add(inter, ix, to, 2.0 * tj - ti);
      }
      if (!peg.empty()) out.push_back(std::move(peg));
      if (!inter.empty()) out.push_back(std::move(inter));
    }
  return out;
}

struct PeakRatio {
  double true_peak = 0.0;      // weakest of the per-reflector maxima
  double spurious_peak = 0.0;  // largest |I| away from every reflector
  Node spurious_at{};
  double ratio = 0.0;
  std::vector<double> reflector_peaks;
};

/// Nodes below the array near field (`skip_rows` rows) and laterally inside
/// the array aperture: the part of the grid the array actually illuminates.
inline std::vector<char> aperture_region(const Grid2D& g, const TransducerArray& array, int skip_rows) {
  int lo = g.nx, hi = -1;
  for (const auto& p : array.positions) {
    lo = std::min(lo, p.ix);
    hi = std::max(hi, p.ix);
  }
  std::vector<char> region(static_cast<std::size_t>(g.size()), 0);
  for (int iy = std::max(0, skip_rows); iy < g.ny; ++iy)
    for (int ix = lo; ix <= hi; ++ix) region[static_cast<std::size_t>(g.index(ix, iy))] = 1;
  return region;
}

/// Union of the dilated node lists, restricted to `within` when given.
inline std::vector<char> band_region(const Grid2D& g, const std::vector<std::vector<int>>& bands, int radius,
                                     const std::vector<char>& within = {}) {
  std::vector<char> region(static_cast<std::size_t>(g.size()), 0);
  for (const auto& b : bands) {
    const auto d = dilate_mask(g, b, radius);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d[i] && (within.empty() || within[i])) region[i] = 1;
  }
  return region;
}

/// Spurious-to-true peak ratio of |I|. The spurious peak is searched inside
/// `region` (whole grid when empty) away from every dilated reflector.
inline PeakRatio spurious_ratio(const Vector& values, const Grid2D& g, const std::vector<std::vector<int>>& reflectors,
                                int radius, const std::vector<char>& region = {}) {
  require(region.empty() || region.size() == static_cast<std::size_t>(g.size()), "region size does not match the grid");
  require(!reflectors.empty(), "no reflector masks given");
  require(values.size() == g.size(), "image size does not match the grid");
  PeakRatio r;
  std::vector<char> any(static_cast<std::size_t>(g.size()), 0);
  r.true_peak = std::numeric_limits<double>::infinity();
  for (const auto& refl : reflectors) {
    require(!refl.empty(), "empty reflector mask");
    const auto mask = dilate_mask(g, refl, radius);
    double peak = 0.0;
    for (Eigen::Index i = 0; i < g.size(); ++i)
      if (mask[static_cast<std::size_t>(i)]) {
        peak = std::max(peak, std::abs(values[i]));
        any[static_cast<std::size_t>(i)] = 1;
      }
    r.reflector_peaks.push_back(peak);
    r.true_peak = std::min(r.true_peak, peak);
  }
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      const int i = g.index(ix, iy);
      if (any[static_cast<std::size_t>(i)] || (!region.empty() && !region[static_cast<std::size_t>(i)])) continue;
      if (std::abs(values[i]) > r.spurious_peak) {
        r.spurious_peak = std::abs(values[i]);
        r.spurious_at = {ix, iy};
      }
    }
  r.ratio = r.true_peak > 0 ? r.spurious_peak / r.true_peak : std::numeric_limits<double>::infinity();
  return r;
}

struct ImageComparison {
  Node peak_a{}, peak_b{};
  double max_a = 0.0, max_b = 0.0;
  double correlation = 0.0;
  bool degenerate = false;  // one of the images is identically zero
  bool has_ratios = false;
  PeakRatio ratio_a, ratio_b;

  std::string text() const {
    std::ostringstream os;
    os << std::setprecision(6) << "peak_a " << peak_a.ix << ' ' << peak_a.iy << " max_a " << max_a << '\n'
       << "peak_b " << peak_b.ix << ' ' << peak_b.iy << " max_b " << max_b << '\n'
       << "correlation " << correlation << (degenerate ? " (degenerate: zero image)" : "") << '\n';
    if (has_ratios)
      os << "spurious_ratio_a " << ratio_a.ratio << "\nspurious_ratio_b " << ratio_b.ratio << '\n';
    return os.str();
  }
};

/// Peak locations, normalized cross-correlation and, when reflector masks
/// are given, spurious-to-true peak ratios of both images.
inline ImageComparison compare_images(const Image& a, const Image& b,
                                      const std::vector<std::vector<int>>& reflectors = {}, int radius = 3,
                                      const std::vector<char>& region = {}) {
  if (!(a.grid == b.grid)) throw ValidationError("images are on different grids");
  ImageComparison c;
  c.peak_a = a.argmax_abs();
  c.peak_b = b.argmax_abs();
  c.max_a = a.max_abs();
  c.max_b = b.max_abs();
  const Vector za = a.values.array() - a.values.mean();
  const Vector zb = b.values.array() - b.values.mean();
  const double na = za.norm(), nb = zb.norm();
  if (na == 0.0 || nb == 0.0) {
    c.degenerate = true;
    c.correlation = 0.0;
  } else {
    c.correlation = za.dot(zb) / (na * nb);
  }
  if (!reflectors.empty()) {
    c.has_ratios = true;
    c.ratio_a = spurious_ratio(a.values, a.grid, reflectors, radius, region);
    c.ratio_b = spurious_ratio(b.values, b.grid, reflectors, radius, region);
  }
  return c;
}

}  // namespace romimg

#endif  // ROMIMG_METRICS_HPP
