#ifndef ROMIMG_IMAGING_HPP
#define ROMIMG_IMAGING_HPP

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "romimg/regularization.hpp"
#include "romimg/rom.hpp"

namespace romimg {

/// Orthonormalized snapshots V = [v^0, ..., v^{n-1}] (N x mn) of a known medium.
struct OrthonormalBasis {
  Matrix V;
  int m = 0;
  int n = 0;
  Grid2D grid;
  std::uint64_t model_hash = 0;
  DiagonalConvention convention = DiagonalConvention::spd_sqrt;

  /// Max entry of |V^T V h^2 - I|.
  double orthonormality_error() const {
    const Matrix G = (V.transpose() * V) * (grid.h * grid.h);
    return (G - Matrix::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
  }
};

/// Everything derived from the kinematic model: basis, data and ROM.
struct KinematicModel {
  OrthonormalBasis basis;
  SampledData data;
  ReducedModel rom;
  std::uint64_t model_hash = 0;
};

inline KinematicModel kinematic_basis(const VelocityModel& c_o, const TransducerArray& array, const WaveletSpec& w,
                                      int substeps = 0, DiagonalConvention conv = DiagonalConvention::spd_sqrt) {
  const ForwardSetup f = make_forward(c_o, array, w, substeps);
  const SnapshotSet U = compute_snapshots(f.propagator, f.b, w.n());
  Orthogonalized orth = orthogonalize_snapshots(U, conv);
  KinematicModel k;
  k.model_hash = c_o.hash();
  k.basis = {std::move(orth.V), array.m(), w.n(), c_o.grid, k.model_hash, conv};
  k.data = simulate_data(f.propagator, f.b, w.n2);
  k.rom = reduce(k.data, conv);
  return k;
}

struct Image {
  Grid2D grid;
  Vector values;
  std::string method;  // "BP", "RTM", "BP-composite", ...
  std::uint64_t kinematic_hash = 0;
  std::uint64_t rom_hash = 0;
  std::uint64_t kinematic_rom_hash = 0;
  double depth_a0 = 1.0;
  double depth_a1 = 0.0;
  std::string partition;

  double at(int ix, int iy) const { return values[grid.index(ix, iy)]; }
  double max_abs() const { return values.cwiseAbs().maxCoeff(); }
  Node argmax_abs() const {
    Eigen::Index i = 0;
    values.cwiseAbs().maxCoeff(&i);
    return {static_cast<int>(i) % grid.nx, static_cast<int>(i) / grid.nx};
  }
};

/// The kinematic ROM matched to the data-side regularization: the same
/// mu is applied to the kinematic D^0 so that the difference of the two
/// projected propagators does not carry the regularization itself.
inline ReducedModel matched_kinematic_rom(const KinematicModel& kin, double mu) {
  if (mu == kin.rom.mu) return kin.rom;
  SampledData d = kin.data;
  d.samples.front() = mu * kin.data[0];
  ReducedModel r = reduce(d, kin.rom.convention, mu);
  return r;
}

/// I(x) = V_o(x) (P - P_o) V_o(x)^T at every grid node.
inline Image backprojection_image(const ReducedModel& rm, const KinematicModel& kin) {
  require(rm.m == kin.basis.m && rm.n == kin.basis.n, "data and kinematic model have different m or n");
  require(rm.convention == kin.basis.convention && rm.convention == kin.rom.convention,
          "data and kinematic ROMs use different diagonal-block conventions");
  const ReducedModel rom_o = matched_kinematic_rom(kin, rm.mu);
  const Matrix dP = rm.P - rom_o.P;
  const Matrix W = kin.basis.V * dP;
  Image img;
  img.grid = kin.basis.grid;
  img.values = W.cwiseProduct(kin.basis.V).rowwise().sum();
  img.method = "BP";
  img.kinematic_hash = kin.model_hash;
  img.rom_hash = rm.hash();
  img.kinematic_rom_hash = rom_o.hash();
  if (!img.values.allFinite()) throw NumericalError("backprojection image has non-finite values");
  return img;
}

inline Image backprojection_image(const SampledData& D, const VelocityModel& c_o, const TransducerArray& array,
                                  const WaveletSpec& w, int substeps = 0,
                                  DiagonalConvention conv = DiagonalConvention::spd_sqrt, double mu = 1.0) {
  require(D.m() == array.m(), "data and array have different transducer counts");
  require(D.n2() == w.n2, "data and wavelet have different sample counts");
  const KinematicModel kin = kinematic_basis(c_o, array, w, substeps, conv);
  return backprojection_image(reduce(D, conv, mu), kin);
}

inline double distance_to_array(const Grid2D& g, const TransducerArray& array, int ix, int iy) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : array.positions) best = std::min(best, std::hypot(ix - p.ix, iy - p.iy) * g.h);
  return best;
}

/// Largest node distance to the array; 1/this is the default depth slope.
inline double max_distance_to_array(const Grid2D& g, const TransducerArray& array) {
  double d = 0.0;
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) d = std::max(d, distance_to_array(g, array, ix, iy));
  return d;
}

/// Multiply by (a0 + a1 * distance to the nearest transducer).
inline Image depth_scale(const Image& img, const TransducerArray& array, double a0, double a1) {
  require(a0 >= 0.0 && a1 >= 0.0, "depth scaling coefficients must be non-negative");
  Image out = img;
  const auto& g = img.grid;
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix)
      out.values[g.index(ix, iy)] *= a0 + a1 * distance_to_array(g, array, ix, iy);
  out.depth_a0 = a0;
  out.depth_a1 = a1;
  return out;
}

inline Image depth_scale(const Image& img, const TransducerArray& array) {
  return depth_scale(img, array, 1.0, 1.0 / max_distance_to_array(img.grid, array));
}

/// Sub-array index ranges (0-based, inclusive) with positive weights.
struct SubArrayPartition {
  std::vector<std::pair<int, int>> ranges;
  std::vector<double> weights;

  void validate(int m) const {
    require(!ranges.empty(), "partition has no sub-arrays");
    require(weights.size() == ranges.size(), "one weight per sub-array required");
    for (std::size_t i = 0; i < ranges.size(); ++i) {
      const auto [a, b] = ranges[i];
      require(a >= 0 && b < m && b - a + 1 >= 2, "sub-array ranges must lie in [0, m) and hold >= 2 transducers");
      require(weights[i] > 0.0, "sub-array weights must be positive");
    }
  }

  /// s evenly spaced sub-arrays of `size` transducers (overlapping when s*size > m).
  static SubArrayPartition overlapping(int m, int s, int size) {
    require(s >= 1 && size >= 2 && size <= m, "invalid sub-array layout");
    SubArrayPartition p;
    for (int i = 0; i < s; ++i) {
      const int first = s == 1 ? 0 : static_cast<int>(std::lround(static_cast<double>(i) * (m - size) / (s - 1)));
      p.ranges.emplace_back(first, first + size - 1);
      p.weights.push_back(1.0);
    }
    return p;
  }

  std::string describe() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < ranges.size(); ++i)
      os << (i ? ";" : "") << ranges[i].first << "-" << ranges[i].second << "@" << weights[i];
    return os.str();
  }
};

struct CompositeResult {
  Image image;
  std::vector<int> failed;  // sub-arrays skipped after a factorization failure
};

/// Weighted sum of backprojection images from the diagonal data blocks of each sub-array.
inline CompositeResult composite_image(const SampledData& D, const SubArrayPartition& part, const VelocityModel& c_o,
                                       const TransducerArray& array, const WaveletSpec& w, int substeps = 0,
                                       DiagonalConvention conv = DiagonalConvention::spd_sqrt,
                                       bool continue_on_failure = true, double mu = 1.0) {
  require(D.m() == array.m(), "data and array have different transducer counts");
  part.validate(array.m());
  CompositeResult r;
  r.image.grid = c_o.grid;
  r.image.values = Vector::Zero(c_o.grid.size());
  r.image.method = "BP-composite";
  r.image.kinematic_hash = c_o.hash();
  r.image.partition = part.describe();
  for (std::size_t i = 0; i < part.ranges.size(); ++i) {
    const auto [a, b] = part.ranges[i];
    try {
      const Image sub = backprojection_image(D.restrict(a, b), c_o, array.subset(a, b), w, substeps, conv, mu);
      r.image.values += part.weights[i] * sub.values;
    } catch (const NumericalError&) {
      if (!continue_on_failure) throw;
      r.failed.push_back(static_cast<int>(i));
    }
  }
  return r;
}

/// Zero-lag cross-correlation of forward fields in c_o with the fields of the
/// time-reversed residual (measured minus c_o-predicted) re-injected through
/// the transducer field.
inline Image rtm_image(const SampledData& D, const VelocityModel& c_o, const TransducerArray& array,
                       const WaveletSpec& w, int substeps = 0) {
  require(D.m() == array.m(), "data and array have different transducer counts");
  require(D.n2() == w.n2, "data and wavelet have different sample counts");
  const ForwardSetup f = make_forward(c_o, array, w, substeps);
  const int K = w.n2;
  const SnapshotSet fwd = compute_snapshots(f.propagator, f.b, K);
  const double h2 = c_o.grid.h * c_o.grid.h;
  const Eigen::Index N = c_o.grid.size();
  const int m = array.m();
  Matrix w_next = Matrix::Zero(N, m);   // w^{k+1}
  Matrix w_next2 = Matrix::Zero(N, m);  // w^{k+2}
  Vector image = Vector::Zero(N);
  for (int k = K - 1; k >= 0; --k) {
    const Matrix residual = D[k] - (f.b.transpose() * fwd.blocks[static_cast<std::size_t>(k)]) * h2;
    Matrix w_cur = f.b * residual;
    if (k + 1 < K) w_cur += 2.0 * f.propagator.apply(w_next) - w_next2;
    detail::check_finite(w_cur, k);
    image += fwd.blocks[static_cast<std::size_t>(k)].cwiseProduct(w_cur).rowwise().sum();
    w_next2 = std::move(w_next);
    w_next = std::move(w_cur);
  }
  Image img;
  img.grid = c_o.grid;
  img.values = std::move(image);
  img.method = "RTM";
  img.kinematic_hash = c_o.hash();
  return img;
}

/// y -> [V_o V^T](x, y) for a fixed node x.
inline Vector delta_diagnostic(const OrthonormalBasis& V_o, const OrthonormalBasis& V, int node) {
  require(V_o.m == V.m && V_o.n == V.n && V_o.grid == V.grid, "bases differ in m, n or grid");
  require(node >= 0 && node < V_o.grid.size(), "probe node outside the grid");
  return V.V * V_o.V.row(node).transpose();
}

/// Full width at half maximum, in cells, of a field along the row through `peak`.
inline int fwhm_cells(const Vector& field, const Grid2D& g, Node peak) {
  const double half = 0.5 * std::abs(field[g.index(peak.ix, peak.iy)]);
  int lo = peak.ix, hi = peak.ix;
  while (lo - 1 >= 0 && std::abs(field[g.index(lo - 1, peak.iy)]) >= half) --lo;
  while (hi + 1 < g.nx && std::abs(field[g.index(hi + 1, peak.iy)]) >= half) ++hi;
  return hi - lo + 1;
}

namespace detail {

// Second-order centered differences inside, second-order one-sided at the ends.
inline void gradient_1d(const double* f, double* df, int n, int stride, double h) {
  if (n < 3) {
    for (int i = 0; i < n; ++i) df[i * stride] = n == 2 ? (f[stride] - f[0]) / h : 0.0;
    return;
  }
  df[0] = (-3.0 * f[0] + 4.0 * f[stride] - f[2 * stride]) / (2.0 * h);
  for (int i = 1; i < n - 1; ++i) df[i * stride] = (f[(i + 1) * stride] - f[(i - 1) * stride]) / (2.0 * h);
  df[(n - 1) * stride] =
      (3.0 * f[(n - 1) * stride] - 4.0 * f[(n - 2) * stride] + f[(n - 3) * stride]) / (2.0 * h);
}

inline std::pair<Vector, Vector> gradient(const Vector& f, const Grid2D& g) {
  Vector gx(g.size()), gy(g.size());
  for (int iy = 0; iy < g.ny; ++iy) gradient_1d(f.data() + g.index(0, iy), gx.data() + g.index(0, iy), g.nx, 1, g.h);
  for (int ix = 0; ix < g.nx; ++ix) gradient_1d(f.data() + ix, gy.data() + ix, g.ny, g.nx, g.h);
  return {gx, gy};
}

}  // namespace detail

/// Schrodinger potential q = sqrt(s) div(c grad(1/sqrt(s))) for impedance s.
inline Vector schrodinger_potential(const VelocityModel& c, const Vector& impedance) {
  c.validate();
  require(impedance.size() == c.grid.size(), "impedance size does not match the grid");
  for (Eigen::Index i = 0; i < impedance.size(); ++i)
    require(std::isfinite(impedance[i]) && impedance[i] > 0.0, "impedance must be positive");
  const Vector root = impedance.cwiseSqrt();
  const Vector inv_root = root.cwiseInverse();
  auto [gx, gy] = detail::gradient(inv_root, c.grid);
  const Vector fx = c.c.cwiseProduct(gx), fy = c.c.cwiseProduct(gy);
  const Vector dfx = detail::gradient(fx, c.grid).first;
  const Vector dfy = detail::gradient(fy, c.grid).second;
  return root.cwiseProduct(dfx + dfy);
}

// Image and field output.

inline std::string field_to_csv(const Vector& v, const Grid2D& g) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) os << (ix ? "," : "") << v[g.index(ix, iy)];
    os << '\n';
  }
  return os.str();
}

/// 16-bit binary PGM (big-endian samples), min-max normalized. The sidecar
/// text records the affine map value = min + (max - min) * pixel / 65535.
inline std::pair<std::string, std::string> field_to_pgm(const Vector& v, const Grid2D& g) {
  const double lo = v.minCoeff(), hi = v.maxCoeff();
  const double span = hi - lo;
  std::string out = "P5\n" + std::to_string(g.nx) + " " + std::to_string(g.ny) + "\n65535\n";
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      const double t = span > 0 ? (v[g.index(ix, iy)] - lo) / span : 0.0;
      const auto p = static_cast<std::uint16_t>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
      out.push_back(static_cast<char>(p >> 8));
      out.push_back(static_cast<char>(p & 0xff));
    }
  std::ostringstream side;
  side << std::setprecision(17) << "min " << lo << "\nmax " << hi << "\nvalue = min + (max - min) * pixel / 65535\n";
  return {out, side.str()};
}

inline void save_field(const std::string& stem, const Vector& v, const Grid2D& g) {
  detail::write_file(stem + ".csv", field_to_csv(v, g));
  auto [pgm, side] = field_to_pgm(v, g);
  detail::write_file(stem + ".pgm", pgm);
  detail::write_file(stem + ".pgm.txt", side);
}

inline void save_image(const std::string& stem, const Image& img) { save_field(stem, img.values, img.grid); }

inline Image load_image_csv(const std::string& path, const Grid2D& g) {
  std::string body = detail::read_file(path);
  for (char& ch : body)
    if (ch == ',') ch = ' ';
  std::istringstream is(body);
  Image img;
  img.grid = g;
  img.values.resize(g.size());
  for (Eigen::Index i = 0; i < img.values.size(); ++i) {
    is >> img.values[i];
    require(!is.fail(), "image CSV has too few values for the grid");
  }
  double extra;
  require(!(is >> extra), "image CSV has more values than the grid");
  return img;
}

/// Grid shape read from the CSV itself: one line per row.
inline Image load_image_csv(const std::string& path, double h = 1.0) {
  const std::string body = detail::read_file(path);
  std::istringstream is(body);
  std::string line;
  int rows = 0, cols = -1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const int c = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
    require(cols < 0 || c == cols, "image CSV rows have different lengths");
    cols = c;
    ++rows;
  }
  require(rows >= 1 && cols >= 1, "image CSV is empty");
  return load_image_csv(path, Grid2D{cols, rows, h});
}

}  // namespace romimg

#endif  // ROMIMG_IMAGING_HPP
