#ifndef ROMIMG_PROPAGATE_HPP
#define ROMIMG_PROPAGATE_HPP

#include <cmath>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "romimg/media.hpp"

namespace romimg {

/// Default margin on (tau/s)^2 * lambda_max; 4 is the stability limit.
inline constexpr double kStabilityTarget = 3.6;

/// P_h = T_s(I + dt^2 A / 2) with dt = tau / s: s leapfrog steps per sample.
class DiscretePropagator {
 public:
  DiscretePropagator(std::shared_ptr<const SymmetrizedOperator> op, double tau, int substeps = 0)
      : op_(std::move(op)), tau_(tau), substeps_(substeps) {
    require(op_ != nullptr, "propagator needs an operator");
    require(tau > 0.0, "tau must be positive");
    if (substeps_ <= 0) substeps_ = default_substeps(op_->lambda_max, tau);
    const double dt = tau_ / substeps_;
    if (!(dt * dt * op_->lambda_max < 4.0)) {
      std::ostringstream os;
      os << "unstable propagator: (tau/s)^2 * lambda_max = " << dt * dt * op_->lambda_max
         << " >= 4 (lambda_max estimate " << op_->lambda_max << ", s = " << substeps_ << ")";
      throw ValidationError(os.str());
    }
  }

  static int default_substeps(double lambda_max, double tau) {
    return std::max(1, static_cast<int>(std::ceil(tau * std::sqrt(lambda_max / kStabilityTarget) - 1e-12)));
  }

  const SymmetrizedOperator& op() const noexcept { return *op_; }
  std::shared_ptr<const SymmetrizedOperator> op_ptr() const noexcept { return op_; }
  double tau() const noexcept { return tau_; }
  int substeps() const noexcept { return substeps_; }
  double fine_step() const noexcept { return tau_ / substeps_; }

  /// One fine leapfrog operator: f + (dt^2 / 2) A f.
  Matrix apply_fine(const Matrix& f) const {
    const double dt = fine_step();
    return f + (0.5 * dt * dt) * (op_->A * f);
  }

  /// T_s(P_fine) f by the three-term recurrence.
  Matrix apply(const Matrix& f) const {
    require(f.rows() == op_->size(), "field size does not match the grid");
    Matrix g_prev = f;
    Matrix g_cur = apply_fine(f);
    for (int j = 1; j < substeps_; ++j) {
      Matrix g_next = 2.0 * apply_fine(g_cur) - g_prev;
      g_prev = std::move(g_cur);
      g_cur = std::move(g_next);
    }
    return g_cur;
  }

 private:
  std::shared_ptr<const SymmetrizedOperator> op_;
  double tau_;
  int substeps_;
};

/// Wavefield snapshots u^k = T_k(P_h) b, each an N x m block.
struct SnapshotSet {
  std::vector<Matrix> blocks;
  Grid2D grid;
  double tau = 0.0;

  int n() const noexcept { return static_cast<int>(blocks.size()); }
  int m() const noexcept { return blocks.empty() ? 0 : static_cast<int>(blocks.front().cols()); }

  /// [u^0, ..., u^{n-1}] as an N x mn matrix.
  Matrix stacked() const {
    Matrix U(grid.size(), static_cast<Eigen::Index>(m()) * n());
    for (int k = 0; k < n(); ++k) U.middleCols(static_cast<Eigen::Index>(k) * m(), m()) = blocks[k];
    return U;
  }
};

namespace detail {
inline void check_finite(const Matrix& f, int step) {
  if (!f.allFinite()) throw NumericalError("non-finite wavefield at step " + std::to_string(step));
}
}  // namespace detail

inline SnapshotSet compute_snapshots(const DiscretePropagator& P, const Matrix& b, int count) {
  require(count >= 1, "snapshot count must be positive");
  require(b.rows() == P.op().size(), "transducer field size does not match the grid");
  SnapshotSet s{{}, P.op().grid, P.tau()};
  s.blocks.reserve(static_cast<std::size_t>(count));
  s.blocks.push_back(b);
  if (count == 1) return s;
  s.blocks.push_back(P.apply(b));
  detail::check_finite(s.blocks.back(), 1);
  for (int k = 1; k + 1 < count; ++k) {
    s.blocks.push_back(2.0 * P.apply(s.blocks[k]) - s.blocks[k - 1]);
    detail::check_finite(s.blocks.back(), k + 1);
  }
  return s;
}

/// Sampled array data D^0..D^{2n-1}, each a symmetric m x m matrix.
struct SampledData {
  std::vector<Matrix> samples;
  double tau = 0.0;
  std::string provenance = "clean";
  /// Largest relative asymmetry removed when the samples were symmetrized.
  double symmetry_deviation = 0.0;

  int n2() const noexcept { return static_cast<int>(samples.size()); }
  int n() const noexcept { return n2() / 2; }
  int m() const noexcept { return samples.empty() ? 0 : static_cast<int>(samples.front().rows()); }
  const Matrix& operator[](int k) const { return samples[static_cast<std::size_t>(k)]; }

  void validate() const {
    require(n2() >= 2 && n2() % 2 == 0, "data must contain an even number (>= 2) of samples");
    require(tau > 0.0, "data sampling interval must be positive");
    for (const auto& D : samples) {
      require(D.rows() == m() && D.cols() == m(), "data samples must all be m x m");
      require(D.allFinite(), "data contains non-finite values");
    }
  }

  std::uint64_t hash() const {
    Hasher h;
    h.add(tau);
    for (const auto& D : samples) h.add(D);
    return h.value();
  }

  /// Leading 2n' samples restricted to transducers [first, last].
  SampledData restrict(int first, int last) const {
    require(first >= 0 && last < m() && first <= last, "restriction range out of bounds");
    SampledData out = *this;
    const int mm = last - first + 1;
    for (auto& D : out.samples) D = Matrix(D.block(first, first, mm, mm));
    return out;
  }

  SampledData truncated(int n_keep) const {
    require(n_keep >= 1 && n_keep <= n(), "truncation must keep between 1 and n blocks");
    SampledData out = *this;
    out.samples.resize(static_cast<std::size_t>(2 * n_keep));
    return out;
  }
};

inline constexpr double kSymmetryTolerance = 1e-12;

/// D = b^T u h^2, symmetrized; throws if the raw asymmetry exceeds tolerance.
inline Matrix data_sample(const Matrix& b, const Matrix& u, double h, double& deviation) {
  Matrix D = (b.transpose() * u) * (h * h);
  const double nrm = D.norm();
  const double asym = nrm > 0 ? (D - D.transpose()).norm() / nrm : 0.0;
  deviation = std::max(deviation, asym);
  if (asym > kSymmetryTolerance)
    throw NumericalError("data reciprocity violated: relative asymmetry " + std::to_string(asym));
  return 0.5 * (D + D.transpose());
}

/// Data for a known medium: D^k = b^T T_k(P_h) b h^2, k = 0..n2-1.
inline SampledData simulate_data(const DiscretePropagator& P, const Matrix& b, int n2) {
  require(n2 >= 2 && n2 % 2 == 0, "number of samples must be even");
  const double h = P.op().grid.h;
  SampledData data;
  data.tau = P.tau();
  data.samples.reserve(static_cast<std::size_t>(n2));
  Matrix u_prev = b;
  data.samples.push_back(data_sample(b, u_prev, h, data.symmetry_deviation));
  Matrix u_cur = P.apply(b);
  detail::check_finite(u_cur, 1);
  data.samples.push_back(data_sample(b, u_cur, h, data.symmetry_deviation));
  for (int k = 2; k < n2; ++k) {
    Matrix u_next = 2.0 * P.apply(u_cur) - u_prev;
    detail::check_finite(u_next, k);
    data.samples.push_back(data_sample(b, u_next, h, data.symmetry_deviation));
    u_prev = std::move(u_cur);
    u_cur = std::move(u_next);
  }
  return data;
}

/// Everything needed to simulate one medium: operator, propagator and b.
struct ForwardSetup {
  std::shared_ptr<const SymmetrizedOperator> op;
  DiscretePropagator propagator;
  Matrix b;
};

inline ForwardSetup make_forward(const VelocityModel& model, const TransducerArray& array, const WaveletSpec& w,
                                 int substeps = 0) {
  w.validate();
  auto op = std::make_shared<const SymmetrizedOperator>(build_symmetrized_operator(model));
  DiscretePropagator P(op, w.tau, substeps);
  Matrix b = build_transducer_field(*op, model, array, w);
  return {op, std::move(P), std::move(b)};
}

/// One substep count stable for every model given. Data and kinematic
/// simulations must share it, otherwise their discrete dispersion differs.
inline int common_substeps(const std::vector<const VelocityModel*>& models, double tau) {
  int s = 1;
  for (const auto* m : models) s = std::max(s, DiscretePropagator::default_substeps(build_symmetrized_operator(*m).lambda_max, tau));
  return s;
}

inline SampledData simulate_data(const VelocityModel& model, const TransducerArray& array, const WaveletSpec& w,
                                 int substeps = 0) {
  const ForwardSetup f = make_forward(model, array, w, substeps);
  return simulate_data(f.propagator, f.b, w.n2);
}

/// Dense reference built from the eigendecomposition of A: P_h, exact
/// snapshots T_k(P_h) b for k < n2, and the data they produce.
struct DenseOracle {
  Matrix A;
  Vector eigenvalues;
  Matrix eigenvectors;
  Matrix P;
  Matrix b;
  std::vector<Matrix> snapshots;
  SampledData data;
  int substeps = 0;
};

inline constexpr int kDenseOracleMaxNodes = 2500;

inline DenseOracle dense_oracle(const VelocityModel& model, const TransducerArray& array, const WaveletSpec& w,
                                int substeps = 0) {
  require(model.grid.size() <= kDenseOracleMaxNodes, "dense oracle limited to 2500 nodes");
  w.validate();
  array.validate(model);
  const SymmetrizedOperator op = build_symmetrized_operator(model);
  DenseOracle o;
  o.A = Matrix(op.A);
  Eigen::SelfAdjointEigenSolver<Matrix> es(o.A);
  o.eigenvalues = es.eigenvalues();
  o.eigenvectors = es.eigenvectors();
  o.substeps = substeps > 0 ? substeps : DiscretePropagator::default_substeps(op.lambda_max, w.tau);
  const double dt = w.tau / o.substeps;
  const Eigen::Index N = o.A.rows();

  Vector p(N), smooth(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    p[i] = chebyshev_t(o.substeps, 1.0 + 0.5 * dt * dt * o.eigenvalues[i]);
    smooth[i] = std::exp(w.sigma * w.sigma * o.eigenvalues[i] / 4.0);
  }
  const Matrix& Q = o.eigenvectors;
  o.P = Q * p.asDiagonal() * Q.transpose();
  const Matrix e = point_transducers(model.grid, array);
  o.b = Q * (smooth.asDiagonal() * (Q.transpose() * e));
  const Matrix Qtb = Q.transpose() * o.b;
  o.data.tau = w.tau;
  o.data.provenance = "oracle";
  const double h2 = model.grid.h * model.grid.h;
  for (int k = 0; k < w.n2; ++k) {
    Vector tk(N);
    for (Eigen::Index i = 0; i < N; ++i) tk[i] = chebyshev_t(k, p[i]);
    o.snapshots.push_back(Q * (tk.asDiagonal() * Qtb));
    Matrix D = Qtb.transpose() * tk.asDiagonal() * Qtb * h2;
    o.data.samples.push_back(0.5 * (D + D.transpose()));
  }
  return o;
}

// "ROMD" data file: magic, version (u32), m (u32), 2n (u32), tau (f64), then
// the 2n row-major m x m matrices, all little-endian.
inline constexpr std::uint32_t kDataFormatVersion = 1;

inline std::string encode_data(const SampledData& d) {
  d.validate();
  std::string out = "ROMD";
  detail::put_le<std::uint32_t>(out, kDataFormatVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.m()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.n2()));
  detail::put_le<double>(out, d.tau);
  for (const auto& D : d.samples)
    for (int i = 0; i < d.m(); ++i)
      for (int j = 0; j < d.m(); ++j) detail::put_le<double>(out, D(i, j));
  return out;
}

inline SampledData decode_data(const std::string& bytes) {
  require(bytes.size() >= 4 && bytes.compare(0, 4, "ROMD") == 0, "not a ROMD data file");
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  require(version == kDataFormatVersion, "unsupported ROMD version " + std::to_string(version));
  const auto m = detail::get_le<std::uint32_t>(bytes, pos);
  const auto n2 = detail::get_le<std::uint32_t>(bytes, pos);
  require(m >= 1 && n2 >= 2, "ROMD header has empty dimensions");
  SampledData d;
  d.tau = detail::get_le<double>(bytes, pos);
  require(bytes.size() == pos + static_cast<std::size_t>(n2) * m * m * sizeof(double), "ROMD payload size mismatch");
  d.samples.assign(n2, Matrix(m, m));
  for (auto& D : d.samples)
    for (std::uint32_t i = 0; i < m; ++i)
      for (std::uint32_t j = 0; j < m; ++j) D(i, j) = detail::get_le<double>(bytes, pos);
  d.provenance = "file";
  d.validate();
  return d;
}

inline void save_data(const std::string& path, const SampledData& d) { detail::write_file(path, encode_data(d)); }
inline SampledData load_data(const std::string& path) { return decode_data(detail::read_file(path)); }

/// Long-format CSV for inspection: k,i,j,value.
inline std::string data_to_csv(const SampledData& d) {
  std::ostringstream os;
  os << std::setprecision(17) << "k,i,j,value\n";
  for (int k = 0; k < d.n2(); ++k)
    for (int i = 0; i < d.m(); ++i)
      for (int j = 0; j < d.m(); ++j) os << k << ',' << i << ',' << j << ',' << d[k](i, j) << '\n';
  return os.str();
}

}  // namespace romimg

#endif  // ROMIMG_PROPAGATE_HPP
