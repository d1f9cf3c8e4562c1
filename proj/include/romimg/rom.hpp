#ifndef ROMIMG_ROM_HPP
#define ROMIMG_ROM_HPP

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "romimg/propagate.hpp"

namespace romimg {

/// How the diagonal blocks L_kk of the block Cholesky factor are chosen.
/// All satisfy L_kk L_kk^T = Z_k (the Schur complement); spd_sqrt takes the
/// symmetric positive definite square root, cholesky the lower triangular
/// factor, eig the product Q * Lambda^{1/2} of the eigendecomposition.
enum class DiagonalConvention { spd_sqrt, cholesky, eig };

inline const char* to_string(DiagonalConvention c) {
  switch (c) {
    case DiagonalConvention::spd_sqrt: return "spd_sqrt";
    case DiagonalConvention::cholesky: return "cholesky";
    case DiagonalConvention::eig: return "eig";
  }
  return "?";
}

inline DiagonalConvention convention_from_string(const std::string& s) {
  if (s == "spd_sqrt") return DiagonalConvention::spd_sqrt;
  if (s == "cholesky") return DiagonalConvention::cholesky;
  if (s == "eig") return DiagonalConvention::eig;
  throw ValidationError("unknown diagonal convention '" + s + "'");
}

/// Schur complements with an eigenvalue at or below this fraction of their
/// trace are treated as not positive definite.
inline constexpr double kPositivityThreshold = 1e-14;

/// Symmetric mn x mn matrix made of n x n blocks of size m x m.
struct BlockSquare {
  Matrix matrix;
  int m = 0;
  int n = 0;

  auto block(int k, int l) const { return matrix.block(static_cast<Eigen::Index>(k) * m, static_cast<Eigen::Index>(l) * m, m, m); }
};

struct MassMatrix : BlockSquare {};
struct StiffnessMatrix : BlockSquare {};

namespace detail {
inline void check_data_for_rom(const SampledData& D) {
  require(D.n2() >= 2 && D.n2() % 2 == 0, "ROM needs an even number (>= 2) of data samples");
  D.validate();
}
}  // namespace detail

/// M_{k,l} = (D^{k+l} + D^{|k-l|}) / 2 for k, l < n.
inline MassMatrix assemble_mass(const SampledData& D) {
  detail::check_data_for_rom(D);
  const int m = D.m(), n = D.n();
  MassMatrix M;
  M.m = m;
  M.n = n;
  M.matrix.resize(static_cast<Eigen::Index>(m) * n, static_cast<Eigen::Index>(m) * n);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l)
      M.matrix.block(static_cast<Eigen::Index>(k) * m, static_cast<Eigen::Index>(l) * m, m, m) =
          0.5 * (D[k + l] + D[std::abs(k - l)]);
  return M;
}

/// S_{k,l} = (D^{k+l+1} + D^{|k-l+1|} + D^{|k+l-1|} + D^{|k-l-1|}) / 4.
inline StiffnessMatrix assemble_stiffness(const SampledData& D) {
  detail::check_data_for_rom(D);
  const int m = D.m(), n = D.n();
  StiffnessMatrix S;
  S.m = m;
  S.n = n;
  S.matrix.resize(static_cast<Eigen::Index>(m) * n, static_cast<Eigen::Index>(m) * n);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l)
      S.matrix.block(static_cast<Eigen::Index>(k) * m, static_cast<Eigen::Index>(l) * m, m, m) =
          0.25 * (D[k + l + 1] + D[std::abs(k - l + 1)] + D[std::abs(k + l - 1)] + D[std::abs(k - l - 1)]);
  return S;
}

/// Block lower triangular factor with cached inverses of its diagonal blocks.
struct BlockLowerTriangular {
  Matrix L;
  int m = 0;
  int n = 0;
  DiagonalConvention convention = DiagonalConvention::spd_sqrt;
  std::vector<Matrix> diag_inverse;

  auto block(int k, int l) const { return L.block(static_cast<Eigen::Index>(k) * m, static_cast<Eigen::Index>(l) * m, m, m); }

  /// L^{-1} R by block forward substitution.
  Matrix solve(const Matrix& R) const {
    require(R.rows() == L.rows(), "block solve: dimension mismatch");
    Matrix X(R.rows(), R.cols());
    for (int k = 0; k < n; ++k) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(k) * m;
      Matrix rhs = R.middleRows(r0, m);
      if (k > 0) rhs.noalias() -= L.block(r0, 0, m, r0) * X.topRows(r0);
      X.middleRows(r0, m).noalias() = diag_inverse[static_cast<std::size_t>(k)] * rhs;
    }
    return X;
  }

  /// R L^{-T}, i.e. (L^{-1} R^T)^T.
  Matrix solve_right_transpose(const Matrix& R) const { return solve(R.transpose()).transpose(); }
};

namespace detail {

struct DiagonalFactor {
  Matrix L;
  Matrix L_inv;
};

// Factor a symmetric Schur complement Z = L L^T in the requested convention.
inline DiagonalFactor factor_diagonal_block(const Matrix& Zin, DiagonalConvention conv, int block, double eps_pd) {
  const Matrix Z = 0.5 * (Zin + Zin.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(Z);
  const Vector& lam = es.eigenvalues();
  const double threshold = eps_pd * Z.trace();
  if (!(lam.minCoeff() > threshold) || !(Z.trace() > 0.0)) throw FactorizationError(block, lam.minCoeff(), threshold);
  const Matrix& Q = es.eigenvectors();
  const Vector s = lam.cwiseSqrt();
  DiagonalFactor f;
  switch (conv) {
    case DiagonalConvention::spd_sqrt:
      f.L = Q * s.asDiagonal() * Q.transpose();
      f.L_inv = Q * s.cwiseInverse().asDiagonal() * Q.transpose();
      break;
    case DiagonalConvention::eig:
      f.L = Q * s.asDiagonal();
      f.L_inv = s.cwiseInverse().asDiagonal() * Q.transpose();
      break;
    case DiagonalConvention::cholesky: {
      Eigen::LLT<Matrix> llt(Z);
      if (llt.info() != Eigen::Success) throw FactorizationError(block, lam.minCoeff(), threshold);
      f.L = llt.matrixL();
      f.L_inv = llt.matrixL().solve(Matrix::Identity(Z.rows(), Z.cols()));
      break;
    }
  }
  return f;
}

}  // namespace detail

/// Block Cholesky M = L L^T. Throws FactorizationError naming the first
/// block whose Schur complement is not positive definite.
inline BlockLowerTriangular block_cholesky(const BlockSquare& M,
                                           DiagonalConvention conv = DiagonalConvention::spd_sqrt,
                                           double eps_pd = kPositivityThreshold) {
  const int m = M.m, n = M.n;
  require(M.matrix.rows() == static_cast<Eigen::Index>(m) * n && M.matrix.cols() == M.matrix.rows(),
          "block Cholesky: matrix is not mn x mn");
  BlockLowerTriangular F;
  F.m = m;
  F.n = n;
  F.convention = conv;
  F.L = Matrix::Zero(M.matrix.rows(), M.matrix.cols());
  F.diag_inverse.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(k) * m;
    Matrix Z = M.matrix.block(r0, r0, m, m);
    if (k > 0) Z.noalias() -= F.L.block(r0, 0, m, r0) * F.L.block(r0, 0, m, r0).transpose();
    auto d = detail::factor_diagonal_block(Z, conv, k, eps_pd);
    F.L.block(r0, r0, m, m) = d.L;
    for (int l = k + 1; l < n; ++l) {
      const Eigen::Index q0 = static_cast<Eigen::Index>(l) * m;
      Matrix Y = M.matrix.block(q0, r0, m, m);
      if (k > 0) Y.noalias() -= F.L.block(q0, 0, m, r0) * F.L.block(r0, 0, m, r0).transpose();
      // Y L_kk^{-T}: the factor's transpose appears because L_lk L_kk^T = Y.
      F.L.block(q0, r0, m, m).noalias() = Y * d.L_inv.transpose();
    }
    F.diag_inverse.push_back(std::move(d.L_inv));
  }
  return F;
}

/// Projected propagator and transducer matrix.
struct ReducedModel {
  Matrix P;  // mn x mn
  Matrix B;  // mn x m
  int m = 0;
  int n = 0;
  double mu = 1.0;
  DiagonalConvention convention = DiagonalConvention::spd_sqrt;
  std::uint64_t data_hash = 0;
  double symmetry_deviation = 0.0;

  auto block(int k, int l) const { return P.block(static_cast<Eigen::Index>(k) * m, static_cast<Eigen::Index>(l) * m, m, m); }
  std::uint64_t hash() const {
    Hasher h;
    h.add(P);
    h.add(B);
    return h.value();
  }
};

/// ROM from data only: P = L^{-1} S L^{-T}, B = L^{-1} [D^0; ...; D^{n-1}].
inline ReducedModel reduce(const SampledData& D, DiagonalConvention conv = DiagonalConvention::spd_sqrt,
                           double mu = 1.0, double eps_pd = kPositivityThreshold) {
  const MassMatrix M = assemble_mass(D);
  const StiffnessMatrix S = assemble_stiffness(D);
  const BlockLowerTriangular L = block_cholesky(M, conv, eps_pd);
  const int m = D.m(), n = D.n();
  ReducedModel rm;
  rm.m = m;
  rm.n = n;
  rm.mu = mu;
  rm.convention = conv;
  rm.data_hash = D.hash();
  const Matrix X = L.solve(S.matrix);
  Matrix P = L.solve(X.transpose());
  const double nrm = P.norm();
  rm.symmetry_deviation = nrm > 0 ? (P - P.transpose()).norm() / nrm : 0.0;
  rm.P = 0.5 * (P + P.transpose());
  Matrix first_column(static_cast<Eigen::Index>(m) * n, m);
  for (int k = 0; k < n; ++k) first_column.middleRows(static_cast<Eigen::Index>(k) * m, m) = D[k];
  rm.B = L.solve(first_column);
  return rm;
}

/// All resimulated samples F^k = B^T T_k(P) B for k < count.
inline std::vector<Matrix> resimulate_all(const ReducedModel& rm, int count) {
  require(count >= 1, "resimulation count must be positive");
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(count));
  Matrix x_prev = rm.B;
  out.push_back(rm.B.transpose() * x_prev);
  if (count == 1) return out;
  Matrix x_cur = rm.P * rm.B;
  out.push_back(rm.B.transpose() * x_cur);
  for (int k = 2; k < count; ++k) {
    Matrix x_next = 2.0 * (rm.P * x_cur) - x_prev;
    out.push_back(rm.B.transpose() * x_next);
    x_prev = std::move(x_cur);
    x_cur = std::move(x_next);
  }
  return out;
}

inline Matrix resimulate(const ReducedModel& rm, int k) {
  require(k >= 0, "sample index must be non-negative");
  return resimulate_all(rm, k + 1).back();
}

struct StructureReport {
  double off_tridiagonal = 0.0;  // max ||P_kl||_F / ||P||_F over |k - l| >= 2
  double b_tail = 0.0;           // max ||B_k||_F / ||B||_F over k >= 1
  double tolerance = 0.0;
  bool passed = true;

  std::string text() const {
    std::ostringstream os;
    os << "off_tridiagonal_relative " << off_tridiagonal << "\n"
       << "transducer_tail_relative " << b_tail << "\n"
       << "tolerance " << tolerance << "\n"
       << "result " << (passed ? "PASS" : "FAIL") << "\n";
    return os.str();
  }
};

inline StructureReport verify_structure(const ReducedModel& rm, double tol) {
  StructureReport r;
  r.tolerance = tol;
  const double pn = rm.P.norm(), bn = rm.B.norm();
  for (int k = 0; k < rm.n; ++k)
    for (int l = 0; l < rm.n; ++l)
      if (std::abs(k - l) >= 2 && pn > 0) r.off_tridiagonal = std::max(r.off_tridiagonal, Matrix(rm.block(k, l)).norm() / pn);
  for (int k = 1; k < rm.n; ++k)
    if (bn > 0)
      r.b_tail = std::max(r.b_tail, rm.B.middleRows(static_cast<Eigen::Index>(k) * rm.m, rm.m).norm() / bn);
  r.passed = r.off_tridiagonal <= tol && r.b_tail <= tol;
  return r;
}

/// Orthonormal snapshot basis V (N x mn, V^T V h^2 = I) and the factor L
/// with U = V L^T.
struct Orthogonalized {
  Matrix V;
  BlockLowerTriangular L;
};

/// Block Gram-Schmidt with one reorthogonalization pass. Produces the same
/// factor as block_cholesky(U^T U h^2) with the same diagonal convention,
/// without squaring the condition number.
inline Orthogonalized orthogonalize_snapshots(const SnapshotSet& U, DiagonalConvention conv = DiagonalConvention::spd_sqrt,
                                              double eps_pd = kPositivityThreshold) {
  require(U.n() >= 1, "no snapshots to orthogonalize");
  const int m = U.m(), n = U.n();
  const double w = U.grid.h * U.grid.h;
  const Eigen::Index N = U.grid.size();
  Orthogonalized out;
  out.V.resize(N, static_cast<Eigen::Index>(m) * n);
  auto& F = out.L;
  F.m = m;
  F.n = n;
  F.convention = conv;
  F.L = Matrix::Zero(static_cast<Eigen::Index>(m) * n, static_cast<Eigen::Index>(m) * n);
  for (int k = 0; k < n; ++k) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(k) * m;
    Matrix W = U.blocks[static_cast<std::size_t>(k)];
    if (k > 0) {
      Matrix coeff = Matrix::Zero(c0, m);
      for (int pass = 0; pass < 2; ++pass) {
        const Matrix C = (out.V.leftCols(c0).transpose() * W) * w;
        W.noalias() -= out.V.leftCols(c0) * C;
        coeff += C;
      }
      F.L.block(c0, 0, m, c0) = coeff.transpose();
    }
    const Matrix G = (W.transpose() * W) * w;
    auto d = detail::factor_diagonal_block(G, conv, k, eps_pd);
    F.L.block(c0, c0, m, m) = d.L;
    out.V.middleCols(c0, m).noalias() = W * d.L_inv.transpose();
    F.diag_inverse.push_back(std::move(d.L_inv));
  }
  return out;
}

// "ROMP" file: magic, version (u32), m (u32), n (u32), mu (f64), then P
// (mn x mn) and B (mn x m) row-major, little-endian binary64.
inline constexpr std::uint32_t kRomFormatVersion = 1;

inline std::string encode_rom(const ReducedModel& rm) {
  std::string out = "ROMP";
  detail::put_le<std::uint32_t>(out, kRomFormatVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(rm.m));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(rm.n));
  detail::put_le<double>(out, rm.mu);
  for (Eigen::Index i = 0; i < rm.P.rows(); ++i)
    for (Eigen::Index j = 0; j < rm.P.cols(); ++j) detail::put_le<double>(out, rm.P(i, j));
  for (Eigen::Index i = 0; i < rm.B.rows(); ++i)
    for (Eigen::Index j = 0; j < rm.B.cols(); ++j) detail::put_le<double>(out, rm.B(i, j));
  return out;
}

inline ReducedModel decode_rom(const std::string& bytes) {
  require(bytes.size() >= 4 && bytes.compare(0, 4, "ROMP") == 0, "not a ROMP file");
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint32_t>(bytes, pos);
  require(version == kRomFormatVersion, "unsupported ROMP version " + std::to_string(version));
  ReducedModel rm;
  rm.m = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
  rm.n = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
  rm.mu = detail::get_le<double>(bytes, pos);
  require(rm.m >= 1 && rm.n >= 1, "ROMP header has empty dimensions");
  const Eigen::Index mn = static_cast<Eigen::Index>(rm.m) * rm.n;
  require(bytes.size() == pos + static_cast<std::size_t>(mn * mn + mn * rm.m) * sizeof(double),
          "ROMP payload size mismatch");
  rm.P.resize(mn, mn);
  rm.B.resize(mn, rm.m);
  for (Eigen::Index i = 0; i < mn; ++i)
    for (Eigen::Index j = 0; j < mn; ++j) rm.P(i, j) = detail::get_le<double>(bytes, pos);
  for (Eigen::Index i = 0; i < mn; ++i)
    for (Eigen::Index j = 0; j < rm.m; ++j) rm.B(i, j) = detail::get_le<double>(bytes, pos);
  return rm;
}

inline void save_rom(const std::string& path, const ReducedModel& rm) { detail::write_file(path, encode_rom(rm)); }
inline ReducedModel load_rom(const std::string& path) { return decode_rom(detail::read_file(path)); }

}  // namespace romimg

#endif  // ROMIMG_ROM_HPP
