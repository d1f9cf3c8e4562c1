#ifndef ROMIMG_REGULARIZATION_HPP
#define ROMIMG_REGULARIZATION_HPP

#include <cstdint>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "romimg/rom.hpp"

namespace romimg {

struct NoiseSpec {
  double epsilon = 0.0;
  std::uint64_t seed = 0;
};

/// Multiplicative noise D^k o (1 + eps G^k) with G^k symmetric, its upper
/// triangle iid standard normal. Deterministic for a fixed seed.
inline SampledData add_noise(const SampledData& D, const NoiseSpec& spec) {
  require(spec.epsilon >= 0.0, "noise level must be non-negative");
  D.validate();
  SampledData out = D;
  if (spec.epsilon == 0.0) return out;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int m = D.m();
  for (auto& Dk : out.samples) {
    for (int i = 0; i < m; ++i)
      for (int j = i; j < m; ++j) {
        const double g = normal(rng);
        Dk(i, j) *= 1.0 + spec.epsilon * g;
        if (j != i) Dk(j, i) = Dk(i, j);
      }
  }
  std::ostringstream os;
  os << "noisy(eps=" << spec.epsilon << ",seed=" << spec.seed << ")";
  out.provenance = os.str();
  return out;
}

/// Smallest eigenvalue of a symmetric matrix.
inline double min_eig(const Matrix& M) {
  require(M.rows() == M.cols(), "min_eig needs a square matrix");
  const Matrix S = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double min_eig(const BlockSquare& M) { return min_eig(M.matrix); }

struct RegularizationSchedule {
  double mu_start = 1.0;
  double mu_factor = 1.05;
  double mu_cap = 100.0;
  /// Accept once lambda_min(M) > delta * trace(M) / (mn).
  double delta = 1e-12;
};

struct RegularizationResult {
  SampledData data;
  double mu = 1.0;
  int iterations = 0;
  std::vector<double> mu_history;
  std::vector<double> lambda_min_history;

  std::string history_csv() const {
    std::ostringstream os;
    os << std::setprecision(17) << "iteration,mu,lambda_min\n";
    for (std::size_t i = 0; i < mu_history.size(); ++i)
      os << i << ',' << mu_history[i] << ',' << lambda_min_history[i] << '\n';
    return os.str();
  }
};

/// D^0 <- mu D^0 with a geometric sweep in mu until the mass matrix is
/// comfortably positive definite. All other samples are left untouched.
inline RegularizationResult regularize(const SampledData& noisy, const RegularizationSchedule& sched = {}) {
  noisy.validate();
  require(sched.mu_start > 0.0, "mu_start must be positive");
  require(sched.mu_factor > 1.0, "mu_factor must exceed 1");
  RegularizationResult r;
  const int mn = noisy.m() * noisy.n();
  for (double mu = sched.mu_start;; mu *= sched.mu_factor) {
    if (mu > sched.mu_cap * (1.0 + 1e-12))
      throw NumericalError("regularization parameter exceeded cap " + std::to_string(sched.mu_cap) +
                           ": data too corrupted");
    SampledData trial = noisy;
    trial.samples.front() = mu * noisy[0];
    const MassMatrix M = assemble_mass(trial);
    const double lmin = min_eig(M);
    r.mu_history.push_back(mu);
    r.lambda_min_history.push_back(lmin);
    ++r.iterations;
    if (lmin > sched.delta * M.matrix.trace() / mn) {
      r.mu = mu;
      r.data = std::move(trial);
      if (mu != 1.0) {
        std::ostringstream os;
        os << noisy.provenance << "+regularized(mu=" << mu << ")";
        r.data.provenance = os.str();
      }
      return r;
    }
  }
}

}  // namespace romimg

#endif  // ROMIMG_REGULARIZATION_HPP
