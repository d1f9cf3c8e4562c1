#include <gtest/gtest.h>

#include <cmath>

#include "romimg/phantom.hpp"
#include "romimg/regularization.hpp"

using namespace romimg;

namespace {

SampledData clean_data() {
  PhantomParams p;
  p.grid = {30, 26, 10.0};
  p.upper_depth = 100;
  p.lower_depth = 190;
  const auto model = make_phantom(PhantomKind::two_reflectors, p).model;
  const auto w = WaveletSpec::from_sigma(0.0173, 16);
  return simulate_data(model, TransducerArray::along_row(4, 4, 25), w, common_substeps({&model}, w.tau));
}

}  // namespace

TEST(Noise, DeterministicForFixedSeed) {
  const SampledData D = clean_data();
  const SampledData a = add_noise(D, {0.05, 7}), b = add_noise(D, {0.05, 7}), c = add_noise(D, {0.05, 8});
  for (int k = 0; k < D.n2(); ++k) EXPECT_EQ(a[k], b[k]);
  EXPECT_NE(a[3], c[3]);
}

TEST(Noise, SymmetricMultiplicativeWithUnitStatistics) {
  const SampledData D = clean_data();
  const double eps = 0.1;
  const SampledData a = add_noise(D, {eps, 11});
  std::vector<double> g;
  for (int k = 0; k < D.n2(); ++k) {
    EXPECT_EQ(a[k], a[k].transpose());
    for (int i = 0; i < D.m(); ++i)
      for (int j = i; j < D.m(); ++j)
        if (D[k](i, j) != 0.0) g.push_back((a[k](i, j) / D[k](i, j) - 1.0) / eps);
  }
  double mean = 0.0, var = 0.0;
  for (double x : g) mean += x;
  mean /= static_cast<double>(g.size());
  for (double x : g) var += (x - mean) * (x - mean);
  var /= static_cast<double>(g.size() - 1);
  const double se = 1.0 / std::sqrt(static_cast<double>(g.size()));
  EXPECT_LT(std::abs(mean), 5 * se);
  EXPECT_LT(std::abs(var - 1.0), 10 * se);
}

TEST(Noise, ZeroLevelIsIdentity) {
  const SampledData D = clean_data();
  const SampledData a = add_noise(D, {0.0, 1});
  for (int k = 0; k < D.n2(); ++k) EXPECT_EQ(a[k], D[k]);
  EXPECT_THROW(add_noise(D, {-0.1, 1}), ValidationError);
}

TEST(Regularize, CleanDataKeepsMuOne) {
  const SampledData D = clean_data();
  const auto r = regularize(D);
  EXPECT_EQ(r.mu, 1.0);
  EXPECT_EQ(r.iterations, 1);
  for (int k = 0; k < D.n2(); ++k) EXPECT_EQ(r.data[k], D[k]);
}

TEST(Regularize, MinimalGeometricMuRestoresPositivity) {
  // scalar data, M = [[mu, 0.9], [0.9, (0.6 + mu) / 2]] is indefinite at mu = 1
  SampledData D;
  D.tau = 1.0;
  for (double x : {1.0, 0.9, 0.6, 0.2}) D.samples.push_back(Matrix::Constant(1, 1, x));
  const RegularizationSchedule s;
  const auto r = regularize(D, s);
  // independent check on the accepted mu and its predecessor
  auto lmin = [&](double mu) {
    Matrix M(2, 2);
    M << mu, 0.9, 0.9, 0.5 * (0.6 + mu);
    return Eigen::SelfAdjointEigenSolver<Matrix>(M).eigenvalues()(0);
  };
  auto trace = [&](double mu) { return mu + 0.5 * (0.6 + mu); };
  EXPECT_GT(r.mu, 1.0);
  EXPECT_GT(lmin(r.mu), s.delta * trace(r.mu) / 2);
  EXPECT_LE(lmin(r.mu / s.mu_factor), s.delta * trace(r.mu / s.mu_factor) / 2);
  EXPECT_NEAR(r.mu, std::pow(1.05, r.iterations - 1), 1e-12 * r.mu);
  EXPECT_EQ(r.data[0](0, 0), r.mu);
  EXPECT_EQ(r.data[1](0, 0), 0.9);
  EXPECT_EQ(r.mu_history.size(), static_cast<std::size_t>(r.iterations));
}

TEST(Regularize, CapReachedIsNumericalFailure) {
  SampledData D;
  D.tau = 1.0;
  for (double x : {1.0, 0.9, -5.0, 0.2}) D.samples.push_back(Matrix::Constant(1, 1, x));
  RegularizationSchedule s;
  s.mu_cap = 2.0;
  EXPECT_THROW(regularize(D, s), NumericalError);
}

TEST(Regularize, HistoryCsvHasHeaderAndRows) {
  const auto r = regularize(clean_data());
  const std::string csv = r.history_csv();
  EXPECT_EQ(csv.rfind("iteration,mu,lambda_min\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(MinEig, MatchesKnownSpectrum) {
  Matrix A(2, 2);
  A << 2, 1, 1, 2;
  EXPECT_NEAR(min_eig(A), 1.0, 1e-14);
}
