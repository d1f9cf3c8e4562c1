#include <gtest/gtest.h>

#include <random>

#include "romimg/phantom.hpp"
#include "romimg/propagate.hpp"

using namespace romimg;

namespace {

struct Small {
  VelocityModel model;
  TransducerArray array;
  WaveletSpec w;
};

Small small_case() {
  PhantomParams p;
  p.grid = {24, 22, 10.0};
  p.upper_depth = 90;
  p.lower_depth = 160;
  Small s{make_phantom(PhantomKind::two_reflectors, p).model, TransducerArray::along_row(4, 3, 20),
          WaveletSpec::from_sigma(0.0173, 12)};
  return s;
}

}  // namespace

TEST(Propagator, DataMatchesDenseEigendecompositionOracle) {
  const Small s = small_case();
  const int sub = common_substeps({&s.model}, s.w.tau);
  const SampledData D = simulate_data(s.model, s.array, s.w, sub);
  const DenseOracle o = dense_oracle(s.model, s.array, s.w, sub);
  ASSERT_EQ(D.n2(), o.data.n2());
  for (int k = 0; k < D.n2(); ++k) EXPECT_LT(rel_diff(D[k], o.data[k]), 1e-9) << "k = " << k;
}

TEST(Propagator, SnapshotsMatchDenseOracle) {
  const Small s = small_case();
  const ForwardSetup f = make_forward(s.model, s.array, s.w);
  const SnapshotSet U = compute_snapshots(f.propagator, f.b, 6);
  const DenseOracle o = dense_oracle(s.model, s.array, s.w, f.propagator.substeps());
  EXPECT_LT(rel_diff(f.b, o.b), 1e-10);
  for (int k = 0; k < 6; ++k) EXPECT_LT(rel_diff(U.blocks[k], o.snapshots[k]), 1e-9) << "k = " << k;
  // one coarse step against the dense propagator
  EXPECT_LT(rel_diff(f.propagator.apply(f.b), o.P * o.b), 1e-10);
}

TEST(Propagator, ProductIdentityOfChebyshevSnapshots) {
  // 2 (u^k)^T u^l h^2 = D^{k+l} + D^{|k-l|}
  const Small s = small_case();
  const ForwardSetup f = make_forward(s.model, s.array, s.w);
  const SnapshotSet U = compute_snapshots(f.propagator, f.b, 6);
  const SampledData D = simulate_data(f.propagator, f.b, 12);
  const double h2 = s.model.grid.h * s.model.grid.h;
  for (int k = 0; k < 6; ++k)
    for (int l = 0; l < 6; ++l) {
      const Matrix lhs = 2.0 * U.blocks[k].transpose() * U.blocks[l] * h2;
      EXPECT_LT(rel_diff(lhs, D[k + l] + D[std::abs(k - l)]), 1e-8) << k << "," << l;
    }
}

TEST(Propagator, DataAreSymmetricToRoundoff) {
  const Small s = small_case();
  const SampledData D = simulate_data(s.model, s.array, s.w);
  EXPECT_LT(D.symmetry_deviation, kSymmetryTolerance);
  for (int k = 0; k < D.n2(); ++k) EXPECT_EQ(D[k], D[k].transpose());
}

TEST(Propagator, RejectsUnstableSubsteps) {
  const Small s = small_case();
  const auto op = std::make_shared<const SymmetrizedOperator>(build_symmetrized_operator(s.model));
  const double tau_big = 10.0 / std::sqrt(op->lambda_max);
  EXPECT_THROW(DiscretePropagator(op, tau_big, 1), ValidationError);
  EXPECT_NO_THROW(DiscretePropagator(op, tau_big, DiscretePropagator::default_substeps(op->lambda_max, tau_big)));
}

TEST(Propagator, DefaultSubstepsRespectStabilityMargin) {
  for (double lm : {1e3, 4e6, 2.5e7})
    for (double tau : {1e-4, 0.005, 0.015}) {
      const int s = DiscretePropagator::default_substeps(lm, tau);
      EXPECT_LE((tau / s) * (tau / s) * lm, kStabilityTarget * (1 + 1e-9));
      if (s > 1) {
        EXPECT_GT((tau / (s - 1)) * (tau / (s - 1)) * lm, kStabilityTarget);
      }
    }
}

TEST(Propagator, CommonSubstepsCoversEveryModel) {
  const auto slow = VelocityModel::constant({20, 20, 10.0}, 1500.0);
  const auto fast = VelocityModel::constant({20, 20, 10.0}, 4000.0);
  const double tau = 0.015;
  const int s = common_substeps({&slow, &fast}, tau);
  EXPECT_EQ(s, DiscretePropagator::default_substeps(build_symmetrized_operator(fast).lambda_max, tau));
  EXPECT_GE(s, DiscretePropagator::default_substeps(build_symmetrized_operator(slow).lambda_max, tau));
}

TEST(Propagator, NonFiniteFieldReported) {
  const Small s = small_case();
  ForwardSetup f = make_forward(s.model, s.array, s.w);
  f.b(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(compute_snapshots(f.propagator, f.b, 4), NumericalError);
}

TEST(SampledData, RestrictAndTruncate) {
  const Small s = small_case();
  const SampledData D = simulate_data(s.model, s.array, s.w);
  const SampledData r = D.restrict(1, 2);
  EXPECT_EQ(r.m(), 2);
  EXPECT_EQ(r[3], D[3].block(1, 1, 2, 2));
  EXPECT_EQ(D.truncated(2).n2(), 4);
  EXPECT_THROW(D.restrict(2, 5), ValidationError);
  EXPECT_THROW(D.truncated(0), ValidationError);
}

TEST(DataFormat, RoundTripIsBitwise) {
  const Small s = small_case();
  const SampledData D = simulate_data(s.model, s.array, s.w);
  const SampledData back = decode_data(encode_data(D));
  EXPECT_EQ(back.tau, D.tau);
  ASSERT_EQ(back.n2(), D.n2());
  for (int k = 0; k < D.n2(); ++k) EXPECT_EQ(back[k], D[k]);
  EXPECT_EQ(back.hash(), D.hash());
}

TEST(DataFormat, RejectsCorruptFiles) {
  const Small s = small_case();
  std::string bytes = encode_data(simulate_data(s.model, s.array, s.w));
  EXPECT_THROW(decode_data("ROMX" + bytes.substr(4)), ValidationError);
  EXPECT_THROW(decode_data(bytes.substr(0, bytes.size() - 3)), ValidationError);
  std::string nan_bytes = bytes;
  const double bad = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(nan_bytes.data() + 24, &bad, sizeof bad);
  EXPECT_THROW(decode_data(nan_bytes), ValidationError);
}

TEST(DataFormat, CsvHasOneRowPerEntry) {
  SampledData D;
  D.tau = 0.1;
  D.samples = {Matrix::Identity(2, 2), Matrix::Ones(2, 2)};
  const std::string csv = data_to_csv(D);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 8);
  EXPECT_NE(csv.find("1,0,1,1\n"), std::string::npos);
}
