#include <gtest/gtest.h>

#include <random>

#include "romimg/phantom.hpp"
#include "romimg/rom.hpp"

using namespace romimg;

namespace {

SampledData scalar_data(std::vector<double> v) {
  SampledData D;
  D.tau = 1.0;
  for (double x : v) D.samples.push_back(Matrix::Constant(1, 1, x));
  return D;
}

struct Case {
  VelocityModel model;
  TransducerArray array;
  WaveletSpec w;
  int substeps;
};

Case small_case(int n2 = 16) {
  PhantomParams p;
  p.grid = {30, 26, 10.0};
  p.upper_depth = 100;
  p.lower_depth = 190;
  Case c{make_phantom(PhantomKind::two_reflectors, p).model, TransducerArray::along_row(4, 4, 25),
         WaveletSpec::from_sigma(0.0173, n2), 0};
  c.substeps = common_substeps({&c.model}, c.w.tau);
  return c;
}

}  // namespace

TEST(MassStiffness, HandWorkedScalarExample) {
  const SampledData D = scalar_data({1.0, 0.5, 0.2, 0.1});
  const MassMatrix M = assemble_mass(D);
  const StiffnessMatrix S = assemble_stiffness(D);
  Matrix M_ref(2, 2), S_ref(2, 2);
  M_ref << 1.0, 0.5, 0.5, 0.6;
  S_ref << 0.5, 0.6, 0.6, 0.4;
  EXPECT_LT((M.matrix - M_ref).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((S.matrix - S_ref).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MassStiffness, MatchSnapshotGramMatrices) {
  const Case c = small_case();
  const ForwardSetup f = make_forward(c.model, c.array, c.w, c.substeps);
  const SnapshotSet U = compute_snapshots(f.propagator, f.b, c.w.n());
  const SampledData D = simulate_data(f.propagator, f.b, c.w.n2);
  const double h2 = c.model.grid.h * c.model.grid.h;
  const Matrix Us = U.stacked();
  const Matrix M_ref = Us.transpose() * Us * h2;
  Matrix PU(Us.rows(), Us.cols());
  for (int k = 0; k < U.n(); ++k) PU.middleCols(k * U.m(), U.m()) = f.propagator.apply(U.blocks[k]);
  const Matrix S_ref = Us.transpose() * PU * h2;
  EXPECT_LT(rel_diff(assemble_mass(D).matrix, M_ref), 1e-9);
  EXPECT_LT(rel_diff(assemble_stiffness(D).matrix, S_ref), 1e-9);
}

TEST(BlockCholesky, ReproducesMatrixForEveryConvention) {
  std::mt19937 rng(4);
  std::normal_distribution<double> n01;
  Matrix X(12, 12);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = n01(rng);
  BlockSquare M{X * X.transpose() + 0.1 * Matrix::Identity(12, 12), 3, 4};
  for (auto conv : {DiagonalConvention::spd_sqrt, DiagonalConvention::cholesky, DiagonalConvention::eig}) {
    const auto L = block_cholesky(M, conv);
    EXPECT_LT(rel_diff(L.L * L.L.transpose(), M.matrix), 1e-12) << to_string(conv);
    EXPECT_EQ(L.L.block(0, 3, 3, 9).norm(), 0.0);
    EXPECT_EQ(L.L.block(3, 6, 3, 6).norm(), 0.0);
    const Matrix R = Matrix::Random(12, 2);
    EXPECT_LT(rel_diff(L.L * L.solve(R), R), 1e-12);
  }
  const auto Ls = block_cholesky(M, DiagonalConvention::spd_sqrt);
  const Matrix d0 = Ls.L.block(0, 0, 3, 3);
  EXPECT_LT((d0 - d0.transpose()).norm(), 1e-13 * d0.norm());
}

TEST(BlockCholesky, ReportsFailingBlock) {
  Matrix A = Matrix::Identity(6, 6);
  A(4, 4) = -1.0;
  try {
    block_cholesky(BlockSquare{A, 2, 3});
    FAIL() << "expected a factorization failure";
  } catch (const FactorizationError& e) {
    EXPECT_NE(std::string(e.what()).find("block 2"), std::string::npos) << e.what();
  }
}

TEST(Reduce, ResimulatedDataInterpolateAllSamples) {
  const Case c = small_case();
  const SampledData D = simulate_data(c.model, c.array, c.w, c.substeps);
  for (auto conv : {DiagonalConvention::spd_sqrt, DiagonalConvention::cholesky, DiagonalConvention::eig}) {
    const ReducedModel rm = reduce(D, conv);
    const auto F = resimulate_all(rm, D.n2());
    for (int k = 0; k < D.n2(); ++k) EXPECT_LT(rel_diff(F[k], D[k]), 1e-6) << to_string(conv) << " k = " << k;
  }
}

TEST(Reduce, BlockTridiagonalAndFirstBlockTransducer) {
  const Case c = small_case();
  const ReducedModel rm = reduce(simulate_data(c.model, c.array, c.w, c.substeps));
  const StructureReport r = verify_structure(rm, 1e-8);
  EXPECT_TRUE(r.passed) << r.text();
  EXPECT_LT(rm.symmetry_deviation, 1e-8);
}

TEST(Reduce, ScalarExampleAgreesWithClosedForm) {
  // m = 1, n = 2: L = chol(M), P = L^{-1} S L^{-T}, B = L^{-1} [1; 0.5]
  const ReducedModel rm = reduce(scalar_data({1.0, 0.5, 0.2, 0.1}), DiagonalConvention::cholesky);
  Matrix M(2, 2), S(2, 2);
  M << 1.0, 0.5, 0.5, 0.6;
  S << 0.5, 0.6, 0.6, 0.4;
  const Matrix L = Eigen::LLT<Matrix>(M).matrixL();
  const Matrix Li = L.inverse();
  EXPECT_LT(rel_diff(rm.P, Li * S * Li.transpose()), 1e-13);
  EXPECT_NEAR(rm.B(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(rm.B(1, 0), 0.0, 1e-14);
}

TEST(Reduce, OddSampleCountRejected) {
  EXPECT_THROW(reduce(scalar_data({1.0, 0.5, 0.2})), ValidationError);
}

TEST(Orthogonalize, AgreesWithCholeskyOfMassMatrix) {
  const Case c = small_case(12);
  const ForwardSetup f = make_forward(c.model, c.array, c.w, c.substeps);
  const SnapshotSet U = compute_snapshots(f.propagator, f.b, c.w.n());
  const SampledData D = simulate_data(f.propagator, f.b, c.w.n2);
  for (auto conv : {DiagonalConvention::spd_sqrt, DiagonalConvention::cholesky}) {
    const Orthogonalized o = orthogonalize_snapshots(U, conv);
    const double h2 = c.model.grid.h * c.model.grid.h;
    const Matrix G = o.V.transpose() * o.V * h2;
    EXPECT_LT((G - Matrix::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(rel_diff(o.V * o.L.L.transpose(), U.stacked()), 1e-10);
    const auto L = block_cholesky(assemble_mass(D), conv);
    EXPECT_LT(rel_diff(o.L.L, L.L), 1e-5) << to_string(conv);
  }
}

TEST(Orthogonalize, ProjectionGivesReducedPropagator) {
  // P_rom = V^T P_h V h^2 with V from the snapshots.
  const Case c = small_case(12);
  const ForwardSetup f = make_forward(c.model, c.array, c.w, c.substeps);
  const SnapshotSet U = compute_snapshots(f.propagator, f.b, c.w.n());
  const Orthogonalized o = orthogonalize_snapshots(U);
  const double h2 = c.model.grid.h * c.model.grid.h;
  const Matrix Pproj = o.V.transpose() * f.propagator.apply(o.V) * h2;
  const ReducedModel rm = reduce(simulate_data(f.propagator, f.b, c.w.n2));
  EXPECT_LT(rel_diff(rm.P, Pproj), 1e-5);
}

TEST(RomFormat, RoundTripIsBitwise) {
  const Case c = small_case(8);
  ReducedModel rm = reduce(simulate_data(c.model, c.array, c.w, c.substeps));
  rm.mu = 1.25;
  const ReducedModel back = decode_rom(encode_rom(rm));
  EXPECT_EQ(back.P, rm.P);
  EXPECT_EQ(back.B, rm.B);
  EXPECT_EQ(back.mu, 1.25);
  EXPECT_EQ(back.hash(), rm.hash());
  EXPECT_THROW(decode_rom(encode_rom(rm).substr(0, 40)), ValidationError);
}

TEST(Convention, StringRoundTrip) {
  for (auto conv : {DiagonalConvention::spd_sqrt, DiagonalConvention::cholesky, DiagonalConvention::eig})
    EXPECT_EQ(convention_from_string(to_string(conv)), conv);
  EXPECT_THROW(convention_from_string("qr"), ValidationError);
}
