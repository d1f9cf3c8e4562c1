// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "romimg/metrics.hpp"
#include "romimg/phantom.hpp"
#include "romimg/experiment.hpp"

using namespace romimg;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("Criterion %d: %s %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void guarded(int id, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

int cell_distance(Node a, Node b) { return std::max(std::abs(a.ix - b.ix), std::abs(a.iy - b.iy)); }

// Point reflector geometry shared by criteria 5 and 7.
struct PointCase {
  Phantom truth;
  TransducerArray array = TransducerArray::along_row(8, 10, 49);
  WaveletSpec w = WaveletSpec::from_sigma(0.0173, 32);
  int substeps = 0;
  Node target{30, 25};
};

PointCase point_case() {
  PhantomParams p;
  p.grid = {60, 60, 10.0};
  p.c_top = p.c_bottom = 2000.0;
  p.point_x = 300;
  p.point_y = 250;
  p.contrast = 0.1;
  PointCase c;
  c.truth = make_phantom(PhantomKind::point, p);
  c.substeps = common_substeps({&c.truth.model, &c.truth.background}, c.w.tau);
  return c;
}

// Desk-scale two-reflector benchmark shared by criteria 6, 8, 9 and 10.
struct DeskCase {
  Phantom truth;
  VelocityModel constant;
  TransducerArray array = TransducerArray::along_row(12, 20, 99);
  WaveletSpec w = WaveletSpec::from_sigma(0.0173, 60);
  int substeps = 0;
  SampledData data;
};

const DeskCase& desk_case() {
  static const DeskCase d = [] {
    PhantomParams p;
    p.grid = {120, 120, 10.0};
    p.upper_depth = 300;
    p.lower_depth = 600;
    DeskCase c;
    c.truth = make_phantom(PhantomKind::two_reflectors, p);
    c.constant = VelocityModel::constant(p.grid, 2500.0);
    c.substeps = common_substeps({&c.truth.model, &c.truth.background, &c.constant}, c.w.tau);
    c.data = simulate_data(c.truth.model, c.array, c.w, c.substeps);
    return c;
  }();
  return d;
}

void criteria_1_2() {
  const auto t0 = Clock::now();
  PhantomParams p;
  p.grid = {40, 40, 10.0};
  const Phantom ph = make_phantom(PhantomKind::two_reflectors, p);
  const auto array = TransducerArray::along_row(4, 8, 31);
  const auto w = WaveletSpec::from_sigma(0.0173, 16);
  const SampledData D = simulate_data(ph.model, array, w);
  const ReducedModel rm = reduce(D);
  const auto F = resimulate_all(rm, D.n2());
  double worst = 0.0;
  for (int k = 0; k < D.n2(); ++k) worst = std::max(worst, rel_diff(F[k], D[k]));
  const double t = seconds_since(t0);
  report(1, worst <= 1e-8 && t < 30.0, fmt("max_k |F^k - D^k|/|D^k| = %.3g (<= 1e-8), %.2f s (< 30 s)", worst, t));
  const StructureReport s = verify_structure(rm, 1e-8);
  report(2, s.passed,
         fmt("off-tridiagonal %.3g, transducer tail %.3g (<= 1e-8 relative)", s.off_tridiagonal, s.b_tail));
}

void criterion_3() {
  const auto t0 = Clock::now();
  const auto model = [] {
    PhantomParams p;
    p.grid = {12, 12, 10.0};
    p.upper_depth = 40;
    p.lower_depth = 80;
    p.reflector_x0 = 20;
    p.reflector_x1 = 90;
    return make_phantom(PhantomKind::two_reflectors, p).model;
  }();
  const auto array = TransducerArray::along_row(3, 2, 9);
  // n = 4 keeps cond(M) near 1e6; at n = 6 it is near 3e8 and the 1e-11
  // roundoff gap between the two data routes already moves P by 1e-8
  const auto w = WaveletSpec::from_sigma(0.0173, 8);
  const int s = common_substeps({&model}, w.tau);
  const DenseOracle o = dense_oracle(model, array, w, s);
  const SampledData D = simulate_data(model, array, w, s);
  double e_data = 0.0;
  for (int k = 0; k < D.n2(); ++k) e_data = std::max(e_data, rel_diff(D[k], o.data[k]));
  // Gramians from the oracle's snapshots
  const double h2 = model.grid.h * model.grid.h;
  const int n = w.n(), m = array.m();
  Matrix U(model.grid.size(), n * m), PU(model.grid.size(), n * m);
  for (int k = 0; k < n; ++k) {
    U.middleCols(k * m, m) = o.snapshots[k];
    PU.middleCols(k * m, m) = o.P * o.snapshots[k];
  }
  const Matrix M = assemble_mass(D).matrix;
  const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(M).eigenvalues();
  const double e_mass = rel_diff(M, U.transpose() * U * h2);
  const double e_stiff = rel_diff(assemble_stiffness(D).matrix, U.transpose() * PU * h2);
  // reduce against the explicit projection V^T P V with V = U L^{-T}
  const ReducedModel rm = reduce(D);
  const BlockLowerTriangular L = block_cholesky(assemble_mass(o.data));
  const Matrix V = L.solve(U.transpose()).transpose();
  const double e_P = rel_diff(rm.P, V.transpose() * o.P * V * h2);
  const double e_B = rel_diff(rm.B, V.transpose() * o.b * h2);
  const double t = seconds_since(t0);
  const double worst = std::max({e_data, e_mass, e_stiff, e_P, e_B});
  report(3, worst <= 1e-9 && t < 10.0,
         fmt("data %.3g, mass %.3g, stiffness %.3g, P %.3g, B %.3g (<= 1e-9), N = %d, n = %d, cond(M) %.2g, %.2f s (< 10 s)",
             e_data, e_mass, e_stiff, e_P, e_B, model.grid.size(), n, ev.maxCoeff() / ev.minCoeff(), t));
}

void criterion_4() {
  PhantomParams p;
  p.grid = {60, 60, 10.0};
  p.layers = {{0.0, 2000.0}, {250.0, 2400.0}};
  const Phantom ph = make_phantom(PhantomKind::layered, p);
  const VelocityModel& c_o = ph.background;
  const auto array = TransducerArray::along_row(8, 10, 49);
  const auto w = WaveletSpec::from_sigma(0.0173, 32);
  const int s = common_substeps({&ph.model, &c_o}, w.tau);
  const KinematicModel kin = kinematic_basis(c_o, array, w, s);
  const Image self = depth_scale(backprojection_image(reduce(simulate_data(c_o, array, w, s)), kin), array);
  const Image ref = depth_scale(backprojection_image(reduce(simulate_data(ph.model, array, w, s)), kin), array);
  const double ratio = self.max_abs() / ref.max_abs();
  report(4, ratio <= 1e-8, fmt("max|I_self| / max|I_reflector| = %.3g (<= 1e-8)", ratio));
}

void criterion_5() {
  const auto t0 = Clock::now();
  const PointCase c = point_case();
  const SampledData D = simulate_data(c.truth.model, c.array, c.w, c.substeps);
  const Image bp = backprojection_image(D, c.truth.background, c.array, c.w, c.substeps);
  const Image rtm = rtm_image(D, c.truth.background, c.array, c.w, c.substeps);
  const Node pb = bp.argmax_abs(), pr = rtm.argmax_abs();
  const double t = seconds_since(t0);
  const int db = cell_distance(pb, c.target), dr = cell_distance(pr, c.target);
  report(5, db <= 2 && dr <= 3 && t < 120.0,
         fmt("truth (%d,%d); BP argmax (%d,%d) off %d (<= 2); RTM argmax (%d,%d) off %d (<= 3); %.1f s (< 120 s)",
             c.target.ix, c.target.iy, pb.ix, pb.iy, db, pr.ix, pr.iy, dr, t));
}

void criterion_6() {
  const DeskCase& d = desk_case();
  const auto& g = d.truth.model.grid;
  const ReducedModel rom = reduce(d.data);
  const auto region = aperture_region(g, d.array, 12);
  bool pass = true;
  std::string detail;
  for (const auto& [name, c_o] :
       {std::pair<const char*, const VelocityModel*>{"true-smooth", &d.truth.background}, {"constant", &d.constant}}) {
    const KinematicModel kin = kinematic_basis(*c_o, d.array, d.w, d.substeps);
    const Image bp = depth_scale(backprojection_image(rom, kin), d.array);
    const Image rtm = depth_scale(rtm_image(d.data, *c_o, d.array, d.w, d.substeps), d.array);
    const auto masks = remap_masks(d.truth.reflectors, d.truth.model, *c_o);
    const auto bands = band_region(g, multiple_masks(d.truth.reflectors, d.truth.model, *c_o), 3, region);
    const PeakRatio mb = spurious_ratio(bp.values, g, masks, 7, bands);
    const PeakRatio mr = spurious_ratio(rtm.values, g, masks, 7, bands);
    const PeakRatio gb = spurious_ratio(bp.values, g, masks, 7, region);
    const PeakRatio gr = spurious_ratio(rtm.values, g, masks, 7, region);
    const bool ok = mb.ratio < mr.ratio && mb.ratio <= 0.3 && gb.ratio < gr.ratio;
    pass = pass && ok;
    detail += fmt("[%s: multiple-band ratio BP %.3f vs RTM %.3f; whole-aperture ratio BP %.3f vs RTM %.3f] ", name,
                  mb.ratio, mr.ratio, gb.ratio, gr.ratio);
  }
  report(6, pass, detail + "(BP < RTM on both, BP multiple-band ratio <= 0.3)");
}

void criterion_7() {
  const PointCase c = point_case();
  const SampledData clean = simulate_data(c.truth.model, c.array, c.w, c.substeps);
  const KinematicModel kin = kinematic_basis(c.truth.background, c.array, c.w, c.substeps);
  int mu_ok = 0, reduce_ok = 0, localized = 0;
  double mu_sum = 0.0;
  std::string mus;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const SampledData noisy = add_noise(clean, {0.10, seed});
    double mu = std::nan("");
    try {
      const RegularizationResult r = regularize(noisy);
      mu = r.mu;
      if (mu >= 1.0 && mu <= 5.0) ++mu_ok;
      const ReducedModel rm = reduce(r.data, DiagonalConvention::spd_sqrt, r.mu);
      ++reduce_ok;
      const Node pk = backprojection_image(rm, kin).argmax_abs();
      if (cell_distance(pk, c.target) <= 3) ++localized;
    } catch (const NumericalError&) {
    }
    mu_sum += mu;
    mus += fmt("%s%.3f", seed == 1 ? "" : ",", mu);
  }
  report(7, mu_ok == 10 && reduce_ok == 10 && localized >= 8,
         fmt("mu in [1,5]: %d/10 (mu = %s, mean %.3f; reference 1.55 not asserted); reduce ok %d/10; "
             "localized within 3 cells %d/10 (>= 8)",
             mu_ok, mus.c_str(), mu_sum / 10, reduce_ok, localized));
}

void criterion_8() {
  const DeskCase& d = desk_case();
  const auto rows = report_condition(d.data, {2, 4, 8, 16});
  bool mono = true;
  std::string detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].cond < rows[i - 1].cond) mono = false;
    detail += fmt("n=%d cond %.3g; ", rows[i].n, rows[i].cond);
  }
  report(8, mono, detail + "non-decreasing (full-scale reference 1e4 -> 1e10 not asserted)");
}

void criterion_9() {
  const DeskCase& d = desk_case();
  const auto& g = d.truth.model.grid;
  const KinematicModel kin = kinematic_basis(d.truth.background, d.array, d.w, d.substeps);
  bool pass = true;
  int prev = 0;
  std::string detail;
  for (int z : {20, 32, 40, 53}) {
    const Node x{60, z};
    const Vector f = delta_diagnostic(kin.basis, kin.basis, g.index(x.ix, x.iy));
    Eigen::Index am = 0;
    f.cwiseAbs().maxCoeff(&am);
    const Node pk{static_cast<int>(am) % g.nx, static_cast<int>(am) / g.nx};
    const int w = fwhm_cells(f, g, x);
    pass = pass && pk == x && w >= prev;
    prev = w;
    detail += fmt("probe (%d,%d): argmax (%d,%d), FWHM %d; ", x.ix, x.iy, pk.ix, pk.iy, w);
  }
  report(9, pass, detail + "argmax at probe, FWHM non-decreasing");
}

void criterion_10() {
  const DeskCase& d = desk_case();
  const auto& g = d.truth.model.grid;
  const VelocityModel& c_o = d.truth.background;
  const int m = d.array.m();
  const Image full = depth_scale(backprojection_image(d.data, c_o, d.array, d.w, d.substeps), d.array);
  const Image one = depth_scale(
      composite_image(d.data, SubArrayPartition::overlapping(m, 1, m), c_o, d.array, d.w, d.substeps).image, d.array);
  const bool bitwise = (one.values.array() == full.values.array()).all();
  const CompositeResult two =
      composite_image(d.data, SubArrayPartition::overlapping(m, 2, 7), c_o, d.array, d.w, d.substeps);
  const Image comp = depth_scale(two.image, d.array);
  const auto region = aperture_region(g, d.array, 12);
  auto normalized_peaks = [&](const Image& img) {
    double mx = 0.0;
    for (int i = 0; i < g.size(); ++i)
      if (region[static_cast<std::size_t>(i)]) mx = std::max(mx, std::abs(img.values[i]));
    auto peaks = spurious_ratio(img.values, g, d.truth.reflectors, 7, region).reflector_peaks;
    for (double& p : peaks) p /= mx;
    return peaks;
  };
  const auto pf = normalized_peaks(full), pc = normalized_peaks(comp);
  bool within = two.failed.empty();
  for (std::size_t r = 0; r < pf.size(); ++r) within = within && std::abs(pc[r] - pf[r]) <= 0.2 * pf[r];
  report(10, bitwise && within,
         fmt("s=1 bitwise equal: %s; s=2 (2 x 7 transducers) normalized reflector peaks full (%.3f, %.3f) vs "
             "composite (%.3f, %.3f), within 20%%",
             bitwise ? "yes" : "no", pf[0], pf[1], pc[0], pc[1]));
}

void criterion_11() {
  // s = exp(2x), c = 1: q = 1 exactly
  auto interior_error = [](int n) {
    const double h = 1.0 / (n - 1);
    const auto c = VelocityModel::constant({n, 7, h}, 1.0);
    Vector s(c.grid.size());
    for (int iy = 0; iy < c.grid.ny; ++iy)
      for (int ix = 0; ix < n; ++ix) s[c.grid.index(ix, iy)] = std::exp(2.0 * ix * h);
    const Vector q = schrodinger_potential(c, s);
    double e = 0.0;
    for (int iy = 2; iy < c.grid.ny - 2; ++iy)
      for (int ix = 2; ix < n - 2; ++ix) e = std::max(e, std::abs(q[c.grid.index(ix, iy)] - 1.0));
    return e;
  };
  const double e1 = interior_error(21), e2 = interior_error(41), e3 = interior_error(81);
  const double r1 = e1 / e2, r2 = e2 / e3;
  report(11, r1 >= 3.5 && r2 >= 3.5,
         fmt("interior max error %.3g, %.3g, %.3g for h = 1/20, 1/40, 1/80; ratios %.2f, %.2f (>= 3.5)", e1, e2, e3, r1,
             r2));
}

}  // namespace

int main() {
  guarded(1, criteria_1_2);
  guarded(3, criterion_3);
  guarded(4, criterion_4);
  guarded(5, criterion_5);
  guarded(6, criterion_6);
  guarded(7, criterion_7);
  guarded(8, criterion_8);
  guarded(9, criterion_9);
  guarded(10, criterion_10);
  guarded(11, criterion_11);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
