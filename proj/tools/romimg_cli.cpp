// Command-line driver for the imaging pipeline. Every stage reads and writes
// files so that stages can be chained from a shell.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "romimg/romimg.hpp"

using namespace romimg;

namespace {

struct SetupFlags {
  std::string config;
  std::string model;
  std::string kinematic;
  int m = -1, first_ix = -1, last_ix = -1, row = -1;
  double sigma = -1, tau = -1;
  int n2 = -1, substeps = -1;
  std::string convention;
};

void add_setup_flags(CLI::App* app, SetupFlags& f, bool wants_model, bool wants_kinematic) {
  app->add_option("--config", f.config, "JSON config providing defaults for every setup flag");
  if (wants_model) app->add_option("--model", f.model, "velocity model file (ROMVEL)");
  if (wants_kinematic) app->add_option("--kinematic", f.kinematic, "kinematic velocity model file (ROMVEL)");
  app->add_option("--m", f.m, "number of transducers");
  app->add_option("--first-ix", f.first_ix, "column of the first transducer");
  app->add_option("--last-ix", f.last_ix, "column of the last transducer");
  app->add_option("--row", f.row, "grid row holding the array");
  app->add_option("--sigma", f.sigma, "wavelet width in seconds");
  app->add_option("--tau", f.tau, "sampling interval in seconds (default sqrt(3)/2 sigma)");
  app->add_option("--n2", f.n2, "number of time samples 2n");
  app->add_option("--substeps", f.substeps, "leapfrog steps per sample (default: smallest stable)");
  app->add_option("--convention", f.convention, "diagonal block convention: spd_sqrt | cholesky | eig");
}

ExperimentConfig resolve(const SetupFlags& f) {
  ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  if (!f.model.empty()) {
    c.model.kind = "file";
    c.model.file = f.model;
  }
  if (!f.kinematic.empty()) {
    c.kinematic.kind = "file";
    c.kinematic.file = f.kinematic;
  }
  if (f.m > 0) c.array.m = f.m;
  if (f.first_ix >= 0) c.array.first_ix = f.first_ix;
  if (f.last_ix >= 0) c.array.last_ix = f.last_ix;
  if (f.row >= 0) c.array.row = f.row;
  if (f.sigma >= 0) {
    c.wavelet.sigma = f.sigma;
    c.wavelet.tau = std::sqrt(3.0) / 2.0 * f.sigma;
  }
  if (f.tau > 0) c.wavelet.tau = f.tau;
  if (f.n2 > 0) c.wavelet.n2 = f.n2;
  if (f.substeps > 0) c.substeps = f.substeps;
  if (!f.convention.empty()) c.convention = convention_from_string(f.convention);
  c.wavelet.validate();
  return c;
}

VelocityModel kinematic_from(const ExperimentConfig& c) {
  if (c.kinematic.kind == "file") return load_velocity_model(c.kinematic.file);
  return build_kinematic(c, build_model(c));
}

// Without --substeps, data and kinematic runs must still agree: take the
// common stable count over every model the config defines on one grid.
int auto_substeps(const ExperimentConfig& c, bool with_truth) {
  if (c.substeps > 0) return c.substeps;
  std::vector<VelocityModel> models;
  if (with_truth) {
    const Phantom truth = build_model(c);
    models.push_back(truth.model);
    try {
      models.push_back(build_kinematic(c, truth));
    } catch (const ValidationError&) {
    }
  } else {
    models.push_back(kinematic_from(c));
  }
  std::vector<const VelocityModel*> ptrs;
  for (const auto& m : models)
    if (m.grid == models.front().grid) ptrs.push_back(&m);
  return common_substeps(ptrs, c.wavelet.tau);
}

WaveletSpec wavelet_for(const ExperimentConfig& c, const SampledData& D) {
  WaveletSpec w = c.wavelet;
  w.n2 = D.n2();
  require(std::abs(w.tau - D.tau) <= 1e-12 * D.tau, "sampling interval differs from the data file");
  return w;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced order model imaging of wave data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // simulate
  SetupFlags sim;
  std::string sim_out = "data.romd", sim_csv;
  auto* c_sim = app.add_subcommand("simulate", "simulate array data for a velocity model");
  add_setup_flags(c_sim, sim, true, false);
  c_sim->add_option("--out", sim_out, "output data file (ROMD)");
  c_sim->add_option("--csv", sim_csv, "also write the samples as CSV");

  // noise
  std::string noise_in, noise_out = "data_noisy.romd";
  NoiseSpec noise;
  auto* c_noise = app.add_subcommand("noise", "add multiplicative noise to data");
  c_noise->add_option("--in", noise_in, "input data (ROMD)")->required();
  c_noise->add_option("--out", noise_out, "output data (ROMD)");
  c_noise->add_option("--noise-eps", noise.epsilon, "noise level")->required();
  c_noise->add_option("--noise-seed", noise.seed, "random seed");

  // regularize
  std::string reg_in, reg_out = "data_reg.romd", reg_hist;
  RegularizationSchedule sched;
  auto* c_reg = app.add_subcommand("regularize", "scale D^0 until the mass matrix is positive definite");
  c_reg->add_option("--in", reg_in, "input data (ROMD)")->required();
  c_reg->add_option("--out", reg_out, "output data (ROMD)");
  c_reg->add_option("--history", reg_hist, "write the mu sweep as CSV");
  c_reg->add_option("--mu-start", sched.mu_start, "initial mu");
  c_reg->add_option("--mu-factor", sched.mu_factor, "growth factor of mu");
  c_reg->add_option("--mu-cap", sched.mu_cap, "largest mu tried");
  c_reg->add_option("--delta", sched.delta, "relative positivity margin");

  // reduce
  std::string red_in, red_out = "rom.romp", red_conv = "spd_sqrt";
  double red_mu = 1.0, red_eps = kPositivityThreshold;
  auto* c_red = app.add_subcommand("reduce", "compute the reduced model from data alone");
  c_red->add_option("--in", red_in, "input data (ROMD)")->required();
  c_red->add_option("--out", red_out, "output reduced model (ROMP)");
  c_red->add_option("--convention", red_conv, "diagonal block convention");
  c_red->add_option("--mu", red_mu, "regularization parameter already applied to the data");
  c_red->add_option("--positivity", red_eps, "relative positivity threshold");

  // verify
  std::string ver_rom, ver_data;
  double ver_tol = 1e-8;
  auto* c_ver = app.add_subcommand("verify", "check block structure and data interpolation of a reduced model");
  c_ver->add_option("--rom", ver_rom, "reduced model (ROMP)")->required();
  c_ver->add_option("--data", ver_data, "data the model was built from (ROMD)");
  c_ver->add_option("--tol", ver_tol, "relative tolerance");

  // image-bp / image-rtm / image-composite
  SetupFlags img;
  std::string img_data, img_out = "image";
  double img_a0 = 1.0, img_a1 = -1.0, img_mu = 1.0;
  int img_count = 2, img_size = 0;
  bool img_fail_fast = false;
  auto add_image_flags = [&](CLI::App* a) {
    add_setup_flags(a, img, false, true);
    a->add_option("--data", img_data, "measured data (ROMD)")->required();
    a->add_option("--out", img_out, "output stem (.csv, .pgm, .pgm.txt)");
    a->add_option("--a0", img_a0, "depth scaling offset");
    a->add_option("--a1", img_a1, "depth scaling slope per meter (default 1 / largest distance)");
  };
  auto* c_bp = app.add_subcommand("image-bp", "backprojection image");
  add_image_flags(c_bp);
  c_bp->add_option("--mu", img_mu, "regularization parameter applied to the data");
  auto* c_rtm = app.add_subcommand("image-rtm", "reverse time migration image");
  add_image_flags(c_rtm);
  auto* c_comp = app.add_subcommand("image-composite", "weighted sum of sub-array backprojection images");
  add_image_flags(c_comp);
  c_comp->add_option("--mu", img_mu, "regularization parameter applied to the data");
  c_comp->add_option("--subarrays", img_count, "number of sub-arrays");
  c_comp->add_option("--subarray-size", img_size, "transducers per sub-array")->required();
  c_comp->add_flag("--fail-fast", img_fail_fast, "stop at the first sub-array factorization failure");

  // diagnose-delta
  SetupFlags del;
  std::string del_true, del_out = "delta";
  std::vector<int> del_probe;
  auto* c_del = app.add_subcommand("diagnose-delta", "outer product of orthogonalized snapshots at a probe node");
  add_setup_flags(c_del, del, false, true);
  c_del->add_option("--probe", del_probe, "probe node ix iy")->required()->expected(2);
  c_del->add_option("--true-model", del_true, "second basis from this model (default: the kinematic one)");
  c_del->add_option("--out", del_out, "output stem");

  // potential
  std::string pot_vel, pot_imp, pot_out = "potential";
  auto* c_pot = app.add_subcommand("potential", "Schrodinger potential of velocity and impedance fields");
  c_pot->add_option("--velocity", pot_vel, "velocity field (ROMVEL)")->required();
  c_pot->add_option("--impedance", pot_imp, "impedance field in the ROMVEL layout")->required();
  c_pot->add_option("--out", pot_out, "output stem");

  // report-cond
  std::string cond_in, cond_out;
  std::vector<int> cond_n;
  auto* c_cond = app.add_subcommand("report-cond", "condition numbers of leading mass matrices");
  c_cond->add_option("--in", cond_in, "data (ROMD)")->required();
  c_cond->add_option("--n", cond_n, "list of n' values")->required();
  c_cond->add_option("--out", cond_out, "CSV output (stdout when empty)");

  // compare
  std::string cmp_a, cmp_b, cmp_config;
  int cmp_radius = 7, cmp_rows = 12;
  auto* c_cmp = app.add_subcommand("compare", "peaks, correlation and spurious-to-true ratios of two images");
  c_cmp->add_option("--a", cmp_a, "first image CSV")->required();
  c_cmp->add_option("--b", cmp_b, "second image CSV")->required();
  c_cmp->add_option("--config", cmp_config, "synthetic model config supplying reflector masks");
  c_cmp->add_option("--mask-radius", cmp_radius, "reflector mask dilation in cells");
  c_cmp->add_option("--near-field-rows", cmp_rows, "rows below the array left out of the spurious search");

  // run
  std::string run_config, run_manifest, run_out;
  auto* c_run = app.add_subcommand("run", "execute a full experiment from a config or a manifest");
  c_run->add_option("--config", run_config, "experiment config (JSON)");
  c_run->add_option("--manifest", run_manifest, "manifest of an earlier run to reproduce");
  c_run->add_option("--out", run_out, "output directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (c_sim->parsed()) {
      const ExperimentConfig c = resolve(sim);
      const Phantom truth = build_model(c);
      const TransducerArray a = build_array(c, truth.model);
      const int s = auto_substeps(c, true);
      const SampledData D = simulate_data(truth.model, a, c.wavelet, s);
      save_data(sim_out, D);
      if (!sim_csv.empty()) detail::write_file(sim_csv, data_to_csv(D));
      std::cout << "m " << D.m() << " n2 " << D.n2() << " tau " << D.tau << " substeps " << s << " symmetry_deviation "
                << D.symmetry_deviation << '\n';
    } else if (c_noise->parsed()) {
      save_data(noise_out, add_noise(load_data(noise_in), noise));
    } else if (c_reg->parsed()) {
      const RegularizationResult r = regularize(load_data(reg_in), sched);
      save_data(reg_out, r.data);
      if (!reg_hist.empty()) detail::write_file(reg_hist, r.history_csv());
      std::cout << "mu " << r.mu << " iterations " << r.iterations << '\n';
    } else if (c_red->parsed()) {
      const ReducedModel rm = reduce(load_data(red_in), convention_from_string(red_conv), red_mu, red_eps);
      save_rom(red_out, rm);
      std::cout << "m " << rm.m << " n " << rm.n << " symmetry_deviation " << rm.symmetry_deviation << '\n';
    } else if (c_ver->parsed()) {
      const ReducedModel rm = load_rom(ver_rom);
      const StructureReport rep = verify_structure(rm, ver_tol);
      std::cout << rep.text();
      bool ok = rep.passed;
      if (!ver_data.empty()) {
        const SampledData D = load_data(ver_data);
        require(D.m() == rm.m && D.n() == rm.n, "data and reduced model sizes differ");
        const auto F = resimulate_all(rm, D.n2());
        double worst = 0.0;
        for (int k = 0; k < D.n2(); ++k) worst = std::max(worst, rel_diff(F[static_cast<std::size_t>(k)], D[k]));
        std::cout << "interpolation_relative " << worst << '\n';
        ok = ok && worst <= ver_tol;
      }
      if (!ok) return kExitNumerical;
    } else if (c_bp->parsed() || c_rtm->parsed() || c_comp->parsed()) {
      const ExperimentConfig c = resolve(img);
      const SampledData D = load_data(img_data);
      const VelocityModel c_o = kinematic_from(c);
      const TransducerArray a = build_array(c, c_o);
      const WaveletSpec w = wavelet_for(c, D);
      const int s = auto_substeps(c, !img.config.empty());
      Image out;
      if (c_bp->parsed()) {
        const KinematicModel kin = kinematic_basis(c_o, a, w, s, c.convention);
        out = backprojection_image(reduce(D, c.convention, img_mu), kin);
      } else if (c_rtm->parsed()) {
        out = rtm_image(D, c_o, a, w, s);
      } else {
        const auto part = SubArrayPartition::overlapping(a.m(), img_count, img_size);
        const CompositeResult r = composite_image(D, part, c_o, a, w, s, c.convention, !img_fail_fast, img_mu);
        for (int i : r.failed) std::cerr << "sub-array " << i << " skipped: factorization failed\n";
        out = r.image;
      }
      ImagingSpec spec;
      spec.a0 = img_a0;
      spec.a1 = img_a1;
      out = apply_depth_scaling(out, a, spec);
      save_image(img_out, out);
      const Node pk = out.argmax_abs();
      std::cout << out.method << " argmax " << pk.ix << ' ' << pk.iy << " max_abs " << out.max_abs() << '\n';
    } else if (c_del->parsed()) {
      const ExperimentConfig c = resolve(del);
      const VelocityModel c_o = kinematic_from(c);
      const TransducerArray a = build_array(c, c_o);
      const int s = auto_substeps(c, !del.config.empty());
      require(c_o.grid.contains(del_probe[0], del_probe[1]), "probe outside the grid");
      const KinematicModel k = kinematic_basis(c_o, a, c.wavelet, s, c.convention);
      Vector f;
      const int node = c_o.grid.index(del_probe[0], del_probe[1]);
      if (del_true.empty()) {
        f = delta_diagnostic(k.basis, k.basis, node);
      } else {
        const VelocityModel truth = load_velocity_model(del_true);
        f = delta_diagnostic(k.basis, kinematic_basis(truth, a, c.wavelet, s, c.convention).basis, node);
      }
      save_field(del_out, f, c_o.grid);
      Eigen::Index am = 0;
      f.cwiseAbs().maxCoeff(&am);
      const Node pk{static_cast<int>(am) % c_o.grid.nx, static_cast<int>(am) / c_o.grid.nx};
      std::cout << "argmax " << pk.ix << ' ' << pk.iy << " fwhm_cells " << fwhm_cells(f, c_o.grid, pk) << '\n';
    } else if (c_pot->parsed()) {
      const VelocityModel v = load_velocity_model(pot_vel);
      const VelocityModel imp = load_velocity_model(pot_imp);
      require(imp.grid == v.grid, "impedance grid differs from the velocity grid");
      save_field(pot_out, schrodinger_potential(v, imp.c), v.grid);
    } else if (c_cond->parsed()) {
      const std::string csv = condition_csv(report_condition(load_data(cond_in), cond_n));
      if (cond_out.empty())
        std::cout << csv;
      else
        detail::write_file(cond_out, csv);
    } else if (c_cmp->parsed()) {
      const Image a = load_image_csv(cmp_a), b = load_image_csv(cmp_b);
      ImageComparison cmp;
      if (!cmp_config.empty()) {
        const ExperimentConfig c = load_config(cmp_config);
        const Phantom truth = build_model(c);
        const VelocityModel c_o = build_kinematic(c, truth);
        const TransducerArray arr = build_array(c, truth.model);
        require(truth.model.grid.nx == a.grid.nx && truth.model.grid.ny == a.grid.ny, "images do not match the config grid");
        Image ga = a, gb = b;
        ga.grid = gb.grid = truth.model.grid;
        cmp = compare_images(ga, gb, remap_masks(truth.reflectors, truth.model, c_o), cmp_radius,
                             aperture_region(truth.model.grid, arr, cmp_rows));
      } else {
        cmp = compare_images(a, b);
      }
      std::cout << cmp.text();
    } else if (c_run->parsed()) {
      require(run_config.empty() != run_manifest.empty(), "give exactly one of --config and --manifest");
      const ExperimentConfig c = load_config(run_config.empty() ? run_manifest : run_config);
      const RunResult r = run(c, run_out);
      std::cout << r.manifest.at("status").get<std::string>() << '\n';
      if (r.exit_code != kExitOk) std::cerr << r.manifest.at("error").get<std::string>() << '\n';
      return r.exit_code;
    }
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitOk;
}
