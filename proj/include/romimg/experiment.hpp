#ifndef ROMIMG_EXPERIMENT_HPP
#define ROMIMG_EXPERIMENT_HPP

#include <chrono>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "romimg/metrics.hpp"
#include "romimg/model_io.hpp"
#include "romimg/phantom.hpp"
#include "romimg/regularization.hpp"

namespace romimg {

inline constexpr const char* kVersion = "1.0.0";

// Condition report ---------------------------------------------------------

struct ConditionRow {
  int n = 0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double cond = 0.0;  // +inf when the leading block is not positive definite
};

/// Condition number of the leading mn' x mn' mass matrix for each n'.
inline std::vector<ConditionRow> report_condition(const SampledData& D, const std::vector<int>& n_list) {
  D.validate();
  const MassMatrix M = assemble_mass(D);
  std::vector<ConditionRow> rows;
  for (int nn : n_list) {
    require(nn >= 1 && nn <= D.n(), "condition report: n' must lie in [1, n]");
    const Eigen::Index k = static_cast<Eigen::Index>(nn) * D.m();
    const Matrix Mk = M.matrix.topLeftCorner(k, k);
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (Mk + Mk.transpose()), Eigen::EigenvaluesOnly);
    ConditionRow r;
    r.n = nn;
    r.lambda_min = es.eigenvalues()(0);
    r.lambda_max = es.eigenvalues()(k - 1);
    r.cond = r.lambda_min > 0 ? r.lambda_max / r.lambda_min : std::numeric_limits<double>::infinity();
    rows.push_back(r);
  }
  return rows;
}

inline std::string condition_csv(const std::vector<ConditionRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(17) << "n,cond,lambda_min,lambda_max\n";
  for (const auto& r : rows) os << r.n << ',' << r.cond << ',' << r.lambda_min << ',' << r.lambda_max << '\n';
  return os.str();
}

// Configuration ------------------------------------------------------------

struct ModelSpec {
  std::string kind = "two_reflectors";  // phantom kind or "file"
  std::string file;
  PhantomParams params;
};

struct KinematicSpec {
  std::string kind = "background";  // background | constant | smoothed | file
  double velocity = 2500.0;
  double smoothing_x = 40.0, smoothing_y = 40.0;  // Gaussian std in meters
  std::string file;
};

struct ArraySpec {
  std::string layout = "row";  // row | boundary
  int m = 12;
  int first_ix = 0, last_ix = 0;  // 0/0: one cell in from each corner
  int row = 0;
};

struct ImagingSpec {
  std::vector<std::string> methods{"bp", "rtm"};
  double a0 = 1.0;
  double a1 = -1.0;  // negative: 1 / largest node distance to the array
  int subarray_count = 0;  // 0: no composite image
  int subarray_size = 0;
  std::vector<double> weights;  // empty: all ones
  bool continue_on_failure = true;
};

struct MetricSpec {
  int mask_radius = 7;
  int near_field_rows = 12;
  int multiple_band = 3;
};

struct Tolerances {
  double structure = 1e-8;
  double positivity = kPositivityThreshold;
  double symmetry = kSymmetryTolerance;
};

struct ExperimentConfig {
  ModelSpec model;
  KinematicSpec kinematic;
  ArraySpec array;
  WaveletSpec wavelet{0.0173, std::sqrt(3.0) / 2.0 * 0.0173, 60};
  int substeps = 0;  // 0: smallest stable count shared by all models
  NoiseSpec noise;
  bool regularize = true;
  RegularizationSchedule schedule;
  DiagonalConvention convention = DiagonalConvention::spd_sqrt;
  ImagingSpec imaging;
  MetricSpec metrics;
  std::vector<int> condition_n;
  Tolerances tolerances;
  std::string output = "out";
  std::uint64_t seed = 0;

  double terminal_time() const { return wavelet.tau * (wavelet.n2 - 1); }
};

namespace detail {

template <class T>
void get_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed, const std::string& where) {
  require(j.is_object(), where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    require(std::find(allowed.begin(), allowed.end(), it.key()) != allowed.end(),
            "unknown key '" + it.key() + "' in " + where);
}

inline double length_scale(const nlohmann::json& j) {
  std::string u = "m";
  get_opt(j, "length_unit", u);
  require(u == "m" || u == "km", "length_unit must be m or km");
  return u == "km" ? 1000.0 : 1.0;
}

inline double velocity_scale(const nlohmann::json& j) {
  std::string u = "m/s";
  get_opt(j, "velocity_unit", u);
  require(u == "m/s" || u == "km/s", "velocity_unit must be m/s or km/s");
  return u == "km/s" ? 1000.0 : 1.0;
}

inline EdgeLabel label_from_json(const nlohmann::json& j) { return parse_label(j.get<std::string>()); }

}  // namespace detail

/// Parse a JSON configuration. Lengths in `length_unit`, velocities in
/// `velocity_unit`, times in seconds. Relative file paths resolve against
/// `base_dir`.
inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = ".") {
  using detail::get_opt;
  detail::check_keys(j, {"length_unit", "velocity_unit", "model", "kinematic", "array", "wavelet", "substeps", "noise",
                         "regularization", "convention", "imaging", "metrics", "condition_n", "tolerances", "output",
                         "seed"},
                     "config");
  const double L = detail::length_scale(j), V = detail::velocity_scale(j);
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? p : (std::filesystem::path(base_dir) / path).string();
  };
  ExperimentConfig c;
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::check_keys(m, {"kind", "file", "grid", "boundary", "c_top", "c_bottom", "lateral_amplitude",
                           "reflector_velocity", "reflector_thickness", "upper_depth", "lower_depth", "branch_drop",
                           "reflector_x0", "reflector_x1", "layers", "point", "point_radius", "contrast",
                           "phantom_diameter", "coupling_velocity", "tissue_velocity", "fat_velocity",
                           "fat_thickness", "fat_roughness"},
                       "model");
    auto& p = c.model.params;
    get_opt(m, "kind", c.model.kind);
    if (m.contains("file")) c.model.file = resolve(m.at("file").get<std::string>());
    if (m.contains("grid")) {
      const auto& g = m.at("grid");
      detail::check_keys(g, {"nx", "ny", "h"}, "model.grid");
      get_opt(g, "nx", p.grid.nx);
      get_opt(g, "ny", p.grid.ny);
      if (g.contains("h")) p.grid.h = g.at("h").get<double>() * L;
    }
    if (m.contains("boundary")) {
      const auto& b = m.at("boundary");
      detail::check_keys(b, {"top", "bottom", "left", "right"}, "model.boundary");
      if (b.contains("top")) p.boundary.top = detail::label_from_json(b.at("top"));
      if (b.contains("bottom")) p.boundary.bottom = detail::label_from_json(b.at("bottom"));
      if (b.contains("left")) p.boundary.left = detail::label_from_json(b.at("left"));
      if (b.contains("right")) p.boundary.right = detail::label_from_json(b.at("right"));
    }
    auto vel = [&](const char* k, double& out) {
      if (m.contains(k)) out = m.at(k).get<double>() * V;
    };
    auto len = [&](const char* k, double& out) {
      if (m.contains(k)) out = m.at(k).get<double>() * L;
    };
    vel("c_top", p.c_top);
    vel("c_bottom", p.c_bottom);
    get_opt(m, "lateral_amplitude", p.lateral_amplitude);
    vel("reflector_velocity", p.reflector_velocity);
    get_opt(m, "reflector_thickness", p.reflector_thickness);
    len("upper_depth", p.upper_depth);
    len("lower_depth", p.lower_depth);
    len("branch_drop", p.branch_drop);
    len("reflector_x0", p.reflector_x0);
    len("reflector_x1", p.reflector_x1);
    if (m.contains("layers"))
      for (const auto& l : m.at("layers"))
        p.layers.push_back({l.at("top_depth").get<double>() * L, l.at("velocity").get<double>() * V});
    if (m.contains("point")) {
      p.point_x = m.at("point").at(0).get<double>() * L;
      p.point_y = m.at("point").at(1).get<double>() * L;
    }
    len("point_radius", p.point_radius);
    get_opt(m, "contrast", p.contrast);
    len("phantom_diameter", p.phantom_diameter);
    vel("coupling_velocity", p.coupling_velocity);
    vel("tissue_velocity", p.tissue_velocity);
    vel("fat_velocity", p.fat_velocity);
    len("fat_thickness", p.fat_thickness);
    len("fat_roughness", p.fat_roughness);
  }
  if (j.contains("kinematic")) {
    const auto& k = j.at("kinematic");
    detail::check_keys(k, {"kind", "velocity", "smoothing", "file"}, "kinematic");
    get_opt(k, "kind", c.kinematic.kind);
    if (k.contains("velocity")) c.kinematic.velocity = k.at("velocity").get<double>() * V;
    if (k.contains("smoothing")) {
      c.kinematic.smoothing_x = k.at("smoothing").at(0).get<double>() * L;
      c.kinematic.smoothing_y = k.at("smoothing").at(1).get<double>() * L;
    }
    if (k.contains("file")) c.kinematic.file = resolve(k.at("file").get<std::string>());
  }
  if (j.contains("array")) {
    const auto& a = j.at("array");
    detail::check_keys(a, {"layout", "m", "first_ix", "last_ix", "row"}, "array");
    get_opt(a, "layout", c.array.layout);
    get_opt(a, "m", c.array.m);
    get_opt(a, "first_ix", c.array.first_ix);
    get_opt(a, "last_ix", c.array.last_ix);
    get_opt(a, "row", c.array.row);
  }
  if (j.contains("wavelet")) {
    const auto& w = j.at("wavelet");
    detail::check_keys(w, {"sigma", "tau", "n2"}, "wavelet");
    get_opt(w, "sigma", c.wavelet.sigma);
    c.wavelet.tau = std::sqrt(3.0) / 2.0 * c.wavelet.sigma;
    get_opt(w, "tau", c.wavelet.tau);
    get_opt(w, "n2", c.wavelet.n2);
  }
  get_opt(j, "substeps", c.substeps);
  if (j.contains("noise")) {
    const auto& nz = j.at("noise");
    detail::check_keys(nz, {"epsilon", "seed"}, "noise");
    get_opt(nz, "epsilon", c.noise.epsilon);
    get_opt(nz, "seed", c.noise.seed);
  }
  if (j.contains("regularization")) {
    const auto& r = j.at("regularization");
    detail::check_keys(r, {"enabled", "mu_start", "mu_factor", "mu_cap", "delta"}, "regularization");
    get_opt(r, "enabled", c.regularize);
    get_opt(r, "mu_start", c.schedule.mu_start);
    get_opt(r, "mu_factor", c.schedule.mu_factor);
    get_opt(r, "mu_cap", c.schedule.mu_cap);
    get_opt(r, "delta", c.schedule.delta);
  }
  if (j.contains("convention")) c.convention = convention_from_string(j.at("convention").get<std::string>());
  if (j.contains("imaging")) {
    const auto& im = j.at("imaging");
    detail::check_keys(im, {"methods", "a0", "a1", "subarray_count", "subarray_size", "weights", "continue_on_failure"},
                       "imaging");
    get_opt(im, "methods", c.imaging.methods);
    get_opt(im, "a0", c.imaging.a0);
    if (im.contains("a1")) c.imaging.a1 = im.at("a1").get<double>() / L;
    get_opt(im, "subarray_count", c.imaging.subarray_count);
    get_opt(im, "subarray_size", c.imaging.subarray_size);
    get_opt(im, "weights", c.imaging.weights);
    get_opt(im, "continue_on_failure", c.imaging.continue_on_failure);
    for (const auto& meth : c.imaging.methods)
      require(meth == "bp" || meth == "rtm", "imaging method must be bp or rtm, got '" + meth + "'");
  }
  if (j.contains("metrics")) {
    const auto& mt = j.at("metrics");
    detail::check_keys(mt, {"mask_radius", "near_field_rows", "multiple_band"}, "metrics");
    get_opt(mt, "mask_radius", c.metrics.mask_radius);
    get_opt(mt, "near_field_rows", c.metrics.near_field_rows);
    get_opt(mt, "multiple_band", c.metrics.multiple_band);
  }
  get_opt(j, "condition_n", c.condition_n);
  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    detail::check_keys(t, {"structure", "positivity", "symmetry"}, "tolerances");
    get_opt(t, "structure", c.tolerances.structure);
    get_opt(t, "positivity", c.tolerances.positivity);
    get_opt(t, "symmetry", c.tolerances.symmetry);
  }
  get_opt(j, "output", c.output);
  get_opt(j, "seed", c.seed);
  if (c.model.kind == "file") {
    require(!c.model.file.empty() && std::filesystem::exists(c.model.file), "model file does not exist: " + c.model.file);
  } else {
    phantom_kind_from_string(c.model.kind);
  }
  if (c.kinematic.kind == "file")
    require(!c.kinematic.file.empty() && std::filesystem::exists(c.kinematic.file),
            "kinematic file does not exist: " + c.kinematic.file);
  require(c.kinematic.kind == "background" || c.kinematic.kind == "constant" || c.kinematic.kind == "smoothed" ||
              c.kinematic.kind == "file",
          "kinematic kind must be background, constant, smoothed or file");
  require(c.array.layout == "row" || c.array.layout == "boundary", "array layout must be row or boundary");
  c.wavelet.validate();
  return c;
}

/// Fully resolved configuration in SI units; feeding it back reproduces the run.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  const auto& p = c.model.params;
  auto label = [](EdgeLabel l) { return std::string(detail::label_name(l)); };
  j["length_unit"] = "m";
  j["velocity_unit"] = "m/s";
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : p.layers) layers.push_back({{"top_depth", l.top_depth}, {"velocity", l.velocity}});
  j["model"] = {{"kind", c.model.kind},
                {"grid", {{"nx", p.grid.nx}, {"ny", p.grid.ny}, {"h", p.grid.h}}},
                {"boundary",
                 {{"top", label(p.boundary.top)},
                  {"bottom", label(p.boundary.bottom)},
                  {"left", label(p.boundary.left)},
                  {"right", label(p.boundary.right)}}},
                {"c_top", p.c_top},
                {"c_bottom", p.c_bottom},
                {"lateral_amplitude", p.lateral_amplitude},
                {"reflector_velocity", p.reflector_velocity},
                {"reflector_thickness", p.reflector_thickness},
                {"upper_depth", p.upper_depth},
                {"lower_depth", p.lower_depth},
                {"branch_drop", p.branch_drop},
                {"reflector_x0", p.reflector_x0},
                {"reflector_x1", p.reflector_x1},
                {"layers", layers},
                {"point", {p.point_x, p.point_y}},
                {"point_radius", p.point_radius},
                {"contrast", p.contrast},
                {"phantom_diameter", p.phantom_diameter},
                {"coupling_velocity", p.coupling_velocity},
                {"tissue_velocity", p.tissue_velocity},
                {"fat_velocity", p.fat_velocity},
                {"fat_thickness", p.fat_thickness},
                {"fat_roughness", p.fat_roughness}};
  if (!c.model.file.empty()) j["model"]["file"] = c.model.file;
  j["kinematic"] = {{"kind", c.kinematic.kind},
                    {"velocity", c.kinematic.velocity},
                    {"smoothing", {c.kinematic.smoothing_x, c.kinematic.smoothing_y}}};
  if (!c.kinematic.file.empty()) j["kinematic"]["file"] = c.kinematic.file;
  j["array"] = {{"layout", c.array.layout},
                {"m", c.array.m},
                {"first_ix", c.array.first_ix},
                {"last_ix", c.array.last_ix},
                {"row", c.array.row}};
  j["wavelet"] = {{"sigma", c.wavelet.sigma}, {"tau", c.wavelet.tau}, {"n2", c.wavelet.n2}};
  j["substeps"] = c.substeps;
  j["noise"] = {{"epsilon", c.noise.epsilon}, {"seed", c.noise.seed}};
  j["regularization"] = {{"enabled", c.regularize},
                         {"mu_start", c.schedule.mu_start},
                         {"mu_factor", c.schedule.mu_factor},
                         {"mu_cap", c.schedule.mu_cap},
                         {"delta", c.schedule.delta}};
  j["convention"] = to_string(c.convention);
  j["imaging"] = {{"methods", c.imaging.methods},
                  {"a0", c.imaging.a0},
                  {"a1", c.imaging.a1},
                  {"subarray_count", c.imaging.subarray_count},
                  {"subarray_size", c.imaging.subarray_size},
                  {"weights", c.imaging.weights},
                  {"continue_on_failure", c.imaging.continue_on_failure}};
  j["metrics"] = {{"mask_radius", c.metrics.mask_radius},
                  {"near_field_rows", c.metrics.near_field_rows},
                  {"multiple_band", c.metrics.multiple_band}};
  j["condition_n"] = c.condition_n;
  j["tolerances"] = {{"structure", c.tolerances.structure},
                     {"positivity", c.tolerances.positivity},
                     {"symmetry", c.tolerances.symmetry}};
  j["output"] = c.output;
  j["seed"] = c.seed;
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("cannot parse config " + path + ": " + e.what());
  }
  // A manifest carries the resolved config under "config".
  if (j.contains("manifest_version")) j = j.at("config");
  return config_from_json(j, std::filesystem::path(path).parent_path().string());
}

inline std::uint64_t config_hash(const ExperimentConfig& c) {
  Hasher h;
  h.add(config_to_json(c).dump());
  return h.value();
}

// Pipeline pieces ----------------------------------------------------------

/// True model (with ground-truth reflector masks when synthetic).
inline Phantom build_model(const ExperimentConfig& c) {
  if (c.model.kind == "file") {
    Phantom p;
    p.model = load_velocity_model(c.model.file);
    p.background = p.model;
    return p;
  }
  return make_phantom(phantom_kind_from_string(c.model.kind), c.model.params);
}

inline VelocityModel build_kinematic(const ExperimentConfig& c, const Phantom& truth) {
  const auto& g = truth.model.grid;
  if (c.kinematic.kind == "background") return truth.background;
  if (c.kinematic.kind == "constant") return VelocityModel::constant(g, c.kinematic.velocity, truth.model.boundary);
  if (c.kinematic.kind == "smoothed")
    return gaussian_smooth_velocity(truth.model, c.kinematic.smoothing_x, c.kinematic.smoothing_y);
  VelocityModel k = load_velocity_model(c.kinematic.file);
  require(k.grid == g, "kinematic model grid differs from the true model grid");
  return k;
}

inline TransducerArray build_array(const ExperimentConfig& c, const VelocityModel& model) {
  TransducerArray a;
  if (c.array.layout == "boundary") {
    a = TransducerArray::around_boundary(model, c.array.m);
  } else {
    int first = c.array.first_ix, last = c.array.last_ix;
    if (first == 0 && last == 0) {
      first = 1;
      last = model.grid.nx - 2;
    }
    a = TransducerArray::along_row(c.array.m, first, last, c.array.row);
  }
  a.validate(model);
  return a;
}

inline Image apply_depth_scaling(const Image& img, const TransducerArray& a, const ImagingSpec& s) {
  if (s.a1 < 0) return depth_scale(img, a, s.a0, 1.0 / max_distance_to_array(img.grid, a));
  return depth_scale(img, a, s.a0, s.a1);
}

// Run ----------------------------------------------------------------------

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunResult {
  nlohmann::json manifest;
  int exit_code = kExitOk;
};

/// Execute the configured stages and write every artifact plus manifest.json
/// into `out_dir` (the configured output directory when empty).
inline RunResult run(const ExperimentConfig& c, std::string out_dir = "") {
  if (out_dir.empty()) out_dir = c.output;
  std::filesystem::create_directories(out_dir);
  const auto path = [&](const std::string& name) { return (std::filesystem::path(out_dir) / name).string(); };
  RunResult res;
  auto& man = res.manifest;
  man["manifest_version"] = 1;
  man["version"] = kVersion;
  man["config"] = config_to_json(c);
  man["config_hash"] = hex(config_hash(c));
  man["tolerances"] = {{"structure", c.tolerances.structure},
                       {"positivity", c.tolerances.positivity},
                       {"symmetry", c.tolerances.symmetry},
                       {"regularization_delta", c.schedule.delta},
                       {"stability_target", kStabilityTarget}};
  nlohmann::json timings = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::object();
  nlohmann::json metrics = nlohmann::json::object();
  std::string stage = "setup";
  const auto timed = [&](const std::string& name, const std::function<void()>& f) {
    stage = name;
    const auto t0 = std::chrono::steady_clock::now();
    f();
    timings[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  try {
    Phantom truth;
    VelocityModel c_o;
    TransducerArray array;
    int s = c.substeps;
    timed("setup", [&] {
      truth = build_model(c);
      c_o = build_kinematic(c, truth);
      array = build_array(c, truth.model);
      if (s <= 0) s = common_substeps({&truth.model, &c_o}, c.wavelet.tau);
      save_velocity_model(path("model.romvel"), truth.model);
      save_velocity_model(path("kinematic.romvel"), c_o);
    });
    man["substeps"] = s;
    man["terminal_time"] = c.terminal_time();
    man["m"] = array.m();

    SampledData clean, used;
    timed("simulate", [&] {
      clean = simulate_data(truth.model, array, c.wavelet, s);
      require(clean.symmetry_deviation <= c.tolerances.symmetry, "simulated data not symmetric within tolerance");
      save_data(path("data.romd"), clean);
      outputs["data.romd"] = hex(clean.hash());
    });
    used = clean;
    double mu = 1.0;
    if (c.noise.epsilon > 0) {
      timed("noise", [&] {
        used = add_noise(clean, c.noise);
        save_data(path("data_noisy.romd"), used);
        outputs["data_noisy.romd"] = hex(used.hash());
      });
    }
    if (c.regularize) {
      timed("regularize", [&] {
        RegularizationResult r = regularize(used, c.schedule);
        mu = r.mu;
        used = std::move(r.data);
        detail::write_file(path("regularization.csv"), r.history_csv());
        man["regularization_iterations"] = r.iterations;
      });
    }
    man["mu"] = mu;
    if (!c.condition_n.empty()) {
      timed("report_condition", [&] {
        const auto rows = report_condition(used, c.condition_n);
        detail::write_file(path("condition.csv"), condition_csv(rows));
      });
    }
    ReducedModel rom;
    timed("reduce", [&] {
      rom = reduce(used, c.convention, mu, c.tolerances.positivity);
      save_rom(path("rom.romp"), rom);
      outputs["rom.romp"] = hex(rom.hash());
    });
    timed("verify", [&] {
      const StructureReport rep = verify_structure(rom, c.tolerances.structure);
      detail::write_file(path("structure.txt"), rep.text());
      metrics["structure"] = {{"off_tridiagonal", rep.off_tridiagonal}, {"b_tail", rep.b_tail}, {"passed", rep.passed}};
    });

    std::vector<std::vector<int>> masks;
    if (!truth.reflectors.empty()) masks = remap_masks(truth.reflectors, truth.model, c_o);
    const auto region = aperture_region(c_o.grid, array, c.metrics.near_field_rows);
    auto record = [&](const std::string& name, const Image& img) {
      save_image(path(name), img);
      Hasher h;
      h.add(img.values);
      outputs[name + ".csv"] = hex(h.value());
      nlohmann::json mj = {{"argmax", {img.argmax_abs().ix, img.argmax_abs().iy}}, {"max_abs", img.max_abs()}};
      if (!masks.empty()) {
        const auto r = spurious_ratio(img.values, img.grid, masks, c.metrics.mask_radius, region);
        const auto bands = band_region(img.grid, multiple_masks(truth.reflectors, truth.model, c_o),
                                       c.metrics.multiple_band, region);
        const auto rm = spurious_ratio(img.values, img.grid, masks, c.metrics.mask_radius, bands);
        mj["spurious_ratio"] = r.ratio;
        mj["multiple_ratio"] = rm.ratio;
        mj["reflector_peaks"] = r.reflector_peaks;
      }
      metrics[name] = mj;
    };

    std::optional<KinematicModel> kin;
    for (const auto& method : c.imaging.methods) {
      if (method == "bp") {
        timed("image_bp", [&] {
          kin = kinematic_basis(c_o, array, c.wavelet, s, c.convention);
          save_rom(path("rom_kinematic.romp"), kin->rom);
          Image img = apply_depth_scaling(backprojection_image(rom, *kin), array, c.imaging);
          record("image_bp", img);
        });
      } else {
        timed("image_rtm", [&] {
          record("image_rtm", apply_depth_scaling(rtm_image(used, c_o, array, c.wavelet, s), array, c.imaging));
        });
      }
    }
    if (c.imaging.subarray_count > 0) {
      timed("image_composite", [&] {
        SubArrayPartition part = SubArrayPartition::overlapping(array.m(), c.imaging.subarray_count,
                                                                c.imaging.subarray_size);
        if (!c.imaging.weights.empty()) part.weights = c.imaging.weights;
        const CompositeResult cr = composite_image(used, part, c_o, array, c.wavelet, s, c.convention,
                                                   c.imaging.continue_on_failure, mu);
        record("image_composite", apply_depth_scaling(cr.image, array, c.imaging));
        man["composite_failed_subarrays"] = cr.failed;
      });
    }
    man["status"] = "ok";
  } catch (const ValidationError& e) {
    man["status"] = "failed";
    man["failed_stage"] = stage;
    man["error"] = e.what();
    res.exit_code = kExitValidation;
  } catch (const NumericalError& e) {
    man["status"] = "failed";
    man["failed_stage"] = stage;
    man["error"] = e.what();
    res.exit_code = kExitNumerical;
  }
  man["timings_seconds"] = timings;
  man["outputs"] = outputs;
  man["metrics"] = metrics;
  man["exit_code"] = res.exit_code;
  detail::write_file(path("manifest.json"), man.dump(2) + "\n");
  return res;
}

}  // namespace romimg

#endif  // ROMIMG_EXPERIMENT_HPP
