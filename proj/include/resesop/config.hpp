#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>

#include "json.hpp"
#include "resesop/dynamics.hpp"
#include "resesop/fourier.hpp"
#include "resesop/radon.hpp"
#include "resesop/redundancy.hpp"
#include "resesop/solver.hpp"
#include "resesop/metrics.hpp"

namespace resesop {

enum class ExperimentKind { ct_flow, mri_cartesian, mri_nudft, custom_dense };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::ct_flow: return "ct_flow";
    case ExperimentKind::mri_cartesian: return "mri_cartesian";
    case ExperimentKind::mri_nudft: return "mri_nudft";
    case ExperimentKind::custom_dense: return "custom_dense";
  }
  return "unknown";
}

enum class MotionKind { none, flow, uniform, non_uniform };

/// Everything a command needs, with relative paths already resolved against
/// the directory of the config file. Field names follow the JSON schema in
/// the README.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::ct_flow;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";

  // image
  std::size_t size = 64;
  double porosity = 0.7;
  double field_of_view = 2.0;

  // CT geometry and binning
  RadonGeometry geometry{64, 91};
  std::size_t bins = 16;

  // motion
  MotionKind motion = MotionKind::flow;
  std::optional<std::size_t> reference_bin;
  double dt = 1.0;
  std::vector<double> p_map;
  MotionRanges ranges;

  // MRI
  std::size_t coils = 1;
  std::size_t acceleration = 4;
  std::size_t center_lines = 8;
  std::size_t spokes_per_bin = 4;
  std::size_t samples = 0;  // 0 = image size

  // noise
  double noise_delta = 0.0;
  bool noise_relative = true;

  // custom dense
  std::filesystem::path matrix;
  std::filesystem::path custom_reference;
  std::filesystem::path custom_data;
  std::vector<std::size_t> block_lengths;

  // solver
  Engine engine = Engine::kaczmarz;
  WidthMode mode = WidthMode::oracle_E;
  std::size_t k_max = 100;
  double tau = 1.001;
  Initialization init = Initialization::zero;
  std::filesystem::path initial;
  double newton_tol = 1e-12;
  std::vector<double> eta;  // empty = zeros; one entry = broadcast
  double rho = 1.0;
  std::optional<double> solver_delta;
  std::vector<double> delta_per_block;
  int cg_steps = 2;

  // reconstruct inputs (default: files written by simulate in output_dir)
  std::filesystem::path data_file;
  std::filesystem::path inexactness_file;
  std::filesystem::path motion_file;

  // redundancy
  double rank_tol = 1e-10;
  std::size_t dense_cap = kDenseCap;

  // evaluate
  std::filesystem::path eval_reconstruction;
  std::filesystem::path eval_reference;
  SsimOptions ssim;

  // export
  std::filesystem::path export_input;
  std::filesystem::path export_output;
  double gamma = 1.0;

  std::filesystem::path out(const std::string& name) const { return output_dir / name; }
  std::filesystem::path data_path() const { return data_file.empty() ? out("data.rsop") : data_file; }
  std::filesystem::path inexactness_path() const {
    return inexactness_file.empty() ? out("inexactness.csv") : inexactness_file;
  }
  std::filesystem::path motion_path() const { return motion_file.empty() ? out("motion.json") : motion_file; }
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw InputError("config: '" + where + "' must be an object");
  const std::set<std::string_view> ok(allowed);
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!ok.count(it.key())) throw InputError("config: unknown key '" + it.key() + "' in '" + where + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& dst) {
  if (!obj.contains(key) || obj[key].is_null()) return;
  try {
    dst = obj[key].get<T>();
  } catch (const json::exception& e) {
    throw InputError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

inline void read_path(const json& obj, const char* key, const std::filesystem::path& base,
                      std::filesystem::path& dst) {
  std::string s;
  read(obj, key, s);
  if (s.empty()) return;
  const std::filesystem::path p(s);
  dst = p.is_absolute() ? p : base / p;
}

inline double read_angle(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    // "pi", "5/4 pi" style shorthands
    std::string s = v.get<std::string>();
    std::erase(s, ' ');
    const auto pos = s.find("pi");
    if (pos != std::string::npos && pos + 2 == s.size()) {
      std::string coeff = s.substr(0, pos);
      if (!coeff.empty() && coeff.back() == '*') coeff.pop_back();
      double c = 1.0;
      if (!coeff.empty()) {
        const auto slash = coeff.find('/');
        try {
          c = slash == std::string::npos ? std::stod(coeff) : std::stod(coeff.substr(0, slash)) / std::stod(coeff.substr(slash + 1));
        } catch (const std::exception&) {
          throw InputError("config: cannot parse angle '" + v.get<std::string>() + "'");
        }
      }
      return c * std::numbers::pi;
    }
  }
  throw InputError("config: angle_max must be a number or a multiple of 'pi'");
}

template <typename E>
E read_enum(const json& obj, const char* key, E fallback, std::initializer_list<std::pair<std::string_view, E>> names) {
  if (!obj.contains(key) || obj[key].is_null()) return fallback;
  if (!obj[key].is_string()) throw InputError(std::string("config: '") + key + "' must be a string");
  const auto s = obj[key].get<std::string>();
  for (const auto& [n, v] : names)
    if (n == s) return v;
  throw InputError("config: unknown " + std::string(key) + " '" + s + "'");
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".") {
  using detail::read;
  using detail::read_path;
  detail::check_keys(j, "root", {"experiment", "seed", "output_dir", "image", "geometry", "partition", "motion",
                                 "mri", "noise", "custom", "solver", "inputs", "redundancy", "evaluate", "export"});
  ExperimentConfig c;
  c.kind = detail::read_enum(j, "experiment", ExperimentKind::ct_flow,
                             {{"ct_flow", ExperimentKind::ct_flow},
                              {"mri_cartesian", ExperimentKind::mri_cartesian},
                              {"mri_nudft", ExperimentKind::mri_nudft},
                              {"custom_dense", ExperimentKind::custom_dense}});
  read(j, "seed", c.seed);
  {
    std::string s;
    read(j, "output_dir", s);
    if (!s.empty()) c.output_dir = std::filesystem::path(s).is_absolute() ? std::filesystem::path(s) : base_dir / s;
    else c.output_dir = base_dir / "out";
  }
  c.motion = c.kind == ExperimentKind::ct_flow ? MotionKind::flow : MotionKind::uniform;
  if (c.kind == ExperimentKind::custom_dense) c.motion = MotionKind::none;

  bool detectors_given = false;
  if (j.contains("image")) {
    const auto& s = j["image"];
    detail::check_keys(s, "image", {"size", "porosity", "field_of_view"});
    read(s, "size", c.size);
    read(s, "porosity", c.porosity);
    read(s, "field_of_view", c.field_of_view);
  }
  if (j.contains("geometry")) {
    const auto& s = j["geometry"];
    detail::check_keys(s, "geometry", {"angles", "detectors", "angle_max", "detector_extent", "ray_step"});
    read(s, "angles", c.geometry.n_angles);
    detectors_given = s.contains("detectors");
    read(s, "detectors", c.geometry.n_detectors);
    if (s.contains("angle_max")) c.geometry.angle_max = detail::read_angle(s["angle_max"]);
    read(s, "detector_extent", c.geometry.detector_extent);
    read(s, "ray_step", c.geometry.ray_step);
  }
  if (!detectors_given)
    c.geometry.n_detectors = static_cast<std::size_t>(std::ceil(std::sqrt(2.0) * static_cast<double>(c.size)));
  if (j.contains("partition")) {
    const auto& s = j["partition"];
    detail::check_keys(s, "partition", {"bins", "block_lengths"});
    read(s, "bins", c.bins);
    read(s, "block_lengths", c.block_lengths);
  }
  if (j.contains("motion")) {
    const auto& s = j["motion"];
    detail::check_keys(s, "motion", {"model", "reference_bin", "dt", "p_map", "shift", "angle", "scaled_shift",
                                     "scaled_angle"});
    c.motion = detail::read_enum(s, "model", c.motion,
                                 {{"none", MotionKind::none}, {"flow", MotionKind::flow},
                                  {"uniform", MotionKind::uniform}, {"non_uniform", MotionKind::non_uniform}});
    if (s.contains("reference_bin") && !s["reference_bin"].is_null()) c.reference_bin = s["reference_bin"].get<std::size_t>();
    read(s, "dt", c.dt);
    read(s, "p_map", c.p_map);
    read(s, "shift", c.ranges.uniform_shift);
    read(s, "angle", c.ranges.uniform_angle);
    read(s, "scaled_shift", c.ranges.scaled_shift);
    read(s, "scaled_angle", c.ranges.scaled_angle);
  }
  if (j.contains("mri")) {
    const auto& s = j["mri"];
    detail::check_keys(s, "mri", {"coils", "acceleration", "center_lines", "spokes_per_bin", "samples"});
    read(s, "coils", c.coils);
    read(s, "acceleration", c.acceleration);
    read(s, "center_lines", c.center_lines);
    read(s, "spokes_per_bin", c.spokes_per_bin);
    read(s, "samples", c.samples);
  }
  if (j.contains("noise")) {
    const auto& s = j["noise"];
    detail::check_keys(s, "noise", {"delta", "relative"});
    read(s, "delta", c.noise_delta);
    read(s, "relative", c.noise_relative);
  }
  if (j.contains("custom")) {
    const auto& s = j["custom"];
    detail::check_keys(s, "custom", {"matrix", "reference", "data"});
    read_path(s, "matrix", base_dir, c.matrix);
    read_path(s, "reference", base_dir, c.custom_reference);
    read_path(s, "data", base_dir, c.custom_data);
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    detail::check_keys(s, "solver", {"engine", "mode", "k_max", "tau", "init", "initial", "newton_tol", "eta", "rho",
                                     "delta", "delta_per_block", "cg_steps"});
    c.engine = detail::read_enum(s, "engine", c.engine,
                                 {{"kaczmarz", Engine::kaczmarz}, {"simultaneous", Engine::simultaneous}});
    c.mode = detail::read_enum(s, "mode", c.mode,
                               {{"oracle_E", WidthMode::oracle_E}, {"analytic_width", WidthMode::analytic_width}});
    read(s, "k_max", c.k_max);
    read(s, "tau", c.tau);
    c.init = detail::read_enum(s, "init", c.init,
                               {{"zero", Initialization::zero}, {"cg_warm_start", Initialization::cg_warm_start},
                                {"file", Initialization::zero}});
    read_path(s, "initial", base_dir, c.initial);
    if (s.contains("init") && s["init"] == "file" && c.initial.empty())
      throw InputError("config: solver.init = 'file' needs solver.initial");
    read(s, "newton_tol", c.newton_tol);
    if (s.contains("eta")) {
      if (s["eta"].is_number()) c.eta = {s["eta"].get<double>()};
      else read(s, "eta", c.eta);
    }
    read(s, "rho", c.rho);
    if (s.contains("delta") && !s["delta"].is_null()) c.solver_delta = s["delta"].get<double>();
    read(s, "delta_per_block", c.delta_per_block);
    read(s, "cg_steps", c.cg_steps);
  }
  if (j.contains("inputs")) {
    const auto& s = j["inputs"];
    detail::check_keys(s, "inputs", {"data", "inexactness", "motion"});
    read_path(s, "data", base_dir, c.data_file);
    read_path(s, "inexactness", base_dir, c.inexactness_file);
    read_path(s, "motion", base_dir, c.motion_file);
  }
  if (j.contains("redundancy")) {
    const auto& s = j["redundancy"];
    detail::check_keys(s, "redundancy", {"rank_tol", "cap"});
    read(s, "rank_tol", c.rank_tol);
    read(s, "cap", c.dense_cap);
  }
  if (j.contains("evaluate")) {
    const auto& s = j["evaluate"];
    detail::check_keys(s, "evaluate", {"reconstruction", "reference", "window", "sigma", "k1", "k2", "data_range"});
    read_path(s, "reconstruction", base_dir, c.eval_reconstruction);
    read_path(s, "reference", base_dir, c.eval_reference);
    read(s, "window", c.ssim.window);
    read(s, "sigma", c.ssim.sigma);
    read(s, "k1", c.ssim.k1);
    read(s, "k2", c.ssim.k2);
    read(s, "data_range", c.ssim.data_range);
  }
  if (j.contains("export")) {
    const auto& s = j["export"];
    detail::check_keys(s, "export", {"input", "output", "gamma"});
    read_path(s, "input", base_dir, c.export_input);
    read_path(s, "output", base_dir, c.export_output);
    read(s, "gamma", c.gamma);
  }

  require(c.size >= 8 && c.size <= 4096, "config: image.size must lie in [8, 4096]");
  require(c.field_of_view > 0.0, "config: image.field_of_view must be positive");
  require(c.bins >= 1, "config: partition.bins must be >= 1");
  require(c.noise_delta >= 0.0, "config: noise.delta must be >= 0");
  require(c.tau >= 1.0, "config: solver.tau must be >= 1");
  require(c.rho > 0.0, "config: solver.rho must be positive");
  require(c.dt >= 0.0, "config: motion.dt must be >= 0");
  c.geometry.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

}  // namespace resesop
