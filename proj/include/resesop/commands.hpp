#pragma once

#include <iostream>
#include <sstream>

#include "resesop/config.hpp"
#include "resesop/io.hpp"

namespace resesop {

/// Static (motion-free) forward operator of an experiment with its bins.
struct StaticProblem {
  OperatorHandle op;
  SubproblemPartition partition;
  ValueKind domain_kind = ValueKind::real;
  ValueKind range_kind = ValueKind::real;
  std::size_t width = 0, height = 0;
  std::vector<double> bin_positions;  // cartesian MRI: mean k-space position per bin
};

inline StaticProblem build_static_problem(const ExperimentConfig& c) {
  StaticProblem p;
  switch (c.kind) {
    case ExperimentKind::ct_flow: {
      require(c.bins <= c.geometry.n_angles, "config: more bins than projection angles");
      p.op = make_radon(c.size, c.size, c.field_of_view, c.geometry);
      p.partition = SubproblemPartition::even(c.geometry.n_angles, c.geometry.n_detectors, c.bins);
      p.width = p.height = c.size;
      break;
    }
    case ExperimentKind::mri_cartesian: {
      auto sampling = cartesian_sampling(c.size, c.size, c.acceleration, c.center_lines, c.bins);
      SenseSetup setup{synthetic_coil_maps(c.size, c.size, c.coils), std::move(sampling.masks)};
      auto op = std::make_shared<SenseOperator>(std::move(setup));
      p.partition = op->bin_partition();
      p.op = op;
      p.bin_positions = std::move(sampling.positions);
      p.domain_kind = p.range_kind = ValueKind::complex;
      p.width = p.height = c.size;
      break;
    }
    case ExperimentKind::mri_nudft: {
      const std::size_t samples = c.samples ? c.samples : c.size;
      auto traj = radial_trajectory(c.size, c.bins, c.spokes_per_bin, samples);
      std::vector<ImageGrid> maps;
      if (c.coils > 1) maps = synthetic_coil_maps(c.size, c.size, c.coils);
      auto op = std::make_shared<NudftOperator>(c.size, c.size, std::move(traj), std::move(maps));
      p.partition = op->bin_partition();
      p.op = op;
      p.domain_kind = p.range_kind = ValueKind::complex;
      p.width = p.height = c.size;
      break;
    }
    case ExperimentKind::custom_dense: {
      if (c.matrix.empty()) throw InputError("config: custom_dense needs custom.matrix");
      const ArrayFile a = read_array(c.matrix);
      if (a.dims.size() != 2 || a.dtype != ValueKind::real)
        throw InputError("custom matrix must be a real 2-D array");
      DenseMatrix m(a.dims[0], a.dims[1]);
      std::copy(a.values.begin(), a.values.end(), m.data());
      p.op = make_dense(std::move(m));
      p.partition = c.block_lengths.empty()
                        ? SubproblemPartition::even(a.dims[0], 1, std::min<std::size_t>(c.bins, a.dims[0]))
                        : SubproblemPartition::from_lengths(c.block_lengths);
      require(p.partition.total() == a.dims[0], "config: block lengths do not sum to the matrix rows");
      p.width = a.dims[1];
      p.height = 1;
      break;
    }
  }
  return p;
}

inline ImageGrid domain_image(const StaticProblem& p, Vec values) {
  ImageGrid img(p.width, p.height, p.domain_kind);
  require(values.size() == img.values.size(), "vector does not match the image domain");
  img.values = std::move(values);
  return img;
}

// ---------------------------------------------------------------------------

inline void check_reference_bin(const ExperimentConfig& c) {
  if (c.reference_bin && *c.reference_bin >= c.bins)
    throw InputError("config: motion.reference_bin out of range");
}

/// simulate: reference.rsop, motion.json, data.rsop, inexactness.csv
/// (+ obstacle_mask.rsop for ct_flow).
inline void cmd_simulate(const ExperimentConfig& c) {
  using nlohmann::json;
  check_reference_bin(c);
  const StaticProblem prob = build_static_problem(c);
  json motion;
  motion["experiment"] = std::string(to_string(c.kind));
  motion["seed"] = c.seed;
  motion["bins"] = prob.partition.count();

  DynamicScene scene;
  scene.bins = prob.partition.count();
  std::optional<Mask> obstacle;

  if (c.kind == ExperimentKind::custom_dense) {
    if (c.custom_reference.empty()) throw InputError("config: custom_dense simulate needs custom.reference");
    Vec ref = read_array(c.custom_reference).values;
    scene.reference = domain_image(prob, std::move(ref));
    RigidMotion none;
    none.ux.assign(scene.bins, 0.0);
    none.uy = none.alpha = none.ux;
    scene.deformation = none;
    motion["model"] = "none";
  } else {
    if (c.kind == ExperimentKind::ct_flow) {
      PorousPhantom ph = generate_porous_phantom(c.size, c.porosity, c.seed);
      ph.image.field_of_view = c.field_of_view;
      scene.reference = ph.image;
      obstacle = ph.obstacle;
    } else {
      scene.reference = shepp_logan(c.size, c.size).as_complex();
    }
    if (c.motion == MotionKind::flow) {
      if (!obstacle) throw InputError("config: flow motion needs the ct_flow porous phantom");
      FlowField flow = solve_stationary_flow(*obstacle, c.size, c.size);
      motion["model"] = "flow";
      motion["dt"] = c.dt;
      json times = json::array();
      for (std::size_t i = 0; i < scene.bins; ++i) times.push_back(static_cast<double>(i) * c.dt);
      motion["times"] = times;
      motion["porosity"] = c.porosity;
      motion["max_divergence"] = flow.max_divergence();
      motion["inflow_flux"] = flow.cut_flux(0);
      motion["outflow_flux"] = flow.cut_flux(c.size);
      scene.deformation = FlowMotion{std::move(flow), c.dt};
    } else {
      RigidMotion rm;
      if (c.motion == MotionKind::none) {
        rm.ux.assign(scene.bins, 0.0);
        rm.uy = rm.alpha = rm.ux;
        rm.reference_bin = c.reference_bin.value_or(scene.bins / 2);
        motion["model"] = "none";
      } else {
        std::vector<double> pmap = c.p_map;
        if (c.motion == MotionKind::non_uniform && pmap.empty()) {
          if (prob.bin_positions.empty())
            throw InputError("config: non_uniform motion needs motion.p_map for this experiment");
          pmap = prob.bin_positions;
          for (auto& p : pmap) p = std::clamp(p, -1.0 + 1e-9, 1.0 - 1e-9);
        }
        rm = sample_motion(c.motion == MotionKind::uniform ? MotionModel::uniform : MotionModel::non_uniform,
                           scene.bins, pmap, c.seed, c.reference_bin.value_or(kDefaultReference), c.ranges);
        motion["model"] = c.motion == MotionKind::uniform ? "uniform" : "non_uniform";
        if (!pmap.empty()) motion["p_map"] = pmap;
      }
      motion["reference_bin"] = rm.reference_bin;
      json per_bin = json::array();
      for (std::size_t i = 0; i < scene.bins; ++i)
        per_bin.push_back({{"ux", rm.ux[i]}, {"uy", rm.uy[i]}, {"alpha", rm.alpha[i]}});
      motion["parameters"] = per_bin;
      scene.deformation = std::move(rm);
    }
  }

  SimulatedData sim = simulate_dynamic_data(scene, prob.op, prob.partition, 0.0, c.seed);
  if (!c.custom_data.empty()) {
    // Measured data are taken verbatim; E_i then measures them against the reference.
    Vec measured = read_array(c.custom_data).values;
    if (measured.size() != sim.clean.size())
      throw InputError("custom data has " + std::to_string(measured.size()) + " entries, the matrix has " +
                       std::to_string(sim.clean.size()) + " rows");
    sim.data.values = std::move(measured);
    motion["data_source"] = "file";
    motion["noise_delta"] = norm(subtract(sim.data.values, sim.clean));
  } else {
    // Noise level: relative to the clean data norm unless configured absolute.
    const double delta = c.noise_relative ? c.noise_delta * norm(sim.clean) : c.noise_delta;
    axpy(1.0, scaled_noise(sim.clean.size(), delta, c.seed), sim.data.values);
    motion["noise_delta"] = delta;
    motion["noise_relative"] = c.noise_relative ? c.noise_delta : delta / std::max(norm(sim.clean), 1e-300);
  }

  const auto ops = split(prob.op, prob.partition);
  const Vec e = compute_inexactness(scene.reference.values, ops, sim.data);

  std::filesystem::create_directories(c.output_dir);
  write_array(c.out("reference.rsop"), to_array(scene.reference));
  write_array(c.out("data.rsop"), to_array(sim.data.values, prob.range_kind));
  if (obstacle) {
    ImageGrid m(c.size, c.size);
    for (std::size_t p = 0; p < obstacle->size(); ++p) m.values[p] = (*obstacle)[p];
    write_array(c.out("obstacle_mask.rsop"), to_array(m));
  }
  {
    std::ofstream os(c.out("motion.json"), std::ios::binary | std::ios::trunc);
    os << motion.dump(2) << '\n';
  }
  CsvWriter csv(c.out("inexactness.csv"), {"i", "E_i", "norm_y_i"});
  for (std::size_t i = 0; i < ops.size(); ++i) csv.row(i, e[i], norm(sim.data.block(i)));
}

/// Reads (E_i) from an inexactness CSV.
inline Vec read_inexactness(const std::filesystem::path& path, std::size_t expected) {
  const CsvTable t = read_csv(path);
  const std::size_t col = t.column("E_i");
  if (t.rows.size() != expected)
    throw InputError(path.string() + " lists " + std::to_string(t.rows.size()) + " subproblems, expected " +
                     std::to_string(expected));
  Vec e(expected);
  for (std::size_t r = 0; r < expected; ++r) e[r] = t.number(r, col);
  return e;
}

inline double read_noise_delta(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open " + path.string() + " (needed for the noise level)");
  try {
    const auto j = nlohmann::json::parse(is);
    return j.at("noise_delta").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

/// reconstruct: recon.rsop, history.csv, profile.csv. Returns the run status;
/// outputs are written even when the run diverged.
inline RunResult cmd_reconstruct(const ExperimentConfig& c) {
  const StaticProblem prob = build_static_problem(c);
  const std::size_t n_dir = prob.partition.count();
  MeasurementVector y{read_array(c.data_path()).values, prob.partition};
  if (y.values.size() != prob.op->range_size())
    throw InputError("data has " + std::to_string(y.values.size()) + " scalars, operator range is " +
                     std::to_string(prob.op->range_size()));

  // E_i is needed for oracle widths and for the profile; analytic mode may run without it.
  Vec e;
  if (std::filesystem::exists(c.inexactness_path())) e = read_inexactness(c.inexactness_path(), n_dir);
  else if (c.mode == WidthMode::oracle_E)
    throw InputError("oracle_E mode needs " + c.inexactness_path().string());

  InexactnessProfile profile;
  if (c.mode == WidthMode::oracle_E) {
    profile = InexactnessProfile::oracle(e);
  } else {
    const double delta = c.solver_delta ? *c.solver_delta : read_noise_delta(c.motion_path());
    Vec eta = c.eta;
    if (eta.empty()) eta.assign(n_dir, 0.0);
    else if (eta.size() == 1) eta.assign(n_dir, eta[0]);
    profile = InexactnessProfile::analytic(delta, eta, c.rho);
    profile.delta_per_block = c.delta_per_block;
  }

  RunOptions opt;
  opt.engine = c.engine;
  opt.init = c.init;
  opt.k_max = c.k_max;
  opt.tau = c.tau;
  opt.cg_steps = c.cg_steps;
  opt.newton.tol = c.newton_tol;
  if (!c.initial.empty()) opt.initial_iterate = read_array(c.initial).values;

  RunResult res = run_resesop(prob.op, y, profile, opt);

  std::filesystem::create_directories(c.output_dir);
  write_array(c.out("recon.rsop"), to_array(domain_image(prob, res.iterate)));
  {
    CsvWriter hist(c.out("history.csv"), {"k", "i", "norm_w_i", "kappa_i", "objective"});
    const double obj0 = 0.5 * norm2(res.initial_residual_norms);
    for (std::size_t i = 0; i < n_dir; ++i) hist.row(std::size_t{0}, i, res.initial_residual_norms[i], 0.0, obj0);
    for (const auto& rec : res.history)
      for (std::size_t i = 0; i < n_dir; ++i)
        hist.row(rec.k, i, rec.residual_norms[i], rec.kappa.empty() ? 0.0 : rec.kappa[i], rec.objective);
  }
  {
    const auto ops = split(prob.op, prob.partition);
    const Vec final_norms = compute_inexactness(res.iterate, ops, y);
    CsvWriter prof(c.out("profile.csv"), {"i", "E_i", "norm_w_i"});
    for (std::size_t i = 0; i < n_dir; ++i)
      prof.row(i, e.empty() ? std::numeric_limits<double>::quiet_NaN() : e[i], final_norms[i]);
  }
  return res;
}

/// analyze-redundancy: redundancy.csv and a Table-1-style report.txt.
inline RedundancyReport cmd_analyze_redundancy(const ExperimentConfig& c) {
  const StaticProblem prob = build_static_problem(c);
  RedundancyReport rep = compute_B(*prob.op, prob.partition, c.rank_tol, c.dense_cap);
  std::filesystem::create_directories(c.output_dir);
  {
    CsvWriter csv(c.out("redundancy.csv"), {"i", "B_i", "norm_i", "ratio_i", "severity"});
    for (std::size_t i = 0; i < rep.blocks.size(); ++i) {
      const auto& b = rep.blocks[i];
      csv.row(i, b.b, b.norm, b.ratio, to_string(b.severity));
    }
  }
  std::ofstream os(c.out("report.txt"), std::ios::binary | std::ios::trunc);
  os << "matrix " << rep.rows << " x " << rep.cols << ", numerical rank " << rep.rank << " (rank_tol "
     << format_number(c.rank_tol) << ")\n";
  if (c.kind == ExperimentKind::ct_flow)
    os << "N_alpha " << c.geometry.n_angles << ", N_dtc " << c.geometry.n_detectors << ", alpha_max "
       << format_number(c.geometry.angle_max / std::numbers::pi) << " pi, N_dir " << prob.partition.count()
       << ", grid " << c.size << " x " << c.size << "\n";
  os << "\n";
  char line[160];
  std::snprintf(line, sizeof line, "%6s %14s %14s %10s  %s\n", "block", "B_i", "||A_i||", "B_i/||A_i||", "severity");
  os << line;
  for (std::size_t i = 0; i < rep.blocks.size(); ++i) {
    const auto& b = rep.blocks[i];
    std::snprintf(line, sizeof line, "%6zu %14.6g %14.6g %10.4f  %s\n", i, b.b, b.norm, b.ratio,
                  std::string(to_string(b.severity)).c_str());
    os << line;
  }
  if (rep.asymmetric()) os << "\nnote: B_i differ between blocks by more than 1%\n";
  return rep;
}

inline MetricsRecord cmd_evaluate(const ExperimentConfig& c) {
  const auto recon_path = c.eval_reconstruction.empty() ? c.out("recon.rsop") : c.eval_reconstruction;
  const auto ref_path = c.eval_reference.empty() ? c.out("reference.rsop") : c.eval_reference;
  const ImageGrid recon = to_image(read_array(recon_path));
  const ImageGrid ref = to_image(read_array(ref_path));
  const MetricsRecord r = evaluate_metrics(ref, recon, c.ssim);
  std::filesystem::create_directories(c.output_dir);
  CsvWriter csv(c.out("metrics.csv"), {"ssim", "psnr", "mse"});
  csv.row(r.ssim, r.psnr, r.mse);
  return r;
}

inline void cmd_export(const ExperimentConfig& c) {
  const auto in = c.export_input.empty() ? c.out("recon.rsop") : c.export_input;
  const auto out = c.export_output.empty() ? c.out(in.stem().string() + ".pgm") : c.export_output;
  export_pgm(to_image(read_array(in)), out, c.gamma);
}

// ---------------------------------------------------------------------------

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

/// Runs one command and maps failures to exit codes: 2 for configuration or
/// input errors, 3 for numerical failures (including solver divergence).
inline int run_command(const std::string& name, ExperimentConfig cfg, std::ostream& err = std::cerr) {
  try {
    if (name == "simulate") {
      cmd_simulate(cfg);
    } else if (name == "reconstruct") {
      const RunResult r = cmd_reconstruct(cfg);
      if (r.status == RunStatus::diverged) {
        err << "reconstruct: solver diverged: " << r.message << '\n';
        return kExitNumerical;
      }
    } else if (name == "analyze-redundancy") {
      cmd_analyze_redundancy(cfg);
    } else if (name == "evaluate") {
      cmd_evaluate(cfg);
    } else if (name == "export") {
      cmd_export(cfg);
    } else {
      err << "unknown command '" << name << "'\n";
      return kExitInput;
    }
  } catch (const InputError& e) {
    err << name << ": " << e.what() << '\n';
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    err << name << ": configuration error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    err << name << ": " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    err << name << ": numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace resesop
