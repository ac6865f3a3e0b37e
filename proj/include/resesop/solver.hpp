#pragma once

#include <limits>
#include <string>

#include "resesop/operators.hpp"
#include "resesop/stripe.hpp"

namespace resesop {

enum class WidthMode { oracle_E, analytic_width };

/// Per-subproblem tolerances. In oracle_E mode block i uses width E_i; in
/// analytic_width mode it uses delta_i + eta_i * rho, where delta_i is the
/// global delta unless per-block values are supplied. The stripe half-width is
/// width * ||w_i||.
struct InexactnessProfile {
  Vec e;
  double delta = 0.0;
  Vec delta_per_block;
  Vec eta;
  double rho = 1.0;
  WidthMode mode = WidthMode::oracle_E;

  static InexactnessProfile oracle(Vec levels) {
    InexactnessProfile p;
    p.e = std::move(levels);
    p.mode = WidthMode::oracle_E;
    return p;
  }
  static InexactnessProfile analytic(double delta, Vec eta, double rho) {
    InexactnessProfile p;
    p.delta = delta;
    p.eta = std::move(eta);
    p.rho = rho;
    p.mode = WidthMode::analytic_width;
    return p;
  }

  void validate(std::size_t n_dir) const {
    if (mode == WidthMode::oracle_E) {
      require(e.size() == n_dir, "profile needs one inexactness level per subproblem");
      for (double v : e) require(v >= 0.0 && std::isfinite(v), "inexactness levels must be finite and >= 0");
    } else {
      require(eta.size() == n_dir, "profile needs one eta per subproblem");
      require(delta >= 0.0, "noise level must be >= 0");
      require(rho > 0.0, "rho must be positive");
      require(delta_per_block.empty() || delta_per_block.size() == n_dir,
              "per-block noise levels must match the subproblem count");
      for (double v : eta) require(v >= 0.0, "eta must be >= 0");
    }
  }

  /// Width of block i before the floor.
  double raw_width(std::size_t i) const {
    if (mode == WidthMode::oracle_E) return e[i];
    const double d = delta_per_block.empty() ? delta : delta_per_block[i];
    return d + eta[i] * rho;
  }
};

/// Relative floor applied to every width so noise-free blocks are not asked
/// for exact interpolation in floating point.
inline constexpr double kWidthFloor = 1e-12;

inline Vec block_widths(const InexactnessProfile& profile, const MeasurementVector& y) {
  const std::size_t n = y.partition.count();
  profile.validate(n);
  Vec widths(n);
  for (std::size_t i = 0; i < n; ++i)
    widths[i] = std::max(profile.raw_width(i), kWidthFloor * norm(y.block(i)));
  return widths;
}

enum class Engine { kaczmarz, simultaneous };

struct IterationRecord {
  std::size_t k = 0;
  Vec residual_norms;  // ||w_i|| at the new iterate
  Vec kappa;
  double objective = 0.0;  // 0.5 * ||A s - y||^2 at the new iterate
  Engine engine = Engine::kaczmarz;
  bool fallback = false;  // simultaneous step fell back to a sweep
  double newton_certificate = 0.0;
  std::vector<std::size_t> null_space_skips;
};

struct SolverState {
  Vec iterate;
  std::vector<Vec> residuals;
  std::vector<Vec> directions;
  Vec kappa;
  std::size_t k = 0;
  std::vector<IterationRecord> history;
};

inline SolverState initial_state(Vec iterate) {
  SolverState s;
  s.iterate = std::move(iterate);
  return s;
}

// ---------------------------------------------------------------------------

inline void check_subproblems(std::span<const OperatorHandle> ops, const MeasurementVector& y) {
  require(!ops.empty(), "need at least one subproblem");
  require(ops.size() == y.partition.count(), "operator count does not match data partition");
  for (std::size_t i = 0; i < ops.size(); ++i) {
    require(ops[i]->range_size() == y.partition[i].length, "suboperator range does not match data block");
    require(ops[i]->domain_size() == ops[0]->domain_size(), "suboperators must share a domain");
  }
}

inline Vec block_residual(const LinearOperator& op, std::span<const double> s, std::span<const double> y_i) {
  Vec w = op.apply_to(s);
  for (std::size_t k = 0; k < w.size(); ++k) w[k] -= y_i[k];
  return w;
}

/// E_i = ||A_i s_ref - y_i||.
inline Vec compute_inexactness(std::span<const double> s_ref, std::span<const OperatorHandle> ops,
                               const MeasurementVector& y) {
  check_subproblems(ops, y);
  Vec e(ops.size());
  parallel_for(ops.size(), [&](std::size_t i) { e[i] = norm(block_residual(*ops[i], s_ref, y.block(i))); });
  return e;
}

struct ConsistencyProfile {
  Vec residual_norms;
  double loss = 0.0;  // sum_i (E_i - ||y_i - A_i s||)^2
};

inline ConsistencyProfile consistency_profile(std::span<const double> s, std::span<const OperatorHandle> ops,
                                              const MeasurementVector& y, std::span<const double> e) {
  require(e.size() == ops.size(), "need one inexactness level per subproblem");
  ConsistencyProfile out;
  out.residual_norms = compute_inexactness(s, ops, y);
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double d = e[i] - out.residual_norms[i];
    out.loss += d * d;
  }
  return out;
}

namespace detail {

inline void refresh_residuals(SolverState& st, std::span<const OperatorHandle> ops, const MeasurementVector& y) {
  st.residuals.resize(ops.size());
  parallel_for(ops.size(), [&](std::size_t i) { st.residuals[i] = block_residual(*ops[i], st.iterate, y.block(i)); });
}

inline void refresh_directions(SolverState& st, std::span<const OperatorHandle> ops) {
  st.directions.resize(ops.size());
  parallel_for(ops.size(), [&](std::size_t i) { st.directions[i] = ops[i]->adjoint_to(st.residuals[i]); });
}

inline IterationRecord close_step(SolverState& st, std::span<const OperatorHandle> ops, const MeasurementVector& y,
                                  Engine engine) {
  refresh_residuals(st, ops, y);
  IterationRecord rec;
  rec.k = st.k;
  rec.engine = engine;
  rec.kappa = st.kappa;
  rec.residual_norms.resize(ops.size());
  double obj = 0.0;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    rec.residual_norms[i] = norm(st.residuals[i]);
    obj += rec.residual_norms[i] * rec.residual_norms[i];
  }
  rec.objective = 0.5 * obj;
  return rec;
}

}  // namespace detail

/// One cycle over all subproblems: w_i = A_i s~_i - y_i, u_i = A_i^* w_i,
/// s~_{i+1} = s~_i - ||w_i|| (||w_i|| - width_i) / ||u_i||^2 u_i. Blocks whose
/// residual already lies within the width are left alone.
inline SolverState kaczmarz_sweep(SolverState state, std::span<const OperatorHandle> ops,
                                  const MeasurementVector& y, const InexactnessProfile& profile) {
  check_subproblems(ops, y);
  require(state.iterate.size() == ops[0]->domain_size(), "iterate size does not match operator domain");
  if (!all_finite(state.iterate)) throw InputError("kaczmarz_sweep: iterate contains non-finite values");
  const Vec widths = block_widths(profile, y);
  const std::size_t n = ops.size();
  state.residuals.assign(n, {});
  state.directions.assign(n, {});
  state.kappa.assign(n, 0.0);
  std::vector<std::size_t> skipped;
  for (std::size_t i = 0; i < n; ++i) {
    Vec w = block_residual(*ops[i], state.iterate, y.block(i));
    const double nw = norm(w);
    Vec u = ops[i]->adjoint_to(w);
    const double uu = norm2(u);
    if (nw > widths[i]) {
      if (uu == 0.0) {
        skipped.push_back(i);  // residual in the adjoint null space
      } else {
        const double kappa = nw * (nw - widths[i]) / uu;
        axpy(-kappa, u, state.iterate);
        state.kappa[i] = kappa;
      }
    }
    state.residuals[i] = std::move(w);
    state.directions[i] = std::move(u);
  }
  ++state.k;
  auto rec = detail::close_step(state, ops, y, Engine::kaczmarz);
  rec.null_space_skips = std::move(skipped);
  state.history.push_back(std::move(rec));
  return state;
}

/// Stripe projection for the whole (unsplit) problem:
/// s <- s - ||w|| (||w|| - width) / ||u||^2 u with w = A s - y, u = A^* w.
inline SolverState single_direction_step(SolverState state, const OperatorHandle& op, std::span<const double> y,
                                         double width) {
  require(op->range_size() == y.size(), "data size does not match operator range");
  require(width >= 0.0, "width must be non-negative");
  MeasurementVector data{Vec(y.begin(), y.end()), SubproblemPartition::single(y.size())};
  const std::vector<OperatorHandle> ops{op};
  return kaczmarz_sweep(std::move(state), ops, data, InexactnessProfile::oracle({width}));
}

// ---------------------------------------------------------------------------

/// F_i(kappa) = a_i + kappa^T b_i + kappa^T C_i kappa, whose roots make
/// ||A_i (s - sum_j kappa_j u_j) - y_i|| equal to width_i for every i.
struct QuadraticSystem {
  Vec a;
  Eigen::MatrixXd b;                 // row i holds b_i
  std::vector<Eigen::MatrixXd> c;    // C_i
  Vec residual_sq;                   // ||w_i||^2

  std::size_t size() const { return a.size(); }

  double evaluate(std::size_t i, const Eigen::VectorXd& kappa) const {
    return a[i] + b.row(static_cast<Eigen::Index>(i)).dot(kappa) + kappa.dot(c[i] * kappa);
  }
  Eigen::VectorXd evaluate(const Eigen::VectorXd& kappa) const {
    Eigen::VectorXd f(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) f[static_cast<Eigen::Index>(i)] = evaluate(i, kappa);
    return f;
  }
  /// J_ij = b_i[j] + 2 (C_i kappa)[j]
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& kappa) const {
    Eigen::MatrixXd j = b;
    for (std::size_t i = 0; i < size(); ++i) j.row(static_cast<Eigen::Index>(i)) += 2.0 * (c[i] * kappa).transpose();
    return j;
  }
  /// Step sizes of the independent metric projections, ||w_i||(||w_i|| - width_i)/||u_i||^2,
  /// zero for blocks already inside their stripe. ||u_i||^2 = -b_i[i] / 2.
  Eigen::VectorXd independent_projection() const {
    Eigen::VectorXd k = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double uu = -0.5 * b(ii, ii);
      if (a[i] <= 0.0 || uu <= 0.0) continue;
      const double nw = std::sqrt(residual_sq[i]);
      const double width = std::sqrt(std::max(0.0, residual_sq[i] - a[i]));
      k[ii] = nw * (nw - width) / uu;
    }
    return k;
  }
};

/// Builds the system from the current residuals/directions in `state`.
inline QuadraticSystem assemble_quadratic_system(const SolverState& state, std::span<const OperatorHandle> ops,
                                                 std::span<const double> widths) {
  const std::size_t n = ops.size();
  require(state.residuals.size() == n && state.directions.size() == n, "state lacks residuals or directions");
  require(widths.size() == n, "need one width per subproblem");
  // images[i][j] = A_i u_j
  std::vector<std::vector<Vec>> images(n, std::vector<Vec>(n));
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) images[i][j] = ops[i]->apply_to(state.directions[j]);
  });
  QuadraticSystem sys;
  const auto ni = static_cast<Eigen::Index>(n);
  sys.a.resize(n);
  sys.residual_sq.resize(n);
  sys.b = Eigen::MatrixXd::Zero(ni, ni);
  sys.c.assign(n, Eigen::MatrixXd::Zero(ni, ni));
  for (std::size_t i = 0; i < n; ++i) {
    sys.residual_sq[i] = norm2(state.residuals[i]);
    sys.a[i] = sys.residual_sq[i] - widths[i] * widths[i];
    for (std::size_t j = 0; j < n; ++j) {
      sys.b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = -2.0 * dot(state.residuals[i], images[i][j]);
      for (std::size_t l = j; l < n; ++l) {
        const double v = dot(images[i][j], images[i][l]);
        sys.c[i](static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) = v;
        sys.c[i](static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) = v;
      }
    }
  }
  return sys;
}

struct StepsizeOptions {
  double tol = 1e-12;
  int max_iter = 100;
  std::size_t max_subproblems = 64;
  int max_halvings = 30;
  bool restarts = true;  // retry uncertified runs from fixed alternative starts
};

struct StepsizeResult {
  Eigen::VectorXd kappa;
  bool converged = false;
  /// max over active blocks of |F_i| and over inactive blocks of max(F_i, 0)
  double certificate = std::numeric_limits<double>::infinity();
  double tolerance = 0.0;  // absolute threshold the certificate was held to
  int iterations = 0;
  std::vector<bool> active;
};

namespace detail {

/// One damped Newton run from `kappa0`. Blocks with a_i <= 0 (already inside
/// their stripe) start inactive with kappa_i = 0 and only need F_i <= 0; they
/// join the active set if a step pushes them outside.
inline StepsizeResult newton_from(const QuadraticSystem& sys, const Eigen::VectorXd& kappa0, double tolerance,
                                  const StepsizeOptions& opt) {
  const std::size_t n = sys.size();
  StepsizeResult res;
  res.tolerance = tolerance;
  res.active.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) res.active[i] = sys.a[i] > 0.0;
  res.kappa = kappa0;
  for (std::size_t i = 0; i < n; ++i)
    if (!res.active[i]) res.kappa[static_cast<Eigen::Index>(i)] = 0.0;

  auto certificate = [&](const Eigen::VectorXd& k) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = sys.evaluate(i, k);
      worst = std::max(worst, res.active[i] ? std::abs(f) : std::max(f, 0.0));
    }
    return worst;
  };

  for (std::size_t round = 0; round <= n; ++round) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (res.active[i]) idx.push_back(static_cast<Eigen::Index>(i));
    const auto m = static_cast<Eigen::Index>(idx.size());

    auto merit = [&](const Eigen::VectorXd& k) {
      double worst = 0.0;
      for (auto i : idx) worst = std::max(worst, std::abs(sys.evaluate(static_cast<std::size_t>(i), k)));
      return worst;
    };

    bool stuck = false;
    while (m > 0 && res.iterations < opt.max_iter) {
      const double current = merit(res.kappa);
      if (current <= res.tolerance) break;
      const Eigen::VectorXd f_all = sys.evaluate(res.kappa);
      const Eigen::MatrixXd j_all = sys.jacobian(res.kappa);
      Eigen::VectorXd f(m);
      Eigen::MatrixXd jac(m, m);
      for (Eigen::Index r = 0; r < m; ++r) {
        f[r] = f_all[idx[static_cast<std::size_t>(r)]];
        for (Eigen::Index c = 0; c < m; ++c) jac(r, c) = j_all(idx[static_cast<std::size_t>(r)], idx[static_cast<std::size_t>(c)]);
      }
      ++res.iterations;

      auto try_step = [&](const Eigen::VectorXd& d) {
        double t = 1.0;
        for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
          Eigen::VectorXd trial = res.kappa;
          for (Eigen::Index r = 0; r < m; ++r) trial[idx[static_cast<std::size_t>(r)]] += t * d[r];
          if (trial.allFinite() && merit(trial) < current) {
            res.kappa = trial;
            return true;
          }
        }
        return false;
      };

      bool moved = false;
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jac);
      if (qr.rank() == m) {
        const Eigen::VectorXd d = qr.solve(-f);
        if (d.allFinite()) moved = try_step(d);
      }
      // Levenberg-style damping for singular or unproductive Newton steps.
      const Eigen::MatrixXd jtj = jac.transpose() * jac;
      double mu = 1e-8 * std::max(jtj.diagonal().maxCoeff(), std::numeric_limits<double>::min());
      for (int attempt = 0; !moved && attempt < 12; ++attempt, mu *= 100.0) {
        Eigen::MatrixXd lhs = jtj;
        lhs.diagonal().array() += mu;
        const Eigen::VectorXd d = lhs.ldlt().solve(-jac.transpose() * f);
        if (d.allFinite()) moved = try_step(d);
      }
      if (!moved) {
        stuck = true;
        break;
      }
    }
    if (stuck || merit(res.kappa) > res.tolerance) break;

    bool grew = false;
    for (std::size_t i = 0; i < n; ++i)
      if (!res.active[i] && sys.evaluate(i, res.kappa) > res.tolerance) {
        res.active[i] = true;
        grew = true;
      }
    if (!grew) break;
  }
  res.certificate = certificate(res.kappa);
  res.converged = res.certificate <= res.tolerance;
  return res;
}

}  // namespace detail

/// Damped Newton on F(kappa) = 0 started at kappa0. Dependent blocks can trap
/// Newton near a singular Jacobian, so an uncertified run is retried from the
/// origin and from rescaled copies of kappa0; the first certified result wins,
/// otherwise the one with the smallest certificate.
inline StepsizeResult solve_stepsizes(const QuadraticSystem& sys, const Eigen::VectorXd& kappa0,
                                      const StepsizeOptions& opt = {}) {
  const std::size_t n = sys.size();
  require(n >= 1, "empty step-size system");
  if (n > opt.max_subproblems)
    throw InputError("step-size system has " + std::to_string(n) + " subproblems, cap is " +
                     std::to_string(opt.max_subproblems));
  require(static_cast<std::size_t>(kappa0.size()) == n, "kappa0 size does not match the system");

  double scale_sq = 1.0;
  for (double r : sys.residual_sq) scale_sq = std::max(scale_sq, r);
  const double tolerance = opt.tol * scale_sq;

  std::vector<Eigen::VectorXd> starts{kappa0};
  if (opt.restarts) {
    starts.push_back(Eigen::VectorXd::Zero(kappa0.size()));
    for (double f : {0.5, 0.25, 2.0}) starts.push_back(f * kappa0);
  }
  StepsizeResult best;
  int iterations = 0;
  for (const auto& start : starts) {
    StepsizeResult r = detail::newton_from(sys, start, tolerance, opt);
    iterations += r.iterations;
    if (r.certificate < best.certificate || best.active.empty()) best = std::move(r);
    if (best.converged) break;
  }
  best.iterations = iterations;
  return best;
}

/// s <- s - sum_i kappa_i u_i with kappa from solve_stepsizes, started at the
/// independent metric projection. Falls back to a Kaczmarz sweep when Newton
/// does not certify a root.
inline SolverState simultaneous_step(SolverState state, std::span<const OperatorHandle> ops,
                                     const MeasurementVector& y, const InexactnessProfile& profile,
                                     const StepsizeOptions& opt = {}) {
  check_subproblems(ops, y);
  require(state.iterate.size() == ops[0]->domain_size(), "iterate size does not match operator domain");
  if (!all_finite(state.iterate)) throw InputError("simultaneous_step: iterate contains non-finite values");
  const Vec widths = block_widths(profile, y);
  detail::refresh_residuals(state, ops, y);
  detail::refresh_directions(state, ops);
  const QuadraticSystem sys = assemble_quadratic_system(state, ops, widths);
  const StepsizeResult sol = solve_stepsizes(sys, sys.independent_projection(), opt);
  if (!sol.converged) {
    SolverState next = kaczmarz_sweep(std::move(state), ops, y, profile);
    next.history.back().fallback = true;
    next.history.back().engine = Engine::simultaneous;
    next.history.back().newton_certificate = sol.certificate;
    return next;
  }
  state.kappa.assign(sol.kappa.data(), sol.kappa.data() + sol.kappa.size());
  for (std::size_t i = 0; i < ops.size(); ++i)
    if (state.kappa[i] != 0.0) axpy(-state.kappa[i], state.directions[i], state.iterate);
  ++state.k;
  auto rec = detail::close_step(state, ops, y, Engine::simultaneous);
  rec.newton_certificate = sol.certificate;
  state.history.push_back(std::move(rec));
  return state;
}

// ---------------------------------------------------------------------------

enum class Initialization { zero, cg_warm_start };
enum class RunStatus { discrepancy_reached, max_iterations, diverged };

inline std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::discrepancy_reached: return "discrepancy_reached";
    case RunStatus::max_iterations: return "max_iterations";
    case RunStatus::diverged: return "diverged";
  }
  return "unknown";
}

struct RunOptions {
  Engine engine = Engine::kaczmarz;
  Initialization init = Initialization::zero;
  std::size_t k_max = 100;
  double tau = 1.001;
  int cg_steps = 2;
  int divergence_window = 5;
  StepsizeOptions newton;
  std::optional<Vec> initial_iterate;  // overrides `init` when present
};

struct RunResult {
  Vec iterate;
  std::vector<IterationRecord> history;
  Vec initial_residual_norms;
  RunStatus status = RunStatus::max_iterations;
  std::string message;
};

/// Conjugate gradients on the normal equations A^*A s = A^*y (CGLS form),
/// started from zero.
inline Vec cgls(const LinearOperator& op, std::span<const double> y, int steps) {
  Vec x(op.domain_size(), 0.0);
  Vec r(y.begin(), y.end());
  Vec s = op.adjoint_to(r);
  Vec p = s;
  double gamma = norm2(s);
  Vec q(op.range_size());
  for (int it = 0; it < steps && gamma > 0.0; ++it) {
    op.apply(p, q);
    const double qq = norm2(q);
    if (qq == 0.0) break;
    const double alpha = gamma / qq;
    axpy(alpha, p, x);
    axpy(-alpha, q, r);
    op.adjoint(r, s);
    const double gamma_new = norm2(s);
    const double beta = gamma_new / gamma;
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = s[k] + beta * p[k];
    gamma = gamma_new;
  }
  return x;
}

/// Iterates the selected engine until max_i(||w_i|| - tau * width_i) <= 0 or
/// k_max steps. Aborts when the stripe violation grows for
/// `divergence_window` consecutive steps.
inline RunResult run_resesop(const OperatorHandle& full, const MeasurementVector& y,
                             const InexactnessProfile& profile, const RunOptions& opt = {}) {
  require(full != nullptr, "run_resesop needs an operator");
  require(full->range_size() == y.values.size(), "data size does not match operator range");
  require(y.partition.total() == y.values.size(), "data partition does not cover the data");
  require(opt.tau >= 1.0, "discrepancy factor tau must be >= 1");
  const auto ops = split(full, y.partition);
  const Vec widths = block_widths(profile, y);

  RunResult out;
  if (opt.initial_iterate) {
    require(opt.initial_iterate->size() == full->domain_size(), "initial iterate has the wrong size");
    out.iterate = *opt.initial_iterate;
  } else if (opt.init == Initialization::cg_warm_start) {
    out.iterate = cgls(*full, y.values, opt.cg_steps);
  } else {
    out.iterate = Vec(full->domain_size(), 0.0);
  }

  // Distance to the stripes, 0.5 * sum_i max(0, ||w_i|| - width_i)^2. The
  // least-squares objective may legitimately rise while residuals settle onto
  // their widths, so divergence is judged on this quantity instead.
  auto violation = [&](std::span<const double> norms) {
    double v = 0.0;
    for (std::size_t i = 0; i < norms.size(); ++i) {
      const double d = std::max(0.0, norms[i] - widths[i]);
      v += d * d;
    }
    return 0.5 * v;
  };
  auto reached = [&](std::span<const double> norms) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < norms.size(); ++i) worst = std::max(worst, norms[i] - opt.tau * widths[i]);
    return worst <= 0.0;
  };

  out.initial_residual_norms = compute_inexactness(out.iterate, ops, y);
  if (!all_finite(out.initial_residual_norms) || !all_finite(widths)) {
    out.status = RunStatus::diverged;
    out.message = "residual or data norms overflow at the initial iterate";
    return out;
  }
  if (reached(out.initial_residual_norms)) {
    out.status = RunStatus::discrepancy_reached;
    return out;
  }
  SolverState state = initial_state(std::move(out.iterate));
  double prev = violation(out.initial_residual_norms);
  int growth = 0;
  out.status = RunStatus::max_iterations;
  while (state.k < opt.k_max) {
    state = opt.engine == Engine::kaczmarz ? kaczmarz_sweep(std::move(state), ops, y, profile)
                                           : simultaneous_step(std::move(state), ops, y, profile, opt.newton);
    const auto& rec = state.history.back();
    if (!all_finite(state.iterate) || !all_finite(rec.residual_norms)) {
      out.status = RunStatus::diverged;
      out.message = "iterate or residuals became non-finite at step " + std::to_string(state.k);
      break;
    }
    const double v = violation(rec.residual_norms);
    growth = v > prev ? growth + 1 : 0;
    prev = v;
    if (growth >= opt.divergence_window) {
      out.status = RunStatus::diverged;
      out.message = "stripe violation grew for " + std::to_string(growth) + " consecutive steps (k = " +
                    std::to_string(state.k) + ", violation " + std::to_string(v) + ", objective " +
                    std::to_string(rec.objective) + ")";
      break;
    }
    if (reached(rec.residual_norms)) {
      out.status = RunStatus::discrepancy_reached;
      break;
    }
  }
  out.iterate = std::move(state.iterate);
  out.history = std::move(state.history);
  return out;
}

}  // namespace resesop
