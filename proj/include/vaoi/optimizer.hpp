#pragma once

// Solver for the CO-SRP power-constrained program: projected-gradient inner
// solves, the fixed-point (beta, rho) update, and bisection on the power
// multiplier theta. Also hosts the half-objective lower bound and two
// brute-force oracles used to audit the solver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vaoi/cosrp.hpp"
#include "vaoi/error.hpp"
#include "vaoi/model.hpp"
#include "vaoi/simplex.hpp"

namespace vaoi {

/// Auxiliary variables of the parametric subproblem.
struct DualState {
  std::vector<double> beta;
  std::vector<double> rho;
  double theta = 0.0;
};

struct SolverConfig {
  double eps_psi = 1e-8;
  double eps_power = -1.0;  // negative: 1e-4 * pbar, at least 1e-6
  double eps_inner = 1e-10;
  int max_newton = 200;
  int max_bisect = 60;
  double theta_hi_init = 1.0;
  double theta_bracket = 1e-10;  // bisection stops once hi - lo <= theta_bracket * max(1, hi)
  int max_inner = 200000;
  int stall_window = 10;  // full steps without a new best residual before damping engages

  double power_tolerance(double pbar) const {
    if (eps_power > 0.0) return eps_power;
    return std::max(1e-4 * pbar, 1e-6);
  }

  void validate() const {
    if (!(eps_psi > 0.0 && eps_inner > 0.0 && theta_hi_init > 0.0))
      throw InvalidInput("solver tolerances must be positive");
    if (max_newton < 1 || max_bisect < 1 || max_inner < 1 || stall_window < 1) throw InvalidInput("solver caps must be positive");
  }
};

/// Raised when the inner projected-gradient loop exhausts its budget.
class InnerSolveError : public ConvergenceError {
 public:
  InnerSolveError(std::vector<double> best, double residual)
      : ConvergenceError("inner solve hit its iteration cap", residual), best_(std::move(best)) {}
  const std::vector<double>& best_iterate() const noexcept { return best_; }

 private:
  std::vector<double> best_;
};

// Value of the subproblem objective
//   sum_i w_i O_i + theta (sum_i beta_i - pbar) + sum_i rho_i (d_i - beta_i f_i).
inline double inner_objective(const FractionalProgram& prog, const DualState& dual, std::span<const double> x) {
  double v = prog.objective(x);
  double bsum = 0.0;
  for (std::size_t i = 0; i < prog.n_users(); ++i) {
    if (!prog.is_active(i)) continue;
    bsum += dual.beta[i];
    v += dual.rho[i] * (prog.d(i, x) - dual.beta[i] * prog.f(i, x));
  }
  return v + dual.theta * (bsum - prog.pbar());
}

inline std::vector<double> inner_gradient(const FractionalProgram& prog, const DualState& dual,
                                          std::span<const double> x) {
  std::vector<double> g(prog.dim(), 0.0);
  for (std::size_t i = 0; i < prog.n_users(); ++i) {
    if (!prog.is_active(i)) continue;
    const double lam = prog.streams()[i].lambda;
    const double w = prog.streams()[i].weight;
    const double pi = prog.p(i, x);
    double c = -dual.rho[i] * dual.beta[i] * (1.0 - lam);
    if (pi >= kProbabilityClamp) c -= w * lam / (pi * pi);
    const auto a = prog.grad_p(i);
    const auto dd = prog.grad_d(i);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += c * a[j] + dual.rho[i] * dd[j];
  }
  return g;
}

struct InnerResult {
  std::vector<double> x;
  double objective = 0.0;
  int iterations = 0;
};

/// Minimizes the convex subproblem for a fixed dual over the product of
/// per-state simplexes. Projected gradient, Barzilai-Borwein trial step,
/// Armijo backtracking by halving.
inline InnerResult inner_solve(const FractionalProgram& prog, const DualState& dual, std::vector<double> x,
                               const SolverConfig& cfg = {}) {
  const std::size_t k = prog.n_subsets();
  project_simplex_blocks(x, k);
  double fx = inner_objective(prog, dual, x);
  auto g = inner_gradient(prog, dual, x);
  double step = 1.0;
  std::vector<double> y(x.size());
  double last_change = kInfinity;
  int flat = 0;  // consecutive steps whose decrease is at rounding level
  for (int it = 0; it < cfg.max_inner; ++it) {
    double fy = 0.0;
    double decrease = 0.0;
    for (;;) {
      for (std::size_t j = 0; j < x.size(); ++j) y[j] = x[j] - step * g[j];
      project_simplex_blocks(y, k);
      fy = inner_objective(prog, dual, y);
      decrease = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) decrease += g[j] * (y[j] - x[j]);
      if (fy <= fx + 1e-4 * decrease || step < 1e-20) break;
      step *= 0.5;
    }
    double move = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) move = std::max(move, std::abs(y[j] - x[j]));
    if (!(fy <= fx)) return {std::move(x), fx, it};  // no descent left at machine precision
    const double change = fx - fy;
    last_change = move;
    if (change <= 1e-4 * cfg.eps_inner * std::max(1.0, std::abs(fx)) && move <= 1e-3 * cfg.eps_inner)
      return {std::move(y), fy, it + 1};
    flat = change <= 1e-15 * std::max(1.0, std::abs(fx)) ? flat + 1 : 0;
    if (flat >= 50) return {std::move(y), fy, it + 1};
    auto gy = inner_gradient(prog, dual, y);
    double ss = 0.0;
    double sy = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double s = y[j] - x[j];
      ss += s * s;
      sy += s * (gy[j] - g[j]);
    }
    step = sy > 1e-30 ? ss / sy : step * 2.0;
    x.swap(y);
    g.swap(gy);
    fx = fy;
  }
  throw InnerSolveError(std::move(x), last_change);
}

/// Residual (-d_i + beta_i f_i, -theta + rho_i f_i), inactive users at zero.
inline std::vector<double> psi(const FractionalProgram& prog, const DualState& dual, std::span<const double> x) {
  const std::size_t n = prog.n_users();
  std::vector<double> r(2 * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!prog.is_active(i)) continue;
    const double fi = prog.f(i, x);
    r[i] = -prog.d(i, x) + dual.beta[i] * fi;
    r[n + i] = -dual.theta + dual.rho[i] * fi;
  }
  return r;
}

inline double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double a : v) m = std::max(m, std::abs(a));
  return m;
}

/// beta_i = d_i / f_i, rho_i = theta / f_i at x.
inline DualState fixed_point_dual(const FractionalProgram& prog, double theta, std::span<const double> x) {
  DualState dual{std::vector<double>(prog.n_users(), 0.0), std::vector<double>(prog.n_users(), 0.0), theta};
  for (std::size_t i = 0; i < prog.n_users(); ++i) {
    if (!prog.is_active(i)) continue;
    const double fi = prog.f(i, x);
    dual.beta[i] = prog.d(i, x) / fi;
    dual.rho[i] = theta / fi;
  }
  return dual;
}

struct ThetaSolution {
  std::vector<double> x;
  DualState dual;
  double objective = 0.0;
  double power = 0.0;
  double psi_inf = 0.0;
  int newton_iterations = 0;
  int inner_iterations = 0;
  int damped_steps = 0;
  bool clamped = false;
  std::vector<double> residual_trace;
};

namespace detail {

inline DualState blend(const DualState& from, const DualState& to, double t) {
  DualState out = from;
  for (std::size_t i = 0; i < out.beta.size(); ++i) {
    out.beta[i] += t * (to.beta[i] - from.beta[i]);
    out.rho[i] += t * (to.rho[i] - from.rho[i]);
  }
  return out;
}

}  // namespace detail

/// Runs the fixed-point iteration at a given theta until the psi residual is
/// at most eps_psi * psi_scale in the infinity norm.
///
/// Full steps beta <- d/f, rho <- theta/f are taken while they make progress.
/// If stall_window consecutive full steps fail to improve on the best residual
/// (the map can settle into a cycle between faces of the inner problem), the
/// iteration restarts from the best iterate and takes steps of length 2^-j
/// toward the full step, with the smallest j giving sufficient decrease.
inline ThetaSolution solve_for_theta(const FractionalProgram& prog, double theta, const SolverConfig& cfg = {},
                                     std::vector<double> x0 = {}, double psi_scale = 1.0) {
  if (!(theta >= 0.0)) throw InvalidInput("theta must be >= 0");
  ThetaSolution out;
  out.x = x0.empty() ? prog.uniform_point() : std::move(x0);
  out.dual = fixed_point_dual(prog, theta, out.x);
  const double tol = cfg.eps_psi * psi_scale;
  auto finish = [&](double r) {
    out.psi_inf = r;
    out.objective = prog.objective(out.x, &out.clamped);
    out.power = prog.power(out.x);
    return std::move(out);
  };

  int growth = 0;
  int stall = 0;
  double prev = kInfinity;
  double best_r = kInfinity;
  std::vector<double> best_x;
  DualState best_dual;
  bool damped = false;
  for (int k = 0; k < cfg.max_newton && !damped; ++k) {
    auto inner = inner_solve(prog, out.dual, out.x, cfg);
    out.x = std::move(inner.x);
    out.inner_iterations += inner.iterations;
    out.newton_iterations = k + 1;
    const double r = inf_norm(psi(prog, out.dual, out.x));
    out.residual_trace.push_back(r);
    if (r <= tol) return finish(r);
    growth = r > prev ? growth + 1 : 0;
    if (growth >= 10)
      throw ConvergenceError("dual iteration diverging at theta=" + std::to_string(theta), r);
    prev = r;
    if (r < best_r) {
      best_r = r;
      best_x = out.x;
      best_dual = out.dual;
      stall = 0;
    } else if (++stall >= cfg.stall_window) {
      damped = true;
    }
    out.dual = fixed_point_dual(prog, theta, out.x);
  }

  if (damped) {
    out.x = std::move(best_x);
    out.dual = std::move(best_dual);
    double r = best_r;
    while (out.newton_iterations < cfg.max_newton) {
      const DualState full = fixed_point_dual(prog, theta, out.x);
      bool accepted = false;
      for (int j = 0; j <= 30 && out.newton_iterations < cfg.max_newton; ++j) {
        const double t = std::ldexp(1.0, -j);
        DualState trial = detail::blend(out.dual, full, t);
        auto inner = inner_solve(prog, trial, out.x, cfg);
        out.inner_iterations += inner.iterations;
        ++out.newton_iterations;
        const double rt = inf_norm(psi(prog, trial, inner.x));
        if (rt <= (1.0 - 1e-4 * t) * r) {
          out.x = std::move(inner.x);
          out.dual = std::move(trial);
          r = rt;
          ++out.damped_steps;
          out.residual_trace.push_back(r);
          accepted = true;
          break;
        }
      }
      if (r <= tol) return finish(r);
      if (!accepted) break;
    }
  }
  throw ConvergenceError("dual iteration hit max_newton at theta=" + std::to_string(theta),
                         out.residual_trace.empty() ? kInfinity : out.residual_trace.back());
}

enum class SolveStatus { binding, slack, zero_budget };

inline std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::binding:
      return "binding";
    case SolveStatus::slack:
      return "slack";
    case SolveStatus::zero_budget:
      return "zero_budget";
  }
  return "unknown";
}

struct CosrpSolution {
  CoSrpPolicy policy;
  std::vector<double> x;  // decision vector over the program's active subsets
  DualState dual;
  double objective = 0.0;
  double achieved_power = 0.0;
  double theta = 0.0;
  double psi_inf = 0.0;
  SolveStatus status = SolveStatus::binding;
  int bisect_iterations = 0;
  int newton_iterations = 0;
  int inner_iterations = 0;
  int damped_steps = 0;
  bool clamped = false;
};

namespace detail {

inline CosrpSolution package(const FractionalProgram& prog, ThetaSolution&& ts, SolveStatus status) {
  CosrpSolution sol;
  sol.policy = prog.expand(ts.x);
  sol.dual = std::move(ts.dual);
  sol.theta = sol.dual.theta;
  const auto p = prog.p(ts.x);
  sol.objective = weighted_objective(prog.streams(), p);
  sol.achieved_power = ts.power;
  sol.psi_inf = ts.psi_inf;
  sol.status = status;
  sol.newton_iterations = ts.newton_iterations;
  sol.inner_iterations = ts.inner_iterations;
  sol.damped_steps = ts.damped_steps;
  sol.clamped = ts.clamped;
  sol.x = std::move(ts.x);
  return sol;
}

}  // namespace detail

/// Minimizes the weighted average VAoI subject to the average power budget.
inline CosrpSolution solve(const FractionalProgram& prog, const SolverConfig& cfg = {}) {
  cfg.validate();
  const double pbar = prog.pbar();
  const double eps_power = cfg.power_tolerance(pbar);

  if (!(pbar > 0.0)) {
    // only the silent policy spends no power
    ThetaSolution ts;
    ts.x.assign(prog.dim(), 0.0);
    for (std::size_t s = 0; s < prog.n_states(); ++s) ts.x[s * prog.n_subsets()] = 1.0;
    ts.dual = fixed_point_dual(prog, 0.0, ts.x);
    ts.power = 0.0;
    return detail::package(prog, std::move(ts), SolveStatus::zero_budget);
  }

  auto at0 = solve_for_theta(prog, 0.0, cfg);
  if (at0.power <= pbar) return detail::package(prog, std::move(at0), SolveStatus::slack);

  // Bisection probes accept a psi residual scaled by max(1, theta); the
  // selected theta is re-polished to the absolute tolerance afterwards.
  // Each probe starts from the latest iterate that met the budget.
  int damped = at0.damped_steps;
  auto probe = [&](double theta, std::vector<double> x0) {
    auto ts = solve_for_theta(prog, theta, cfg, std::move(x0), std::max(1.0, theta));
    damped += ts.damped_steps;
    return ts;
  };

  double lo = 0.0;
  double hi = cfg.theta_hi_init;
  const double hi_cap = std::ldexp(1.0, 60);
  ThetaSolution best = probe(hi, {});
  while (best.power > pbar) {
    if (hi >= hi_cap) throw ConvergenceError("power budget not met for any theta up to 2^60", best.power - pbar);
    hi *= 2.0;
    best = probe(hi, best.x);
  }
  int iters = 0;
  if (std::abs(best.power - pbar) >= eps_power) {
    for (; iters < cfg.max_bisect;) {
      ++iters;
      const double mid = 0.5 * (lo + hi);
      auto ts = probe(mid, best.x);
      const bool within = std::abs(ts.power - pbar) < eps_power;
      if (ts.power <= pbar) {
        hi = mid;
        best = std::move(ts);
      } else {
        lo = mid;
        if (within) best = std::move(ts);
      }
      if (within) break;
      if (hi - lo <= cfg.theta_bracket * std::max(1.0, hi)) break;
    }
  }
  const double theta = best.dual.theta;
  auto polished = solve_for_theta(prog, theta, cfg, best.x, 1.0);
  damped += polished.damped_steps;
  // The theta = 0 subproblem can have several minimizers of different power.
  // A budget between their powers is met at any small theta > 0 without
  // giving up objective, so it is not binding.
  const bool flat_jump = lo == 0.0 && std::abs(polished.power - pbar) >= eps_power &&
                         polished.objective <= at0.objective + 1e-9 * std::max(1.0, at0.objective);
  auto sol = detail::package(prog, std::move(polished), flat_jump ? SolveStatus::slack : SolveStatus::binding);
  sol.bisect_iterations = iters;
  sol.damped_steps = damped;
  return sol;
}

/// Half of the CO-SRP optimum; never exceeds the optimal VAoI of any policy.
inline double lower_bound(double v_srp) {
  if (!(v_srp >= 0.0)) throw InvalidInput("lower_bound needs a nonnegative objective");
  return v_srp / 2.0;
}

/// Exhaustive search over per-level transmit probabilities of a single user
/// on a uniform grid of the given step.
inline double grid_oracle_single_user(const ChannelModel& model, const StreamConfig& stream, double pbar, double step,
                                      const RateFunction& f = RateFunction::log1p()) {
  if (model.n_users() != 1) throw InvalidInput("grid oracle handles exactly one user");
  if (!(step > 0.0 && step <= 1.0)) throw InvalidInput("grid step must lie in (0,1]");
  const std::size_t L = model.n_levels();
  const auto& pmf = model.pmf(0);
  std::vector<double> solo(L);
  for (std::size_t k = 0; k < L; ++k) solo[k] = f.inverse(stream.r0) / model.level(k);
  const auto n_steps = static_cast<std::size_t>(std::llround(1.0 / step));
  const double lam = stream.lambda;
  if (lam == 0.0) return 0.0;

  double best = kInfinity;
  // Enumerate the grid level by level; q[k] = j * step.
  std::vector<std::size_t> j(L, 0);
  for (;;) {
    double p = 0.0;
    double pc = 0.0;
    for (std::size_t k = 0; k < L; ++k) {
      const double q = std::min(1.0, static_cast<double>(j[k]) / static_cast<double>(n_steps));
      p += pmf[k] * q;
      pc += pmf[k] * q * solo[k];
    }
    const double power = lam * pc / (lam * (1.0 - p) + p);
    if (power <= pbar) best = std::min(best, average_vaoi(p, lam) * stream.weight);
    std::size_t k = 0;
    while (k < L && ++j[k] > n_steps) j[k++] = 0;
    if (k == L) break;
  }
  return best;
}

/// Uniform double in [0,1) from a 64-bit engine, 53 significant bits.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Draws random policies (flat Dirichlet per channel state) and counts the
/// feasible ones that beat `solution` by more than 1e-6.
inline std::size_t random_feasibility_probe(const FractionalProgram& prog, const CosrpSolution& solution,
                                            std::size_t samples, std::uint64_t seed,
                                            const SolverConfig& cfg = {}) {
  std::mt19937_64 rng(seed);
  const double eps_power = cfg.power_tolerance(prog.pbar());
  const std::size_t k = prog.n_subsets();
  std::vector<double> x(prog.dim());
  std::size_t violations = 0;
  for (std::size_t n = 0; n < samples; ++n) {
    for (std::size_t s = 0; s < prog.n_states(); ++s) {
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double e = -std::log1p(-uniform01(rng));
        x[s * k + j] = e;
        sum += e;
      }
      for (std::size_t j = 0; j < k; ++j) x[s * k + j] /= sum;
    }
    if (prog.power(x) > prog.pbar() + eps_power) continue;
    const double obj = weighted_objective(prog.streams(), prog.p(x));
    if (obj < solution.objective - 1e-6) ++violations;
  }
  return violations;
}

}  // namespace vaoi
