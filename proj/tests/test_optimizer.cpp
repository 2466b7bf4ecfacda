#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "vaoi/optimizer.hpp"

using namespace vaoi;

namespace {

ChannelModel fig1_channel() { return ChannelModel::shared({0.1, 1.0}, {0.2, 0.8}, 2); }

Streams sym(double lambda, double r0 = 2.0) { return Streams(2, StreamConfig{lambda, r0, 0.5}); }

double golden_min(const std::function<double(double)>& fn, double a, double b) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = fn(c), fd = fn(d);
  for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = fn(d);
    }
  }
  return 0.5 * (a + b);
}

// One user, one channel level: the power constraint binds at
// q = pbar lambda / (lambda P - pbar (1 - lambda)).
double single_level_optimum(double lambda, double solo, double pbar) {
  const double den = lambda * solo - pbar * (1.0 - lambda);
  const double q = den <= 0.0 ? 1.0 : std::min(1.0, pbar * lambda / den);
  return lambda * (1.0 - q) / q;
}

}  // namespace

TEST(InnerSolve, MatchesGoldenSectionInOneDimension) {
  const ChannelModel m({1.0}, {{1.0}});
  const Streams st{{0.6, 1.0, 1.0}};
  const auto prog = build_program(m, st, 0.5, Scheme::noma);
  ASSERT_EQ(prog.dim(), 2u);
  for (double theta : {0.0, 0.3, 2.0}) {
    const DualState dual{{0.4}, {0.7 * theta + 0.1}, theta};
    const auto res = inner_solve(prog, dual, prog.uniform_point());
    const double q = golden_min(
        [&](double t) {
          const std::vector<double> x{1.0 - t, t};
          return inner_objective(prog, dual, x);
        },
        1e-9, 1.0);
    EXPECT_NEAR(res.x[1], q, 1e-5) << "theta=" << theta;
    const std::vector<double> xq{1.0 - q, q};
    EXPECT_LE(res.objective, inner_objective(prog, dual, xq) + 1e-10);
  }
}

TEST(InnerSolve, IterationCapRaisesWithIterate) {
  const auto prog = build_program(fig1_channel(), sym(0.5), 15, Scheme::noma);
  SolverConfig cfg;
  cfg.max_inner = 1;
  const DualState dual{{0.1, 0.1}, {1.0, 1.0}, 1.0};
  try {
    (void)inner_solve(prog, dual, prog.uniform_point(), cfg);
    FAIL() << "expected InnerSolveError";
  } catch (const InnerSolveError& e) {
    EXPECT_EQ(e.best_iterate().size(), prog.dim());
  }
}

TEST(Psi, ExampleValues) {
  const ChannelModel m({1.0}, {{1.0}});
  const auto prog = build_program(m, Streams{{0.5, 1.0, 1.0}}, 1.0, Scheme::noma);
  const std::vector<double> x{0.5, 0.5};
  // p = 0.5, f = 0.75, d = 0.5 * 0.5 * (e - 1)
  const double d = 0.25 * std::expm1(1.0);
  const auto r = psi(prog, DualState{{1.0}, {2.0}, 3.0}, x);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_NEAR(r[0], -d + 0.75, 1e-14);
  EXPECT_NEAR(r[1], -3.0 + 1.5, 1e-14);
  const auto fp = fixed_point_dual(prog, 3.0, x);
  EXPECT_NEAR(inf_norm(psi(prog, fp, x)), 0.0, 1e-15);
}

TEST(SolveForTheta, ThetaZeroTransmitsEverything) {
  const auto prog = build_program(fig1_channel(), sym(0.5), 15, Scheme::noma);
  const auto ts = solve_for_theta(prog, 0.0);
  const auto p = prog.p(ts.x);
  EXPECT_NEAR(p[0], 1.0, 1e-6);
  EXPECT_NEAR(p[1], 1.0, 1e-6);
  EXPECT_LT(ts.objective, 1e-5);
  EXPECT_LE(ts.psi_inf, 1e-8);
}

TEST(SolveForTheta, PowerFallsAndVaoiRisesWithTheta) {
  const auto prog = build_program(fig1_channel(), sym(0.5), 15, Scheme::noma);
  double last_power = kInfinity, last_obj = -1.0;
  for (double theta : {0.001, 0.01, 0.05, 0.2, 1.0, 4.0}) {
    const auto ts = solve_for_theta(prog, theta);
    EXPECT_LE(ts.power, last_power + 1e-6) << theta;
    EXPECT_GE(ts.objective, last_obj - 1e-6) << theta;
    EXPECT_LE(ts.psi_inf, 1e-8);
    last_power = ts.power;
    last_obj = ts.objective;
  }
}

TEST(Solve, SingleLevelClosedForm) {
  const ChannelModel m({0.5}, {{1.0}});
  for (double lam : {0.2, 0.5, 0.9}) {
    const Streams st{{lam, 1.0, 1.0}};
    const double solo = std::expm1(1.0) / 0.5;
    for (double pbar : {0.2, 1.0, 2.5}) {
      const auto sol = solve(build_program(m, st, pbar, Scheme::noma));
      const double tol = SolverConfig{}.power_tolerance(pbar);
      EXPECT_LE(sol.objective, single_level_optimum(lam, solo, pbar - tol) + 1e-9) << lam << " " << pbar;
      EXPECT_GE(sol.objective, single_level_optimum(lam, solo, pbar + tol) - 1e-9) << lam << " " << pbar;
      EXPECT_LE(sol.achieved_power, pbar + tol);
    }
  }
}

TEST(Solve, SlackAndZeroBudget) {
  const auto m = fig1_channel();
  const auto slack = solve(build_program(m, sym(0.5), 1e4, Scheme::noma));
  EXPECT_EQ(slack.status, SolveStatus::slack);
  EXPECT_EQ(slack.theta, 0.0);
  EXPECT_LT(slack.objective, 1e-5);

  const auto zero = solve(build_program(m, sym(0.5), 0.0, Scheme::noma));
  EXPECT_EQ(zero.status, SolveStatus::zero_budget);
  EXPECT_TRUE(std::isinf(zero.objective));
  EXPECT_EQ(zero.achieved_power, 0.0);
  for (std::size_t s = 0; s < 4; ++s) EXPECT_EQ(zero.policy.at(s, 0), 1.0);
}

TEST(Solve, NoArrivalsMeansNothingToDo) {
  const auto sol = solve(build_program(fig1_channel(), sym(0.0), 15, Scheme::noma));
  EXPECT_EQ(sol.objective, 0.0);
  EXPECT_EQ(sol.achieved_power, 0.0);
  EXPECT_NO_THROW(sol.policy.validate());
}

TEST(Solve, BudgetMonotone) {
  const auto m = fig1_channel();
  double last = kInfinity;
  for (double pbar : {3.0, 6.0, 10.0, 15.0, 25.0, 40.0}) {
    const auto sol = solve(build_program(m, sym(0.5), pbar, Scheme::noma));
    EXPECT_LE(sol.objective, last + 1e-7) << pbar;
    EXPECT_LE(sol.achieved_power, pbar * (1 + 1e-4) + 1e-9);
    EXPECT_NO_THROW(sol.policy.validate());
    last = sol.objective;
  }
}

TEST(Solve, NomaNeverWorseThanTdma) {
  const auto m = fig1_channel();
  for (double pbar : {5.0, 15.0, 30.0, 60.0}) {
    const auto noma = solve(build_program(m, sym(0.5), pbar, Scheme::noma));
    const auto tdma = solve(build_program(m, sym(0.5), pbar, Scheme::tdma));
    EXPECT_LE(noma.objective, tdma.objective + 1e-6) << pbar;
    EXPECT_EQ(tdma.policy.subsets().size(), 3u);
  }
}

TEST(Solve, AgreesWithGridOracle) {
  const auto m = ChannelModel::shared({0.1, 1.0}, {0.2, 0.8}, 1);
  const StreamConfig st{0.5, 2.0, 1.0};
  for (double pbar : {2.0, 5.0, 10.0}) {
    const auto sol = solve(build_program(m, Streams{st}, pbar, Scheme::noma));
    const double grid = grid_oracle_single_user(m, st, pbar, 0.005);
    EXPECT_LE(sol.objective, grid + 1e-7) << pbar;
    EXPECT_GE(sol.objective, grid - 0.02 * grid - 1e-6) << pbar;
  }
}

TEST(Solve, RandomProbeFindsNothingBetterAndIsDeterministic) {
  const auto prog = build_program(fig1_channel(), sym(0.5), 15, Scheme::noma);
  const auto sol = solve(prog);
  EXPECT_EQ(random_feasibility_probe(prog, sol, 5000, 11), 0u);
  EXPECT_EQ(random_feasibility_probe(prog, sol, 5000, 11), random_feasibility_probe(prog, sol, 5000, 11));
}

TEST(Solve, KktAtBindingSolution) {
  const auto prog = build_program(fig1_channel(), sym(0.5), 15, Scheme::noma);
  const auto sol = solve(prog);
  EXPECT_EQ(sol.status, SolveStatus::binding);
  EXPECT_GT(sol.theta, 0.0);
  EXPECT_LE(sol.psi_inf, 1e-8);
  EXPECT_NEAR(sol.achieved_power, 15.0, 15.0 * 1e-4);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(sol.dual.beta[i], prog.d(i, sol.x) / prog.f(i, sol.x), 1e-8);
    EXPECT_NEAR(sol.dual.rho[i], sol.theta / prog.f(i, sol.x), 1e-8);
  }
  EXPECT_NEAR(sol.objective, 0.229886, 1e-5);
}

TEST(Solve, TwoUserTableRowNoma) {
  // h = {0.1, 1}, P(0.1) = 0.5, lambda = 0.9, R0 = 2, budget 45
  const auto m = ChannelModel::shared({0.1, 1.0}, {0.5, 0.5}, 2);
  const auto noma = solve(build_program(m, sym(0.9), 45, Scheme::noma));
  EXPECT_NEAR(noma.objective, 0.3850, 0.01);
  const auto tdma = solve(build_program(m, sym(0.9), 45, Scheme::tdma));
  EXPECT_NEAR(tdma.objective, 0.9, 0.005);
}

TEST(LowerBound, HalvesAndRejectsNegative) {
  EXPECT_EQ(lower_bound(0.5), 0.25);
  EXPECT_THROW(lower_bound(-1.0), InvalidInput);
}

TEST(Solve, BudgetInsideThetaZeroJumpIsSlack) {
  // TDMA at theta = 0 has many VAoI minimizers; the cheapest uses about 5.79
  // power units while an arbitrary one may use about 11.9.
  const auto prog = build_program(fig1_channel(), sym(0.5), 7.0, Scheme::tdma);
  const auto sol = solve(prog);
  EXPECT_EQ(sol.status, SolveStatus::slack);
  EXPECT_NEAR(sol.objective, 0.5, 1e-8);
  EXPECT_LE(sol.achieved_power, 7.0);
  EXPECT_LE(sol.psi_inf, 1e-8);
}

namespace {

// Three users on three levels where full steps from the uniform point
// alternate between two faces of the inner problem.
FractionalProgram cycling_program() {
  const ChannelModel m({0.2, 0.7, 1.5}, {{0.1772681492135535, 0.2333201459011027, 0.5894117048853438},
                                         {0.09709284712521177, 0.4689824332379291, 0.4339247196368592},
                                         {0.31485062607098036, 0.3432118646944543, 0.34193750923456534}});
  const Streams st{{0.33839980882157267, 1.9524944652651623, 0.7658593661914891},
                   {0.28784580349576894, 2.1422449001949126, 0.42326425427084097},
                   {0.726554076627952, 1.797280219067187, 0.489806074057127}};
  return build_program(m, st, 10.548409545602098, Scheme::noma);
}

}  // namespace

TEST(SolveForTheta, StalledFullStepsFallBackToDampedSteps) {
  const auto prog = cycling_program();
  const double theta = 0.0546875;

  SolverConfig never;
  never.stall_window = 1'000'000;
  EXPECT_THROW((void)solve_for_theta(prog, theta, never), ConvergenceError);

  const auto ts = solve_for_theta(prog, theta);
  EXPECT_GT(ts.damped_steps, 0);
  EXPECT_LE(ts.psi_inf, 1e-8);
  const auto fixed = fixed_point_dual(prog, theta, ts.x);
  for (std::size_t i = 0; i < prog.n_users(); ++i) {
    EXPECT_NEAR(ts.dual.beta[i], fixed.beta[i], 1e-8);
    EXPECT_NEAR(ts.dual.rho[i], fixed.rho[i], 1e-8);
  }
  // the same theta reached from a different start lands on the same point
  const auto again = solve_for_theta(prog, theta, {}, ts.x);
  EXPECT_EQ(again.damped_steps, 0);
  EXPECT_NEAR(again.power, ts.power, 1e-6);
  EXPECT_NEAR(again.objective, ts.objective, 1e-9);
}

TEST(Solve, CyclingInstanceSolves) {
  const auto sol = solve(cycling_program());
  EXPECT_EQ(sol.status, SolveStatus::binding);
  EXPECT_LE(sol.psi_inf, 1e-8);
  EXPECT_NEAR(sol.achieved_power, 10.548409545602098, SolverConfig{}.power_tolerance(10.548409545602098));
}
