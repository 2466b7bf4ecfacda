#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vaoi/cosrp.hpp"

using namespace vaoi;

namespace {

ChannelModel fig1_channel() { return ChannelModel::shared({0.1, 1.0}, {0.2, 0.8}, 2); }

Streams sym(double lambda, double r0 = 2.0, double w = 0.5) { return Streams(2, StreamConfig{lambda, r0, w}); }

// Random point of the product of simplexes.
std::vector<double> random_point(const FractionalProgram& prog, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> x(prog.dim());
  const std::size_t k = prog.n_subsets();
  for (std::size_t s = 0; s < prog.n_states(); ++s) {
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += (x[s * k + j] = e(rng));
    for (std::size_t j = 0; j < k; ++j) x[s * k + j] /= sum;
  }
  return x;
}

}  // namespace

TEST(DeliveryStats, AlwaysAndNever) {
  const auto m = fig1_channel();
  const auto st = sym(0.5);
  const auto all = CoSrpPolicy::constant(Scheme::noma, 2, 4, Subset::full(2));
  const auto none = CoSrpPolicy::constant(Scheme::noma, 2, 4, Subset::empty());
  const auto a = delivery_stats(all, m, st);
  EXPECT_NEAR(a.p[0], 1.0, 1e-15);
  EXPECT_NEAR(a.p[1], 1.0, 1e-15);
  const auto n = delivery_stats(none, m, st);
  EXPECT_EQ(n.p, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(n.p_cond_power, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(average_power(n, st), 0.0);
}

TEST(DeliveryStats, HalfAndHalfHandSum) {
  const auto m = fig1_channel();
  const auto st = sym(0.5);
  CoSrpPolicy pol(Scheme::tdma, 2, 4);
  for (std::size_t s = 0; s < 4; ++s) {
    pol.at(s, pol.subset_index(Subset::single(0))) = 0.5;
    pol.at(s, pol.subset_index(Subset::single(1))) = 0.5;
  }
  const auto d = delivery_stats(pol, m, st);
  EXPECT_NEAR(d.p[0], 0.5, 1e-15);
  EXPECT_NEAR(d.p[1], 0.5, 1e-15);
  // solo power e^2-1 over h; user 1 sees h=0.1 w.p. 0.2
  const double e = std::expm1(2.0);
  EXPECT_NEAR(d.p_cond_power[0], 0.5 * (0.2 * e / 0.1 + 0.8 * e / 1.0), 1e-12);
}

TEST(ClosedForms, AverageVaoi) {
  EXPECT_EQ(average_vaoi(1.0, 0.7), 0.0);
  EXPECT_EQ(average_vaoi(0.3, 0.0), 0.0);
  EXPECT_NEAR(average_vaoi(0.5, 0.9), 0.9, 1e-15);
  EXPECT_TRUE(std::isinf(average_vaoi(0.0, 0.5)));
}

TEST(ClosedForms, AveragePower) {
  const Streams s = sym(0.5);
  UserDeliveryStats d{{0.5, 0.5}, {10.0, 10.0}};
  EXPECT_NEAR(average_power(d, s), 2 * 0.5 * 10 / 0.75, 1e-12);
  EXPECT_NEAR(average_power(d, s), 13.3333333333, 1e-9);
  const Streams full = sym(1.0);
  EXPECT_NEAR(average_power(d, full), 20.0, 1e-12);
  const Streams idle = sym(0.0);
  EXPECT_EQ(average_power(UserDeliveryStats{{0, 0}, {0, 0}}, idle), 0.0);
}

TEST(ClosedForms, WeightedObjective) {
  const std::vector<double> ones{1.0, 1.0};
  EXPECT_EQ(weighted_objective(sym(0.5), ones), 0.0);
  EXPECT_NEAR(weighted_objective(sym(0.9), std::vector<double>{0.5, 0.5}), 0.9, 1e-15);
  EXPECT_NEAR(weighted_objective(sym(0.5), std::vector<double>{0.8, 0.4}), 0.4375, 1e-15);
  EXPECT_TRUE(std::isinf(weighted_objective(sym(0.5), std::vector<double>{0.0, 1.0})));
}

TEST(StationaryDistribution, Examples) {
  const auto one = stationary_distribution(0.3, 1.0, 5);
  EXPECT_EQ(one[0], 1.0);
  for (std::size_t n = 1; n < one.size(); ++n) EXPECT_EQ(one[n], 0.0);
  const auto pi = stationary_distribution(0.5, 0.5, 50);
  EXPECT_NEAR(pi[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(pi[1], 2.0 / 9.0, 1e-15);
  EXPECT_NEAR(pi[2], 2.0 / 27.0, 1e-15);
  double mass = 0.0, mean = 0.0;
  for (std::size_t n = 0; n < pi.size(); ++n) {
    mass += pi[n];
    mean += static_cast<double>(n) * pi[n];
  }
  EXPECT_GE(mass, 1.0 - 1e-9);
  EXPECT_NEAR(mean, 0.5, 1e-9);
}

TEST(StationaryDistribution, MeanMatchesClosedForm) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int t = 0; t < 100; ++t) {
    const double lam = u(rng), p = u(rng);
    const auto pi = stationary_distribution(lam, p, default_truncation(lam, p, 1e-14));
    double mean = 0.0;
    for (std::size_t n = 0; n < pi.size(); ++n) mean += static_cast<double>(n) * pi[n];
    EXPECT_NEAR(mean, average_vaoi(p, lam), 1e-8);
  }
}

TEST(FractionalProgram, Dimensions) {
  const auto m = fig1_channel();
  EXPECT_EQ(build_program(m, sym(0.5), 10, Scheme::noma).dim(), 16u);
  const auto tdma = build_program(m, sym(0.5), 10, Scheme::tdma);
  EXPECT_EQ(tdma.dim(), 12u);
  for (auto w : tdma.subsets()) EXPECT_LE(w.size(), 1);
  const auto x = tdma.uniform_point();
  for (double g : tdma.g(x)) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(FractionalProgram, AffineAndConvexPieces) {
  const auto prog = build_program(fig1_channel(), Streams{{0.5, 2, 0.3}, {0.8, 1.5, 0.7}}, 10, Scheme::noma);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const auto a = random_point(prog, rng);
    const auto b = random_point(prog, rng);
    const double c = u(rng);
    std::vector<double> mid(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) mid[j] = c * a[j] + (1 - c) * b[j];
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_NEAR(prog.d(i, mid), c * prog.d(i, a) + (1 - c) * prog.d(i, b), 1e-12 * (1 + prog.d(i, a)));
      EXPECT_NEAR(prog.f(i, mid), c * prog.f(i, a) + (1 - c) * prog.f(i, b), 1e-12);
      EXPECT_GT(prog.f(i, a), 0.0);
      std::vector<double> half(a.size());
      for (std::size_t j = 0; j < a.size(); ++j) half[j] = 0.5 * (a[j] + b[j]);
      EXPECT_LE(prog.vaoi(i, half), 0.5 * (prog.vaoi(i, a) + prog.vaoi(i, b)) + 1e-12);
    }
    for (double g : prog.g(a)) EXPECT_NEAR(g, 0.0, 1e-12);
  }
}

TEST(FractionalProgram, GradientsMatchFiniteDifferences) {
  const auto prog = build_program(fig1_channel(), Streams{{0.5, 2, 0.3}, {0.8, 1.5, 0.7}}, 10, Scheme::noma);
  std::mt19937_64 rng(8);
  const auto x = random_point(prog, rng);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto g = prog.grad_vaoi(i, x);
    for (std::size_t j = 0; j < x.size(); ++j) {
      auto xp = x, xm = x;
      const double h = 1e-6;
      xp[j] += h;
      xm[j] -= h;
      EXPECT_NEAR(g[j], (prog.vaoi(i, xp) - prog.vaoi(i, xm)) / (2 * h), 1e-5 * (1 + std::abs(g[j])));
      EXPECT_NEAR(prog.grad_d(i)[j], (prog.d(i, xp) - prog.d(i, xm)) / (2 * h), 1e-6 * (1 + prog.grad_d(i)[j]));
    }
  }
}

TEST(FractionalProgram, PowerMatchesTheoremClosedForm) {
  const auto m = fig1_channel();
  const auto st = Streams{{0.5, 2, 0.3}, {0.8, 1.5, 0.7}};
  const auto prog = build_program(m, st, 10, Scheme::noma);
  std::mt19937_64 rng(12);
  for (int t = 0; t < 50; ++t) {
    const auto x = random_point(prog, rng);
    const auto pol = prog.expand(x);
    pol.validate();
    const auto stats = delivery_stats(pol, m, st);
    EXPECT_NEAR(prog.power(x), average_power(stats, st), 1e-10);
    EXPECT_NEAR(prog.objective(x), weighted_objective(st, stats.p), 1e-10);
  }
}

TEST(FractionalProgram, InactiveStreamsDropped) {
  const auto m = fig1_channel();
  const Streams st{{0.0, 2, 0.5}, {0.5, 2, 0.5}};
  const auto prog = build_program(m, st, 10, Scheme::noma);
  EXPECT_EQ(prog.n_subsets(), 2u);  // {} and {2}
  const auto x = prog.uniform_point();
  const auto pol = prog.expand(x);
  EXPECT_EQ(pol.n_subsets(), 4u);
  for (std::size_t s = 0; s < 4; ++s) {
    EXPECT_EQ(pol.at(s, pol.subset_index(Subset::single(0))), 0.0);
    EXPECT_EQ(pol.at(s, pol.subset_index(Subset::full(2))), 0.0);
  }
  const auto back = prog.restrict(pol);
  for (std::size_t j = 0; j < x.size(); ++j) EXPECT_NEAR(back[j], x[j], 1e-15);
}

TEST(FractionalProgram, ClampFlag) {
  const auto m = fig1_channel();
  const auto prog = build_program(m, sym(0.5), 10, Scheme::noma);
  std::vector<double> x(prog.dim(), 0.0);
  for (std::size_t s = 0; s < prog.n_states(); ++s) x[s * prog.n_subsets()] = 1.0;
  bool clamped = false;
  const double v = prog.objective(x, &clamped);
  EXPECT_TRUE(clamped);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(v, 1e10);
}

TEST(CoSrpPolicy, Validation) {
  auto pol = CoSrpPolicy::uniform(Scheme::noma, 2, 4);
  EXPECT_NO_THROW(pol.validate());
  pol.at(0, 0) += 0.1;
  EXPECT_THROW(pol.validate(), InvalidInput);
  const auto t = CoSrpPolicy::uniform(Scheme::tdma, 2, 4);
  EXPECT_THROW(t.subset_index(Subset::full(2)), InvalidInput);
}
