#include <gtest/gtest.h>

#include <sstream>

#include "vaoi/harness.hpp"
#include "vaoi/io.hpp"

using namespace vaoi;

namespace {

const char* kBase = R"({
  "streams": [{"lambda": 0.5, "r0": 2, "weight": 0.5}, {"lambda": 0.5, "r0": 2, "weight": 0.5}],
  "channel": {"levels": [0.1, 1.0], "pmf": [0.2, 0.8]},
  "scheme": "noma",
  "pbar": 15
})";

std::size_t parse_error_line(const std::string& text) {
  std::istringstream is(text);
  try {
    (void)read_cosrp_policy(is);
  } catch (const ParseError& e) {
    return e.line();
  }
  return static_cast<std::size_t>(-1);
}

}  // namespace

TEST(Config, ParsesMinimalAndDefaults) {
  const auto c = parse_config(kBase);
  ASSERT_EQ(c.streams.size(), 2u);
  EXPECT_EQ(c.scheme, Scheme::noma);
  EXPECT_EQ(c.pbar, 15.0);
  EXPECT_EQ(c.pmf.size(), 2u);
  EXPECT_EQ(c.pmf[1], (std::vector<double>{0.2, 0.8}));
  EXPECT_EQ(c.mdp.delta_max, 20);
  EXPECT_EQ(c.sim.horizon, 1'000'000u);
  EXPECT_FALSE(c.sweep.has_value());
}

TEST(Config, PerUserPmfAndSections) {
  const auto c = parse_config(R"({
    "streams": [{"lambda": 0.3, "r0": 1, "weight": 1}, {"lambda": 0.7, "r0": 2, "weight": 2}],
    "channel": {"levels": [0.5, 2.0], "pmf": [[0.5, 0.5], [0.1, 0.9]]},
    "scheme": "tdma", "pbar": 3,
    "mdp": {"delta_max": 7, "mix_endpoints": false},
    "sim": {"horizon": 1000, "seed": 9, "replications": 2},
    "sweep": {"parameter": "lambda", "from": 0.1, "to": 0.9, "steps": 5}
  })");
  EXPECT_EQ(c.scheme, Scheme::tdma);
  EXPECT_EQ(c.pmf[1], (std::vector<double>{0.1, 0.9}));
  EXPECT_EQ(c.mdp.delta_max, 7);
  EXPECT_FALSE(c.mdp.mix_endpoints);
  EXPECT_EQ(c.sim.seed, 9u);
  ASSERT_TRUE(c.sweep.has_value());
  EXPECT_EQ(c.sweep->grid().size(), 5u);
  EXPECT_NEAR(c.sweep->grid()[2], 0.5, 1e-15);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config(R"({"streams": [], "channel": {"levels": [1], "pmf": [1]}, "pbarr": 3})"), ParseError);
  EXPECT_THROW(parse_config(R"({"streams": [{"lambda": 0.5, "r0": 2, "weight": 1, "extra": 1}],
                                "channel": {"levels": [1], "pmf": [1]}, "pbar": 1})"),
               ParseError);
  EXPECT_THROW(parse_config(R"({"streams": [{"lambda": 1.5, "r0": 2, "weight": 1}],
                                "channel": {"levels": [1], "pmf": [1]}, "pbar": 1})"),
               ParseError);
  EXPECT_THROW(parse_config(R"({"streams": [{"lambda": 0.5, "r0": 2, "weight": 1}],
                                "channel": {"levels": [1, 2], "pmf": [0.3, 0.3]}, "pbar": 1})"),
               ParseError);
  EXPECT_THROW(parse_config(R"({"streams": [{"lambda": 0.5, "r0": 2, "weight": 1}],
                                "channel": {"levels": [1], "pmf": [1]}, "scheme": "ofdma", "pbar": 1})"),
               ParseError);
  EXPECT_THROW(parse_config("{ not json"), ParseError);
  EXPECT_THROW(parse_config(R"({"channel": {"levels": [1], "pmf": [1]}, "pbar": 1})"), ParseError);
}

TEST(Config, ConfigLineRoundTrips) {
  const auto c = parse_config(kBase);
  const auto again = parse_config(c.config_line());
  EXPECT_EQ(again.config_line(), c.config_line());
  EXPECT_EQ(again.pbar, c.pbar);
}

TEST(Config, WithParameter) {
  const auto c = parse_config(kBase);
  const auto w = with_parameter(c, "weight_1", 0.3);
  EXPECT_EQ(w.streams[0].weight, 0.3);
  EXPECT_NEAR(w.streams[1].weight, 0.7, 1e-15);
  const auto l = with_parameter(c, "lambda", 0.9);
  EXPECT_EQ(l.streams[0].lambda, 0.9);
  EXPECT_EQ(l.streams[1].lambda, 0.9);
  EXPECT_EQ(with_parameter(c, "pbar", 3.0).pbar, 3.0);
}

TEST(PolicyFile, RoundTripPreservesEverything) {
  const auto c = parse_config(kBase);
  const auto run = run_cosrp(c);
  std::ostringstream os;
  const SolutionFooter footer{run.solution.objective, run.solution.achieved_power, run.solution.theta,
                              run.solution.psi_inf};
  write_cosrp_policy(os, run.solution.policy, run.states, footer);
  const std::string text = os.str();
  EXPECT_EQ(text.rfind("# vaoi cosrp-policy scheme=noma users=2\n", 0), 0u);

  std::istringstream is(text);
  const auto back = read_cosrp_policy(is, run.states);
  ASSERT_EQ(back.policy.n_states(), 4u);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t k = 0; k < back.policy.n_subsets(); ++k)
      EXPECT_EQ(back.policy.at(s, k), run.solution.policy.at(s, k));
  ASSERT_TRUE(back.footer.has_value());
  EXPECT_NEAR(back.footer->objective, run.solution.objective, 1e-11 * run.solution.objective);

  std::ostringstream os2;
  write_cosrp_policy(os2, back.policy, run.states, back.footer);
  std::istringstream is2(os2.str());
  const auto twice = read_cosrp_policy(is2, run.states);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t k = 0; k < twice.policy.n_subsets(); ++k)
      EXPECT_EQ(twice.policy.at(s, k), back.policy.at(s, k));
}

TEST(PolicyFile, ErrorsCarryLineNumbers) {
  const std::string head = "# vaoi cosrp-policy scheme=tdma users=1\nstate_index,gain_1,subset_mask,probability\n";
  EXPECT_EQ(parse_error_line(head + "0,1,0,0.5\n0,1,1\n"), 4u);
  EXPECT_EQ(parse_error_line(head + "0,1,0,0.5\n0,1,1,abc\n"), 4u);
  EXPECT_EQ(parse_error_line(head + "0,1,0,0.5\n0,1,2,0.5\n"), 4u);
  EXPECT_EQ(parse_error_line(head + "0,1,0,0.5\n0,1,0,0.5\n"), 4u);
  EXPECT_EQ(parse_error_line(head + "0,1,0,0.5\n0,1,1,0.4\n1,2,0,1\n"), 4u);
  EXPECT_EQ(parse_error_line(head + "0,1,0,1.5\n"), 3u);
  EXPECT_EQ(parse_error_line("# vaoi cosrp-policy scheme=qam users=1\n"), 1u);
  EXPECT_EQ(parse_error_line("state,gain_1,subset_mask,probability\n"), 1u);
  EXPECT_EQ(parse_error_line(head + "0,1,0,0.5\n0,1,1,0.5\nobjective=1, power=2, theta=3\n"), 5u);
  // a pair is not admissible under TDMA
  EXPECT_EQ(parse_error_line("# vaoi cosrp-policy scheme=tdma users=2\nstate_index,gain_1,gain_2,subset_mask,probability\n"
                             "0,1,1,3,1\n"),
            3u);
}

TEST(PolicyFile, GainsMustMatchModel) {
  const auto c = parse_config(kBase);
  const auto states = enumerate_joint_states(c.channel());
  std::ostringstream os;
  write_cosrp_policy(os, CoSrpPolicy::uniform(Scheme::noma, 2, 4), states);
  auto text = os.str();
  const auto pos = text.find("\n0,0.1,0.1,");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos + 3, 3, "0.2");
  std::istringstream is(text);
  EXPECT_THROW((void)read_cosrp_policy(is, states), ParseError);
}

TEST(Csv, PreambleAndFormatting) {
  std::ostringstream os;
  write_csv_preamble(os, R"({"a":1})", "x,y");
  EXPECT_EQ(os.str(), std::string("# vaoi ") + kToolVersion + " config={\"a\":1}\nx,y\n");
  EXPECT_EQ(fmt12(kInfinity), "inf");
  EXPECT_EQ(fmt12(0.1), "0.1");
  EXPECT_EQ(split(" a, b ,c,"), (std::vector<std::string>{"a", "b", "c", ""}));
  EXPECT_EQ(join({"a", "b"}), "a,b");
}

TEST(Sweep, RerunsAreByteIdentical) {
  auto c = parse_config(kBase);
  const SweepSpec spec{"pbar", 5.0, 30.0, 4};
  auto render = [&](unsigned workers) {
    std::ostringstream os;
    for (const auto& r : run_sweep(c, spec, false, workers))
      os << join({fmt17(r.x), fmt17(r.objective), fmt17(r.power), fmt17(r.theta), fmt17(r.simultaneous)}) << "\n";
    return os.str();
  };
  const auto a = render(1);
  EXPECT_EQ(a, render(1));
  EXPECT_EQ(a, render(3));
}

TEST(ParallelMap, KeepsOrderAndRethrows) {
  const auto v = parallel_map<int>(50, 4, [](std::size_t k) { return static_cast<int>(k * k); });
  for (std::size_t k = 0; k < v.size(); ++k) EXPECT_EQ(v[k], static_cast<int>(k * k));
  EXPECT_THROW(parallel_map<int>(10, 3,
                                 [](std::size_t k) -> int {
                                   if (k == 7) throw InvalidInput("boom");
                                   return 0;
                                 }),
               InvalidInput);
}

TEST(Reproduce, TableRowsAndTolerances) {
  const auto& rows = table1_rows();
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[1].reference_noma, 0.3850);
  EXPECT_EQ(rows[4].pbar, 100.0);
  EXPECT_EQ(table1_tolerance(0.9, true), 0.005);
  EXPECT_EQ(table1_tolerance(0.9, false), 0.01);
  EXPECT_EQ(table1_tolerance(1.0774, true), 0.01);
}

TEST(Reproduce, OrderingCheckFlagsPlantedViolation) {
  std::vector<Fig1Point> pts{{5, 0.5, 0.6, 0.4, 0.5, 5, 5, 0}, {10, 0.3, 0.4, 0.2, 0.35, 10, 10, 0}};
  EXPECT_TRUE(fig1_orderings(pts).empty());
  pts[1].cmdp_noma = 0.45;
  const auto bad = fig1_orderings(pts);
  EXPECT_EQ(bad.size(), 2u);
}

TEST(Reproduce, UnknownTargetThrows) {
  EXPECT_THROW((void)reproduce("fig99", 1), InvalidInput);
  EXPECT_EQ(reproduce_targets().size(), 5u);
}

TEST(Svg, ContainsSeriesNames) {
  const auto svg = svg_line_chart("t", "x", "y", {SvgSeries{"alpha", {0, 1}, {1, 0}}, SvgSeries{"beta", {0, 1}, {0, 1}}});
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("alpha"), std::string::npos);
  EXPECT_NE(svg.find("beta"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}
