// vaoi: command-line front end for the CO-SRP solver, the CMDP solver and the simulator.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "vaoi/cmdp.hpp"
#include "vaoi/harness.hpp"
#include "vaoi/io.hpp"
#include "vaoi/optimizer.hpp"
#include "vaoi/sim.hpp"

namespace fs = std::filesystem;
using namespace vaoi;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string scheme;
};

ExperimentConfig resolve(const Common& c) {
  if (c.config.empty()) throw InvalidInput("--config is required");
  auto cfg = load_config(c.config);
  if (!c.scheme.empty()) cfg.scheme = scheme_from_string(c.scheme);
  if (c.seed_set) cfg.sim.seed = c.seed;
  if (!c.out.empty()) cfg.output = c.out;
  return cfg;
}

fs::path out_file(const ExperimentConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.output);
  return fs::path(cfg.output) / name;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw InvalidInput("cannot write '" + p.string() + "'");
  os << text;
  std::cerr << "wrote " << p.string() << "\n";
}

int cmd_solve_cosrp(const Common& c) {
  const auto cfg = resolve(c);
  const auto run = run_cosrp(cfg);
  const auto& s = run.solution;
  if (s.status == SolveStatus::zero_budget)
    std::cerr << "warning: zero power budget, only the silent policy is feasible\n";
  if (s.damped_steps > 0)
    std::cerr << "note: dual iteration stalled and took " << s.damped_steps << " damped steps\n";

  std::ostringstream pol;
  write_cosrp_policy(pol, s.policy, run.states, SolutionFooter{s.objective, s.achieved_power, s.theta, s.psi_inf});
  write_file(out_file(cfg, "cosrp_policy.csv"), pol.str());

  std::ostringstream csv;
  write_csv_preamble(csv, cfg.config_line(), "scheme,pbar,objective,power,theta,iters");
  const std::string row = join({to_string(cfg.scheme), fmt12(cfg.pbar), fmt12(s.objective), fmt12(s.achieved_power),
                                fmt12(s.theta), std::to_string(s.bisect_iterations)});
  csv << row << "\n";
  write_file(out_file(cfg, "cosrp.csv"), csv.str());
  std::cout << row << "\n";
  return 0;
}

int cmd_solve_cmdp(const Common& c) {
  const auto cfg = resolve(c);
  if (cfg.streams.empty()) return 1;
  double vaoi = 0.0, power = 0.0, theta = 0.0, tail = 0.0;
  std::size_t violations = 0;
  std::ostringstream trace;
  write_csv_preamble(trace, cfg.config_line(), "theta,vaoi,power");
  if (cfg.pbar > 0.0) {
    const auto r = run_cmdp(cfg);
    const auto& s = r.solution;
    vaoi = s.average_vaoi;
    power = s.average_power;
    theta = s.theta_star;
    tail = s.tail_mass;
    violations = r.threshold.violations.size();
    std::ostringstream pd, vd;
    write_cmdp_dump(pd, *r.space, s.policy.primary);
    write_cmdp_dump(vd, *r.space, s.policy.primary, &s.value);
    write_file(out_file(cfg, "cmdp_policy.csv"), pd.str());
    write_file(out_file(cfg, "cmdp_value.csv"), vd.str());
    if (s.policy.q > 0.0) {
      std::ostringstream ad;
      write_cmdp_dump(ad, *r.space, s.policy.alternate);
      write_file(out_file(cfg, "cmdp_policy_alternate.csv"), ad.str());
      std::cerr << "mixing: alternate policy (theta=" << fmt12(s.theta_alternate) << ") with probability "
                << fmt12(s.policy.q) << "\n";
    }
    auto sorted = s.trace;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.theta < b.theta; });
    for (const auto& t : sorted) trace << join({fmt12(t.theta), fmt12(t.vaoi), fmt12(t.power)}) << "\n";
    if (tail > 1e-6) std::cerr << "warning: stationary mass at the VAoI cap is " << fmt12(tail) << "\n";
  } else {
    std::cerr << "warning: zero power budget\n";
  }
  write_file(out_file(cfg, "cmdp_trace.csv"), trace.str());

  std::ostringstream csv;
  write_csv_preamble(csv, cfg.config_line(), "pbar,gamma,delta_max,theta,vaoi,power,tail_mass,threshold_violations");
  const std::string row = join({fmt12(cfg.pbar), fmt12(cfg.mdp.gamma), std::to_string(cfg.mdp.delta_max), fmt12(theta),
                                fmt12(vaoi), fmt12(power), fmt12(tail), std::to_string(violations)});
  csv << row << "\n";
  write_file(out_file(cfg, "cmdp.csv"), csv.str());
  std::cout << row << "\n";
  return 0;
}

int cmd_simulate(const Common& c, const std::string& policy_path, bool trace) {
  auto cfg = resolve(c);
  if (trace && cfg.sim.trace_slots == 0) cfg.sim.trace_slots = 10000;
  cfg.sim.trace_slots = std::min<std::size_t>(cfg.sim.trace_slots, 10000);
  const auto model = cfg.channel();
  const auto states = enumerate_joint_states(model);
  std::ifstream in(policy_path);
  if (!in) throw InvalidInput("cannot open policy file '" + policy_path + "'");
  const auto file = read_cosrp_policy(in, states);
  if (file.policy.n_users() != cfg.streams.size()) throw InvalidInput("policy user count does not match the config");
  cfg.sim.workers = worker_count();
  const auto m = replicate(model, cfg.streams, CoSrpAdapter(file.policy), cfg.sim);

  std::vector<std::string> header;
  std::vector<std::string> row;
  for (std::size_t i = 0; i < cfg.streams.size(); ++i) {
    header.push_back("vaoi_user_" + std::to_string(i + 1));
    row.push_back(fmt12(m.user_vaoi[i]));
  }
  for (const char* h : {"vaoi_weighted", "power", "se_vaoi", "se_power", "slots", "reps", "seed"}) header.emplace_back(h);
  row.insert(row.end(), {fmt12(m.weighted_vaoi), fmt12(m.power), fmt12(m.se_weighted_vaoi), fmt12(m.se_power),
                         std::to_string(m.slots), std::to_string(m.replications), std::to_string(m.seed)});
  std::ostringstream csv;
  write_csv_preamble(csv, cfg.config_line(), join(header));
  csv << join(row) << "\n";
  write_file(out_file(cfg, "simulate.csv"), csv.str());
  std::cout << join(row) << "\n";

  if (!m.trace.empty()) {
    std::ostringstream tr;
    std::vector<std::string> th{"t"};
    for (std::size_t i = 0; i < cfg.streams.size(); ++i) th.push_back("delta_" + std::to_string(i + 1));
    th.emplace_back("action_mask");
    th.emplace_back("power");
    write_csv_preamble(tr, cfg.config_line(), join(th));
    for (const auto& r : m.trace) {
      std::vector<std::string> cells{std::to_string(r.t)};
      for (auto d : r.delta) cells.push_back(std::to_string(d));
      cells.push_back(std::to_string(r.action_mask));
      cells.push_back(fmt12(r.power));
      tr << join(cells) << "\n";
    }
    write_file(out_file(cfg, "trace.csv"), tr.str());
  }
  return 0;
}

int cmd_sweep(const Common& c, const std::string& param, double from, double to, int steps, bool with_cmdp) {
  auto cfg = resolve(c);
  SweepSpec spec = cfg.sweep.value_or(SweepSpec{"pbar", 1.0, 50.0, 10});
  if (!param.empty()) spec.parameter = param;
  if (!std::isnan(from)) spec.from = from;
  if (!std::isnan(to)) spec.to = to;
  if (steps > 0) spec.steps = steps;
  cfg.sweep = spec;
  const auto rows = run_sweep(cfg, spec, with_cmdp);

  std::ostringstream csv;
  std::string header = spec.parameter + ",objective,power,theta,simultaneous";
  if (with_cmdp) header += ",cmdp_vaoi,cmdp_power";
  write_csv_preamble(csv, cfg.config_line(), header);
  SvgSeries srp{"CO-SRP " + to_string(cfg.scheme), {}, {}}, cm{"CMDP " + to_string(cfg.scheme), {}, {}};
  for (const auto& r : rows) {
    std::vector<std::string> cells{fmt12(r.x), fmt12(r.objective), fmt12(r.power), fmt12(r.theta), fmt12(r.simultaneous)};
    if (with_cmdp) {
      cells.push_back(r.cmdp_vaoi ? fmt12(*r.cmdp_vaoi) : "nan");
      cells.push_back(r.cmdp_power ? fmt12(*r.cmdp_power) : "nan");
      if (r.cmdp_vaoi) {
        cm.x.push_back(r.x);
        cm.y.push_back(*r.cmdp_vaoi);
      }
    }
    srp.x.push_back(r.x);
    srp.y.push_back(r.objective);
    csv << join(cells) << "\n";
  }
  write_file(out_file(cfg, "sweep.csv"), csv.str());
  std::vector<SvgSeries> series{srp};
  if (with_cmdp) series.push_back(cm);
  write_file(out_file(cfg, "sweep.svg"), svg_line_chart("Sweep over " + spec.parameter, spec.parameter, "weighted VAoI", series));
  return 0;
}

int cmd_reproduce(const std::string& target, const std::string& out_dir) {
  const std::vector<std::string> targets =
      target == "all" ? reproduce_targets() : std::vector<std::string>{target};
  bool ok = true;
  ExperimentConfig sink;
  sink.output = out_dir.empty() ? "." : out_dir;
  for (const auto& t : targets) {
    const auto r = reproduce(t);
    write_file(out_file(sink, r.name + ".csv"), r.csv);
    if (!r.svg.empty()) write_file(out_file(sink, r.name + ".svg"), r.svg);
    for (const auto& n : r.notes) std::cerr << r.name << ": " << n << "\n";
    std::cout << r.name << ": " << (r.pass ? "ok" : "MISMATCH") << "\n";
    ok = ok && r.pass;
  }
  return ok ? 0 : 2;
}

int cmd_bound(const Common& c, bool with_cmdp) {
  const auto cfg = resolve(c);
  const auto run = run_cosrp(cfg);
  const double v = run.solution.objective;
  const double lb = lower_bound(v);
  std::ostringstream csv;
  std::string header = "pbar,v_srp,lower_bound";
  std::vector<std::string> row{fmt12(cfg.pbar), fmt12(v), fmt12(lb)};
  int rc = 0;
  if (with_cmdp) {
    const auto r = run_cmdp(cfg);
    header += ",cmdp_vaoi,tail_mass,sandwich_ok";
    const double cv = r.solution.average_vaoi;
    const bool ok = lb <= cv + 1e-9 && cv <= v + 1e-9;
    row.insert(row.end(), {fmt12(cv), fmt12(r.solution.tail_mass), ok ? "1" : "0"});
    rc = ok ? 0 : 3;
  }
  write_csv_preamble(csv, cfg.config_line(), header);
  csv << join(row) << "\n";
  write_file(out_file(cfg, "bound.csv"), csv.str());
  std::cout << join(row) << "\n";
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Freshness-optimal scheduling toolkit: CO-SRP and CMDP solvers with a slot simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "experiment configuration (JSON)");
    sub->add_option("--out", common.out, "output directory (overrides the config)");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { common.seed = s, common.seed_set = true; }, "simulation seed");
    sub->add_option("--scheme", common.scheme, "noma or tdma (overrides the config)")
        ->check(CLI::IsMember({"noma", "tdma"}));
  };

  auto* s1 = app.add_subcommand("solve-cosrp", "solve the CO-SRP program for the configured budget");
  add_common(s1);
  auto* s2 = app.add_subcommand("solve-cmdp", "solve the CMDP by value iteration and theta bisection");
  add_common(s2);
  auto* s3 = app.add_subcommand("simulate", "simulate a CO-SRP policy file");
  add_common(s3);
  std::string policy_path;
  bool trace = false;
  s3->add_option("--policy", policy_path, "policy file written by solve-cosrp")->required();
  s3->add_flag("--trace", trace, "export per-slot rows of the first 10^4 slots");
  auto* s4 = app.add_subcommand("sweep", "sweep one parameter over a linear grid");
  add_common(s4);
  std::string param;
  double from = std::nan(""), to = std::nan("");
  int steps = 0;
  bool with_cmdp = false;
  s4->add_option("--param", param, "pbar, lambda or weight_1")->check(CLI::IsMember({"pbar", "lambda", "weight_1"}));
  s4->add_option("--from", from, "first grid value");
  s4->add_option("--to", to, "last grid value");
  s4->add_option("--steps", steps, "number of grid points");
  s4->add_flag("--cmdp", with_cmdp, "also solve the CMDP at each point");
  auto* s5 = app.add_subcommand("reproduce", "regenerate a table or figure from the built-in parameter grids");
  std::string target;
  std::string rep_out;
  s5->add_option("target", target, "table1, fig1, fig_simul_prob, fig_lambda, fig_region or all")
      ->required()
      ->check(CLI::IsMember({"table1", "fig1", "fig_simul_prob", "fig_lambda", "fig_region", "all"}));
  s5->add_option("--out", rep_out, "output directory");
  auto* s6 = app.add_subcommand("bound", "report the CO-SRP objective and its lower bound");
  add_common(s6);
  bool bound_cmdp = false;
  s6->add_flag("--cmdp", bound_cmdp, "also check the CMDP objective against the bounds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 64;
  }

  try {
    if (*s1) return cmd_solve_cosrp(common);
    if (*s2) return cmd_solve_cmdp(common);
    if (*s3) return cmd_simulate(common, policy_path, trace);
    if (*s4) return cmd_sweep(common, param, from, to, steps, with_cmdp);
    if (*s5) return cmd_reproduce(target, rep_out);
    if (*s6) return cmd_bound(common, bound_cmdp);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
