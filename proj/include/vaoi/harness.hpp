#pragma once

// Experiment orchestration shared by the CLI and the acceptance suite:
// JSON configuration, sweeps on a worker pool, and the figure/table
// reproductions.

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "vaoi/cmdp.hpp"
#include "vaoi/cosrp.hpp"
#include "vaoi/io.hpp"
#include "vaoi/model.hpp"
#include "vaoi/optimizer.hpp"
#include "vaoi/sim.hpp"

namespace vaoi {

using json = nlohmann::ordered_json;

struct SweepSpec {
  std::string parameter;  // pbar | lambda | weight_1
  double from = 0.0;
  double to = 1.0;
  int steps = 2;

  void validate() const {
    if (parameter != "pbar" && parameter != "lambda" && parameter != "weight_1")
      throw InvalidInput("sweep parameter must be one of pbar, lambda, weight_1");
    if (steps < 2) throw InvalidInput("sweep needs at least 2 steps");
    if (!(from < to)) throw InvalidInput("sweep needs from < to");
  }

  std::vector<double> grid() const {
    std::vector<double> g(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) g[static_cast<std::size_t>(k)] = from + (to - from) * k / (steps - 1);
    return g;
  }
};

struct ExperimentConfig {
  Streams streams;
  std::vector<double> levels;
  std::vector<std::vector<double>> pmf;  // one row per user
  Scheme scheme = Scheme::noma;
  double pbar = 0.0;
  SolverConfig solver;
  MdpConfig mdp;
  SimConfig sim;
  std::optional<SweepSpec> sweep;
  std::string output = ".";

  ChannelModel channel() const { return ChannelModel(levels, pmf); }

  void validate() const {
    validate_streams(streams);
    if (pmf.size() != streams.size()) throw InvalidInput("channel pmf must have one row per stream");
    (void)channel();
    if (!(pbar >= 0.0) || !std::isfinite(pbar)) throw InvalidInput("pbar must be finite and >= 0");
    solver.validate();
    mdp.validate();
    sim.validate();
    if (sweep) sweep->validate();
  }

  json to_json() const {
    json j;
    j["streams"] = json::array();
    for (const auto& s : streams) j["streams"].push_back({{"lambda", s.lambda}, {"r0", s.r0}, {"weight", s.weight}});
    j["channel"] = {{"levels", levels}, {"pmf", pmf}};
    j["scheme"] = to_string(scheme);
    j["pbar"] = pbar;
    j["solver"] = {{"eps_psi", solver.eps_psi},         {"eps_power", solver.power_tolerance(pbar)},
                   {"eps_inner", solver.eps_inner},     {"max_newton", solver.max_newton},
                   {"max_bisect", solver.max_bisect},   {"theta_hi_init", solver.theta_hi_init}};
    j["mdp"] = {{"delta_max", mdp.delta_max}, {"gamma", mdp.gamma}, {"vi_tol", mdp.vi_tol},
                {"mix_endpoints", mdp.mix_endpoints}};
    j["sim"] = {{"horizon", sim.horizon},           {"warmup", sim.warmup_slots()}, {"seed", sim.seed},
                {"replications", sim.replications}, {"batches", sim.batches},       {"trace_slots", sim.trace_slots}};
    if (sweep) j["sweep"] = {{"parameter", sweep->parameter}, {"from", sweep->from}, {"to", sweep->to}, {"steps", sweep->steps}};
    return j;
  }

  /// One-line resolved configuration for CSV preambles.
  std::string config_line() const { return to_json().dump(); }
};

namespace detail {

inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + " must be an object", 0);
  for (const auto& [k, _] : obj.items())
    if (!allowed.count(k)) throw ParseError("unknown key '" + k + "' in " + where, 0);
}

template <class T>
void read_opt(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError("wrong type for '" + std::string(key) + "' in " + where, 0);
  }
}

}  // namespace detail

/// Builds a configuration from JSON. Unknown keys anywhere are errors.
inline ExperimentConfig config_from_json(const json& j) {
  using detail::check_keys;
  using detail::read_opt;
  check_keys(j, {"streams", "channel", "scheme", "pbar", "solver", "mdp", "sim", "sweep", "output"}, "config");
  ExperimentConfig c;
  if (!j.contains("streams") || !j.at("streams").is_array()) throw ParseError("config needs a 'streams' array", 0);
  for (const auto& s : j.at("streams")) {
    check_keys(s, {"lambda", "r0", "weight"}, "stream");
    StreamConfig sc;
    read_opt(s, "lambda", sc.lambda, "stream");
    read_opt(s, "r0", sc.r0, "stream");
    read_opt(s, "weight", sc.weight, "stream");
    c.streams.push_back(sc);
  }
  if (!j.contains("channel")) throw ParseError("config needs a 'channel' section", 0);
  const auto& ch = j.at("channel");
  check_keys(ch, {"levels", "pmf"}, "channel");
  read_opt(ch, "levels", c.levels, "channel");
  if (!ch.contains("pmf")) throw ParseError("channel needs 'pmf'", 0);
  const auto& pmf = ch.at("pmf");
  if (!pmf.is_array() || pmf.empty()) throw ParseError("channel pmf must be a non-empty array", 0);
  if (pmf.front().is_array()) {
    read_opt(ch, "pmf", c.pmf, "channel");
  } else {
    std::vector<double> shared;
    read_opt(ch, "pmf", shared, "channel");
    c.pmf.assign(c.streams.size(), shared);
  }
  if (j.contains("scheme")) {
    try {
      c.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    } catch (const std::exception& e) {
      throw ParseError(e.what(), 0);
    }
  }
  read_opt(j, "pbar", c.pbar, "config");
  read_opt(j, "output", c.output, "config");
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    check_keys(s, {"eps_psi", "eps_power", "eps_inner", "max_newton", "max_bisect", "theta_hi_init"}, "solver");
    read_opt(s, "eps_psi", c.solver.eps_psi, "solver");
    read_opt(s, "eps_power", c.solver.eps_power, "solver");
    read_opt(s, "eps_inner", c.solver.eps_inner, "solver");
    read_opt(s, "max_newton", c.solver.max_newton, "solver");
    read_opt(s, "max_bisect", c.solver.max_bisect, "solver");
    read_opt(s, "theta_hi_init", c.solver.theta_hi_init, "solver");
  }
  if (j.contains("mdp")) {
    const auto& m = j.at("mdp");
    check_keys(m, {"delta_max", "gamma", "vi_tol", "mix_endpoints", "state_cap"}, "mdp");
    read_opt(m, "delta_max", c.mdp.delta_max, "mdp");
    read_opt(m, "gamma", c.mdp.gamma, "mdp");
    read_opt(m, "vi_tol", c.mdp.vi_tol, "mdp");
    read_opt(m, "mix_endpoints", c.mdp.mix_endpoints, "mdp");
    read_opt(m, "state_cap", c.mdp.state_cap, "mdp");
  }
  if (j.contains("sim")) {
    const auto& s = j.at("sim");
    check_keys(s, {"horizon", "warmup", "seed", "replications", "batches", "trace_slots"}, "sim");
    read_opt(s, "horizon", c.sim.horizon, "sim");
    read_opt(s, "warmup", c.sim.warmup, "sim");
    read_opt(s, "seed", c.sim.seed, "sim");
    read_opt(s, "replications", c.sim.replications, "sim");
    read_opt(s, "batches", c.sim.batches, "sim");
    read_opt(s, "trace_slots", c.sim.trace_slots, "sim");
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, {"parameter", "from", "to", "steps"}, "sweep");
    SweepSpec sw;
    read_opt(s, "parameter", sw.parameter, "sweep");
    read_opt(s, "from", sw.from, "sweep");
    read_opt(s, "to", sw.to, "sweep");
    read_opt(s, "steps", sw.steps, "sweep");
    c.sweep = sw;
  }
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(e.what(), 0);
  }
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), 0);
  }
  return config_from_json(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Worker count from VAOI_WORKERS, else the hardware concurrency.
inline unsigned worker_count() {
  if (const char* env = std::getenv("VAOI_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Evaluates fn(0..n-1) on up to `workers` threads; results keep index order.
/// The first exception thrown by any task is rethrown.
template <class T>
std::vector<T> parallel_map(std::size_t n, unsigned workers, const std::function<T(std::size_t)>& fn) {
  std::vector<std::optional<T>> slots(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto loop = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < n;) {
      try {
        slots[k].emplace(fn(k));
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    loop();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(loop);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// Applies one sweep coordinate to a copy of the configuration. For two users,
/// weight_1 = x also sets weight_2 = 1 - x.
inline ExperimentConfig with_parameter(ExperimentConfig c, const std::string& parameter, double x) {
  if (parameter == "pbar") {
    c.pbar = x;
  } else if (parameter == "lambda") {
    for (auto& s : c.streams) s.lambda = x;
  } else if (parameter == "weight_1") {
    c.streams.at(0).weight = x;
    if (c.streams.size() == 2) c.streams[1].weight = 1.0 - x;
  } else {
    throw InvalidInput("unknown sweep parameter '" + parameter + "'");
  }
  return c;
}

struct CosrpRun {
  CosrpSolution solution;
  std::vector<JointChannelState> states;
};

inline CosrpRun run_cosrp(const ExperimentConfig& c) {
  const auto prog = build_program(c.channel(), c.streams, c.pbar, c.scheme);
  return {solve(prog, c.solver), prog.states()};
}

struct CmdpRun {
  std::unique_ptr<MdpSpace> space;
  CmdpSolution solution;
  ThresholdReport threshold;
};

inline CmdpRun run_cmdp(const ExperimentConfig& c) {
  CmdpRun r;
  MdpConfig mc = c.mdp;
  mc.eps_power = c.solver.eps_power;
  r.space = std::make_unique<MdpSpace>(c.channel(), c.streams, c.scheme, mc);
  r.solution = bisect_theta(*r.space, c.pbar);
  r.threshold = check_threshold(*r.space, r.solution.value);
  return r;
}

struct SweepRow {
  double x = 0.0;
  double objective = 0.0;
  double power = 0.0;
  double theta = 0.0;
  double simultaneous = 0.0;  // E_h[mu_h^{all users}] (NOMA only)
  std::vector<double> user_vaoi;
  std::optional<double> cmdp_vaoi;
  std::optional<double> cmdp_power;
};

inline SweepRow sweep_point(const ExperimentConfig& base, const std::string& parameter, double x, bool with_cmdp) {
  const auto c = with_parameter(base, parameter, x);
  const auto prog = build_program(c.channel(), c.streams, c.pbar, c.scheme);
  const auto sol = solve(prog, c.solver);
  SweepRow row;
  row.x = x;
  row.objective = sol.objective;
  row.power = sol.achieved_power;
  row.theta = sol.theta;
  if (c.scheme == Scheme::noma && c.streams.size() > 1)
    row.simultaneous = sol.policy.mean_probability(Subset::full(c.streams.size()), prog.states());
  const auto p = prog.p(sol.x);
  for (std::size_t i = 0; i < c.streams.size(); ++i) row.user_vaoi.push_back(average_vaoi(p[i], c.streams[i].lambda));
  if (with_cmdp && c.pbar > 0.0) {
    const auto r = run_cmdp(c);
    row.cmdp_vaoi = r.solution.average_vaoi;
    row.cmdp_power = r.solution.average_power;
  }
  return row;
}

inline std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const SweepSpec& spec, bool with_cmdp,
                                       unsigned workers = worker_count()) {
  spec.validate();
  const auto grid = spec.grid();
  return parallel_map<SweepRow>(grid.size(), workers, [&](std::size_t k) {
    return sweep_point(base, spec.parameter, grid[k], with_cmdp);
  });
}

// ---------------------------------------------------------------------------
// Reproductions

/// Two users, shared channel {0.1, h_max}, symmetric streams.
inline ExperimentConfig two_user_config(double lambda, double r0, double h_max, double p_bad, double pbar,
                                        Scheme scheme, double w1 = 0.5) {
  ExperimentConfig c;
  c.streams = {StreamConfig{lambda, r0, w1}, StreamConfig{lambda, r0, 1.0 - w1}};
  c.levels = {0.1, h_max};
  c.pmf.assign(2, {p_bad, 1.0 - p_bad});
  c.scheme = scheme;
  c.pbar = pbar;
  return c;
}

struct Table1Row {
  double h_max, p_bad, r0, pbar;
  double reference_tdma, reference_noma;
};

inline const std::vector<Table1Row>& table1_rows() {
  static const std::vector<Table1Row> rows{
      {1, 0.9, 2, 45, 1.0774, 1.0668}, {1, 0.5, 2, 45, 0.9, 0.3850},      {2, 0.5, 2, 45, 0.9, 0.2681},
      {2, 0.5, 3, 45, 0.9751, 0.9751}, {2, 0.5, 3, 100, 0.9751, 0.5265},
  };
  return rows;
}

/// Tolerance of one table1 cell: tighter for cells at the TDMA saturation value.
inline double table1_tolerance(double reference_value, bool tdma) {
  return (tdma && std::abs(reference_value - 0.9) < 1e-12) ? 0.005 : 0.01;
}

struct ReproduceResult {
  std::string name;
  std::string csv;
  std::string svg;
  bool pass = true;
  std::vector<std::string> notes;
};

inline ReproduceResult reproduce_table1(unsigned workers = worker_count()) {
  const auto& rows = table1_rows();
  struct Cell {
    double tdma, noma;
  };
  const auto cells = parallel_map<Cell>(rows.size(), workers, [&](std::size_t k) {
    const auto& r = rows[k];
    Cell c{};
    c.tdma = run_cosrp(two_user_config(0.9, r.r0, r.h_max, r.p_bad, r.pbar, Scheme::tdma)).solution.objective;
    c.noma = run_cosrp(two_user_config(0.9, r.r0, r.h_max, r.p_bad, r.pbar, Scheme::noma)).solution.objective;
    return c;
  });
  ReproduceResult out{"table1", {}, {}, true, {}};
  std::ostringstream os;
  write_csv_preamble(os, R"({"target":"table1","lambda":0.9,"weight":0.5,"low_gain":0.1})",
                     "h_max,p_bad,r0,pbar,tdma,noma,difference,reference_tdma,reference_noma,tdma_ok,noma_ok");
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    const bool tdma_ok = std::abs(cells[k].tdma - r.reference_tdma) <= table1_tolerance(r.reference_tdma, true);
    const bool noma_ok = std::abs(cells[k].noma - r.reference_noma) <= table1_tolerance(r.reference_noma, false);
    out.pass = out.pass && tdma_ok && noma_ok;
    if (!tdma_ok)
      out.notes.push_back("row " + std::to_string(k + 1) + " TDMA " + fmt12(cells[k].tdma) + " vs " + fmt12(r.reference_tdma));
    if (!noma_ok)
      out.notes.push_back("row " + std::to_string(k + 1) + " NOMA " + fmt12(cells[k].noma) + " vs " + fmt12(r.reference_noma));
    os << join({fmt12(r.h_max), fmt12(r.p_bad), fmt12(r.r0), fmt12(r.pbar), fmt12(cells[k].tdma),
                fmt12(cells[k].noma), fmt12(cells[k].tdma - cells[k].noma), fmt12(r.reference_tdma),
                fmt12(r.reference_noma), tdma_ok ? "1" : "0", noma_ok ? "1" : "0"})
       << "\n";
  }
  out.csv = os.str();
  return out;
}

/// fig1 instance: lambda = 0.5, R0 = 2, H = {0.1, 1}, P(0.1) = 0.2, w = 0.5.
inline ExperimentConfig fig1_config(Scheme scheme, double pbar) {
  return two_user_config(0.5, 2.0, 1.0, 0.2, pbar, scheme);
}

inline std::vector<double> linspace(double a, double b, int n) { return SweepSpec{"pbar", a, b, n}.grid(); }

struct Fig1Point {
  double pbar;
  double srp_noma, srp_tdma, cmdp_noma, cmdp_tdma;
  double cmdp_noma_power, cmdp_tdma_power;
  double tail_mass;
};

inline std::vector<Fig1Point> fig1_points(const std::vector<double>& grid, unsigned workers = worker_count()) {
  return parallel_map<Fig1Point>(grid.size(), workers, [&](std::size_t k) {
    Fig1Point p{};
    p.pbar = grid[k];
    p.srp_noma = run_cosrp(fig1_config(Scheme::noma, p.pbar)).solution.objective;
    p.srp_tdma = run_cosrp(fig1_config(Scheme::tdma, p.pbar)).solution.objective;
    const auto n = run_cmdp(fig1_config(Scheme::noma, p.pbar));
    const auto t = run_cmdp(fig1_config(Scheme::tdma, p.pbar));
    p.cmdp_noma = n.solution.average_vaoi;
    p.cmdp_tdma = t.solution.average_vaoi;
    p.cmdp_noma_power = n.solution.average_power;
    p.cmdp_tdma_power = t.solution.average_power;
    p.tail_mass = std::max(n.solution.tail_mass, t.solution.tail_mass);
    return p;
  });
}

/// Pointwise and monotonicity checks on a fig1 sweep; returns the failures.
inline std::vector<std::string> fig1_orderings(const std::vector<Fig1Point>& pts, double tol = 1e-6) {
  std::vector<std::string> bad;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const auto& p = pts[k];
    const std::string at = " at pbar=" + fmt12(p.pbar);
    if (p.srp_noma > p.srp_tdma + tol) bad.push_back("CO-SRP NOMA above TDMA" + at);
    if (p.cmdp_noma > p.srp_noma + tol) bad.push_back("CMDP NOMA above CO-SRP NOMA" + at);
    if (p.cmdp_tdma > p.srp_tdma + tol) bad.push_back("CMDP TDMA above CO-SRP TDMA" + at);
    if (k > 0) {
      const auto& q = pts[k - 1];
      if (p.srp_noma > q.srp_noma + tol) bad.push_back("CO-SRP NOMA increases" + at);
      if (p.srp_tdma > q.srp_tdma + tol) bad.push_back("CO-SRP TDMA increases" + at);
      if (p.cmdp_noma > q.cmdp_noma + tol) bad.push_back("CMDP NOMA increases" + at);
      if (p.cmdp_tdma > q.cmdp_tdma + tol) bad.push_back("CMDP TDMA increases" + at);
    }
  }
  return bad;
}

inline ReproduceResult reproduce_fig1(unsigned workers = worker_count()) {
  const auto pts = fig1_points(linspace(2.0, 50.0, 20), workers);
  ReproduceResult out{"fig1", {}, {}, true, fig1_orderings(pts)};
  out.pass = out.notes.empty();
  std::ostringstream os;
  write_csv_preamble(os,
                     R"({"target":"fig1","lambda":0.5,"r0":2,"levels":[0.1,1],"p_bad":0.2,"weight":0.5,"pbar":[2,50,20]})",
                     "pbar,srp_noma,srp_tdma,cmdp_noma,cmdp_tdma,cmdp_noma_power,cmdp_tdma_power,tail_mass");
  SvgSeries a{"CO-SRP NOMA", {}, {}}, b{"CO-SRP TDMA", {}, {}}, c{"CMDP NOMA", {}, {}}, d{"CMDP TDMA", {}, {}};
  for (const auto& p : pts) {
    os << join({fmt12(p.pbar), fmt12(p.srp_noma), fmt12(p.srp_tdma), fmt12(p.cmdp_noma), fmt12(p.cmdp_tdma),
                fmt12(p.cmdp_noma_power), fmt12(p.cmdp_tdma_power), fmt12(p.tail_mass)})
       << "\n";
    for (auto* s : {&a, &b, &c, &d}) s->x.push_back(p.pbar);
    a.y.push_back(p.srp_noma);
    b.y.push_back(p.srp_tdma);
    c.y.push_back(p.cmdp_noma);
    d.y.push_back(p.cmdp_tdma);
  }
  out.csv = os.str();
  out.svg = svg_line_chart("Weighted VAoI vs power budget", "Pbar", "weighted VAoI", {a, b, c, d});
  return out;
}

inline ReproduceResult reproduce_fig_simul_prob(unsigned workers = worker_count()) {
  const std::vector<double> p_bad{0.1, 0.2, 0.5};
  const auto grid = linspace(2.5, 50.0, 20);
  const auto vals = parallel_map<double>(p_bad.size() * grid.size(), workers, [&](std::size_t k) {
    const auto c = two_user_config(0.8, 2.0, 1.0, p_bad[k / grid.size()], grid[k % grid.size()], Scheme::noma);
    const auto prog = build_program(c.channel(), c.streams, c.pbar, c.scheme);
    return solve(prog, c.solver).policy.mean_probability(Subset::full(2), prog.states());
  });
  ReproduceResult out{"fig_simul_prob", {}, {}, true, {}};
  std::ostringstream os;
  write_csv_preamble(os, R"({"target":"fig_simul_prob","lambda":0.8,"r0":2,"levels":[0.1,1],"p_bad":[0.1,0.2,0.5],"weight":0.5,"pbar":[2.5,50,20]})",
                     "pbar,p_bad_0.1,p_bad_0.2,p_bad_0.5");
  std::vector<SvgSeries> series;
  for (double pb : p_bad) series.push_back({"P(H=0.1)=" + fmt12(pb), grid, {}});
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<std::string> row{fmt12(grid[g])};
    for (std::size_t b = 0; b < p_bad.size(); ++b) {
      const double v = vals[b * grid.size() + g];
      row.push_back(fmt12(v));
      series[b].y.push_back(v);
      if (g > 0 && v < vals[b * grid.size() + g - 1] - 1e-6)
        out.notes.push_back("simultaneous probability decreases at pbar=" + fmt12(grid[g]));
    }
    os << join(row) << "\n";
  }
  for (std::size_t b = 0; b < p_bad.size(); ++b)
    if (vals[b * grid.size()] > 1e-6) out.notes.push_back("simultaneous probability nonzero at the smallest budget");
  out.pass = out.notes.empty();
  out.csv = os.str();
  out.svg = svg_line_chart("Simultaneous transmission probability", "Pbar", "E[mu^{1,2}]", series);
  return out;
}

inline ReproduceResult reproduce_fig_lambda(unsigned workers = worker_count()) {
  const std::vector<double> budgets{15.0, 37.0};
  const auto grid = linspace(0.1, 1.0, 10);
  const std::size_t per = grid.size();
  const auto vals = parallel_map<double>(budgets.size() * 2 * per, workers, [&](std::size_t k) {
    const double pbar = budgets[k / (2 * per)];
    const Scheme sc = (k / per) % 2 == 0 ? Scheme::noma : Scheme::tdma;
    return run_cosrp(two_user_config(grid[k % per], 2.0, 1.0, 0.5, pbar, sc)).solution.objective;
  });
  ReproduceResult out{"fig_lambda", {}, {}, true, {}};
  std::ostringstream os;
  write_csv_preamble(os, R"({"target":"fig_lambda","r0":2,"levels":[0.1,1],"p_bad":0.5,"weight":0.5,"pbar":[15,37],"lambda":[0.1,1,10]})",
                     "lambda,noma_15,tdma_15,noma_37,tdma_37");
  std::vector<SvgSeries> series{{"NOMA 15", grid, {}}, {"TDMA 15", grid, {}}, {"NOMA 37", grid, {}}, {"TDMA 37", grid, {}}};
  auto at = [&](std::size_t b, std::size_t s, std::size_t g) { return vals[(b * 2 + s) * per + g]; };
  for (std::size_t g = 0; g < per; ++g) {
    std::vector<std::string> row{fmt12(grid[g])};
    for (std::size_t b = 0; b < budgets.size(); ++b) {
      for (std::size_t s = 0; s < 2; ++s) {
        row.push_back(fmt12(at(b, s, g)));
        series[b * 2 + s].y.push_back(at(b, s, g));
        if (g > 0 && at(b, s, g) < at(b, s, g - 1) - 1e-6)
          out.notes.push_back("VAoI decreases in lambda at lambda=" + fmt12(grid[g]));
      }
      if (at(b, 0, g) > at(b, 1, g) + 1e-6)
        out.notes.push_back("NOMA above TDMA at lambda=" + fmt12(grid[g]) + ", pbar=" + fmt12(budgets[b]));
    }
    os << join(row) << "\n";
  }
  out.pass = out.notes.empty();
  out.csv = os.str();
  out.svg = svg_line_chart("Weighted VAoI vs arrival probability", "lambda", "weighted VAoI", series);
  return out;
}

inline ReproduceResult reproduce_fig_region(unsigned workers = worker_count()) {
  const auto grid = linspace(0.0, 1.0, 21);
  struct Pt {
    double noma1, noma2, tdma1, tdma2;
  };
  const auto pts = parallel_map<Pt>(grid.size(), workers, [&](std::size_t k) {
    Pt p{};
    for (Scheme sc : {Scheme::noma, Scheme::tdma}) {
      const auto row = sweep_point(two_user_config(0.9, 2.0, 1.0, 0.5, 40.0, sc), "weight_1", grid[k], false);
      (sc == Scheme::noma ? p.noma1 : p.tdma1) = row.user_vaoi[0];
      (sc == Scheme::noma ? p.noma2 : p.tdma2) = row.user_vaoi[1];
    }
    return p;
  });
  ReproduceResult out{"fig_region", {}, {}, true, {}};
  std::ostringstream os;
  write_csv_preamble(os, R"({"target":"fig_region","lambda":0.9,"r0":2,"levels":[0.1,1],"p_bad":0.5,"pbar":40,"weight_1":[0,1,21]})",
                     "w1,w2,noma_vaoi_1,noma_vaoi_2,tdma_vaoi_1,tdma_vaoi_2");
  SvgSeries n{"NOMA", {}, {}}, t{"TDMA", {}, {}};
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto& p = pts[k];
    os << join({fmt12(grid[k]), fmt12(1.0 - grid[k]), fmt12(p.noma1), fmt12(p.noma2), fmt12(p.tdma1), fmt12(p.tdma2)})
       << "\n";
    if (std::isfinite(p.noma1) && std::isfinite(p.noma2)) {
      n.x.push_back(p.noma1);
      n.y.push_back(p.noma2);
    }
    if (std::isfinite(p.tdma1) && std::isfinite(p.tdma2)) {
      t.x.push_back(p.tdma1);
      t.y.push_back(p.tdma2);
    }
  }
  out.csv = os.str();
  out.svg = svg_line_chart("Achievable VAoI region", "VAoI user 1", "VAoI user 2", {n, t});
  return out;
}

inline const std::vector<std::string>& reproduce_targets() {
  static const std::vector<std::string> t{"table1", "fig1", "fig_simul_prob", "fig_lambda", "fig_region"};
  return t;
}

inline ReproduceResult reproduce(const std::string& target, unsigned workers = worker_count()) {
  if (target == "table1") return reproduce_table1(workers);
  if (target == "fig1") return reproduce_fig1(workers);
  if (target == "fig_simul_prob") return reproduce_fig_simul_prob(workers);
  if (target == "fig_lambda") return reproduce_fig_lambda(workers);
  if (target == "fig_region") return reproduce_fig_region(workers);
  throw InvalidInput("unknown reproduce target '" + target + "'");
}

}  // namespace vaoi
