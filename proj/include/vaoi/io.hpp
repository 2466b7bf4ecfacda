#pragma once

// Flat-file formats: CO-SRP policy tables (with an optional solution footer),
// CMDP policy/value dumps, CSV preambles, and a small SVG line chart.

#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "vaoi/cmdp.hpp"
#include "vaoi/cosrp.hpp"
#include "vaoi/error.hpp"
#include "vaoi/model.hpp"
#include "vaoi/optimizer.hpp"

namespace vaoi {

inline constexpr const char* kToolVersion = "0.3.0";

/// Shortest decimal with 12 significant digits.
inline std::string fmt12(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Full round-trip precision, used for probabilities in policy files.
inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Comment line naming the tool version and the resolved configuration, then the header.
inline void write_csv_preamble(std::ostream& os, const std::string& config_line, const std::string& header) {
  os << "# vaoi " << kToolVersion << " config=" << config_line << "\n" << header << "\n";
}

inline std::string join(const std::vector<std::string>& cells, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += sep;
    out += cells[i];
  }
  return out;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

struct SolutionFooter {
  double objective = 0.0;
  double power = 0.0;
  double theta = 0.0;
  double psi_inf = 0.0;
};

inline std::string footer_line(const SolutionFooter& f) {
  return "objective=" + fmt12(f.objective) + ", power=" + fmt12(f.power) + ", theta=" + fmt12(f.theta) +
         ", psi_inf=" + fmt12(f.psi_inf);
}

inline void write_cosrp_policy(std::ostream& os, const CoSrpPolicy& pol, std::span<const JointChannelState> states,
                               const std::optional<SolutionFooter>& footer = std::nullopt) {
  const std::size_t n = pol.n_users();
  os << "# vaoi cosrp-policy scheme=" << to_string(pol.scheme()) << " users=" << n << "\n";
  std::vector<std::string> header{"state_index"};
  for (std::size_t i = 0; i < n; ++i) header.push_back("gain_" + std::to_string(i + 1));
  header.emplace_back("subset_mask");
  header.emplace_back("probability");
  os << join(header) << "\n";
  for (std::size_t s = 0; s < pol.n_states(); ++s) {
    for (std::size_t k = 0; k < pol.n_subsets(); ++k) {
      std::vector<std::string> row{std::to_string(s)};
      for (double g : states[s].gains) row.push_back(fmt12(g));
      row.push_back(std::to_string(pol.subsets()[k].mask()));
      row.push_back(fmt17(pol.at(s, k)));
      os << join(row) << "\n";
    }
  }
  if (footer) os << footer_line(*footer) << "\n";
}

struct PolicyFile {
  CoSrpPolicy policy;
  std::optional<SolutionFooter> footer;
};

namespace detail {

inline double parse_double(const std::string& s, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ParseError("trailing characters in number '" + s + "'", line);
    return v;
  } catch (const std::invalid_argument&) {
    throw ParseError("not a number: '" + s + "'", line);
  } catch (const std::out_of_range&) {
    throw ParseError("number out of range: '" + s + "'", line);
  }
}

inline unsigned long long parse_uint(const std::string& s, std::size_t line) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw ParseError("expected a non-negative integer, got '" + s + "'", line);
  try {
    return std::stoull(s);
  } catch (const std::out_of_range&) {
    throw ParseError("integer out of range: '" + s + "'", line);
  }
}

inline SolutionFooter parse_footer(const std::string& text, std::size_t line) {
  SolutionFooter f;
  bool seen[4] = {false, false, false, false};
  for (const auto& part : split(text)) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ParseError("footer entry without '='", line);
    const std::string key = part.substr(0, eq);
    const std::string val = part.substr(eq + 1);
    const double v = val == "inf" ? kInfinity : parse_double(val, line);
    if (key == "objective") f.objective = v, seen[0] = true;
    else if (key == "power") f.power = v, seen[1] = true;
    else if (key == "theta") f.theta = v, seen[2] = true;
    else if (key == "psi_inf") f.psi_inf = v, seen[3] = true;
    else throw ParseError("unknown footer key '" + key + "'", line);
  }
  if (!(seen[0] && seen[1] && seen[2] && seen[3])) throw ParseError("incomplete solution footer", line);
  return f;
}

}  // namespace detail

/// Reads a policy table. When `states` is given, row gains must match the
/// joint-state enumeration and the state count must agree.
inline PolicyFile read_cosrp_policy(std::istream& is, std::span<const JointChannelState> states = {}) {
  std::string line;
  std::size_t lineno = 0;
  std::optional<Scheme> scheme;
  std::vector<std::string> header;
  struct Row {
    std::size_t state;
    std::vector<double> gains;
    std::uint32_t mask;
    double prob;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::optional<SolutionFooter> footer;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("scheme=");
      if (pos != std::string::npos) {
        std::string v = line.substr(pos + 7);
        v = v.substr(0, v.find_first_of(" \t"));
        try {
          scheme = scheme_from_string(v);
        } catch (const InvalidInput& e) {
          throw ParseError(e.what(), lineno);
        }
      }
      continue;
    }
    if (line.rfind("objective=", 0) == 0) {
      footer = detail::parse_footer(line, lineno);
      continue;
    }
    if (footer) throw ParseError("data after the solution footer", lineno);
    auto cells = split(line);
    if (header.empty()) {
      header = cells;
      if (header.size() < 4 || header.front() != "state_index" || header[header.size() - 2] != "subset_mask" ||
          header.back() != "probability")
        throw ParseError("expected header 'state_index,gain_1..gain_N,subset_mask,probability'", lineno);
      for (std::size_t i = 1; i + 2 < header.size(); ++i)
        if (header[i] != "gain_" + std::to_string(i)) throw ParseError("unexpected column '" + header[i] + "'", lineno);
      continue;
    }
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " columns, found " + std::to_string(cells.size()),
                       lineno);
    Row r;
    r.line = lineno;
    r.state = detail::parse_uint(cells[0], lineno);
    for (std::size_t i = 1; i + 2 < cells.size(); ++i) r.gains.push_back(detail::parse_double(cells[i], lineno));
    const auto mask = detail::parse_uint(cells[cells.size() - 2], lineno);
    r.prob = detail::parse_double(cells.back(), lineno);
    if (!(r.prob >= 0.0 && r.prob <= 1.0)) throw ParseError("probability outside [0,1]", lineno);
    const std::size_t n = header.size() - 3;
    if (mask >= (1ULL << n)) throw ParseError("subset mask exceeds the user count", lineno);
    r.mask = static_cast<std::uint32_t>(mask);
    rows.push_back(std::move(r));
  }
  if (header.empty()) throw ParseError("missing header row", lineno);
  const std::size_t n = header.size() - 3;
  if (n == 0 || n > kMaxUsers) throw ParseError("unsupported user count", 1);
  std::size_t n_states = 0;
  for (const auto& r : rows) n_states = std::max(n_states, r.state + 1);
  if (!states.empty() && n_states != states.size())
    throw ParseError("policy covers " + std::to_string(n_states) + " channel states, model has " +
                         std::to_string(states.size()),
                     lineno);
  if (!scheme) {
    scheme = Scheme::tdma;
    for (const auto& r : rows)
      if (Subset{r.mask}.size() > 1) scheme = Scheme::noma;
  }
  CoSrpPolicy pol(*scheme, n, n_states);
  std::vector<bool> seen(n_states * pol.n_subsets(), false);
  std::vector<std::size_t> last_line(n_states, lineno);
  for (const auto& r : rows) {
    last_line[r.state] = r.line;
    std::size_t k = 0;
    try {
      k = pol.subset_index(Subset{r.mask});
    } catch (const InvalidInput& e) {
      throw ParseError(e.what(), r.line);
    }
    if (seen[r.state * pol.n_subsets() + k]) throw ParseError("duplicate (state, subset) row", r.line);
    seen[r.state * pol.n_subsets() + k] = true;
    if (!states.empty()) {
      for (std::size_t i = 0; i < n; ++i)
        if (std::abs(states[r.state].gains[i] - r.gains[i]) > 1e-9 * std::max(1.0, std::abs(r.gains[i])))
          throw ParseError("gains do not match channel state " + std::to_string(r.state), r.line);
    }
    pol.at(r.state, k) = r.prob;
  }
  for (std::size_t s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (double v : pol.row(s)) sum += v;
    if (std::abs(sum - 1.0) > 1e-6)
      throw ParseError("probabilities of channel state " + std::to_string(s) + " sum to " + fmt12(sum), last_line[s]);
  }
  return {std::move(pol), footer};
}

/// Rows `delta_1..delta_N,gain_1..gain_N,action_mask` (and `value` when values are given).
inline void write_cmdp_dump(std::ostream& os, const MdpSpace& sp, const CmdpPolicy& pol,
                            const ValueFunction* values = nullptr) {
  const std::size_t n = sp.n_users();
  std::vector<std::string> header;
  for (std::size_t i = 0; i < n; ++i) header.push_back("delta_" + std::to_string(i + 1));
  for (std::size_t i = 0; i < n; ++i) header.push_back("gain_" + std::to_string(i + 1));
  header.emplace_back("action_mask");
  if (values) header.emplace_back("value");
  os << join(header) << "\n";
  for (std::size_t s = 0; s < sp.n_states(); ++s) {
    const auto st = sp.decode_state(s);
    std::vector<std::string> row;
    for (int d : st.delta) row.push_back(std::to_string(d));
    for (double g : sp.channel_states()[st.channel_index].gains) row.push_back(fmt12(g));
    row.push_back(std::to_string(pol.action(s).mask()));
    if (values) row.push_back(fmt12(values->values[s]));
    os << join(row) << "\n";
  }
}

struct SvgSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Static line chart: axes with min/max labels and one polyline per series.
inline std::string svg_line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                  const std::vector<SvgSeries>& series) {
  constexpr double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
  double x0 = kInfinity, x1 = -kInfinity, y0 = kInfinity, y1 = -kInfinity;
  for (const auto& s : series)
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!std::isfinite(s.y[k])) continue;
      x0 = std::min(x0, s.x[k]);
      x1 = std::max(x1, s.x[k]);
      y0 = std::min(y0, s.y[k]);
      y1 = std::max(y1, s.y[k]);
    }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) y1 = y0 + 1.0;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << L << "\" y=\"" << H - B + 16 << "\" font-size=\"11\">" << fmt12(x0) << "</text>\n";
  os << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" text-anchor=\"end\" font-size=\"11\">" << fmt12(x1)
     << "</text>\n";
  os << "<text x=\"" << L - 4 << "\" y=\"" << H - B << "\" text-anchor=\"end\" font-size=\"11\">" << fmt12(y0)
     << "</text>\n";
  os << "<text x=\"" << L - 4 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << fmt12(y1)
     << "</text>\n";
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << xlabel << "</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 "
     << (T + H - B) / 2 << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* c = colors[s % 6];
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < series[s].x.size(); ++k) {
      if (!std::isfinite(series[s].y[k])) continue;
      os << px(series[s].x[k]) << "," << py(series[s].y[k]) << " ";
    }
    os << "\"/>\n";
    os << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (s + 1) << "\" font-size=\"11\" fill=\"" << c << "\">"
       << series[s].name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace vaoi
