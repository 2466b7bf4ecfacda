#pragma once

// Constrained MDP over (capped VAoI vector, joint channel state).
//
// The agent observes the end-of-slot VAoI of the previous slot and the
// current channel, picks a subset of users, and only then learns the
// arrivals. A user whose queue turns out to be empty is not served and
// draws no power. Value iteration runs on the discounted Lagrangian cost and
// theta is bisected to meet the power budget.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vaoi/cosrp.hpp"
#include "vaoi/error.hpp"
#include "vaoi/model.hpp"

namespace vaoi {

struct MdpConfig {
  int delta_max = 20;
  double gamma = 0.99;
  double vi_tol = 1e-6;
  std::size_t state_cap = 1'000'000;
  int max_vi_iterations = 1'000'000;
  double theta_hi_init = 1.0;
  double eps_power = -1.0;  // negative: 1e-4 * pbar, at least 1e-6
  int max_bisect = 60;
  double bracket_width = 1e-10;
  bool mix_endpoints = true;

  double power_tolerance(double pbar) const {
    if (eps_power > 0.0) return eps_power;
    return std::max(1e-4 * pbar, 1e-6);
  }

  void validate() const {
    if (delta_max < 1) throw InvalidInput("delta_max must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidInput("gamma must lie in (0,1)");
    if (!(vi_tol > 0.0)) throw InvalidInput("vi_tol must be > 0");
  }
};

struct MdpState {
  std::vector<int> delta;
  std::size_t channel_index = 0;
};

/// Precomputed tables for one (channel, streams, scheme, delta_max) instance.
class MdpSpace {
 public:
  MdpSpace(const ChannelModel& model, Streams streams, Scheme scheme, const MdpConfig& cfg = {},
           const RateFunction& f = RateFunction::log1p())
      : streams_(std::move(streams)), scheme_(scheme), cfg_(cfg) {
    cfg_.validate();
    validate_streams(streams_);
    if (model.n_users() != streams_.size()) throw InvalidInput("channel model and stream list differ in user count");
    n_ = streams_.size();
    states_ = enumerate_joint_states(model);
    j_ = states_.size();
    base_ = static_cast<std::size_t>(cfg_.delta_max) + 1;
    n_delta_ = 1;
    for (std::size_t i = 0; i < n_; ++i) {
      if (n_delta_ > cfg_.state_cap / base_) throw SizeError("MDP state space exceeds the configured cap");
      n_delta_ *= base_;
    }
    if (n_delta_ > cfg_.state_cap / j_) throw SizeError("MDP state space exceeds the configured cap");
    n_levels_ = model.n_levels();

    actions_ = admissible_subsets(n_, scheme_);
    const PowerTable table(states_, streams_, f);
    const std::size_t na = actions_.size();
    user_power_.assign(j_ * na * n_, 0.0);
    total_power_.assign(j_ * na, 0.0);
    for (std::size_t h = 0; h < j_; ++h)
      for (std::size_t a = 0; a < na; ++a)
        for (std::size_t i = 0; i < n_; ++i) {
          const double p = actions_[a].contains(i) ? table.power(h, actions_[a], i) : 0.0;
          user_power_[(h * na + a) * n_ + i] = p;
          total_power_[h * na + a] += p;
        }

    const std::size_t n_arr = std::size_t{1} << n_;
    arrival_prob_.assign(n_arr, 1.0);
    for (std::size_t m = 0; m < n_arr; ++m)
      for (std::size_t i = 0; i < n_; ++i)
        arrival_prob_[m] *= ((m >> i) & 1U) ? streams_[i].lambda : 1.0 - streams_[i].lambda;

    next_.assign(n_delta_ * na * n_arr, 0);
    delta_cost_.assign(n_delta_ * na, 0.0);
    occupied_.assign(n_delta_, 0);
    std::vector<int> d(n_), nd(n_);
    for (std::size_t di = 0; di < n_delta_; ++di) {
      decode_delta(di, d);
      for (std::size_t i = 0; i < n_; ++i)
        if (d[i] > 0) occupied_[di] |= 1U << i;
      for (std::size_t a = 0; a < na; ++a) {
        double cost = 0.0;
        for (std::size_t m = 0; m < n_arr; ++m) {
          double weighted = 0.0;
          for (std::size_t i = 0; i < n_; ++i) {
            const int arr = static_cast<int>((m >> i) & 1U);
            nd[i] = actions_[a].contains(i) ? 0 : std::min(d[i] + arr, cfg_.delta_max);
            weighted += streams_[i].weight * nd[i];
          }
          next_[(di * na + a) * n_arr + m] = static_cast<std::uint32_t>(encode_delta(nd));
          cost += arrival_prob_[m] * weighted;
        }
        delta_cost_[di * na + a] = cost;
      }
    }
  }

  std::size_t n_users() const noexcept { return n_; }
  std::size_t n_channel_states() const noexcept { return j_; }
  std::size_t n_delta_states() const noexcept { return n_delta_; }
  std::size_t n_states() const noexcept { return n_delta_ * j_; }
  std::size_t n_actions() const noexcept { return actions_.size(); }
  std::size_t n_arrival_patterns() const noexcept { return arrival_prob_.size(); }
  std::size_t n_levels() const noexcept { return n_levels_; }
  const std::vector<Subset>& actions() const noexcept { return actions_; }
  const std::vector<JointChannelState>& channel_states() const noexcept { return states_; }
  const Streams& streams() const noexcept { return streams_; }
  const MdpConfig& config() const noexcept { return cfg_; }
  Scheme scheme() const noexcept { return scheme_; }
  int delta_max() const noexcept { return cfg_.delta_max; }

  std::size_t action_index(Subset w) const {
    for (std::size_t a = 0; a < actions_.size(); ++a)
      if (actions_[a] == w) return a;
    throw InvalidInput("action mask " + std::to_string(w.mask()) + " not admissible under " + to_string(scheme_));
  }

  std::size_t state_index(std::size_t delta_index, std::size_t h) const { return delta_index * j_ + h; }

  std::size_t state_index(const MdpState& s) const {
    if (s.channel_index >= j_) throw InvalidInput("channel index out of range");
    return state_index(encode_delta(s.delta), s.channel_index);
  }

  MdpState decode_state(std::size_t index) const {
    MdpState s;
    s.delta.resize(n_);
    decode_delta(index / j_, s.delta);
    s.channel_index = index % j_;
    return s;
  }

  /// Lexicographic index of a VAoI vector, user 1 most significant. Entries are capped.
  std::size_t encode_delta(std::span<const int> d) const {
    if (d.size() != n_) throw InvalidInput("delta vector has the wrong length");
    std::size_t idx = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      if (d[i] < 0) throw InvalidInput("VAoI cannot be negative");
      idx = idx * base_ + static_cast<std::size_t>(std::min(d[i], cfg_.delta_max));
    }
    return idx;
  }

  void decode_delta(std::size_t idx, std::span<int> d) const {
    for (std::size_t i = n_; i-- > 0;) {
      d[i] = static_cast<int>(idx % base_);
      idx /= base_;
    }
  }

  /// Index offset between delta vectors that differ by one in user i.
  std::size_t delta_stride(std::size_t i) const {
    std::size_t s = 1;
    for (std::size_t k = i + 1; k < n_; ++k) s *= base_;
    return s;
  }

  /// Index offset between joint channel states that differ by one level for user i.
  std::size_t channel_stride(std::size_t i) const {
    std::size_t s = 1;
    for (std::size_t k = i + 1; k < n_; ++k) s *= n_levels_;
    return s;
  }

  double arrival_prob(std::size_t pattern) const { return arrival_prob_[pattern]; }

  std::size_t next_delta(std::size_t di, std::size_t a, std::size_t pattern) const {
    return next_[(di * actions_.size() + a) * arrival_prob_.size() + pattern];
  }

  /// sum_i w_i E[Delta'_i] for the action taken.
  double delta_cost(std::size_t di, std::size_t a) const { return delta_cost_[di * actions_.size() + a]; }

  double total_power(std::size_t h, std::size_t a) const { return total_power_[h * actions_.size() + a]; }

  /// Expected power actually spent: a scheduled user is charged only when its
  /// queue holds a packet, which for Delta_i = 0 happens with probability lambda_i.
  double charged_power(std::size_t di, std::size_t h, std::size_t a) const {
    const std::uint32_t u = actions_[a].mask();
    if (u == 0) return 0.0;
    const std::uint32_t occ = occupied_[di];
    double p = 0.0;
    for (std::size_t i = 0; i < n_; ++i)
      if ((u >> i) & 1U) p += user_power(h, a, i) * (((occ >> i) & 1U) ? 1.0 : streams_[i].lambda);
    return p;
  }

  double user_power(std::size_t h, std::size_t a, std::size_t i) const {
    return user_power_[(h * actions_.size() + a) * n_ + i];
  }

 private:
  Streams streams_;
  Scheme scheme_;
  MdpConfig cfg_;
  std::size_t n_ = 0;
  std::size_t j_ = 0;
  std::size_t base_ = 0;
  std::size_t n_delta_ = 0;
  std::size_t n_levels_ = 0;
  std::vector<JointChannelState> states_;
  std::vector<Subset> actions_;
  std::vector<double> user_power_;
  std::vector<double> total_power_;
  std::vector<std::uint32_t> occupied_;  // users with Delta_i > 0, per delta index
  std::vector<double> arrival_prob_;
  std::vector<std::uint32_t> next_;
  std::vector<double> delta_cost_;
};

/// C(s,u,theta) = sum_i w_i E[Delta'_i | s,u] + theta * sum_i u_i E[occupied_i] P_i(h,u).
inline double expected_stage_cost(const MdpSpace& space, const MdpState& s, Subset u, double theta) {
  const std::size_t di = space.encode_delta(s.delta);
  const std::size_t a = space.action_index(u);
  return space.delta_cost(di, a) + theta * space.charged_power(di, s.channel_index, a);
}

struct ValueFunction {
  std::vector<double> values;  // indexed by MdpSpace::state_index
  double theta = 0.0;
  int iterations = 0;
  double bellman_residual = 0.0;
  std::vector<double> sup_diffs;  // ||V_{m+1} - V_m|| per iteration
};

class CmdpPolicy {
 public:
  CmdpPolicy() = default;
  CmdpPolicy(Scheme scheme, std::vector<std::uint32_t> action_index, std::vector<Subset> actions)
      : scheme_(scheme), action_(std::move(action_index)), actions_(std::move(actions)) {}

  Scheme scheme() const noexcept { return scheme_; }
  std::size_t n_states() const noexcept { return action_.size(); }
  std::size_t action_index(std::size_t state) const { return action_[state]; }
  Subset action(std::size_t state) const { return actions_[action_[state]]; }

 private:
  Scheme scheme_ = Scheme::noma;
  std::vector<std::uint32_t> action_;
  std::vector<Subset> actions_;
};

namespace detail {

// Expected next-slot value for each delta index: sum_h P(h) V[d, h].
inline void expected_over_channel(const MdpSpace& sp, std::span<const double> v, std::vector<double>& ev) {
  const std::size_t j = sp.n_channel_states();
  ev.assign(sp.n_delta_states(), 0.0);
  for (std::size_t d = 0; d < sp.n_delta_states(); ++d) {
    double acc = 0.0;
    for (std::size_t h = 0; h < j; ++h) acc += sp.channel_states()[h].prob * v[d * j + h];
    ev[d] = acc;
  }
}

// Channel-independent part of Q: delta cost plus discounted continuation.
inline void continuation(const MdpSpace& sp, const std::vector<double>& ev, std::vector<double>& base) {
  const std::size_t na = sp.n_actions();
  const std::size_t narr = sp.n_arrival_patterns();
  const double gamma = sp.config().gamma;
  base.assign(sp.n_delta_states() * na, 0.0);
  for (std::size_t d = 0; d < sp.n_delta_states(); ++d)
    for (std::size_t a = 0; a < na; ++a) {
      double acc = 0.0;
      for (std::size_t m = 0; m < narr; ++m) acc += sp.arrival_prob(m) * ev[sp.next_delta(d, a, m)];
      base[d * na + a] = sp.delta_cost(d, a) + gamma * acc;
    }
}

// One Bellman backup; writes the new values and greedy actions (smallest mask on ties).
inline void backup(const MdpSpace& sp, double theta, std::span<const double> v, std::vector<double>& out,
                   std::vector<std::uint32_t>* act) {
  std::vector<double> ev, base;
  expected_over_channel(sp, v, ev);
  continuation(sp, ev, base);
  const std::size_t j = sp.n_channel_states();
  const std::size_t na = sp.n_actions();
  out.resize(sp.n_states());
  if (act) act->resize(sp.n_states());
  for (std::size_t d = 0; d < sp.n_delta_states(); ++d)
    for (std::size_t h = 0; h < j; ++h) {
      double best = kInfinity;
      std::uint32_t arg = 0;
      for (std::size_t a = 0; a < na; ++a) {
        const double q = base[d * na + a] + theta * sp.charged_power(d, h, a);
        if (q < best) {
          best = q;
          arg = static_cast<std::uint32_t>(a);
        }
      }
      out[d * j + h] = best;
      if (act) (*act)[d * j + h] = arg;
    }
}

}  // namespace detail

/// Q(s, a) for every state and admissible action, from a value table.
inline std::vector<double> q_table(const MdpSpace& sp, const ValueFunction& vf) {
  std::vector<double> ev, base;
  detail::expected_over_channel(sp, vf.values, ev);
  detail::continuation(sp, ev, base);
  const std::size_t j = sp.n_channel_states();
  const std::size_t na = sp.n_actions();
  std::vector<double> q(sp.n_states() * na);
  for (std::size_t d = 0; d < sp.n_delta_states(); ++d)
    for (std::size_t h = 0; h < j; ++h)
      for (std::size_t a = 0; a < na; ++a)
        q[(d * j + h) * na + a] = base[d * na + a] + vf.theta * sp.charged_power(d, h, a);
  return q;
}

/// Discounted value iteration from V = 0 until the sup-norm change drops below vi_tol.
inline std::pair<ValueFunction, CmdpPolicy> value_iteration(const MdpSpace& sp, double theta) {
  if (!(theta >= 0.0)) throw InvalidInput("theta must be >= 0");
  ValueFunction vf;
  vf.theta = theta;
  vf.values.assign(sp.n_states(), 0.0);
  std::vector<double> next;
  const int cap = sp.config().max_vi_iterations;
  for (int it = 0;; ++it) {
    if (it >= cap) throw ConvergenceError("value iteration hit its iteration cap", vf.sup_diffs.back());
    detail::backup(sp, theta, vf.values, next, nullptr);
    double diff = 0.0;
    for (std::size_t s = 0; s < next.size(); ++s) diff = std::max(diff, std::abs(next[s] - vf.values[s]));
    vf.sup_diffs.push_back(diff);
    vf.values.swap(next);
    vf.iterations = it + 1;
    if (diff < sp.config().vi_tol) break;
  }
  std::vector<std::uint32_t> act;
  detail::backup(sp, theta, vf.values, next, &act);
  double res = 0.0;
  for (std::size_t s = 0; s < next.size(); ++s) res = std::max(res, std::abs(next[s] - vf.values[s]));
  vf.bellman_residual = res;
  return {std::move(vf), CmdpPolicy(sp.scheme(), std::move(act), sp.actions())};
}

/// Long-run averages of a stationary policy.
struct PolicyEvaluation {
  double weighted_vaoi = 0.0;
  std::vector<double> user_vaoi;
  double power = 0.0;
  double tail_mass = 0.0;  // stationary mass where some Delta_i sits at the cap
  bool reducible = false;
  std::size_t iterations = 0;
  std::vector<PolicyEvaluation> classes;  // one entry per closed class when reducible
  std::vector<double> stationary;         // over delta indices
};

/// Randomized decision rule: fills (action index, probability) pairs for (delta index, channel index).
using StochasticRule = std::function<void(std::size_t, std::size_t, std::vector<std::pair<std::size_t, double>>&)>;

namespace detail {

struct SparseChain {
  std::vector<std::size_t> row_start;
  std::vector<std::size_t> col;
  std::vector<double> prob;
  std::vector<double> power;  // expected power charged from each state
};

inline SparseChain build_chain(const MdpSpace& sp, const StochasticRule& rule) {
  const std::size_t nd = sp.n_delta_states();
  const std::size_t n = sp.n_users();
  const std::size_t narr = sp.n_arrival_patterns();
  SparseChain ch;
  ch.row_start.reserve(nd + 1);
  ch.power.assign(nd, 0.0);
  std::vector<double> row(nd, 0.0);
  std::vector<std::size_t> touched;
  std::vector<int> d(n), nxt(n);
  std::vector<std::pair<std::size_t, double>> choice;
  const int dmax = sp.delta_max();
  for (std::size_t di = 0; di < nd; ++di) {
    sp.decode_delta(di, d);
    ch.row_start.push_back(ch.col.size());
    double pw = 0.0;
    for (std::size_t h = 0; h < sp.n_channel_states(); ++h) {
      const double ph = sp.channel_states()[h].prob;
      if (ph == 0.0) continue;
      choice.clear();
      rule(di, h, choice);
      for (const auto& [a, pa] : choice) {
        if (pa == 0.0) continue;
        const Subset u = sp.actions()[a];
        for (std::size_t m = 0; m < narr; ++m) {
          const double pm = sp.arrival_prob(m);
          if (pm == 0.0) continue;
          const double pr = ph * pa * pm;
          for (std::size_t i = 0; i < n; ++i) {
            const int arr = static_cast<int>((m >> i) & 1U);
            const bool served = u.contains(i) && (d[i] > 0 || arr == 1);
            nxt[i] = served ? 0 : std::min(d[i] + arr, dmax);
            if (served) pw += pr * sp.user_power(h, a, i);
          }
          const std::size_t t = sp.encode_delta(nxt);
          if (row[t] == 0.0) touched.push_back(t);
          row[t] += pr;
        }
      }
    }
    std::sort(touched.begin(), touched.end());
    for (std::size_t t : touched) {
      ch.col.push_back(t);
      ch.prob.push_back(row[t]);
      row[t] = 0.0;
    }
    touched.clear();
    ch.power[di] = pw;
  }
  ch.row_start.push_back(ch.col.size());
  return ch;
}

// Strongly connected components (iterative Tarjan); returns component id per node.
inline std::vector<std::size_t> scc(const SparseChain& ch, std::size_t& n_comp) {
  const std::size_t n = ch.power.size();
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> index(n, none), low(n, 0), comp(n, none);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::pair<std::size_t, std::size_t>> work;
  std::size_t counter = 0;
  n_comp = 0;
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != none) continue;
    work.emplace_back(root, ch.row_start[root]);
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!work.empty()) {
      auto& [v, e] = work.back();
      if (e < ch.row_start[v + 1]) {
        const std::size_t w = ch.col[e++];
        if (index[w] == none) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          work.emplace_back(w, ch.row_start[w]);
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      const std::size_t vv = v;
      work.pop_back();
      if (!work.empty()) low[work.back().first] = std::min(low[work.back().first], low[vv]);
      if (low[vv] == index[vv]) {
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = n_comp;
        } while (w != vv);
        ++n_comp;
      }
    }
  }
  return comp;
}

inline PolicyEvaluation stationary_averages(const MdpSpace& sp, const SparseChain& ch, std::vector<double> pi) {
  const std::size_t nd = ch.power.size();
  std::vector<double> nxt(nd);
  PolicyEvaluation ev;
  const std::size_t cap = 50'000'000 / std::max<std::size_t>(ch.col.size(), 1) + 100'000;
  std::size_t it = 0;
  for (;; ++it) {
    if (it >= cap) throw ConvergenceError("stationary distribution did not converge", 0.0);
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (std::size_t s = 0; s < nd; ++s) {
      const double m = pi[s];
      if (m == 0.0) continue;
      for (std::size_t e = ch.row_start[s]; e < ch.row_start[s + 1]; ++e) nxt[ch.col[e]] += m * ch.prob[e];
    }
    double diff = 0.0;
    for (std::size_t s = 0; s < nd; ++s) {
      const double lazy = 0.5 * (pi[s] + nxt[s]);
      diff = std::max(diff, std::abs(lazy - pi[s]));
      pi[s] = lazy;
    }
    if (diff < 1e-12) break;
  }
  ev.iterations = it + 1;
  const std::size_t n = sp.n_users();
  ev.user_vaoi.assign(n, 0.0);
  std::vector<int> d(n);
  for (std::size_t s = 0; s < nd; ++s) {
    if (pi[s] == 0.0) continue;
    sp.decode_delta(s, d);
    bool at_cap = false;
    for (std::size_t i = 0; i < n; ++i) {
      ev.user_vaoi[i] += pi[s] * d[i];
      at_cap = at_cap || d[i] == sp.delta_max();
    }
    if (at_cap) ev.tail_mass += pi[s];
    ev.power += pi[s] * ch.power[s];
  }
  for (std::size_t i = 0; i < n; ++i) ev.weighted_vaoi += sp.streams()[i].weight * ev.user_vaoi[i];
  ev.stationary = std::move(pi);
  return ev;
}

}  // namespace detail

/// Exact long-run averages of a randomized stationary rule via the induced chain
/// on delta indices (the channel is i.i.d. and averaged out). The main result
/// starts from the all-zero VAoI state; reducible chains also report one
/// result per closed class.
inline PolicyEvaluation evaluate_policy(const MdpSpace& sp, const StochasticRule& rule) {
  const auto ch = detail::build_chain(sp, rule);
  const std::size_t nd = ch.power.size();
  std::vector<double> start(nd, 0.0);
  start[0] = 1.0;
  auto ev = detail::stationary_averages(sp, ch, start);

  std::size_t n_comp = 0;
  const auto comp = detail::scc(ch, n_comp);
  std::vector<bool> closed(n_comp, true);
  for (std::size_t s = 0; s < nd; ++s)
    for (std::size_t e = ch.row_start[s]; e < ch.row_start[s + 1]; ++e)
      if (comp[ch.col[e]] != comp[s]) closed[comp[s]] = false;
  const auto n_closed = static_cast<std::size_t>(std::count(closed.begin(), closed.end(), true));
  if (n_closed > 1) {
    ev.reducible = true;
    for (std::size_t c = 0; c < n_comp; ++c) {
      if (!closed[c]) continue;
      std::vector<double> init(nd, 0.0);
      std::size_t size = 0;
      for (std::size_t s = 0; s < nd; ++s) size += comp[s] == c;
      for (std::size_t s = 0; s < nd; ++s)
        if (comp[s] == c) init[s] = 1.0 / static_cast<double>(size);
      ev.classes.push_back(detail::stationary_averages(sp, ch, std::move(init)));
    }
  }
  return ev;
}

inline PolicyEvaluation evaluate_policy(const MdpSpace& sp, const CmdpPolicy& policy) {
  if (policy.n_states() != sp.n_states()) throw InvalidInput("policy does not cover the state space");
  const std::size_t j = sp.n_channel_states();
  return evaluate_policy(sp, [&](std::size_t d, std::size_t h, std::vector<std::pair<std::size_t, double>>& out) {
    out.emplace_back(policy.action_index(d * j + h), 1.0);
  });
}

/// Per state, the `alternate` action with probability q and the `primary` action otherwise.
struct MixedCmdpPolicy {
  CmdpPolicy primary;
  CmdpPolicy alternate;
  double q = 0.0;
};

inline PolicyEvaluation evaluate_policy(const MdpSpace& sp, const MixedCmdpPolicy& mix) {
  if (mix.q == 0.0) return evaluate_policy(sp, mix.primary);
  const std::size_t j = sp.n_channel_states();
  return evaluate_policy(sp, [&](std::size_t d, std::size_t h, std::vector<std::pair<std::size_t, double>>& out) {
    out.emplace_back(mix.primary.action_index(d * j + h), 1.0 - mix.q);
    out.emplace_back(mix.alternate.action_index(d * j + h), mix.q);
  });
}

/// A CO-SRP viewed as a VAoI-independent randomized rule.
inline PolicyEvaluation evaluate_policy(const MdpSpace& sp, const CoSrpPolicy& pol) {
  if (pol.n_states() != sp.n_channel_states()) throw InvalidInput("policy channel states do not match");
  std::vector<std::size_t> map(pol.n_subsets());
  for (std::size_t k = 0; k < pol.n_subsets(); ++k) map[k] = sp.action_index(pol.subsets()[k]);
  return evaluate_policy(sp, [&](std::size_t, std::size_t h, std::vector<std::pair<std::size_t, double>>& out) {
    for (std::size_t k = 0; k < pol.n_subsets(); ++k)
      if (pol.at(h, k) > 0.0) out.emplace_back(map[k], pol.at(h, k));
  });
}

struct BisectionStep {
  double theta = 0.0;
  double vaoi = 0.0;
  double power = 0.0;
};

struct CmdpSolution {
  MixedCmdpPolicy policy;        // primary = feasible endpoint, alternate = infeasible endpoint
  double average_vaoi = 0.0;     // of the (possibly mixed) reported policy
  double average_power = 0.0;
  double tail_mass = 0.0;
  double theta_star = 0.0;       // theta of the feasible endpoint
  double theta_alternate = 0.0;  // theta of the infeasible endpoint
  double deterministic_vaoi = 0.0;
  double deterministic_power = 0.0;
  bool slack = false;
  bool reducible = false;
  ValueFunction value;  // at theta_star
  std::vector<BisectionStep> trace;
};

/// Bisects theta so that the greedy policy meets the budget. When the feasible
/// endpoint undershoots by more than eps_power, the two endpoint policies are
/// mixed state-wise and the mixing weight is bisected onto the budget.
inline CmdpSolution bisect_theta(const MdpSpace& sp, double pbar) {
  if (!(pbar > 0.0)) throw InvalidInput("power budget must be > 0");
  const MdpConfig& cfg = sp.config();
  const double eps = cfg.power_tolerance(pbar);
  CmdpSolution sol;

  auto run = [&](double theta) {
    auto [vf, pol] = value_iteration(sp, theta);
    auto ev = evaluate_policy(sp, pol);
    sol.trace.push_back({theta, ev.weighted_vaoi, ev.power});
    return std::make_tuple(std::move(vf), std::move(pol), std::move(ev));
  };
  auto finish = [&](ValueFunction vf, CmdpPolicy pol, const PolicyEvaluation& ev) {
    sol.theta_star = vf.theta;
    sol.value = std::move(vf);
    sol.policy.primary = std::move(pol);
    sol.deterministic_vaoi = sol.average_vaoi = ev.weighted_vaoi;
    sol.deterministic_power = sol.average_power = ev.power;
    sol.tail_mass = ev.tail_mass;
    sol.reducible = ev.reducible;
  };

  auto [v0, p0, e0] = run(0.0);
  if (e0.power <= pbar) {
    sol.slack = true;
    finish(std::move(v0), std::move(p0), e0);
    return sol;
  }
  double lo = 0.0;
  double hi = cfg.theta_hi_init;
  CmdpPolicy lo_pol = std::move(p0);
  auto [vh, ph, eh] = run(hi);
  while (eh.power > pbar) {
    if (hi >= std::ldexp(1.0, 60)) throw ConvergenceError("power budget not met for any theta up to 2^60", eh.power - pbar);
    lo = hi;
    lo_pol = std::move(ph);
    hi *= 2.0;
    std::tie(vh, ph, eh) = run(hi);
  }
  for (int it = 0; it < cfg.max_bisect && std::abs(eh.power - pbar) >= eps && hi - lo >= cfg.bracket_width; ++it) {
    const double mid = 0.5 * (lo + hi);
    auto [vm, pm, em] = run(mid);
    if (em.power <= pbar) {
      hi = mid;
      vh = std::move(vm);
      ph = std::move(pm);
      eh = std::move(em);
    } else {
      lo = mid;
      lo_pol = std::move(pm);
    }
  }
  finish(std::move(vh), std::move(ph), eh);
  sol.theta_alternate = lo;
  sol.policy.alternate = std::move(lo_pol);
  if (!cfg.mix_endpoints || pbar - eh.power < eps) return sol;

  double a = 0.0;
  double b = 1.0;
  PolicyEvaluation best = eh;
  for (int it = 0; it < 60; ++it) {
    sol.policy.q = 0.5 * (a + b);
    auto ev = evaluate_policy(sp, sol.policy);
    if (ev.power <= pbar) {
      a = sol.policy.q;
      best = std::move(ev);
      if (pbar - best.power < 1e-3 * eps) break;
    } else {
      b = sol.policy.q;
    }
  }
  sol.policy.q = a;
  sol.average_vaoi = best.weighted_vaoi;
  sol.average_power = best.power;
  sol.tail_mass = std::max(sol.tail_mass, best.tail_mass);
  return sol;
}

struct ThresholdViolation {
  enum class Kind { delta, channel, value } kind;
  std::size_t user = 0;
  std::size_t state = 0;  // lower state of the compared pair
  std::size_t action = 0; // action index with user i removed
  double gap = 0.0;
};

struct ThresholdReport {
  std::vector<ThresholdViolation> violations;
  std::size_t checked = 0;
  bool ok() const { return violations.empty(); }
  std::size_t count(ThresholdViolation::Kind k) const {
    return static_cast<std::size_t>(
        std::count_if(violations.begin(), violations.end(), [&](const auto& v) { return v.kind == k; }));
  }
};

/// Scans the Q table for the threshold structure in each Delta_i and each h_i
/// (other coordinates and the other users' actions fixed), and the value
/// table for monotonicity in each Delta_i.
inline ThresholdReport check_threshold(const MdpSpace& sp, const ValueFunction& vf, double tol = 1e-9) {
  ThresholdReport rep;
  const auto q = q_table(sp, vf);
  const std::size_t na = sp.n_actions();
  const std::size_t j = sp.n_channel_states();
  const std::size_t n = sp.n_users();
  const std::size_t L = sp.n_levels();
  std::vector<int> d(n);

  auto gain_of = [&](std::size_t state, std::size_t a0, std::size_t a1) {
    return q[state * na + a1] - q[state * na + a0];
  };

  for (std::size_t i = 0; i < n; ++i) {
    // pairs (without i, with i) of admissible actions
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < na; ++a) {
      const Subset w = sp.actions()[a];
      if (w.contains(i)) continue;
      const Subset wi = w.with(i);
      for (std::size_t b = 0; b < na; ++b)
        if (sp.actions()[b] == wi) pairs.emplace_back(a, b);
    }
    const std::size_t dstride = sp.delta_stride(i);
    const std::size_t hstride = sp.channel_stride(i);
    for (std::size_t di = 0; di < sp.n_delta_states(); ++di) {
      sp.decode_delta(di, d);
      for (std::size_t h = 0; h < j; ++h) {
        const std::size_t s = di * j + h;
        const bool up_delta = d[i] < sp.delta_max();
        const bool up_h = sp.channel_states()[h].level_index[i] + 1 < L;
        if (up_delta) {
          ++rep.checked;
          const double gap = vf.values[s] - vf.values[(di + dstride) * j + h];
          if (gap > tol) rep.violations.push_back({ThresholdViolation::Kind::value, i, s, 0, gap});
        }
        for (const auto& [a0, a1] : pairs) {
          const double g = gain_of(s, a0, a1);
          if (!(g < 0.0)) continue;
          if (up_delta) {
            ++rep.checked;
            const double g2 = gain_of((di + dstride) * j + h, a0, a1);
            if (!(g2 < tol)) rep.violations.push_back({ThresholdViolation::Kind::delta, i, s, a0, g2});
          }
          if (up_h) {
            ++rep.checked;
            const double g2 = gain_of(s + hstride, a0, a1);
            if (!(g2 < tol)) rep.violations.push_back({ThresholdViolation::Kind::channel, i, s, a0, g2});
          }
        }
      }
    }
  }
  return rep;
}

/// Largest ratio diff[m+1] / diff[m] over the value-iteration run (after the first step).
inline double contraction_ratio(const ValueFunction& vf) {
  double worst = 0.0;
  for (std::size_t m = 1; m + 1 < vf.sup_diffs.size(); ++m)
    if (vf.sup_diffs[m] > 0.0) worst = std::max(worst, vf.sup_diffs[m + 1] / vf.sup_diffs[m]);
  return worst;
}

}  // namespace vaoi
