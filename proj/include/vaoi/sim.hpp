#pragma once

// Slot-level Monte Carlo simulator.
//
// Slot layout: arrivals for users 1..N, channel draws for users 1..N, then a
// single uniform handed to the policy. Each replication owns one generator
// seeded with seed + replication index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "vaoi/cmdp.hpp"
#include "vaoi/cosrp.hpp"
#include "vaoi/error.hpp"
#include "vaoi/model.hpp"
#include "vaoi/optimizer.hpp"

namespace vaoi {

struct SimConfig {
  std::uint64_t horizon = 1'000'000;
  std::int64_t warmup = -1;  // negative: 1% of the horizon
  std::uint64_t seed = 1;
  int replications = 1;
  int batches = 10;               // batch means per replication used for standard errors
  std::size_t trace_slots = 0;    // per-slot rows kept from replication 0
  std::size_t histogram_bins = 64;  // last bin collects everything at or above it
  unsigned workers = 0;           // 0: hardware concurrency

  std::uint64_t warmup_slots() const {
    return warmup < 0 ? horizon / 100 : static_cast<std::uint64_t>(warmup);
  }

  void validate() const {
    if (horizon <= warmup_slots()) throw InvalidInput("horizon must exceed warmup");
    if (replications < 1) throw InvalidInput("replications must be >= 1");
    if (batches < 1) throw InvalidInput("batches must be >= 1");
    if (histogram_bins < 1) throw InvalidInput("histogram needs at least one bin");
    if (horizon - warmup_slots() < static_cast<std::uint64_t>(batches)) throw InvalidInput("fewer measured slots than batches");
  }
};

/// What a policy may look at when deciding in slot t.
struct SlotContext {
  std::uint64_t t = 0;
  std::span<const std::int64_t> delta_prev;  // end-of-slot VAoI of the previous slot
  Subset occupied;                           // users with a packet waiting this slot
  std::size_t channel_index = 0;
  std::span<const double> gains;
  double u = 0.0;  // this slot's policy draw in [0,1)
};

class PolicyAdapter {
 public:
  virtual ~PolicyAdapter() = default;
  virtual Subset decide(const SlotContext& ctx) = 0;
  virtual std::unique_ptr<PolicyAdapter> clone() const = 0;
};

/// Samples W from mu_h with the slot draw (inverse CDF, ascending mask order).
class CoSrpAdapter final : public PolicyAdapter {
 public:
  explicit CoSrpAdapter(CoSrpPolicy policy) : policy_(std::move(policy)) {}
  Subset decide(const SlotContext& ctx) override {
    const auto row = policy_.row(ctx.channel_index);
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k] <= 0.0) continue;
      acc += row[k];
      last = k;
      if (ctx.u < acc) return policy_.subsets()[k];
    }
    return policy_.subsets()[last];
  }
  std::unique_ptr<PolicyAdapter> clone() const override { return std::make_unique<CoSrpAdapter>(*this); }

 private:
  CoSrpPolicy policy_;
};

/// Table lookup at (capped previous VAoI, channel); with q > 0 the alternate
/// table is used when the slot draw falls below q.
class CmdpAdapter final : public PolicyAdapter {
 public:
  CmdpAdapter(const MdpSpace& space, MixedCmdpPolicy policy) : space_(&space), policy_(std::move(policy)) {}
  CmdpAdapter(const MdpSpace& space, CmdpPolicy policy) : space_(&space), policy_{std::move(policy), {}, 0.0} {}

  Subset decide(const SlotContext& ctx) override {
    capped_.resize(ctx.delta_prev.size());
    for (std::size_t i = 0; i < capped_.size(); ++i)
      capped_[i] = static_cast<int>(std::min<std::int64_t>(ctx.delta_prev[i], space_->delta_max()));
    const std::size_t s = space_->state_index(space_->encode_delta(capped_), ctx.channel_index);
    const CmdpPolicy& table = (policy_.q > 0.0 && ctx.u < policy_.q) ? policy_.alternate : policy_.primary;
    return table.action(s);
  }
  std::unique_ptr<PolicyAdapter> clone() const override { return std::make_unique<CmdpAdapter>(*this); }

 private:
  const MdpSpace* space_;
  MixedCmdpPolicy policy_;
  std::vector<int> capped_;
};

/// Always schedules the same subset.
class FixedAdapter final : public PolicyAdapter {
 public:
  explicit FixedAdapter(Subset w) : w_(w) {}
  Subset decide(const SlotContext&) override { return w_; }
  std::unique_ptr<PolicyAdapter> clone() const override { return std::make_unique<FixedAdapter>(*this); }

 private:
  Subset w_;
};

/// Schedules everyone in slots t = period-1, 2*period-1, ...
class PeriodicAdapter final : public PolicyAdapter {
 public:
  PeriodicAdapter(Subset w, std::uint64_t period) : w_(w), period_(period) {
    if (period == 0) throw InvalidInput("period must be >= 1");
  }
  Subset decide(const SlotContext& ctx) override {
    return (ctx.t % period_ == period_ - 1) ? w_ : Subset::empty();
  }
  std::unique_ptr<PolicyAdapter> clone() const override { return std::make_unique<PeriodicAdapter>(*this); }

 private:
  Subset w_;
  std::uint64_t period_;
};

struct TraceRow {
  std::uint64_t t = 0;
  std::vector<std::int64_t> delta;
  std::uint32_t action_mask = 0;  // after occupancy masking
  double power = 0.0;
};

/// Per-user counts of one-slot VAoI moves, split by whether the start was 0.
struct TransitionCounts {
  std::uint64_t zero_stay = 0;   // 0 -> 0
  std::uint64_t zero_up = 0;     // 0 -> 1
  std::uint64_t pos_up = 0;      // n -> n+1
  std::uint64_t pos_same = 0;    // n -> n
  std::uint64_t pos_reset = 0;   // n -> 0
};

struct Metrics {
  std::vector<double> user_vaoi;
  double weighted_vaoi = 0.0;
  double power = 0.0;
  std::vector<double> se_user_vaoi;
  double se_weighted_vaoi = 0.0;
  double se_power = 0.0;
  std::uint64_t slots = 0;  // measured slots per replication
  int replications = 0;
  std::uint64_t seed = 0;
  std::vector<double> rep_weighted_vaoi;
  std::vector<double> rep_power;
  std::vector<std::vector<std::uint64_t>> histogram;  // [user][bin]
  std::vector<TransitionCounts> transitions;
  std::vector<TraceRow> trace;
};

/// Per-slot hook for custom statistics; sees (t, end-of-slot VAoI, served set).
using SlotObserver = std::function<void(std::uint64_t, std::span<const std::int64_t>, Subset)>;

namespace detail {

struct RepResult {
  std::vector<double> user_batch_sum;   // [batch * n + i] sum of Delta_i over the batch
  std::vector<double> power_batch_sum;  // [batch]
  std::vector<std::uint64_t> batch_len;
  std::vector<std::vector<std::uint64_t>> histogram;
  std::vector<TransitionCounts> transitions;
  std::vector<TraceRow> trace;
};

inline RepResult run_replication(const ChannelModel& model, const PowerTable& table, std::span<const StreamConfig> streams, PolicyAdapter& policy,
                                 const SimConfig& cfg, std::uint64_t seed, bool keep_trace,
                                 const SlotObserver* observer) {
  const std::size_t n = streams.size();
  const std::size_t L = model.n_levels();
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> cdf(n, std::vector<double>(L));
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < L; ++k) cdf[i][k] = (acc += model.pmf(i)[k]);
  }

  RepResult r;
  const auto B = static_cast<std::size_t>(cfg.batches);
  r.user_batch_sum.assign(B * n, 0.0);
  r.power_batch_sum.assign(B, 0.0);
  r.batch_len.assign(B, 0);
  r.histogram.assign(n, std::vector<std::uint64_t>(cfg.histogram_bins, 0));
  r.transitions.assign(n, {});

  std::vector<std::uint64_t> z(n, 0), y(n, 0);
  std::vector<std::int64_t> delta(n, 0), prev(n, 0);
  std::vector<std::size_t> level(n, 0);
  std::vector<double> gains(n, 0.0);
  const std::uint64_t warm = cfg.warmup_slots();
  const std::uint64_t measured = cfg.horizon - warm;

  for (std::uint64_t t = 0; t < cfg.horizon; ++t) {
    Subset occupied;
    for (std::size_t i = 0; i < n; ++i) {
      const bool arrival = uniform01(rng) < streams[i].lambda;
      if (arrival) ++z[i];
      if (z[i] > y[i]) occupied = occupied.with(i);
    }
    std::size_t h = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = uniform01(rng);
      std::size_t k = 0;
      while (k + 1 < L && u >= cdf[i][k]) ++k;
      level[i] = k;
      gains[i] = model.level(k);
      h = h * L + k;
    }
    SlotContext ctx{t, prev, occupied, h, gains, uniform01(rng)};
    const Subset scheduled = policy.decide(ctx);
    const Subset served = scheduled & occupied;
    const double power = table.charged(h, scheduled, occupied);
    for (std::size_t i = 0; i < n; ++i) {
      if (served.contains(i)) y[i] = z[i];
      delta[i] = static_cast<std::int64_t>(z[i] - y[i]);
    }

    if (t >= warm) {
      const std::uint64_t m = t - warm;
      const std::size_t b = static_cast<std::size_t>(m * B / measured);
      ++r.batch_len[b];
      r.power_batch_sum[b] += power;
      for (std::size_t i = 0; i < n; ++i) {
        r.user_batch_sum[b * n + i] += static_cast<double>(delta[i]);
        const auto bin = std::min<std::size_t>(static_cast<std::size_t>(delta[i]), cfg.histogram_bins - 1);
        ++r.histogram[i][bin];
        auto& tc = r.transitions[i];
        if (prev[i] == 0) {
          (delta[i] == 0 ? tc.zero_stay : tc.zero_up) += 1;
        } else if (delta[i] == 0) {
          ++tc.pos_reset;
        } else {
          (delta[i] == prev[i] ? tc.pos_same : tc.pos_up) += 1;
        }
      }
      if (observer && *observer) (*observer)(t, delta, served);
    }
    if (keep_trace && t < cfg.trace_slots) r.trace.push_back({t, delta, served.mask(), power});
    prev = delta;
  }
  return r;
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double a : v) s += a;
  return s / static_cast<double>(v.size());
}

inline double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double a : v) ss += (a - m) * (a - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

}  // namespace detail

/// Runs cfg.replications independent replications (concurrently, at most
/// cfg.workers at a time) and pools them. Standard errors come from the
/// batch means of all replications. An observer forces serial execution.
inline Metrics replicate(const ChannelModel& model, std::span<const StreamConfig> streams, const PolicyAdapter& policy,
                         const SimConfig& cfg, const RateFunction& f = RateFunction::log1p(),
                         const SlotObserver& observer = {}) {
  cfg.validate();
  validate_streams(streams);
  if (model.n_users() != streams.size()) throw InvalidInput("channel model and stream list differ in user count");
  const auto states = enumerate_joint_states(model);
  const PowerTable table(states, streams, f);
  const std::size_t n = streams.size();
  const auto reps = static_cast<std::size_t>(cfg.replications);

  std::vector<detail::RepResult> results(reps);
  auto work = [&](std::size_t rep) {
    auto local = policy.clone();
    results[rep] = detail::run_replication(model, table, streams, *local, cfg, cfg.seed + rep, rep == 0,
                                           observer ? &observer : nullptr);
  };
  unsigned workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  if (observer) workers = 1;
  if (workers <= 1 || reps == 1) {
    for (std::size_t r = 0; r < reps; ++r) work(r);
  } else {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    while (next < reps) {
      pool.clear();
      for (unsigned w = 0; w < workers && next < reps; ++w) pool.emplace_back(work, next++);
      for (auto& th : pool) th.join();
    }
  }

  Metrics m;
  m.slots = cfg.horizon - cfg.warmup_slots();
  m.replications = cfg.replications;
  m.seed = cfg.seed;
  m.user_vaoi.assign(n, 0.0);
  m.se_user_vaoi.assign(n, 0.0);
  m.histogram.assign(n, std::vector<std::uint64_t>(cfg.histogram_bins, 0));
  m.transitions.assign(n, {});
  const auto B = static_cast<std::size_t>(cfg.batches);
  std::vector<double> bw, bp;
  std::vector<std::vector<double>> bu(n);
  for (const auto& r : results) {
    double rep_w = 0.0;
    double rep_p = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const auto len = static_cast<double>(r.batch_len[b]);
      double w = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double ui = r.user_batch_sum[b * n + i] / len;
        bu[i].push_back(ui);
        w += streams[i].weight * ui;
      }
      bw.push_back(w);
      bp.push_back(r.power_batch_sum[b] / len);
    }
    double slots = 0.0;
    std::vector<double> sums(n, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      slots += static_cast<double>(r.batch_len[b]);
      rep_p += r.power_batch_sum[b];
      for (std::size_t i = 0; i < n; ++i) sums[i] += r.user_batch_sum[b * n + i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double ui = sums[i] / slots;
      m.user_vaoi[i] += ui / static_cast<double>(reps);
      rep_w += streams[i].weight * ui;
    }
    m.rep_weighted_vaoi.push_back(rep_w);
    m.rep_power.push_back(rep_p / slots);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < cfg.histogram_bins; ++k) m.histogram[i][k] += r.histogram[i][k];
      auto& a = m.transitions[i];
      const auto& c = r.transitions[i];
      a.zero_stay += c.zero_stay;
      a.zero_up += c.zero_up;
      a.pos_up += c.pos_up;
      a.pos_same += c.pos_same;
      a.pos_reset += c.pos_reset;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    m.weighted_vaoi += streams[i].weight * m.user_vaoi[i];
    m.se_user_vaoi[i] = detail::standard_error(bu[i]);
  }
  m.power = detail::mean_of(m.rep_power);
  m.se_weighted_vaoi = detail::standard_error(bw);
  m.se_power = detail::standard_error(bp);
  m.trace = std::move(results[0].trace);
  return m;
}

/// One replication (cfg.replications is ignored).
inline Metrics simulate(const ChannelModel& model, std::span<const StreamConfig> streams, const PolicyAdapter& policy,
                        SimConfig cfg, const RateFunction& f = RateFunction::log1p(),
                        const SlotObserver& observer = {}) {
  cfg.replications = 1;
  return replicate(model, streams, policy, cfg, f, observer);
}

struct InterDeliveryResult {
  double mean = 0.0;       // mean over cycles of the summed end-of-slot VAoI
  double se = 0.0;
  double expected = 0.0;   // lambda (I^2 - I) / 2
  std::uint64_t cycles = 0;
};

/// Single user served every `period` slots; averages the VAoI summed over each
/// inter-delivery cycle.
inline InterDeliveryResult inter_delivery_check(double lambda, std::uint64_t period, std::uint64_t cycles,
                                                std::uint64_t seed = 1) {
  if (period == 0 || cycles == 0) throw InvalidInput("period and cycle count must be >= 1");
  const auto model = ChannelModel::shared({1.0}, {1.0}, 1);
  const Streams streams{StreamConfig{lambda, 0.0, 1.0}};
  SimConfig cfg;
  cfg.horizon = period * cycles;
  cfg.warmup = 0;
  cfg.seed = seed;
  cfg.batches = 1;
  std::vector<double> per_cycle;
  per_cycle.reserve(cycles);
  double acc = 0.0;
  const SlotObserver obs = [&](std::uint64_t t, std::span<const std::int64_t> delta, Subset) {
    acc += static_cast<double>(delta[0]);
    if (t % period == period - 1) {
      per_cycle.push_back(acc);
      acc = 0.0;
    }
  };
  simulate(model, streams, PeriodicAdapter(Subset::single(0), period), cfg, RateFunction::log1p(), obs);
  InterDeliveryResult r;
  r.cycles = per_cycle.size();
  r.mean = detail::mean_of(per_cycle);
  r.se = detail::standard_error(per_cycle);
  const auto I = static_cast<double>(period);
  r.expected = lambda * (I * I - I) / 2.0;
  return r;
}

}  // namespace vaoi
