#pragma once

// System physics: arrival streams, the finite fading channel, SIC decoding
// order and the superposition-coding power recursion. Noise variance is 1.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vaoi/error.hpp"

namespace vaoi {

/// Maximum number of users supported by the subset-mask representation.
inline constexpr std::size_t kMaxUsers = 16;

/// Achievable-rate function f(SINR). Only ln(1+x) (rates in nats) exists today.
class RateFunction {
 public:
  enum class Kind { log1p };

  constexpr RateFunction() = default;
  static constexpr RateFunction log1p() { return RateFunction{}; }

  Kind kind() const noexcept { return kind_; }

  double operator()(double sinr) const {
    switch (kind_) {
      case Kind::log1p:
        return std::log1p(sinr);
    }
    return 0.0;
  }

  /// SINR needed to carry `rate` nats.
  double inverse(double rate) const {
    switch (kind_) {
      case Kind::log1p:
        return std::expm1(rate);
    }
    return 0.0;
  }

 private:
  Kind kind_ = Kind::log1p;
};

/// One exogenous update stream and its destination user.
struct StreamConfig {
  double lambda = 0.0;  // arrival probability per slot
  double r0 = 0.0;      // packet size, nats
  double weight = 0.0;

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidInput("stream lambda must lie in [0,1]");
    if (!(r0 >= 0.0) || !std::isfinite(r0)) throw InvalidInput("stream r0 must be finite and >= 0");
    if (!(weight >= 0.0) || !std::isfinite(weight)) throw InvalidInput("stream weight must be finite and >= 0");
  }
};

using Streams = std::vector<StreamConfig>;

inline void validate_streams(std::span<const StreamConfig> streams) {
  if (streams.empty()) throw InvalidInput("at least one stream is required");
  if (streams.size() > kMaxUsers) throw InvalidInput("too many streams");
  for (const auto& s : streams) s.validate();
}

/// Subset of users W, bit i set when user i (0-based) is scheduled.
class Subset {
 public:
  constexpr Subset() = default;
  constexpr explicit Subset(std::uint32_t mask) : mask_(mask) {}

  static constexpr Subset empty() { return Subset{}; }
  static constexpr Subset full(std::size_t n_users) { return Subset{(std::uint32_t{1} << n_users) - 1}; }
  static constexpr Subset single(std::size_t user) { return Subset{std::uint32_t{1} << user}; }

  constexpr std::uint32_t mask() const noexcept { return mask_; }
  constexpr bool contains(std::size_t user) const noexcept { return (mask_ >> user) & 1U; }
  constexpr int size() const noexcept { return std::popcount(mask_); }
  constexpr bool is_empty() const noexcept { return mask_ == 0; }

  constexpr Subset with(std::size_t user) const { return Subset{mask_ | (std::uint32_t{1} << user)}; }
  constexpr Subset without(std::size_t user) const { return Subset{mask_ & ~(std::uint32_t{1} << user)}; }
  constexpr Subset operator&(Subset o) const { return Subset{mask_ & o.mask_}; }

  friend constexpr bool operator==(Subset, Subset) = default;
  friend constexpr auto operator<=>(Subset, Subset) = default;

 private:
  std::uint32_t mask_ = 0;
};

/// Multiple-access scheme; TDMA schedules at most one user per slot.
enum class Scheme { noma, tdma };

inline std::string to_string(Scheme s) { return s == Scheme::noma ? "noma" : "tdma"; }

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "noma" || s == "NOMA") return Scheme::noma;
  if (s == "tdma" || s == "TDMA") return Scheme::tdma;
  throw InvalidInput("unknown scheme '" + s + "' (expected noma or tdma)");
}

/// Admissible subsets in ascending mask order. TDMA keeps the empty set and singletons.
inline std::vector<Subset> admissible_subsets(std::size_t n_users, Scheme scheme) {
  std::vector<Subset> out;
  const std::uint32_t n_masks = std::uint32_t{1} << n_users;
  for (std::uint32_t m = 0; m < n_masks; ++m) {
    Subset s{m};
    if (scheme == Scheme::noma || s.size() <= 1) out.push_back(s);
  }
  return out;
}

/// Finite gain alphabet shared by all users, with one pmf per user.
/// Draws are independent across users and slots.
class ChannelModel {
 public:
  ChannelModel(std::vector<double> levels, std::vector<std::vector<double>> pmf)
      : levels_(std::move(levels)), pmf_(std::move(pmf)) {
    validate();
  }

  /// Every user draws from the same pmf.
  static ChannelModel shared(std::vector<double> levels, const std::vector<double>& pmf, std::size_t n_users) {
    return ChannelModel(std::move(levels), std::vector<std::vector<double>>(n_users, pmf));
  }

  std::size_t n_users() const noexcept { return pmf_.size(); }
  std::size_t n_levels() const noexcept { return levels_.size(); }
  const std::vector<double>& levels() const noexcept { return levels_; }
  const std::vector<double>& pmf(std::size_t user) const { return pmf_.at(user); }
  double level(std::size_t k) const { return levels_.at(k); }

 private:
  void validate() const {
    if (levels_.empty()) throw InvalidInput("channel needs at least one gain level");
    for (std::size_t k = 0; k < levels_.size(); ++k) {
      if (!(levels_[k] > 0.0) || !std::isfinite(levels_[k])) throw InvalidInput("channel gains must be finite and > 0");
      if (k > 0 && !(levels_[k] > levels_[k - 1]))
        throw InvalidInput("channel gains must be distinct and strictly increasing");
    }
    if (pmf_.empty()) throw InvalidInput("channel needs at least one user");
    if (pmf_.size() > kMaxUsers) throw InvalidInput("too many users");
    for (const auto& p : pmf_) {
      if (p.size() != levels_.size()) throw InvalidInput("pmf length must equal the number of gain levels");
      double sum = 0.0;
      for (double q : p) {
        if (!(q >= 0.0)) throw InvalidInput("pmf entries must be >= 0");
        sum += q;
      }
      if (std::abs(sum - 1.0) > 1e-12) throw InvalidInput("each pmf must sum to 1");
    }
  }

  std::vector<double> levels_;
  std::vector<std::vector<double>> pmf_;
};

/// One point of H^N with its product probability.
struct JointChannelState {
  std::vector<double> gains;
  std::vector<std::size_t> level_index;
  double prob = 0.0;
};

inline constexpr std::size_t kDefaultJointStateCap = 65536;

/// All |H|^N joint states, user 1 most significant (lexicographic in level index).
inline std::vector<JointChannelState> enumerate_joint_states(const ChannelModel& model,
                                                             std::size_t cap = kDefaultJointStateCap) {
  const std::size_t n = model.n_users();
  const std::size_t h = model.n_levels();
  std::size_t count = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (count > cap / h) {
      throw SizeError("joint channel state count |H|^N exceeds cap " + std::to_string(cap) +
                      "; reduce the number of users or gain levels");
    }
    count *= h;
  }
  std::vector<JointChannelState> out;
  out.reserve(count);
  std::vector<std::size_t> idx(n, 0);
  for (std::size_t c = 0; c < count; ++c) {
    JointChannelState s;
    s.level_index = idx;
    s.gains.resize(n);
    s.prob = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      s.gains[i] = model.level(idx[i]);
      s.prob *= model.pmf(i)[idx[i]];
    }
    out.push_back(std::move(s));
    for (std::size_t i = n; i-- > 0;) {
      if (++idx[i] < h) break;
      idx[i] = 0;
    }
  }
  return out;
}

/// SIC decoding order: order[k] is the user at position k (strongest first),
/// position[user] is the inverse map.
struct DecodingOrder {
  std::vector<std::size_t> order;
  std::vector<std::size_t> position;
};

/// Sort users by non-increasing gain; equal gains keep the lower index first.
inline DecodingOrder decoding_order(std::span<const double> gains) {
  for (double g : gains) {
    if (!(g > 0.0)) throw InvalidInput("channel gains must be positive");
  }
  DecodingOrder d;
  d.order.resize(gains.size());
  std::iota(d.order.begin(), d.order.end(), std::size_t{0});
  std::stable_sort(d.order.begin(), d.order.end(),
                   [&](std::size_t a, std::size_t b) { return gains[a] > gains[b]; });
  d.position.resize(gains.size());
  for (std::size_t k = 0; k < d.order.size(); ++k) d.position[d.order[k]] = k;
  return d;
}

/// Per-user transmit power, linear units with unit noise variance.
struct PowerAllocation {
  std::vector<double> powers;

  double total() const { return std::accumulate(powers.begin(), powers.end(), 0.0); }
};

/// Minimum powers delivering R0_i nats to every scheduled user under
/// superposition coding with SIC. Processes users strongest first:
///   P_i = f^{-1}(R0_i) / h_i + f^{-1}(R0_i) * (sum of powers of stronger scheduled users).
inline PowerAllocation noma_powers(std::span<const double> gains, Subset scheduled,
                                   std::span<const StreamConfig> streams,
                                   const RateFunction& f = RateFunction::log1p()) {
  if (gains.size() != streams.size()) throw InvalidInput("gain vector and stream list differ in length");
  const DecodingOrder d = decoding_order(gains);
  PowerAllocation out;
  out.powers.assign(gains.size(), 0.0);
  double stronger = 0.0;
  for (std::size_t user : d.order) {
    if (!scheduled.contains(user)) continue;
    const double snr = f.inverse(streams[user].r0);
    const double p = snr / gains[user] + snr * stronger;
    out.powers[user] = p;
    stronger += p;
  }
  return out;
}

/// Achieved rate f(S_i) of every user for arbitrary powers, with
/// S_i = P_i h_i / (1 + h_i * sum of powers of users decoded before i).
inline std::vector<double> verify_rates(std::span<const double> gains, std::span<const double> powers,
                                        const RateFunction& f = RateFunction::log1p()) {
  if (gains.size() != powers.size()) throw InvalidInput("gain and power vectors differ in length");
  const DecodingOrder d = decoding_order(gains);
  std::vector<double> rates(gains.size(), 0.0);
  double stronger = 0.0;
  for (std::size_t user : d.order) {
    const double sinr = powers[user] * gains[user] / (1.0 + gains[user] * stronger);
    rates[user] = f(sinr);
    stronger += powers[user];
  }
  return rates;
}

/// Dense table of per-user powers P_{i,h}^W for every joint state and every
/// subset mask 0..2^N-1.
class PowerTable {
 public:
  PowerTable(std::span<const JointChannelState> states, std::span<const StreamConfig> streams,
             const RateFunction& f = RateFunction::log1p())
      : n_users_(streams.size()), n_masks_(std::size_t{1} << streams.size()), n_states_(states.size()) {
    table_.assign(n_states_ * n_masks_ * n_users_, 0.0);
    for (std::size_t s = 0; s < n_states_; ++s) {
      for (std::size_t m = 0; m < n_masks_; ++m) {
        const auto alloc = noma_powers(states[s].gains, Subset{static_cast<std::uint32_t>(m)}, streams, f);
        std::copy(alloc.powers.begin(), alloc.powers.end(), table_.begin() + offset(s, m));
      }
    }
  }

  std::size_t n_users() const noexcept { return n_users_; }
  std::size_t n_states() const noexcept { return n_states_; }

  double power(std::size_t state, Subset w, std::size_t user) const {
    return table_[offset(state, w.mask()) + user];
  }

  double total(std::size_t state, Subset w) const {
    const auto* p = table_.data() + offset(state, w.mask());
    return std::accumulate(p, p + n_users_, 0.0);
  }

  /// Power actually radiated when only the users in `occupied` have a packet:
  /// the allocation follows the scheduled set and empty queues send nothing.
  double charged(std::size_t state, Subset w, Subset occupied) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < n_users_; ++i) {
      if (w.contains(i) && occupied.contains(i)) sum += power(state, w, i);
    }
    return sum;
  }

 private:
  std::size_t offset(std::size_t state, std::uint32_t mask) const {
    return (state * n_masks_ + mask) * n_users_;
  }

  std::size_t n_users_;
  std::size_t n_masks_;
  std::size_t n_states_;
  std::vector<double> table_;
};

}  // namespace vaoi
