#pragma once

// Channel-only stationary randomized policies (CO-SRP): representation,
// closed-form delivery probability / VAoI / power, and the sum-of-ratios
// program over the per-state subset probabilities.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vaoi/error.hpp"
#include "vaoi/model.hpp"

namespace vaoi {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Lower clamp applied to delivery probabilities before inversion.
inline constexpr double kProbabilityClamp = 1e-12;

/// Subset-transmission probabilities mu_h^W, one simplex per joint channel state.
/// Subsets are stored in ascending mask order.
class CoSrpPolicy {
 public:
  CoSrpPolicy() = default;

  CoSrpPolicy(Scheme scheme, std::size_t n_users, std::size_t n_states)
      : scheme_(scheme),
        n_users_(n_users),
        n_states_(n_states),
        subsets_(admissible_subsets(n_users, scheme)),
        mu_(n_states * subsets_.size(), 0.0) {}

  static CoSrpPolicy uniform(Scheme scheme, std::size_t n_users, std::size_t n_states) {
    CoSrpPolicy p(scheme, n_users, n_states);
    const double v = 1.0 / static_cast<double>(p.n_subsets());
    std::fill(p.mu_.begin(), p.mu_.end(), v);
    return p;
  }

  /// Deterministic: the same subset in every channel state.
  static CoSrpPolicy constant(Scheme scheme, std::size_t n_users, std::size_t n_states, Subset w) {
    CoSrpPolicy p(scheme, n_users, n_states);
    const std::size_t k = p.subset_index(w);
    for (std::size_t s = 0; s < n_states; ++s) p.at(s, k) = 1.0;
    return p;
  }

  Scheme scheme() const noexcept { return scheme_; }
  std::size_t n_users() const noexcept { return n_users_; }
  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_subsets() const noexcept { return subsets_.size(); }
  const std::vector<Subset>& subsets() const noexcept { return subsets_; }
  std::span<const double> values() const noexcept { return mu_; }
  std::span<double> values() noexcept { return mu_; }

  double& at(std::size_t state, std::size_t k) { return mu_[state * subsets_.size() + k]; }
  double at(std::size_t state, std::size_t k) const { return mu_[state * subsets_.size() + k]; }

  std::span<const double> row(std::size_t state) const {
    return std::span<const double>(mu_).subspan(state * subsets_.size(), subsets_.size());
  }

  /// Position of `w` in the subset list; throws for subsets the scheme forbids.
  std::size_t subset_index(Subset w) const {
    for (std::size_t k = 0; k < subsets_.size(); ++k)
      if (subsets_[k] == w) return k;
    throw InvalidInput("subset mask " + std::to_string(w.mask()) + " is not admissible under " + to_string(scheme_));
  }

  /// Checks the per-state simplex constraint.
  void validate(double tol = 1e-9) const {
    for (std::size_t s = 0; s < n_states_; ++s) {
      double sum = 0.0;
      for (double v : row(s)) {
        if (!(v >= -tol && v <= 1.0 + tol)) throw InvalidInput("policy probability outside [0,1]");
        sum += v;
      }
      if (std::abs(sum - 1.0) > tol)
        throw InvalidInput("policy probabilities of state " + std::to_string(s) + " do not sum to 1");
    }
  }

  /// E_h[mu_h^W] for one subset.
  double mean_probability(Subset w, std::span<const JointChannelState> states) const {
    const std::size_t k = subset_index(w);
    double acc = 0.0;
    for (std::size_t s = 0; s < n_states_; ++s) acc += states[s].prob * at(s, k);
    return acc;
  }

 private:
  Scheme scheme_ = Scheme::noma;
  std::size_t n_users_ = 0;
  std::size_t n_states_ = 0;
  std::vector<Subset> subsets_;
  std::vector<double> mu_;
};

/// Per-user delivery probability p_i and power term P_i (power per delivery attempt slot).
struct UserDeliveryStats {
  std::vector<double> p;
  std::vector<double> p_cond_power;
};

inline UserDeliveryStats delivery_stats(const CoSrpPolicy& policy, std::span<const JointChannelState> states,
                                        const PowerTable& powers) {
  if (policy.n_states() != states.size() || powers.n_states() != states.size())
    throw InvalidInput("policy, joint states and power table disagree on the state count");
  const std::size_t n = policy.n_users();
  UserDeliveryStats out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t s = 0; s < states.size(); ++s) {
    for (std::size_t k = 0; k < policy.n_subsets(); ++k) {
      const double m = policy.at(s, k) * states[s].prob;
      if (m == 0.0) continue;
      const Subset w = policy.subsets()[k];
      for (std::size_t i = 0; i < n; ++i) {
        if (!w.contains(i)) continue;
        out.p[i] += m;
        out.p_cond_power[i] += m * powers.power(s, w, i);
      }
    }
  }
  return out;
}

inline UserDeliveryStats delivery_stats(const CoSrpPolicy& policy, const ChannelModel& model,
                                        std::span<const StreamConfig> streams,
                                        const RateFunction& f = RateFunction::log1p()) {
  const auto states = enumerate_joint_states(model);
  return delivery_stats(policy, states, PowerTable(states, streams, f));
}

/// Long-run average VAoI of one user: lambda (1 - p) / p.
inline double average_vaoi(double p, double lambda) {
  if (lambda == 0.0) return 0.0;
  if (p <= 0.0) return kInfinity;
  return lambda * (1.0 - p) / p;
}

/// Occupancy-corrected average transmit power: sum_i lambda_i P_i / (lambda_i (1-p_i) + p_i).
inline double average_power(const UserDeliveryStats& stats, std::span<const StreamConfig> streams) {
  double total = 0.0;
  for (std::size_t i = 0; i < streams.size(); ++i) {
    const double lam = streams[i].lambda;
    if (lam == 0.0) continue;
    const double denom = lam * (1.0 - stats.p[i]) + stats.p[i];
    if (denom > 0.0) total += lam * stats.p_cond_power[i] / denom;
  }
  return total;
}

inline double weighted_objective(std::span<const StreamConfig> streams, std::span<const double> p) {
  double total = 0.0;
  for (std::size_t i = 0; i < streams.size(); ++i) {
    const double term = average_vaoi(p[i], streams[i].lambda);
    if (std::isinf(term)) {
      if (streams[i].weight > 0.0) return kInfinity;
      continue;
    }
    total += streams[i].weight * term;
  }
  return total;
}

/// Geometric stationary law of the VAoI under a CO-SRP, truncated at n_max.
inline std::vector<double> stationary_distribution(double lambda, double p, std::size_t n_max) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidInput("stationary_distribution needs p in (0,1]");
  const double denom = lambda * (1.0 - p) + p;
  const double ratio = lambda * (1.0 - p) / denom;
  std::vector<double> pi(n_max + 1, 0.0);
  double term = p / denom;
  for (std::size_t n = 0; n <= n_max; ++n) {
    pi[n] = term;
    term *= ratio;
  }
  return pi;
}

/// Smallest truncation index whose tail mass is below `tail`.
inline std::size_t default_truncation(double lambda, double p, double tail = 1e-10) {
  const double denom = lambda * (1.0 - p) + p;
  const double ratio = lambda * (1.0 - p) / denom;
  if (ratio <= 0.0) return 0;
  // tail after index n is ratio^(n+1)
  return static_cast<std::size_t>(std::ceil(std::log(tail) / std::log(ratio)));
}

/// The sum-of-ratios program over the stacked decision vector x[s*K + k] = mu_s^{W_k}.
///
/// Streams with lambda = 0 are removed from the problem: subsets containing
/// them are not decision variables, and they contribute nothing to the
/// objective or to the power.
class FractionalProgram {
 public:
  FractionalProgram(const ChannelModel& model, Streams streams, double pbar, Scheme scheme,
                    const RateFunction& f = RateFunction::log1p())
      : streams_(std::move(streams)),
        pbar_(pbar),
        scheme_(scheme),
        states_(enumerate_joint_states(model)),
        powers_(states_, streams_, f) {
    validate_streams(streams_);
    if (model.n_users() != streams_.size()) throw InvalidInput("channel model and stream list differ in user count");
    n_ = streams_.size();
    for (std::size_t i = 0; i < n_; ++i)
      if (streams_[i].lambda > 0.0) active_ = active_.with(i);
    for (Subset w : admissible_subsets(n_, scheme_))
      if ((w & active_) == w) subsets_.push_back(w);
    s_ = states_.size();
    k_ = subsets_.size();
    a_.assign(n_ * s_ * k_, 0.0);
    d_.assign(n_ * s_ * k_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t s = 0; s < s_; ++s) {
        for (std::size_t k = 0; k < k_; ++k) {
          if (!subsets_[k].contains(i)) continue;
          a_[idx(i, s, k)] = states_[s].prob;
          d_[idx(i, s, k)] = streams_[i].lambda * states_[s].prob * powers_.power(s, subsets_[k], i);
        }
      }
    }
  }

  std::size_t n_users() const noexcept { return n_; }
  std::size_t n_states() const noexcept { return s_; }
  std::size_t n_subsets() const noexcept { return k_; }
  std::size_t dim() const noexcept { return s_ * k_; }
  double pbar() const noexcept { return pbar_; }
  Scheme scheme() const noexcept { return scheme_; }
  Subset active_users() const noexcept { return active_; }
  bool is_active(std::size_t i) const { return active_.contains(i); }
  const Streams& streams() const noexcept { return streams_; }
  const std::vector<Subset>& subsets() const noexcept { return subsets_; }
  const std::vector<JointChannelState>& states() const noexcept { return states_; }
  const PowerTable& power_table() const noexcept { return powers_; }

  std::vector<double> uniform_point() const { return std::vector<double>(dim(), 1.0 / static_cast<double>(k_)); }

  // p_i(x) = sum_{h, W containing i} mu_h^W P(h)
  double p(std::size_t i, std::span<const double> x) const { return dot(a_, i, x); }

  // d_i(x) = lambda_i * sum mu_h^W P_{i,h}^W P(h)
  double d(std::size_t i, std::span<const double> x) const { return dot(d_, i, x); }

  // f_i(x) = lambda_i (1 - p_i) + p_i
  double f(std::size_t i, std::span<const double> x) const {
    const double lam = streams_[i].lambda;
    return lam + (1.0 - lam) * p(i, x);
  }

  std::vector<double> p(std::span<const double> x) const { return per_user(x, [&](std::size_t i) { return p(i, x); }); }
  std::vector<double> d(std::span<const double> x) const { return per_user(x, [&](std::size_t i) { return d(i, x); }); }
  std::vector<double> f(std::span<const double> x) const { return per_user(x, [&](std::size_t i) { return f(i, x); }); }

  /// O_i(x) = lambda_i (1/p_i - 1), with p clamped from below.
  double vaoi(std::size_t i, std::span<const double> x, bool* clamped = nullptr) const {
    const double lam = streams_[i].lambda;
    if (lam == 0.0) return 0.0;
    double pi = p(i, x);
    if (pi < kProbabilityClamp) {
      pi = kProbabilityClamp;
      if (clamped) *clamped = true;
    }
    return lam * (1.0 / pi - 1.0);
  }

  /// Sum_i w_i O_i(x) with the clamp.
  double objective(std::span<const double> x, bool* clamped = nullptr) const {
    double total = 0.0;
    for (std::size_t i = 0; i < n_; ++i)
      if (is_active(i)) total += streams_[i].weight * vaoi(i, x, clamped);
    return total;
  }

  /// Average power sum_i d_i / f_i.
  double power(std::span<const double> x) const {
    double total = 0.0;
    for (std::size_t i = 0; i < n_; ++i)
      if (is_active(i)) total += d(i, x) / f(i, x);
    return total;
  }

  /// g_h(x) = sum_W mu_h^W - 1, one entry per joint state.
  std::vector<double> g(std::span<const double> x) const {
    std::vector<double> out(s_, -1.0);
    for (std::size_t s = 0; s < s_; ++s)
      for (std::size_t k = 0; k < k_; ++k) out[s] += x[s * k_ + k];
    return out;
  }

  /// Gradient of O_i (clamped region has zero slope in p).
  std::vector<double> grad_vaoi(std::size_t i, std::span<const double> x) const {
    std::vector<double> out(dim(), 0.0);
    const double lam = streams_[i].lambda;
    const double pi = p(i, x);
    if (lam == 0.0 || pi < kProbabilityClamp) return out;
    const double c = -lam / (pi * pi);
    for (std::size_t j = 0; j < dim(); ++j) out[j] = c * a_[i * dim() + j];
    return out;
  }

  /// Gradient of d_i (constant).
  std::span<const double> grad_d(std::size_t i) const { return std::span<const double>(d_).subspan(i * dim(), dim()); }

  /// Gradient of p_i (constant); grad f_i = (1 - lambda_i) grad p_i.
  std::span<const double> grad_p(std::size_t i) const { return std::span<const double>(a_).subspan(i * dim(), dim()); }

  /// Policy over all admissible subsets of the scheme, inactive-user subsets at zero.
  CoSrpPolicy expand(std::span<const double> x) const {
    CoSrpPolicy pol(scheme_, n_, s_);
    for (std::size_t k = 0; k < k_; ++k) {
      const std::size_t full_k = pol.subset_index(subsets_[k]);
      for (std::size_t s = 0; s < s_; ++s) pol.at(s, full_k) = x[s * k_ + k];
    }
    return pol;
  }

  /// Decision vector of a policy, dropping subsets that touch inactive users.
  /// Their mass moves to the same subset with the inactive users removed.
  std::vector<double> restrict(const CoSrpPolicy& pol) const {
    if (pol.n_states() != s_ || pol.n_users() != n_) throw InvalidInput("policy shape does not match the program");
    std::vector<double> x(dim(), 0.0);
    for (std::size_t fk = 0; fk < pol.n_subsets(); ++fk) {
      const Subset w = pol.subsets()[fk] & active_;
      std::size_t k = 0;
      while (k < k_ && subsets_[k] != w) ++k;
      for (std::size_t s = 0; s < s_; ++s) x[s * k_ + k] += pol.at(s, fk);
    }
    return x;
  }

 private:
  std::size_t idx(std::size_t i, std::size_t s, std::size_t k) const { return (i * s_ + s) * k_ + k; }

  double dot(const std::vector<double>& coef, std::size_t i, std::span<const double> x) const {
    const double* c = coef.data() + i * dim();
    double acc = 0.0;
    for (std::size_t j = 0; j < dim(); ++j) acc += c[j] * x[j];
    return acc;
  }

  template <class F>
  std::vector<double> per_user(std::span<const double>, F&& fn) const {
    std::vector<double> out(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = fn(i);
    return out;
  }

  Streams streams_;
  double pbar_;
  Scheme scheme_;
  std::vector<JointChannelState> states_;
  PowerTable powers_;
  std::size_t n_ = 0;
  std::size_t s_ = 0;
  std::size_t k_ = 0;
  Subset active_;
  std::vector<Subset> subsets_;
  std::vector<double> a_;
  std::vector<double> d_;
};

inline FractionalProgram build_program(const ChannelModel& model, const Streams& streams, double pbar, Scheme scheme,
                                       const RateFunction& f = RateFunction::log1p()) {
  return FractionalProgram(model, streams, pbar, scheme, f);
}

}  // namespace vaoi
