#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vigpi/bellman.hpp"
#include "vigpi/mdp.hpp"
#include "vigpi/tables.hpp"

namespace vigpi {

enum class OperatorKind {
  greedy,
  min_det,
  gmz,
  bon_exact,
  bon_sampled,
  inadequate,
  random_search,
  identity,
  expectile,  // implicit: only valid as the value-improvement operator
};

inline constexpr std::string_view to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::greedy: return "greedy";
    case OperatorKind::min_det: return "min_det";
    case OperatorKind::gmz: return "gmz";
    case OperatorKind::bon_exact: return "bon_exact";
    case OperatorKind::bon_sampled: return "bon_sampled";
    case OperatorKind::inadequate: return "inadequate";
    case OperatorKind::random_search: return "random_search";
    case OperatorKind::identity: return "identity";
    case OperatorKind::expectile: return "expectile";
  }
  return "unknown";
}

inline OperatorKind operator_kind_from_string(std::string_view name) {
  for (auto k : {OperatorKind::greedy, OperatorKind::min_det, OperatorKind::gmz,
                 OperatorKind::bon_exact, OperatorKind::bon_sampled, OperatorKind::inadequate,
                 OperatorKind::random_search, OperatorKind::identity, OperatorKind::expectile})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown operator kind: " + std::string(name));
}

/// sigma_n(x) = (alpha / beta^n) * x.
struct BetaSchedule {
  double alpha = 1.0;
  double beta = 2.0;
  bool operator==(const BetaSchedule&) const = default;
};

/// Selects one operator and carries exactly the parameters it needs.
struct OperatorConfig {
  OperatorKind kind = OperatorKind::greedy;
  std::optional<double> beta;
  std::optional<BetaSchedule> schedule;
  std::optional<int> n_samples;
  std::optional<double> alpha_mix;
  std::optional<double> tau;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_attempts;

  static OperatorConfig of(OperatorKind k) {
    OperatorConfig c;
    c.kind = k;
    return c;
  }
  static OperatorConfig greedy() { return of(OperatorKind::greedy); }
  static OperatorConfig min_det() { return of(OperatorKind::min_det); }
  static OperatorConfig identity() { return of(OperatorKind::identity); }
  static OperatorConfig gmz(double beta) {
    auto c = of(OperatorKind::gmz);
    c.beta = beta;
    return c;
  }
  static OperatorConfig gmz_schedule(double alpha, double beta) {
    auto c = of(OperatorKind::gmz);
    c.schedule = BetaSchedule{alpha, beta};
    return c;
  }
  static OperatorConfig bon_exact(int n) {
    auto c = of(OperatorKind::bon_exact);
    c.n_samples = n;
    return c;
  }
  static OperatorConfig bon_sampled(int n, std::uint64_t seed = 0) {
    auto c = of(OperatorKind::bon_sampled);
    c.n_samples = n;
    c.seed = seed;
    return c;
  }
  static OperatorConfig inadequate(double alpha) {
    auto c = of(OperatorKind::inadequate);
    c.alpha_mix = alpha;
    return c;
  }
  static OperatorConfig random_search(std::uint64_t seed, int max_attempts) {
    auto c = of(OperatorKind::random_search);
    c.seed = seed;
    c.max_attempts = max_attempts;
    return c;
  }
  static OperatorConfig expectile(double tau) {
    auto c = of(OperatorKind::expectile);
    c.tau = tau;
    return c;
  }

  bool operator==(const OperatorConfig&) const = default;
};

/// Throws std::invalid_argument unless parameters are present exactly when the kind needs them.
inline void validate_operator_config(const OperatorConfig& c) {
  auto fail = [&](const std::string& msg) {
    throw std::invalid_argument(std::string(to_string(c.kind)) + ": " + msg);
  };
  const bool wants_beta = c.kind == OperatorKind::gmz;
  const bool wants_n = c.kind == OperatorKind::bon_exact || c.kind == OperatorKind::bon_sampled;
  const bool wants_alpha = c.kind == OperatorKind::inadequate;
  const bool wants_tau = c.kind == OperatorKind::expectile;
  const bool wants_attempts = c.kind == OperatorKind::random_search;
  const bool wants_seed = c.kind == OperatorKind::bon_sampled || wants_attempts;

  if (wants_beta) {
    if (c.beta.has_value() == c.schedule.has_value()) fail("needs exactly one of beta, schedule");
    if (c.beta && !(*c.beta >= 0.0)) fail("beta must be >= 0");
    if (c.schedule && !(c.schedule->alpha > 0.0 && c.schedule->beta > 1.0))
      fail("schedule needs alpha > 0 and beta > 1");
  } else if (c.beta || c.schedule) {
    fail("unexpected beta/schedule");
  }
  if (wants_n != c.n_samples.has_value()) fail(wants_n ? "missing n_samples" : "unexpected n_samples");
  if (c.n_samples && *c.n_samples < 1) fail("n_samples must be >= 1");
  if (wants_alpha != c.alpha_mix.has_value())
    fail(wants_alpha ? "missing alpha_mix" : "unexpected alpha_mix");
  if (c.alpha_mix && !(*c.alpha_mix > 0.0 && *c.alpha_mix < 1.0)) fail("alpha_mix must lie in (0, 1)");
  if (wants_tau != c.tau.has_value()) fail(wants_tau ? "missing tau" : "unexpected tau");
  if (c.tau && !(*c.tau > 0.0 && *c.tau < 1.0)) fail("tau must lie in (0, 1)");
  if (wants_attempts != c.max_attempts.has_value())
    fail(wants_attempts ? "missing max_attempts" : "unexpected max_attempts");
  if (c.max_attempts && *c.max_attempts < 1) fail("max_attempts must be >= 1");
  if (!wants_seed && c.seed) fail("unexpected seed");
}

inline constexpr double kTieTolerance = 1e-12;

/// splitmix64 finalizer; derives independent per-iteration seeds from a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t counter) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Uniform over the actions within kTieTolerance of each row's maximum.
inline TabularPolicy greedy_op(const TabularPolicy& pi, const QTable& q) {
  require_same_shape(pi, q, "greedy_op");
  TabularPolicy out(q.rows(), q.cols(), 0.0);
  for (std::size_t s = 0; s < q.rows(); ++s) {
    const double m = max_of(q.row(s));
    std::size_t ties = 0;
    for (double v : q.row(s)) ties += (v >= m - kTieTolerance) ? 1 : 0;
    for (std::size_t a = 0; a < q.cols(); ++a)
      if (q(s, a) >= m - kTieTolerance) out(s, a) = 1.0 / static_cast<double>(ties);
  }
  return out;
}

/**
 * Least-greedifying deterministic operator: moves to the lowest-valued action
 * that is strictly better than the current one, or stays put. Ties in that
 * minimum go to the lowest action index.
 */
inline TabularPolicy min_det_op(const TabularPolicy& pi, const QTable& q) {
  require_same_shape(pi, q, "min_det_op");
  std::vector<std::size_t> chosen(q.rows());
  for (std::size_t s = 0; s < q.rows(); ++s) {
    if (!pi.is_deterministic_at(s))
      throw std::invalid_argument("min_det_op: policy row " + std::to_string(s) +
                                  " is not deterministic");
    const std::size_t cur = pi.action(s);
    std::optional<std::size_t> best;
    for (std::size_t a = 0; a < q.cols(); ++a) {
      if (q(s, a) > q(s, cur) && (!best || q(s, a) < q(s, *best))) best = a;
    }
    chosen[s] = best.value_or(cur);
  }
  return TabularPolicy::deterministic(chosen, q.cols());
}

/// Scale applied to q by the Gumbel-MuZero operator at application index `n` (0-based).
inline double gmz_scale(const OperatorConfig& c, std::size_t n) {
  if (c.schedule) return c.schedule->alpha * std::pow(c.schedule->beta, -static_cast<double>(n));
  return c.beta.value_or(1.0);
}

/**
 * pi'(a|s) proportional to pi(a|s) exp(scale * q(s,a)). Probabilities are
 * floored at the smallest normal double so the support survives underflow.
 */
inline TabularPolicy gmz_op(const TabularPolicy& pi, const QTable& q, double scale) {
  require_same_shape(pi, q, "gmz_op");
  if (!(scale >= 0.0)) throw std::invalid_argument("gmz_op: scale must be >= 0");
  constexpr double floor = std::numeric_limits<double>::min();
  for (std::size_t s = 0; s < q.rows(); ++s)
    for (std::size_t a = 0; a < q.cols(); ++a)
      if (!(pi(s, a) > 0.0))
        throw std::invalid_argument("gmz_op: zero-probability action at state " +
                                    std::to_string(s));
  if (scale == 0.0) return pi;
  TabularPolicy out(q.rows(), q.cols());
  std::vector<double> logits(q.cols());
  for (std::size_t s = 0; s < q.rows(); ++s) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < q.cols(); ++a) {
      logits[a] = std::log(pi(s, a)) + scale * q(s, a);
      top = std::max(top, logits[a]);
    }
    double z = 0.0;
    for (std::size_t a = 0; a < q.cols(); ++a) {
      logits[a] = std::exp(logits[a] - top);
      z += logits[a];
    }
    for (std::size_t a = 0; a < q.cols(); ++a) out(s, a) = std::max(logits[a] / z, floor);
  }
  return out;
}

inline TabularPolicy gmz_op(const TabularPolicy& pi, const QTable& q, const OperatorConfig& c,
                            std::size_t iteration_n) {
  return gmz_op(pi, q, gmz_scale(c, iteration_n));
}

/// softmax(q(s, .)) per state.
inline TabularPolicy softmax_policy(const QTable& q) {
  return gmz_op(TabularPolicy::uniform(q.rows(), q.cols()), q, 1.0);
}

/**
 * Exact distribution of Best-of-N selection: N i.i.d. draws from pi, keep the
 * q-maximizer, break ties uniformly among sampled maximizers. With classes c of
 * equal q-value and F(c) the pi-mass of classes <= c, class c wins with
 * probability F(c)^N - F(c-)^N, shared within the class in proportion to pi.
 */
inline TabularPolicy bon_exact_op(const TabularPolicy& pi, const QTable& q, int n_samples) {
  require_same_shape(pi, q, "bon_exact_op");
  if (n_samples < 1) throw std::invalid_argument("bon_exact_op: n_samples must be >= 1");
  if (n_samples == 1) return pi;
  const std::size_t A = q.cols();
  TabularPolicy out(q.rows(), A, 0.0);
  std::vector<std::size_t> order(A);
  for (std::size_t s = 0; s < q.rows(); ++s) {
    for (std::size_t a = 0; a < A; ++a) order[a] = a;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return q(s, x) < q(s, y); });
    double below = 0.0;  // F(c-)
    std::size_t i = 0;
    while (i < A) {
      std::size_t j = i;
      double mass = 0.0;
      while (j < A && q(s, order[j]) <= q(s, order[i]) + kTieTolerance) mass += pi(s, order[j++]);
      const double upto = (j == A) ? 1.0 : below + mass;
      const double win = std::pow(upto, n_samples) - std::pow(below, n_samples);
      if (mass > 0.0)
        for (std::size_t k = i; k < j; ++k) out(s, order[k]) = win * pi(s, order[k]) / mass;
      below += mass;
      i = j;
    }
  }
  return out;
}

/// One Best-of-N draw per state; returns the selected actions as a deterministic policy.
inline TabularPolicy bon_sampled_op(const TabularPolicy& pi, const QTable& q, int n_samples,
                                    std::uint64_t seed) {
  require_same_shape(pi, q, "bon_sampled_op");
  if (n_samples < 1) throw std::invalid_argument("bon_sampled_op: n_samples must be >= 1");
  std::mt19937_64 rng(derive_seed(seed, 0));  // raw small seeds give correlated first draws
  std::vector<std::size_t> chosen(q.rows());
  std::vector<std::size_t> best;
  for (std::size_t s = 0; s < q.rows(); ++s) {
    std::discrete_distribution<std::size_t> draw(pi.row(s).begin(), pi.row(s).end());
    best.clear();
    double best_q = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_samples; ++i) {
      const std::size_t a = draw(rng);
      if (q(s, a) > best_q + kTieTolerance) {
        best_q = q(s, a);
        best.assign(1, a);
      } else if (q(s, a) >= best_q - kTieTolerance) {
        best.push_back(a);
      }
    }
    chosen[s] = best.size() == 1
                    ? best.front()
                    : best[std::uniform_int_distribution<std::size_t>(0, best.size() - 1)(rng)];
  }
  return TabularPolicy::deterministic(chosen, q.cols());
}

/**
 * Policy-improvement operator that stalls at the softmax policy. Where pi's
 * value under q_pi is below the softmax policy's value, mix alpha * pi +
 * (1 - alpha) * softmax; otherwise jump to the argmax row. A pi within
 * kTieTolerance of the softmax value counts as below, since the mixture
 * approaches softmax from below and reaches it only by rounding.
 */
inline TabularPolicy inadequate_op(const TabularPolicy& pi, const QTable& q_pi, double alpha_mix) {
  require_same_shape(pi, q_pi, "inadequate_op");
  if (!(alpha_mix > 0.0 && alpha_mix < 1.0))
    throw std::invalid_argument("inadequate_op: alpha_mix must lie in (0, 1)");
  const auto soft = softmax_policy(q_pi);
  const auto greedy = greedy_op(pi, q_pi);
  TabularPolicy out(q_pi.rows(), q_pi.cols());
  for (std::size_t s = 0; s < q_pi.rows(); ++s) {
    const double v_pi = expected_value(pi.row(s), q_pi.row(s));
    const double v_soft = expected_value(soft.row(s), q_pi.row(s));
    const bool below = v_pi < v_soft + kTieTolerance;
    for (std::size_t a = 0; a < q_pi.cols(); ++a)
      out(s, a) = below ? alpha_mix * pi(s, a) + (1.0 - alpha_mix) * soft(s, a) : greedy(s, a);
  }
  return out;
}

/**
 * Draws uniformly random deterministic policies, evaluates each exactly, and
 * returns the first that is no worse anywhere and strictly better somewhere.
 */
inline std::optional<TabularPolicy> random_search_improvement_op(const TabularPolicy& pi,
                                                                 const FiniteMdp& mdp,
                                                                 std::uint64_t seed,
                                                                 int max_attempts) {
  if (!mdp.is_layered())
    throw std::invalid_argument("random_search_improvement_op requires a layered MDP");
  require_shape(mdp, pi, "random_search_improvement_op");
  const auto base = policy_values(backward_induction_evaluation(pi, mdp), pi);
  std::mt19937_64 rng(derive_seed(seed, 0));
  std::uniform_int_distribution<std::size_t> pick(0, mdp.num_actions - 1);
  std::vector<std::size_t> actions(mdp.num_states);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    for (auto& a : actions) a = pick(rng);
    auto cand = TabularPolicy::deterministic(actions, mdp.num_actions);
    const auto v = policy_values(backward_induction_evaluation(cand, mdp), cand);
    bool no_worse = true, better = false;
    for (std::size_t s = 0; s < v.size(); ++s) {
      if (v[s] < base[s] - kTieTolerance) no_worse = false;
      if (v[s] > base[s] + kTieTolerance) better = true;
    }
    if (no_worse && better) return cand;
  }
  return std::nullopt;
}

/// Call-site data that some operators need beyond (pi, q).
struct OperatorContext {
  const FiniteMdp* mdp = nullptr;
  std::size_t iteration = 0;         // 0-based application index
  std::uint64_t run_seed = 0;
};

/**
 * Applies any explicit operator. Sampled operators draw from
 * derive_seed(config seed ^ run seed, iteration); random_search keeps pi when
 * no improvement is found.
 */
inline TabularPolicy apply_operator(const OperatorConfig& c, const TabularPolicy& pi,
                                    const QTable& q, const OperatorContext& ctx = {}) {
  const std::uint64_t seed = derive_seed(c.seed.value_or(0) ^ ctx.run_seed, ctx.iteration);
  switch (c.kind) {
    case OperatorKind::greedy: return greedy_op(pi, q);
    case OperatorKind::min_det: return min_det_op(pi, q);
    case OperatorKind::gmz: return gmz_op(pi, q, c, ctx.iteration);
    case OperatorKind::bon_exact: return bon_exact_op(pi, q, c.n_samples.value_or(1));
    case OperatorKind::bon_sampled: return bon_sampled_op(pi, q, c.n_samples.value_or(1), seed);
    case OperatorKind::inadequate: return inadequate_op(pi, q, c.alpha_mix.value_or(0.5));
    case OperatorKind::random_search: {
      if (!ctx.mdp) throw std::invalid_argument("random_search needs an MDP in its context");
      auto found = random_search_improvement_op(pi, *ctx.mdp, seed, c.max_attempts.value_or(1));
      return found ? *found : pi;
    }
    case OperatorKind::identity: return pi;
    case OperatorKind::expectile:
      throw std::invalid_argument("expectile is implicit and has no explicit policy");
  }
  throw std::invalid_argument("unknown operator kind");
}

/// Operator as a plain callable: (pi, q, application index) -> pi'.
using PolicyOperator =
    std::function<TabularPolicy(const TabularPolicy&, const QTable&, std::size_t)>;

inline PolicyOperator make_operator(OperatorConfig c, const FiniteMdp* mdp = nullptr,
                                    std::uint64_t run_seed = 0) {
  validate_operator_config(c);
  return [c, mdp, run_seed](const TabularPolicy& pi, const QTable& q, std::size_t n) {
    return apply_operator(c, pi, q, OperatorContext{mdp, n, run_seed});
  };
}

/// Operators whose output is always a deterministic policy (given distinct q-values).
inline bool is_deterministic_operator(OperatorKind k) {
  return k == OperatorKind::greedy || k == OperatorKind::min_det ||
         k == OperatorKind::bon_sampled || k == OperatorKind::random_search;
}

}  // namespace vigpi
