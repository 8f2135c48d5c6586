#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vigpi/bellman.hpp"
#include "vigpi/engine.hpp"
#include "vigpi/instances.hpp"
#include "vigpi/mdp.hpp"
#include "vigpi/operators.hpp"
#include "vigpi/tables.hpp"

namespace vigpi {

enum class Verdict { certified_on_suite, refuted, inconclusive };

inline constexpr std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::certified_on_suite: return "certified-on-suite";
    case Verdict::refuted: return "refuted";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "unknown";
}

struct Witness {
  std::string note;
  std::optional<TabularPolicy> pi;
  std::optional<QTable> q;
  std::optional<std::size_t> state;
  std::optional<std::size_t> iteration;
  std::optional<std::uint64_t> seed;
};

struct CheckResult {
  std::string name;
  std::size_t instances_tested = 0;
  bool passed = true;
  double worst_violation = std::numeric_limits<double>::infinity();  // signed worst slack
  std::optional<Witness> witness;
  std::string detail;
};

inline CheckResult make_check(std::string name) {
  CheckResult c;
  c.name = std::move(name);
  return c;
}

inline Witness make_witness(std::string note, std::optional<TabularPolicy> pi = {},
                            std::optional<QTable> q = {}, std::optional<std::size_t> state = {},
                            std::optional<std::size_t> iteration = {}) {
  Witness w;
  w.note = std::move(note);
  w.pi = std::move(pi);
  w.q = std::move(q);
  w.state = state;
  w.iteration = iteration;
  return w;
}

struct CertificationReport {
  std::string operator_name;
  std::optional<OperatorConfig> op;
  std::string property;
  std::vector<CheckResult> checks;
  Verdict verdict = Verdict::inconclusive;
};

/// Which policies an operator accepts as input.
enum class InputDomain { any, full_support, deterministic };

inline InputDomain input_domain(OperatorKind k) {
  if (k == OperatorKind::min_det) return InputDomain::deterministic;
  // Best-of-N only samples from pi's support, so it cannot improve a deterministic pi.
  if (k == OperatorKind::gmz || k == OperatorKind::bon_exact || k == OperatorKind::bon_sampled)
    return InputDomain::full_support;
  return InputDomain::any;
}

/// An operator to certify: either backed by a config or an arbitrary callable.
struct OperatorUnderTest {
  std::string name;
  std::optional<OperatorConfig> config;
  PolicyOperator apply;
  bool deterministic_output = false;
  InputDomain domain = InputDomain::any;

  static OperatorUnderTest from_config(const OperatorConfig& c, std::string label = {}) {
    OperatorUnderTest op;
    op.name = label.empty() ? std::string(to_string(c.kind)) : std::move(label);
    op.config = c;
    op.apply = make_operator(c);
    op.deterministic_output = is_deterministic_operator(c.kind);
    op.domain = input_domain(c.kind);
    return op;
  }
};

struct PolicyQPair {
  TabularPolicy pi;
  QTable q;
  std::string label;
};

namespace detail {

inline TabularPolicy random_full_support(std::size_t S, std::size_t A, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TabularPolicy p(S, A);
  for (std::size_t s = 0; s < S; ++s) {
    double z = 0.0;
    for (std::size_t a = 0; a < A; ++a) z += (p(s, a) = 1.0 - u(rng));
    for (std::size_t a = 0; a < A; ++a) p(s, a) /= z;
  }
  return p;
}

inline TabularPolicy random_deterministic(std::size_t S, std::size_t A, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, A - 1);
  std::vector<std::size_t> acts(S);
  for (auto& a : acts) a = pick(rng);
  return TabularPolicy::deterministic(acts, A);
}

inline QTable random_uniform_q(std::size_t S, std::size_t A, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  QTable q(S, A);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) q(s, a) = u(rng);
  return q;
}

/// Rows are random permutations of evenly spaced values in [-1, 1].
inline QTable separated_q(std::size_t S, std::size_t A, std::mt19937_64& rng) {
  QTable q(S, A);
  std::vector<double> vals(A);
  for (std::size_t a = 0; a < A; ++a)
    vals[a] = A == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(a) / static_cast<double>(A - 1);
  for (std::size_t s = 0; s < S; ++s) {
    std::shuffle(vals.begin(), vals.end(), rng);
    for (std::size_t a = 0; a < A; ++a) q(s, a) = vals[a];
  }
  return q;
}

/// Policy choosing the action of rank `j` (0 = best) at every state.
inline TabularPolicy ranked_policy(const QTable& q, std::size_t j) {
  std::vector<std::size_t> acts(q.rows());
  std::vector<std::size_t> order(q.cols());
  for (std::size_t s = 0; s < q.rows(); ++s) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return q(s, x) > q(s, y); });
    acts[s] = order[j];
  }
  return TabularPolicy::deterministic(acts, q.cols());
}

/// (1 - delta) on the first argmax plus delta spread uniformly.
inline TabularPolicy near_greedy(const QTable& q, double delta) {
  const auto best = argmax_actions(q);
  TabularPolicy p(q.rows(), q.cols(), delta / static_cast<double>(q.cols()));
  for (std::size_t s = 0; s < q.rows(); ++s) p(s, best[s]) += 1.0 - delta;
  return p;
}

inline TabularPolicy anti_aligned(const QTable& q, InputDomain domain) {
  if (domain != InputDomain::full_support) return ranked_policy(q, q.cols() - 1);
  QTable neg(q.rows(), q.cols());
  for (std::size_t s = 0; s < q.rows(); ++s)
    for (std::size_t a = 0; a < q.cols(); ++a) neg(s, a) = -10.0 * q(s, a);
  return softmax_policy(neg);
}

inline TabularPolicy random_in_domain(std::size_t S, std::size_t A, InputDomain d,
                                      std::mt19937_64& rng) {
  return d == InputDomain::deterministic ? random_deterministic(S, A, rng)
                                         : random_full_support(S, A, rng);
}

/// Per-state improvement E_out q - E_pi q, computed from gaps for accuracy near greedy.
inline ValueVector improvement(const TabularPolicy& pi, const TabularPolicy& out, const QTable& q) {
  const auto g0 = greedification_gap(pi, q);
  const auto g1 = greedification_gap(out, q);
  ValueVector d(q.rows());
  for (std::size_t s = 0; s < q.rows(); ++s) d[s] = g0[s] - g1[s];
  return d;
}

inline Verdict verdict_from(const std::vector<CheckResult>& checks) {
  for (const auto& c : checks)
    if (!c.passed) return Verdict::refuted;
  return Verdict::certified_on_suite;
}

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(12);
  os << x;
  return os.str();
}

}  // namespace detail

/**
 * Default (pi, q) suite: `num_random` random pairs with q uniform in [-1, 1],
 * plus greedy, anti-aligned, near-tie and near-greedy cases. Policies respect
 * the operator's input domain.
 */
inline std::vector<PolicyQPair> greedification_suite(InputDomain domain, std::uint64_t seed = 0,
                                                     std::size_t num_random = 1000,
                                                     std::size_t states = 3,
                                                     std::size_t actions = 4) {
  std::mt19937_64 rng(seed);
  std::vector<PolicyQPair> suite;
  for (std::size_t i = 0; i < num_random; ++i) {
    auto q = detail::random_uniform_q(states, actions, rng);
    auto pi = detail::random_in_domain(states, actions, domain, rng);
    suite.push_back({std::move(pi), std::move(q), "random#" + std::to_string(i)});
  }
  for (std::size_t i = 0; i < 20; ++i) {
    const auto q = detail::random_uniform_q(states, actions, rng);
    const std::string tag = "#" + std::to_string(i);
    if (domain != InputDomain::full_support)
      suite.push_back({detail::ranked_policy(q, 0), q, "greedy" + tag});
    suite.push_back({detail::anti_aligned(q, domain), q, "anti_aligned" + tag});
    if (domain != InputDomain::deterministic)
      for (double delta : {1e-3, 1e-6, 1e-9})
        suite.push_back({detail::near_greedy(q, delta), q, "near_greedy(" + detail::fmt(delta) + ")" + tag});

    // Top two actions nearly tied, then exactly tied.
    for (double eps : {1e-9, 0.0}) {
      QTable t = q;
      for (std::size_t s = 0; s < states; ++s) {
        const auto r1 = detail::ranked_policy(t, 0).action(s);
        const auto r2 = detail::ranked_policy(t, 1).action(s);
        t(s, r2) = t(s, r1) - eps;
      }
      suite.push_back({detail::random_in_domain(states, actions, domain, rng), t,
                       (eps > 0.0 ? "near_tie" : "tie") + tag});
    }
  }
  return suite;
}

/**
 * Checks that the operator never lowers the expected q-value at any state
 * (slack -1e-10) and raises it by at least 1e-12 somewhere unless pi is
 * already greedy.
 */
inline CertificationReport check_greedification(const OperatorUnderTest& op,
                                                const std::vector<PolicyQPair>& suite) {
  CheckResult nondecrease = make_check("no_state_worse");
  CheckResult strict = make_check("strict_somewhere_unless_greedy");
  CheckResult valid = make_check("output_is_policy");
  for (const auto& pair : suite) {
    const auto out = op.apply(pair.pi, pair.q, 0);
    ++valid.instances_tested;
    if (auto err = out.check()) {
      valid.passed = false;
      valid.worst_violation = -1.0;
      if (!valid.witness) valid.witness = make_witness(pair.label + ": " + *err, pair.pi, pair.q);
      continue;
    }
    const auto d = detail::improvement(pair.pi, out, pair.q);
    ++nondecrease.instances_tested;
    for (std::size_t s = 0; s < d.size(); ++s) {
      if (d[s] < nondecrease.worst_violation) {
        nondecrease.worst_violation = d[s];
        if (d[s] < -1e-10)
          nondecrease.witness = make_witness(pair.label + ": expected value drops", pair.pi, pair.q, s);
      }
    }
    if (sup_gap(pair.pi, pair.q) > kTieTolerance) {
      ++strict.instances_tested;
      const double best = *std::max_element(d.begin(), d.end());
      if (best < strict.worst_violation) {
        strict.worst_violation = best;
        if (best < 1e-12)
          strict.witness = make_witness(pair.label + ": no strict improvement", pair.pi, pair.q);
      }
    }
  }
  nondecrease.passed = nondecrease.worst_violation >= -1e-10;
  strict.passed = strict.instances_tested == 0 || strict.worst_violation >= 1e-12;
  CertificationReport rep;
  rep.operator_name = op.name;
  rep.op = op.config;
  rep.property = "greedification";
  rep.checks = {valid, nondecrease, strict};
  rep.verdict = detail::verdict_from(rep.checks);
  return rep;
}

inline CertificationReport check_greedification(const OperatorConfig& c,
                                                const std::vector<PolicyQPair>& suite) {
  return check_greedification(OperatorUnderTest::from_config(c), suite);
}

/// Smallest positive difference between two action values at the same state.
inline std::optional<double> min_positive_action_gap(const QTable& q) {
  std::optional<double> best;
  for (std::size_t s = 0; s < q.rows(); ++s)
    for (std::size_t a = 0; a < q.cols(); ++a)
      for (std::size_t b = 0; b < q.cols(); ++b) {
        const double d = q(s, a) - q(s, b);
        if (d > 0.0 && (!best || d < *best)) best = d;
      }
  return best;
}

/// Ranked deterministic, random and near-greedy policies (down to 1e-13 off the argmax).
inline std::vector<TabularPolicy> lower_bound_suite(const QTable& q, InputDomain domain,
                                                    std::uint64_t seed = 0,
                                                    std::size_t num_random = 200) {
  std::mt19937_64 rng(seed);
  std::vector<TabularPolicy> suite;
  if (domain != InputDomain::full_support) {
    for (std::size_t j = 0; j < q.cols(); ++j) suite.push_back(detail::ranked_policy(q, j));
    // Rank j at one state, worst action elsewhere.
    const auto worst = detail::ranked_policy(q, q.cols() - 1);
    for (std::size_t s = 0; s < q.rows(); ++s)
      for (std::size_t j = 0; j + 1 < q.cols(); ++j) {
        auto p = worst;
        const auto r = detail::ranked_policy(q, j);
        for (std::size_t a = 0; a < q.cols(); ++a) p(s, a) = r(s, a);
        suite.push_back(std::move(p));
      }
    for (std::size_t i = 0; i < num_random; ++i)
      suite.push_back(detail::random_deterministic(q.rows(), q.cols(), rng));
  }
  if (domain != InputDomain::deterministic) {
    suite.push_back(TabularPolicy::uniform(q.rows(), q.cols()));
    for (std::size_t i = 0; i < num_random; ++i)
      suite.push_back(detail::random_full_support(q.rows(), q.cols(), rng));
    for (double delta : {1e-3, 1e-6, 1e-9, 1e-12, 1e-13}) suite.push_back(detail::near_greedy(q, delta));
  }
  return suite;
}

/**
 * Estimates the per-application improvement floor over non-greedy input
 * states, skipping applications whose output is greedy everywhere.
 * Deterministic operators must reach the smallest positive action gap; any
 * operator is refuted by an improvement below 1e-12.
 */
inline CertificationReport check_lower_bound(const OperatorUnderTest& op, const QTable& q,
                                             const std::vector<TabularPolicy>& suite) {
  CheckResult floor_check = make_check("improvement_floor");
  const auto bound = min_positive_action_gap(q);
  double eps_hat = std::numeric_limits<double>::infinity();
  std::optional<Witness> worst;
  for (const auto& pi : suite) {
    ++floor_check.instances_tested;
    const auto out = op.apply(pi, q, 0);
    bool out_greedy = true;
    for (std::size_t s = 0; s < q.rows(); ++s) out_greedy = out_greedy && is_argmax_row(out, q, s, 0.0);
    if (out_greedy) continue;
    const auto d = detail::improvement(pi, out, q);
    for (std::size_t s = 0; s < q.rows(); ++s) {
      if (is_argmax_row(pi, q, s, 0.0)) continue;
      if (d[s] < eps_hat) {
        eps_hat = d[s];
        worst = make_witness("improvement " + detail::fmt(d[s]) + " at a non-greedy output state", pi, q, s);
      }
    }
  }
  floor_check.worst_violation = eps_hat;
  if (op.deterministic_output && bound) {
    floor_check.passed = eps_hat >= *bound - 1e-10;
    floor_check.detail = "epsilon_hat=" + detail::fmt(eps_hat) + " bound=" + detail::fmt(*bound);
  } else {
    floor_check.passed = eps_hat >= 1e-12;
    floor_check.detail = "epsilon_hat=" + detail::fmt(eps_hat);
  }
  if (!floor_check.passed) floor_check.witness = worst;
  CertificationReport rep;
  rep.operator_name = op.name;
  rep.op = op.config;
  rep.property = "lower_bounded";
  rep.checks = {floor_check};
  rep.verdict = detail::verdict_from(rep.checks);
  return rep;
}

inline CertificationReport check_lower_bound(const OperatorConfig& c, const QTable& q,
                                             const std::vector<TabularPolicy>& suite) {
  return check_lower_bound(OperatorUnderTest::from_config(c), q, suite);
}

/**
 * Iterates pi_{n+1} = op(pi_n, q_n) for n < n_max and tracks the gap against
 * the sequence limit. Certified when the final gap is below `tol` and
 * non-increasing over the last tenth of the run. Refuted when the gap stays
 * above 10 * tol and either oscillates (standard deviation over the last 100
 * steps, or the second half of shorter runs, above 10 * tol) or settles on the
 * supplied closed-form limit.
 */
inline CertificationReport check_limit_sufficiency(const OperatorUnderTest& op,
                                                   const QSequence& seq,
                                                   const TabularPolicy& pi0, std::size_t n_max,
                                                   double tol,
                                                   std::optional<double> closed_form_gap = {}) {
  std::vector<double> gaps;
  gaps.reserve(n_max + 1);
  TabularPolicy pi = pi0;
  gaps.push_back(sup_gap(pi, seq.limit));
  for (std::size_t n = 0; n < n_max; ++n) {
    pi = op.apply(pi, seq.at(n), n);
    gaps.push_back(sup_gap(pi, seq.limit));
  }
  const double final_gap = gaps.back();
  const double inf_gap = *std::min_element(gaps.begin(), gaps.end());

  const std::size_t tail = std::max<std::size_t>(1, n_max / 10);
  bool monotone_tail = true;
  for (std::size_t i = gaps.size() - 1 - tail; i + 1 < gaps.size(); ++i)
    monotone_tail = monotone_tail && gaps[i + 1] <= gaps[i] + 1e-15;

  const std::size_t w = std::min<std::size_t>(100, gaps.size() / 2);
  double mean = 0.0, var = 0.0;
  for (std::size_t i = gaps.size() - w; i < gaps.size(); ++i) mean += gaps[i] / static_cast<double>(w);
  for (std::size_t i = gaps.size() - w; i < gaps.size(); ++i)
    var += (gaps[i] - mean) * (gaps[i] - mean) / static_cast<double>(w);
  const bool oscillating = std::sqrt(var) > 10.0 * tol;
  const bool closed_form_hit =
      closed_form_gap && *closed_form_gap > 10.0 * tol && std::abs(final_gap - *closed_form_gap) <= 1e-6;

  CheckResult conv = make_check("gap_vanishes:" + seq.name);
  conv.instances_tested = 1;
  conv.passed = final_gap < tol && monotone_tail;
  conv.worst_violation = tol - final_gap;
  conv.detail = "final_gap=" + detail::fmt(final_gap) + " inf_gap=" + detail::fmt(inf_gap) +
                (monotone_tail ? "" : " tail_not_monotone") + (oscillating ? " oscillating" : "");
  if (!conv.passed) conv.witness = make_witness(seq.name + ": final policy against limit q", pi, seq.limit,
                                           std::nullopt, n_max);
  std::vector<CheckResult> checks{conv};
  if (closed_form_gap) {
    CheckResult cf = make_check("closed_form_limit:" + seq.name);
    cf.instances_tested = 1;
    cf.passed = std::abs(final_gap - *closed_form_gap) <= 1e-6;
    cf.worst_violation = -std::abs(final_gap - *closed_form_gap);
    cf.detail = "expected=" + detail::fmt(*closed_form_gap) + " observed=" + detail::fmt(final_gap);
    checks.push_back(cf);
  }

  CertificationReport rep;
  rep.operator_name = op.name;
  rep.op = op.config;
  rep.property = "limit_sufficient";
  rep.checks = std::move(checks);
  if (conv.passed) rep.verdict = Verdict::certified_on_suite;
  else if (inf_gap > 10.0 * tol && (oscillating || closed_form_hit)) rep.verdict = Verdict::refuted;
  else rep.verdict = Verdict::inconclusive;
  return rep;
}

inline CertificationReport check_limit_sufficiency(const OperatorConfig& c, const QSequence& seq,
                                                   const TabularPolicy& pi0, std::size_t n_max,
                                                   double tol,
                                                   std::optional<double> closed_form_gap = {}) {
  return check_limit_sufficiency(OperatorUnderTest::from_config(c), seq, pi0, n_max, tol,
                                 closed_form_gap);
}

struct SequenceCase {
  QSequence sequence;
  TabularPolicy pi0;
  std::size_t n_max = 200;
  double tol = 1e-6;
  std::optional<double> closed_form_gap;
};

inline SequenceCase make_case(QSequence seq, TabularPolicy pi0, std::size_t n_max = 200,
                              double tol = 1e-6, std::optional<double> closed_form_gap = {}) {
  SequenceCase c;
  c.sequence = std::move(seq);
  c.pi0 = std::move(pi0);
  c.n_max = n_max;
  c.tol = tol;
  c.closed_form_gap = closed_form_gap;
  return c;
}

/// Constant, geometric-decay, random-decay and oscillating sequences with domain-appropriate pi0.
inline std::vector<SequenceCase> limit_sufficiency_suite(InputDomain domain, std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  auto start = [&](const QTable& q) {
    return domain == InputDomain::full_support
               ? TabularPolicy::uniform(q.rows(), q.cols())
               : detail::ranked_policy(q, q.cols() - 1);
  };
  std::vector<SequenceCase> out;
  {
    const auto q = QTable::from_rows({{1.0, 2.0}});
    out.push_back(make_case(constant_sequence(q, "constant(1,2)"), start(q), 60));
  }
  const auto base = detail::separated_q(3, 4, rng);
  out.push_back(make_case(constant_sequence(base, "constant_random"), start(base)));
  {
    const auto noise = detail::random_uniform_q(3, 4, rng);
    QSequence seq{"geometric_decay", [base, noise](std::size_t n) {
                    QTable q = base;
                    const double scale = std::ldexp(1.0, -static_cast<int>(std::min<std::size_t>(n, 1000)));
                    for (std::size_t s = 0; s < q.rows(); ++s)
                      for (std::size_t a = 0; a < q.cols(); ++a) q(s, a) += scale * noise(s, a);
                    return q;
                  },
                  base};
    out.push_back(make_case(seq, start(seq.at(0))));
  }
  {
    QSequence seq{"random_decay", [base, seed](std::size_t n) {
                    std::mt19937_64 r(derive_seed(seed, n));
                    QTable q = base;
                    const auto noise = detail::random_uniform_q(q.rows(), q.cols(), r);
                    for (std::size_t s = 0; s < q.rows(); ++s)
                      for (std::size_t a = 0; a < q.cols(); ++a)
                        q(s, a) += noise(s, a) / static_cast<double>(n + 1);
                    return q;
                  },
                  base};
    out.push_back(make_case(seq, start(base), 400));
  }
  {
    auto seq = oscillating_sequence();
    const auto pi0 = domain == InputDomain::full_support ? TabularPolicy::uniform(1, 3)
                                                         : TabularPolicy::deterministic({1}, 3);
    out.push_back(make_case(seq, pi0));
  }
  return out;
}

/// Runs every case; any refutation refutes, all certified certifies, otherwise inconclusive.
inline CertificationReport certify_limit_sufficiency(const OperatorUnderTest& op,
                                                     const std::vector<SequenceCase>& cases) {
  CertificationReport rep;
  rep.operator_name = op.name;
  rep.op = op.config;
  rep.property = "limit_sufficient";
  bool all_certified = true, any_refuted = false;
  for (const auto& c : cases) {
    auto r = check_limit_sufficiency(op, c.sequence, c.pi0, c.n_max, c.tol, c.closed_form_gap);
    all_certified = all_certified && r.verdict == Verdict::certified_on_suite;
    any_refuted = any_refuted || r.verdict == Verdict::refuted;
    for (auto& ch : r.checks) rep.checks.push_back(std::move(ch));
  }
  rep.verdict = any_refuted     ? Verdict::refuted
                : all_certified ? Verdict::certified_on_suite
                                : Verdict::inconclusive;
  return rep;
}

struct ImprovementCase {
  FiniteMdp mdp;
  TabularPolicy pi;
  std::string label;
};

/// Layered instances for the true-value improvement check.
inline std::vector<ImprovementCase> policy_improvement_suite(std::uint64_t seed = 0,
                                                             std::size_t num_random = 50) {
  std::vector<ImprovementCase> out;
  auto two = build_counterexample("two_action");
  out.push_back({two.mdp, two.pi0, "two_action"});
  auto br = build_counterexample("branching");
  out.push_back({br.mdp, br.pi0, "branching"});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < num_random; ++i) {
    auto m = random_layered_mdp(3, 3, 3, derive_seed(seed, i));
    auto pi = detail::random_full_support(m.num_states, m.num_actions, rng);
    out.push_back({std::move(m), std::move(pi), "random#" + std::to_string(i)});
  }
  return out;
}

/**
 * True-value improvement: with q = Q^pi, the output's values are no worse at
 * every state (slack -1e-10) and strictly better somewhere unless pi is optimal.
 */
inline CertificationReport check_policy_improvement(const OperatorUnderTest& op,
                                                    const std::vector<ImprovementCase>& cases) {
  CheckResult nondecrease = make_check("values_no_worse");
  CheckResult strict = make_check("strict_somewhere_unless_optimal");
  for (const auto& c : cases) {
    const auto q = backward_induction_evaluation(c.pi, c.mdp);
    const auto out = op.apply(c.pi, q, 0);
    const auto v = policy_values(q, c.pi);
    const auto v_new = policy_values(backward_induction_evaluation(out, c.mdp), out);
    const auto vstar = optimal_values(c.mdp).v;
    ++nondecrease.instances_tested;
    double best = -std::numeric_limits<double>::infinity();
    double regret = 0.0;
    for (std::size_t s = 0; s < v.size(); ++s) {
      const double d = v_new[s] - v[s];
      best = std::max(best, d);
      regret = std::max(regret, vstar[s] - v[s]);
      if (d < nondecrease.worst_violation) {
        nondecrease.worst_violation = d;
        if (d < -1e-10) nondecrease.witness = make_witness(c.label + ": value drops", c.pi, q, s);
      }
    }
    if (regret > 1e-12) {
      ++strict.instances_tested;
      if (best < strict.worst_violation) {
        strict.worst_violation = best;
        if (best < 1e-12) strict.witness = make_witness(c.label + ": no strict improvement", c.pi, q);
      }
    }
  }
  nondecrease.passed = nondecrease.worst_violation >= -1e-10;
  strict.passed = strict.instances_tested == 0 || strict.worst_violation >= 1e-12;
  CertificationReport rep;
  rep.operator_name = op.name;
  rep.op = op.config;
  rep.property = "policy_improvement";
  rep.checks = {nondecrease, strict};
  rep.verdict = detail::verdict_from(rep.checks);
  return rep;
}

struct Assertion {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteReport {
  std::string name;
  std::vector<Assertion> assertions;
  std::vector<CertificationReport> certifications;

  bool ok() const {
    return std::all_of(assertions.begin(), assertions.end(),
                       [](const Assertion& a) { return a.passed; });
  }
};

/// Closed-form limiting gaps used by the counterexample checks.
inline double softmax_stall_gap() { return 1.0 / (1.0 + std::exp(1.0)); }
inline double decaying_schedule_gap() { return 1.0 / (1.0 + std::exp(2.0)); }

struct DecayingScheduleRun {
  std::vector<double> gaps;
};

/// gmz with scale 1/2^n on the constant q = (1, 2) from the uniform policy.
inline DecayingScheduleRun run_decaying_schedule(std::size_t iterations = 200) {
  const auto q = QTable::from_rows({{1.0, 2.0}});
  const auto cfg = OperatorConfig::gmz_schedule(1.0, 2.0);
  auto pi = TabularPolicy::uniform(1, 2);
  DecayingScheduleRun run;
  run.gaps.push_back(sup_gap(pi, q));
  for (std::size_t n = 0; n < iterations; ++n) {
    pi = gmz_op(pi, q, cfg, n);
    run.gaps.push_back(sup_gap(pi, q));
  }
  return run;
}

/// Actions selected by min_det along the oscillating sequence from pi0 = a2.
inline std::vector<std::size_t> run_oscillation(std::size_t iterations = 1000) {
  const auto seq = oscillating_sequence();
  auto pi = TabularPolicy::deterministic({1}, 3);
  std::vector<std::size_t> visited{pi.action(0)};
  for (std::size_t n = 0; n < iterations; ++n) {
    pi = min_det_op(pi, seq.at(n));
    visited.push_back(pi.action(0));
  }
  return visited;
}

/**
 * (a) inadequate operator stalls at the softmax policy, (b) random search
 * improves without greedifying, (c) a decaying gmz scale stalls at a positive
 * gap, (d) min_det alternates forever on the oscillating sequence.
 */
inline SuiteReport run_counterexample_suite() {
  SuiteReport rep;
  rep.name = "counterexamples";
  {
    const auto ce = build_counterexample("two_action");
    EngineConfig c;
    c.improvement = OperatorConfig::inadequate(0.9);
    c.max_iters = 10'000;
    const auto t = gpi_run(ce.mdp, c);
    const double p = t.final_policy(0, 1);
    const double gap = greedification_gap(t.final_policy, t.final_q)[0];
    const double target = std::exp(1.0) / (1.0 + std::exp(1.0));
    const bool ok = !t.converged && std::abs(p - target) <= 1e-6 &&
                    std::abs(gap - softmax_stall_gap()) <= 1e-6;
    rep.assertions.push_back({"(a) inadequate operator stalls at softmax", ok,
                              "pi(a2|s0)=" + detail::fmt(p) + " gap=" + detail::fmt(gap) +
                                  " converged=" + (t.converged ? "true" : "false")});
  }
  {
    const auto ce = build_counterexample("branching");
    const auto q0 = backward_induction_evaluation(ce.pi0, ce.mdp);
    std::optional<std::uint64_t> hit;
    std::string detail_text = "no witness found";
    for (std::uint64_t seed = 0; seed < 1000 && !hit; ++seed) {
      const auto found = random_search_improvement_op(ce.pi0, ce.mdp, seed, 100);
      if (!found || found->action(0) != 2) continue;
      const auto d = detail::improvement(ce.pi0, *found, q0);
      if (d[0] < -1e-10) {
        hit = seed;
        detail_text = "seed=" + std::to_string(seed) + " chooses a3 at s1; expected q drops by " +
                      detail::fmt(-d[0]);
      }
    }
    rep.assertions.push_back({"(b) random search improves without greedifying", hit.has_value(),
                              detail_text});
  }
  {
    const auto run = run_decaying_schedule();
    const double final_gap = run.gaps.back();
    const double min_gap = *std::min_element(run.gaps.begin(), run.gaps.end());
    const bool ok = std::abs(final_gap - decaying_schedule_gap()) <= 1e-6 && min_gap >= 0.119;
    rep.assertions.push_back({"(c) decaying gmz scale stalls", ok,
                              "limit_gap=" + detail::fmt(final_gap) + " min_gap=" + detail::fmt(min_gap)});
  }
  {
    const auto visited = run_oscillation(1000);
    bool only_a1_a2 = true, alternates = true;
    for (std::size_t i = 0; i < visited.size(); ++i) {
      only_a1_a2 = only_a1_a2 && visited[i] != 2;
      if (i > 0) alternates = alternates && visited[i] != visited[i - 1];
    }
    std::set<std::size_t> distinct(visited.begin(), visited.end());
    std::string set_text;
    for (auto a : distinct) set_text += (set_text.empty() ? "a" : ",a") + std::to_string(a + 1);
    rep.assertions.push_back({"(d) min_det alternates on the oscillating sequence",
                              only_a1_a2 && alternates, "visited={" + set_text + "} over 1000 steps"});
  }
  return rep;
}

/**
 * Builds the certification matrix: each operator against the properties it is
 * known to have or lack, plus the certifier self-tests.
 */
inline SuiteReport run_operator_suite(std::uint64_t seed = 0) {
  SuiteReport rep;
  rep.name = "operators";
  auto expect = [&](CertificationReport r, Verdict expected) {
    std::string d = "expected " + std::string(to_string(expected)) + ", got " + std::string(to_string(r.verdict));
    for (const auto& c : r.checks)
      if (!c.detail.empty() && (c.name == "improvement_floor" || !c.passed)) d += "; " + c.name + " " + c.detail;
    rep.assertions.push_back({r.operator_name + " " + r.property, r.verdict == expected, d});
    rep.certifications.push_back(std::move(r));
  };

  std::mt19937_64 rng(seed);
  const auto q_lb = detail::random_uniform_q(4, 4, rng);

  auto greedification = [&](const OperatorUnderTest& op) {
    return check_greedification(op, greedification_suite(op.domain, seed));
  };
  auto lower_bound = [&](const OperatorUnderTest& op) {
    return check_lower_bound(op, q_lb, lower_bound_suite(q_lb, op.domain, seed));
  };
  auto limit = [&](const OperatorUnderTest& op, std::vector<SequenceCase> extra = {}) {
    auto cases = limit_sufficiency_suite(op.domain, seed);
    for (auto& e : extra) cases.push_back(std::move(e));
    return certify_limit_sufficiency(op, cases);
  };
  const auto q12 = QTable::from_rows({{1.0, 2.0}});

  const auto greedy = OperatorUnderTest::from_config(OperatorConfig::greedy());
  expect(greedification(greedy), Verdict::certified_on_suite);
  expect(lower_bound(greedy), Verdict::certified_on_suite);
  expect(limit(greedy), Verdict::certified_on_suite);

  const auto min_det = OperatorUnderTest::from_config(OperatorConfig::min_det());
  expect(greedification(min_det), Verdict::certified_on_suite);
  expect(lower_bound(min_det), Verdict::certified_on_suite);
  expect(limit(min_det, {make_case(oscillating_sequence(), TabularPolicy::deterministic({1}, 3), 1000, 1e-6, 1.0)}),
         Verdict::refuted);

  const auto gmz = OperatorUnderTest::from_config(OperatorConfig::gmz(1.0), "gmz(beta=1)");
  expect(greedification(gmz), Verdict::certified_on_suite);
  expect(lower_bound(gmz), Verdict::refuted);
  expect(limit(gmz), Verdict::certified_on_suite);

  const auto gmz_decay =
      OperatorUnderTest::from_config(OperatorConfig::gmz_schedule(1.0, 2.0), "gmz(sigma_n=q/2^n)");
  expect(greedification(gmz_decay), Verdict::certified_on_suite);
  expect(limit(gmz_decay, {make_case(constant_sequence(q12, "constant(1,2)"),
                                     TabularPolicy::uniform(1, 2), 200, 1e-6, decaying_schedule_gap())}),
         Verdict::refuted);

  const auto inadequate = OperatorUnderTest::from_config(OperatorConfig::inadequate(0.5), "inadequate(0.5)");
  expect(check_policy_improvement(inadequate, policy_improvement_suite(seed)), Verdict::certified_on_suite);
  expect(limit(inadequate, {make_case(constant_sequence(q12, "constant(1,2)"),
                                      TabularPolicy::uniform(1, 2), 200, 1e-6, softmax_stall_gap())}),
         Verdict::refuted);

  const auto bon = OperatorUnderTest::from_config(OperatorConfig::bon_exact(4), "bon_exact(4)");
  expect(greedification(bon), Verdict::certified_on_suite);

  // Certifier self-tests.
  OperatorUnderTest inverted;
  inverted.name = "inverted_greedy";
  inverted.apply = [](const TabularPolicy& pi, const QTable& q, std::size_t) {
    QTable neg(q.rows(), q.cols());
    for (std::size_t s = 0; s < q.rows(); ++s)
      for (std::size_t a = 0; a < q.cols(); ++a) neg(s, a) = -q(s, a);
    return greedy_op(pi, neg);
  };
  inverted.deterministic_output = true;
  expect(greedification(inverted), Verdict::refuted);

  OperatorUnderTest uniform;
  uniform.name = "always_uniform";
  uniform.apply = [](const TabularPolicy& pi, const QTable&, std::size_t) {
    return TabularPolicy::uniform(pi.rows(), pi.cols());
  };
  expect(greedification(uniform), Verdict::refuted);
  return rep;
}

struct OracleSuiteOptions {
  int layers = 4;
  int states_per_layer = 5;
  int actions = 3;
  std::size_t gmz_max_iters = 10'000;
  double finite_tol = 1e-9;
  double gmz_tol = 1e-4;
};

/**
 * Random layered MDPs solved by every engine/operator pairing; each final q
 * and acting-policy start value must match the backward-induction oracle.
 */
inline SuiteReport oracle_equivalence_suite(std::size_t num_instances, std::uint64_t seed,
                                            const OracleSuiteOptions& o = {}) {
  if (num_instances < 1) throw std::invalid_argument("oracle_equivalence_suite: num_instances must be >= 1");
  SuiteReport rep;
  rep.name = "oracle";
  struct Cell {
    std::string name;
    EngineConfig config;
    bool vi;
    double tol;
    std::size_t failures = 0;
    double worst = 0.0;
    std::string first_failure;
  };
  std::vector<Cell> cells;
  {
    EngineConfig c;
    cells.push_back({"gpi greedy", c, false, o.finite_tol, 0, 0.0, {}});
    c.improvement = OperatorConfig::min_det();
    cells.push_back({"gpi min_det", c, false, o.finite_tol, 0, 0.0, {}});
    EngineConfig g;
    g.improvement = OperatorConfig::gmz(2.0);
    g.max_iters = o.gmz_max_iters;
    cells.push_back({"gpi gmz(beta=2)", g, false, o.gmz_tol, 0, 0.0, {}});
    for (const auto& [label, vi] : std::vector<std::pair<std::string, OperatorConfig>>{
             {"identity", OperatorConfig::identity()},
             {"greedy", OperatorConfig::greedy()},
             {"bon_exact(4)", OperatorConfig::bon_exact(4)},
             {"expectile(0.9)", OperatorConfig::expectile(0.9)}}) {
      EngineConfig v;
      v.value_improvement = vi;
      cells.push_back({"vigpi greedy/" + label, v, true, o.finite_tol, 0, 0.0, {}});
    }
  }
  std::size_t horizon_failures = 0, dominance_failures = 0;
  std::string dominance_text;
  for (std::size_t i = 0; i < num_instances; ++i) {
    const std::uint64_t inst_seed = seed + i;
    const auto m = random_layered_mdp(o.layers, o.states_per_layer, o.actions, inst_seed);
    const auto opt = optimal_values(m);
    for (auto& cell : cells) {
      EngineConfig c = cell.config;
      if (c.improvement.kind == OperatorKind::min_det)
        c.pi_init = TabularPolicy::deterministic(std::vector<std::size_t>(m.num_states, 0), m.num_actions);
      const auto t = cell.vi ? vigpi_run(m, c, opt.q) : gpi_run(m, c, opt.q);
      const double qerr = *t.records.back().q_error;
      const double verr = std::abs(t.records.back().start_value - opt.start_value);
      const double err = std::max(qerr, verr);
      cell.worst = std::max(cell.worst, err);
      if (!(err <= cell.tol)) {
        if (cell.failures++ == 0)
          cell.first_failure = " first failure: seed " + std::to_string(inst_seed) + " q_error=" +
                               detail::fmt(qerr) + " start_value_error=" + detail::fmt(verr);
      }
      if (cell.name == "gpi greedy") {
        const auto H = static_cast<std::size_t>(o.layers);
        if (t.records.size() <= H || !(*t.records[H].q_error <= o.finite_tol)) ++horizon_failures;
      }
    }
    // Value improvement should not slow the acting gmz policy down here.
    std::optional<std::size_t> reach[2];
    for (int vi = 0; vi < 2; ++vi) {
      EngineConfig c;
      c.improvement = OperatorConfig::gmz(2.0);
      c.value_improvement = vi ? OperatorConfig::greedy() : OperatorConfig::identity();
      c.max_iters = o.gmz_max_iters;
      reach[vi] = first_iter_reaching(vigpi_run(m, c), start_value_threshold(opt.start_value));
    }
    const bool ok = reach[1] && (!reach[0] || *reach[1] <= *reach[0]);
    if (!ok && dominance_failures++ == 0)
      dominance_text = " first failure: seed " + std::to_string(inst_seed);
  }
  for (const auto& cell : cells)
    rep.assertions.push_back({cell.name + " matches oracle", cell.failures == 0,
                              std::to_string(num_instances - cell.failures) + "/" +
                                  std::to_string(num_instances) + " within " + detail::fmt(cell.tol) +
                                  ", worst " + detail::fmt(cell.worst) + cell.first_failure});
  rep.assertions.push_back({"gpi greedy exact within horizon", horizon_failures == 0,
                            std::to_string(num_instances - horizon_failures) + "/" +
                                std::to_string(num_instances)});
  rep.assertions.push_back({"gmz(beta=2) value improvement reaches 0.95 V* no later",
                            dominance_failures == 0,
                            std::to_string(num_instances - dominance_failures) + "/" +
                                std::to_string(num_instances) + dominance_text});
  return rep;
}

}  // namespace vigpi
