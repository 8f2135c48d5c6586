#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vigpi/bellman.hpp"
#include "vigpi/expectile.hpp"
#include "vigpi/mdp.hpp"
#include "vigpi/operators.hpp"
#include "vigpi/tables.hpp"

namespace vigpi {

enum class EvalMode { backup_k, exact_backward, iterative };

struct EngineConfig {
  OperatorConfig improvement = OperatorConfig::greedy();   // acting-policy operator
  std::optional<OperatorConfig> value_improvement;          // evaluated-policy operator
  int k = 1;                                                // backups per iteration (backup_k)
  EvalMode eval_mode = EvalMode::backup_k;
  double eval_tol = 0.0005;                                 // iterative mode only
  double eps_policy = 1e-9;
  double eps_value = 1e-9;
  std::size_t max_iters = 100'000;
  std::optional<QTable> q_init;                             // zeros when absent
  std::optional<TabularPolicy> pi_init;                     // uniform when absent
  std::uint64_t seed = 0;
  bool record_policies = false;
  std::size_t max_eval_sweeps = 1'000'000;
};

struct IterationRecord {
  std::size_t iter = 0;
  double sup_gap = 0.0;
  double bellman_residual = 0.0;
  std::optional<double> q_error;
  double start_value = 0.0;
  std::optional<TabularPolicy> policy_snapshot;
};

struct RunTrace {
  std::vector<IterationRecord> records;
  bool converged = false;
  TabularPolicy final_policy;
  QTable final_q;

  std::size_t iterations() const { return records.empty() ? 0 : records.back().iter; }
};

/// Engine failure with the iteration at which it happened.
class EngineError : public std::runtime_error {
 public:
  EngineError(std::size_t iteration, const std::string& what, bool cap_exceeded)
      : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration),
        cap_exceeded_(cap_exceeded) {}
  std::size_t iteration() const { return iteration_; }
  bool cap_exceeded() const { return cap_exceeded_; }

 private:
  std::size_t iteration_;
  bool cap_exceeded_;
};

struct StoppingDiagnostics {
  bool stop = false;
  double sup_gap = 0.0;
  double bellman_residual = 0.0;
};

/// Numeric rendering of the GPI while-condition: stop once both residuals are within tolerance.
inline StoppingDiagnostics stopping_check(const TabularPolicy& pi, const QTable& q,
                                          const FiniteMdp& mdp, double eps_policy,
                                          double eps_value) {
  StoppingDiagnostics d;
  d.sup_gap = sup_gap(pi, q);
  d.bellman_residual = bellman_residual(q, mdp);
  d.stop = d.sup_gap <= eps_policy && d.bellman_residual <= eps_value;
  return d;
}

/// First iteration whose start value reaches `threshold`.
inline std::optional<std::size_t> first_iter_reaching(const RunTrace& trace, double threshold) {
  for (const auto& r : trace.records)
    if (r.start_value >= threshold) return r.iter;
  return std::nullopt;
}

/// V* - fraction_gap * |V*|; equals 0.95 V* for positive V* when fraction = 0.95.
inline double start_value_threshold(double optimal_start, double fraction = 0.95) {
  return optimal_start - (1.0 - fraction) * std::abs(optimal_start);
}

namespace detail {

inline void validate_engine_config(const EngineConfig& c, const FiniteMdp& mdp, bool vi) {
  if (c.k < 1) throw std::invalid_argument("engine: k must be >= 1");
  if (!(c.eps_policy > 0.0) || !(c.eps_value > 0.0))
    throw std::invalid_argument("engine: tolerances must be > 0");
  if (c.eval_mode == EvalMode::iterative && !(c.eval_tol > 0.0))
    throw std::invalid_argument("engine: eval_tol must be > 0");
  if (c.eval_mode == EvalMode::exact_backward && !mdp.is_layered())
    throw std::invalid_argument("engine: exact_backward evaluation needs a layered MDP");
  validate_operator_config(c.improvement);
  if (c.improvement.kind == OperatorKind::expectile)
    throw std::invalid_argument("engine: expectile can only be the value-improvement operator");
  if (vi) {
    if (!c.value_improvement) throw std::invalid_argument("vigpi_run: value_improvement missing");
    validate_operator_config(*c.value_improvement);
  } else if (c.value_improvement) {
    throw std::invalid_argument("gpi_run: use vigpi_run when value_improvement is set");
  }
  if (c.q_init) require_shape(mdp, *c.q_init, "engine q_init");
  if (c.pi_init) {
    require_shape(mdp, *c.pi_init, "engine pi_init");
    if (auto err = c.pi_init->check()) throw std::invalid_argument("engine pi_init: " + *err);
  }
}

/// Policy evaluation of the successor-value functional `value(q, s)` under the configured mode.
template <class StateValue>
QTable evaluate(const FiniteMdp& mdp, const QTable& q, const EngineConfig& c, StateValue&& value) {
  switch (c.eval_mode) {
    case EvalMode::backup_k: {
      QTable cur = q;
      for (int i = 0; i < c.k; ++i)
        cur = backup_with(mdp, [&](std::size_t s) { return value(cur, s); });
      return cur;
    }
    case EvalMode::exact_backward:
      return backward_sweep(mdp, value);
    case EvalMode::iterative: {
      QTable cur = q;
      for (std::size_t sweep = 0; sweep < c.max_eval_sweeps; ++sweep) {
        QTable next = backup_with(mdp, [&](std::size_t s) { return value(cur, s); });
        double delta = 0.0;
        for (std::size_t s = 0; s < mdp.num_states; ++s)
          if (!mdp.terminal[s]) delta = std::max(delta, std::abs(value(next, s) - value(cur, s)));
        cur = std::move(next);
        if (delta < c.eval_tol) return cur;
      }
      throw IterationCapExceeded("policy evaluation sweep cap exceeded");
    }
  }
  throw std::invalid_argument("unknown evaluation mode");
}

inline IterationRecord make_record(std::size_t iter, const TabularPolicy& pi, const QTable& q,
                                   const FiniteMdp& mdp, const EngineConfig& c,
                                   const std::optional<QTable>& oracle) {
  IterationRecord r;
  r.iter = iter;
  r.sup_gap = sup_gap(pi, q);
  r.bellman_residual = bellman_residual(q, mdp);
  if (oracle) r.q_error = sup_norm_diff(q, *oracle);
  r.start_value = start_value(mdp, exact_state_values(pi, mdp));
  if (c.record_policies) r.policy_snapshot = pi;
  return r;
}

// Sampled value-improvement operators use a run seed decorrelated from the acting operator's.
inline constexpr std::uint64_t kValueImprovementStream = 0xA5A5A5A5A5A5A5A5ULL;

inline RunTrace run_engine(const FiniteMdp& mdp, const EngineConfig& c,
                           const std::optional<QTable>& oracle, bool vi) {
  validate_engine_config(c, mdp, vi);
  TabularPolicy pi = c.pi_init ? *c.pi_init : TabularPolicy::uniform(mdp.num_states, mdp.num_actions);
  QTable q = c.q_init ? *c.q_init : QTable(mdp.num_states, mdp.num_actions, 0.0);

  RunTrace trace;
  auto push = [&](std::size_t it) {
    trace.records.push_back(make_record(it, pi, q, mdp, c, oracle));
    const auto& r = trace.records.back();
    return r.sup_gap <= c.eps_policy && r.bellman_residual <= c.eps_value;
  };
  bool done = push(0);
  for (std::size_t it = 1; !done && it <= c.max_iters; ++it) {
    const std::size_t n = it - 1;
    try {
      if (vi && c.value_improvement->kind == OperatorKind::expectile) {
        const double tau = *c.value_improvement->tau;
        q = evaluate(mdp, q, c, [&](const QTable& cur, std::size_t s) {
          return expectile_scalar(cur.row(s), pi.row(s), tau);
        });
      } else {
        const TabularPolicy evaluated =
            vi ? apply_operator(*c.value_improvement, pi, q,
                                {&mdp, n, derive_seed(c.seed, kValueImprovementStream)})
               : pi;
        q = evaluate(mdp, q, c, [&](const QTable& cur, std::size_t s) {
          return expected_value(evaluated.row(s), cur.row(s));
        });
      }
      pi = apply_operator(c.improvement, pi, q, {&mdp, n, c.seed});
    } catch (const IterationCapExceeded& e) {
      throw EngineError(it, e.what(), true);
    } catch (const std::invalid_argument& e) {
      throw EngineError(it, e.what(), false);
    }
    done = push(it);
  }
  trace.converged = done;
  trace.final_policy = std::move(pi);
  trace.final_q = std::move(q);
  return trace;
}

}  // namespace detail

/// Generalized Policy Iteration: q <- (T^pi)^k q, then pi <- I(pi, q), until both residuals vanish.
inline RunTrace gpi_run(const FiniteMdp& mdp, const EngineConfig& config,
                        const std::optional<QTable>& oracle = std::nullopt) {
  return detail::run_engine(mdp, config, oracle, false);
}

/**
 * Value-Improved GPI: each iteration evaluates I2(pi, q) (or the implicit
 * expectile backup) instead of pi, then improves the acting policy with I1.
 * Diagnostics always describe the acting policy.
 */
inline RunTrace vigpi_run(const FiniteMdp& mdp, const EngineConfig& config,
                          const std::optional<QTable>& oracle = std::nullopt) {
  return detail::run_engine(mdp, config, oracle, true);
}

}  // namespace vigpi
