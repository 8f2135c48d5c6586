#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vigpi/mdp.hpp"
#include "vigpi/tables.hpp"

namespace vigpi {

inline void require_shape(const FiniteMdp& mdp, const DenseTable& t, const char* where) {
  if (t.rows() != mdp.num_states || t.cols() != mdp.num_actions)
    throw std::invalid_argument(std::string(where) + ": shape mismatch with MDP");
}

/// V(s) = sum_a pi(a|s) q(s,a) for every state.
inline ValueVector policy_values(const QTable& q, const TabularPolicy& pi) {
  require_same_shape(q, pi, "policy_values");
  ValueVector v(q.rows());
  for (std::size_t s = 0; s < q.rows(); ++s) v[s] = expected_value(pi.row(s), q.row(s));
  return v;
}

inline ValueVector max_values(const QTable& q) {
  ValueVector v(q.rows());
  for (std::size_t s = 0; s < q.rows(); ++s) v[s] = max_of(q.row(s));
  return v;
}

/**
 * One backup q'(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) * succ_value(s').
 * Terminal successors contribute zero and terminal rows stay at their (zero) reward.
 */
template <class SuccessorValue>
QTable backup_with(const FiniteMdp& mdp, SuccessorValue&& succ_value) {
  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  std::vector<double> v(S);
  for (std::size_t s = 0; s < S; ++s) v[s] = mdp.terminal[s] ? 0.0 : succ_value(s);
  QTable out(S, A);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      if (mdp.terminal[s]) {
        out(s, a) = mdp.reward(s, a);
        continue;
      }
      double cont = 0.0;
      for (const auto& t : mdp.successors(s, a)) cont += t.prob * v[t.next];
      out(s, a) = mdp.reward(s, a) + mdp.discount * cont;
    }
  }
  return out;
}

/**
 * Single backward sweep on a layered MDP. `state_value(q, s)` reads the
 * already final row q(s, .) of a deeper layer, so one pass is exact.
 */
template <class StateValue>
QTable backward_sweep(const FiniteMdp& mdp, StateValue&& state_value) {
  const std::size_t A = mdp.num_actions;
  QTable q(mdp.num_states, A);
  std::vector<double> v(mdp.num_states, 0.0);
  for (std::size_t s : backward_order(mdp)) {
    for (std::size_t a = 0; a < A; ++a) {
      if (mdp.terminal[s]) {
        q(s, a) = mdp.reward(s, a);
        continue;
      }
      double cont = 0.0;
      for (const auto& t : mdp.successors(s, a)) cont += t.prob * v[t.next];
      q(s, a) = mdp.reward(s, a) + mdp.discount * cont;
    }
    v[s] = mdp.terminal[s] ? 0.0 : state_value(q, s);
  }
  return q;
}

/// (T^pi)^k q.
inline QTable bellman_backup(const QTable& q, const TabularPolicy& pi, const FiniteMdp& mdp,
                             int k = 1) {
  require_shape(mdp, q, "bellman_backup");
  require_shape(mdp, pi, "bellman_backup");
  if (k < 1) throw std::invalid_argument("bellman_backup: k must be >= 1");
  QTable cur = q;
  for (int i = 0; i < k; ++i)
    cur = backup_with(mdp, [&](std::size_t s) { return expected_value(pi.row(s), cur.row(s)); });
  return cur;
}

/// T* q.
inline QTable bellman_optimality_backup(const QTable& q, const FiniteMdp& mdp) {
  require_shape(mdp, q, "bellman_optimality_backup");
  return backup_with(mdp, [&](std::size_t s) { return max_of(q.row(s)); });
}

/// ||q - T* q||_inf.
inline double bellman_residual(const QTable& q, const FiniteMdp& mdp) {
  return sup_norm_diff(q, bellman_optimality_backup(q, mdp));
}

/// Exact Q^pi on a layered MDP by one backward sweep.
inline QTable backward_induction_evaluation(const TabularPolicy& pi, const FiniteMdp& mdp) {
  require_shape(mdp, pi, "backward_induction_evaluation");
  if (!mdp.is_layered())
    throw std::invalid_argument(
        "backward_induction_evaluation requires a layered MDP; use iterative_policy_evaluation");
  return backward_sweep(mdp, [&](const QTable& q, std::size_t s) {
    return expected_value(pi.row(s), q.row(s));
  });
}

/// V_j = T^pi V_{j-1} from V_0 = 0 until the sup-norm change drops below `tol`.
inline ValueVector iterative_policy_evaluation(const TabularPolicy& pi, const FiniteMdp& mdp,
                                               double tol, std::size_t max_sweeps = 1'000'000) {
  require_shape(mdp, pi, "iterative_policy_evaluation");
  if (!(tol > 0.0)) throw std::invalid_argument("iterative_policy_evaluation: tol must be > 0");
  const std::size_t S = mdp.num_states;
  ValueVector v(S, 0.0), next(S, 0.0);
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double delta = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      if (mdp.terminal[s]) {
        next[s] = 0.0;
        continue;
      }
      double acc = 0.0;
      for (std::size_t a = 0; a < mdp.num_actions; ++a) {
        const double p = pi(s, a);
        if (p == 0.0) continue;
        double cont = 0.0;
        for (const auto& t : mdp.successors(s, a)) cont += t.prob * v[t.next];
        acc += p * (mdp.reward(s, a) + mdp.discount * cont);
      }
      next[s] = acc;
      delta = std::max(delta, std::abs(next[s] - v[s]));
    }
    v.swap(next);
    if (delta < tol) return v;
  }
  throw IterationCapExceeded("iterative_policy_evaluation: sweep cap exceeded");
}

/**
 * Exact V^pi. Layered MDPs use backward induction; stationary MDPs with
 * gamma < 1 solve (I - gamma P_pi) V = r_pi directly.
 */
inline ValueVector exact_state_values(const TabularPolicy& pi, const FiniteMdp& mdp) {
  if (mdp.is_layered()) return policy_values(backward_induction_evaluation(pi, mdp), pi);
  require_shape(mdp, pi, "exact_state_values");
  if (!(mdp.discount < 1.0))
    throw std::invalid_argument("exact evaluation of a stationary MDP requires discount < 1");
  const auto S = static_cast<Eigen::Index>(mdp.num_states);
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(S, S);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(S);
  for (std::size_t s = 0; s < mdp.num_states; ++s) {
    if (mdp.terminal[s]) continue;
    const auto row = static_cast<Eigen::Index>(s);
    for (std::size_t a = 0; a < mdp.num_actions; ++a) {
      const double p = pi(s, a);
      if (p == 0.0) continue;
      r(row) += p * mdp.reward(s, a);
      for (const auto& t : mdp.successors(s, a))
        if (!mdp.terminal[t.next])
          m(row, static_cast<Eigen::Index>(t.next)) -= mdp.discount * p * t.prob;
    }
  }
  Eigen::VectorXd v = m.partialPivLu().solve(r);
  return ValueVector(v.data(), v.data() + v.size());
}

inline double start_value(const FiniteMdp& mdp, const ValueVector& v) {
  double j = 0.0;
  for (std::size_t s = 0; s < mdp.num_states; ++s) j += mdp.start_dist[s] * v[s];
  return j;
}

/// Lowest-index maximizer of each row.
inline std::vector<std::size_t> argmax_actions(const QTable& q) {
  std::vector<std::size_t> out(q.rows());
  for (std::size_t s = 0; s < q.rows(); ++s) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < q.cols(); ++a)
      if (q(s, a) > q(s, best)) best = a;
    out[s] = best;
  }
  return out;
}

struct OptimalSolution {
  QTable q;
  ValueVector v;
  TabularPolicy policy;  // deterministic, lowest-index argmax
  double start_value = 0.0;
};

/// q*, V* on a layered MDP by backward induction with max.
inline OptimalSolution optimal_values(const FiniteMdp& mdp) {
  if (!mdp.is_layered())
    throw std::invalid_argument("optimal_values: stationary MDP needs a horizon");
  OptimalSolution sol;
  sol.q = backward_sweep(mdp, [](const QTable& q, std::size_t s) { return max_of(q.row(s)); });
  sol.v = max_values(sol.q);
  for (std::size_t s = 0; s < mdp.num_states; ++s)
    if (mdp.terminal[s]) sol.v[s] = 0.0;
  sol.policy = TabularPolicy::deterministic(argmax_actions(sol.q), mdp.num_actions);
  sol.start_value = start_value(mdp, sol.v);
  return sol;
}

/**
 * Stationary input: time-augments with `horizon` and returns the layer-0 slice,
 * i.e. the optimal values with `horizon` decisions remaining, on the original
 * state set.
 */
inline OptimalSolution optimal_values(const FiniteMdp& mdp, std::optional<int> horizon) {
  if (mdp.is_layered()) return optimal_values(mdp);
  if (!horizon) throw std::invalid_argument("optimal_values: stationary MDP needs a horizon");
  const auto full = optimal_values(time_augment(mdp, *horizon));
  OptimalSolution sol;
  sol.q = QTable(mdp.num_states, mdp.num_actions);
  for (std::size_t s = 0; s < mdp.num_states; ++s)
    for (std::size_t a = 0; a < mdp.num_actions; ++a) sol.q(s, a) = full.q(s, a);
  sol.v.assign(full.v.begin(), full.v.begin() + static_cast<long>(mdp.num_states));
  sol.policy = TabularPolicy::deterministic(argmax_actions(sol.q), mdp.num_actions);
  sol.start_value = full.start_value;
  return sol;
}

/**
 * gap(s) = max_a q(s,a) - sum_a pi(a|s) q(s,a), accumulated as
 * sum_a pi(a|s) (max - q(s,a)) so it is never negative and exactly zero
 * for policies supported on maximizers.
 */
inline ValueVector greedification_gap(const TabularPolicy& pi, const QTable& q) {
  require_same_shape(pi, q, "greedification_gap");
  ValueVector gap(q.rows());
  for (std::size_t s = 0; s < q.rows(); ++s) {
    const double m = max_of(q.row(s));
    double g = 0.0;
    for (std::size_t a = 0; a < q.cols(); ++a) g += pi(s, a) * (m - q(s, a));
    gap[s] = g;
  }
  return gap;
}

inline double sup_gap(const TabularPolicy& pi, const QTable& q) {
  double m = 0.0;
  for (double g : greedification_gap(pi, q)) m = std::max(m, g);
  return m;
}

/// True when pi(.|s) puts mass only on actions within `tie_tol` of the row maximum.
inline bool is_argmax_row(const TabularPolicy& pi, const QTable& q, std::size_t s,
                          double tie_tol = 1e-12) {
  const double m = max_of(q.row(s));
  for (std::size_t a = 0; a < q.cols(); ++a)
    if (pi(s, a) > 0.0 && q(s, a) < m - tie_tol) return false;
  return true;
}

}  // namespace vigpi
