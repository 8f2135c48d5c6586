#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vigpi/tables.hpp"

namespace vigpi {

struct Transition {
  std::size_t next = 0;
  double prob = 0.0;
  bool operator==(const Transition&) const = default;
};

/**
 * Tabular MDP with mean rewards.
 *
 * Transitions are stored sparsely per (state, action) pair. Terminal states
 * self-loop with zero reward so every table stays rectangular. When
 * `layer_of` is present the MDP is a time-augmented DAG: a transition from a
 * non-terminal layer-t state lands in layer t+1, and `horizon` equals the
 * deepest layer. A stationary MDP has no layers and usually no horizon.
 */
struct FiniteMdp {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<std::vector<Transition>> transitions;  // indexed s * num_actions + a
  DenseTable rewards;                                 // num_states x num_actions
  std::optional<int> horizon;
  double discount = 1.0;
  std::vector<double> start_dist;
  std::vector<bool> terminal;
  std::optional<std::vector<int>> layer_of;

  FiniteMdp() = default;
  FiniteMdp(std::size_t states, std::size_t actions)
      : num_states(states),
        num_actions(actions),
        transitions(states * actions),
        rewards(states, actions, 0.0),
        start_dist(states, 0.0),
        terminal(states, false) {}

  std::span<const Transition> successors(std::size_t s, std::size_t a) const {
    return transitions[s * num_actions + a];
  }
  std::vector<Transition>& successors_mut(std::size_t s, std::size_t a) {
    return transitions[s * num_actions + a];
  }

  double reward(std::size_t s, std::size_t a) const { return rewards(s, a); }

  bool is_layered() const { return layer_of.has_value(); }
  bool is_stationary() const { return !layer_of.has_value(); }

  /// Marks `s` terminal and installs the zero-reward self-loop for every action.
  void make_terminal(std::size_t s) {
    terminal[s] = true;
    for (std::size_t a = 0; a < num_actions; ++a) {
      successors_mut(s, a) = {{s, 1.0}};
      rewards(s, a) = 0.0;
    }
  }

  void set_deterministic(std::size_t s, std::size_t a, std::size_t next, double r) {
    successors_mut(s, a) = {{next, 1.0}};
    rewards(s, a) = r;
  }

  bool operator==(const FiniteMdp&) const = default;
};

struct Violation {
  std::string what;
  std::vector<long> index;  // (state[, action[, next]]) where it applies
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool has(const std::string& what) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.what == what; });
  }
};

/// Checks every structural invariant of a FiniteMdp. Violations are returned, never thrown.
inline ValidationReport validate_mdp(const FiniteMdp& mdp, double tol = 1e-12) {
  ValidationReport rep;
  auto add = [&](std::string what, std::vector<long> idx = {}) {
    rep.violations.push_back({std::move(what), std::move(idx)});
  };
  const auto S = mdp.num_states;
  const auto A = mdp.num_actions;
  if (S == 0) add("num_states must be positive");
  if (A == 0) add("num_actions must be positive");
  if (mdp.transitions.size() != S * A || mdp.rewards.rows() != S || mdp.rewards.cols() != A ||
      mdp.start_dist.size() != S || mdp.terminal.size() != S ||
      (mdp.layer_of && mdp.layer_of->size() != S)) {
    add("shape mismatch");
    return rep;
  }
  if (mdp.horizon && *mdp.horizon <= 0) add("horizon must be positive");
  if (!(mdp.discount > 0.0 && mdp.discount <= 1.0)) add("discount must lie in (0, 1]");

  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      const long ls = static_cast<long>(s), la = static_cast<long>(a);
      if (!std::isfinite(mdp.reward(s, a))) add("reward not finite", {ls, la});
      double sum = 0.0;
      bool in_range = true;
      for (const auto& t : mdp.successors(s, a)) {
        if (t.next >= S) {
          add("successor out of range", {ls, la, static_cast<long>(t.next)});
          in_range = false;
          continue;
        }
        if (t.prob < 0.0) add("negative probability", {ls, la, static_cast<long>(t.next)});
        sum += t.prob;
      }
      if (std::abs(sum - 1.0) > tol) add("row not stochastic", {ls, la});
      if (mdp.terminal[s]) {
        const auto succ = mdp.successors(s, a);
        const bool self_loop = succ.size() == 1 && succ[0].next == s && succ[0].prob == 1.0;
        if (!self_loop || mdp.reward(s, a) != 0.0)
          add("terminal state must self-loop with zero reward", {ls, la});
      } else if (mdp.layer_of && in_range) {
        const int t = (*mdp.layer_of)[s];
        for (const auto& tr : mdp.successors(s, a))
          if (tr.prob > 0.0 && (*mdp.layer_of)[tr.next] != t + 1)
            add("transition does not advance one layer", {ls, la, static_cast<long>(tr.next)});
      }
    }
  }

  double rho = 0.0;
  bool rho_ok = true;
  for (double p : mdp.start_dist) {
    if (p < 0.0) rho_ok = false;
    rho += p;
  }
  if (!rho_ok || std::abs(rho - 1.0) > tol) add("start_dist is not a distribution");

  if (mdp.layer_of) {
    if (!mdp.horizon) {
      add("layered MDP requires a horizon");
    } else {
      for (std::size_t s = 0; s < S; ++s) {
        const int t = (*mdp.layer_of)[s];
        if (t < 0 || t > *mdp.horizon) add("layer index out of range", {static_cast<long>(s)});
        if (t == *mdp.horizon && !mdp.terminal[s])
          add("final-layer state must be terminal", {static_cast<long>(s)});
      }
    }
  }
  return rep;
}

inline void require_valid(const FiniteMdp& mdp) {
  auto rep = validate_mdp(mdp);
  if (!rep.ok()) throw std::invalid_argument("invalid MDP: " + rep.violations.front().what);
}

/// Index of state `s` at decision time `t` in a time-augmented MDP.
inline std::size_t augmented_index(std::size_t t, std::size_t s, std::size_t base_states) {
  return t * base_states + s;
}

/**
 * Folds the decision time into the state. The output has (horizon + 1) copies
 * of the state set; copy t holds states (t, s) at index t * S + s, and every
 * state of the last copy is terminal. Terminal states of the input stay
 * terminal in every copy.
 */
inline FiniteMdp time_augment(const FiniteMdp& mdp, int horizon) {
  if (mdp.is_layered()) throw std::invalid_argument("time_augment requires a stationary MDP");
  if (horizon < 1) throw std::invalid_argument("time_augment: horizon must be positive");
  const std::size_t S = mdp.num_states;
  const std::size_t A = mdp.num_actions;
  const std::size_t H = static_cast<std::size_t>(horizon);
  FiniteMdp out((H + 1) * S, A);
  out.horizon = horizon;
  out.discount = mdp.discount;
  out.layer_of = std::vector<int>(out.num_states);
  for (std::size_t t = 0; t <= H; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      const std::size_t idx = augmented_index(t, s, S);
      (*out.layer_of)[idx] = static_cast<int>(t);
      if (t == H || mdp.terminal[s]) {
        out.make_terminal(idx);
        continue;
      }
      for (std::size_t a = 0; a < A; ++a) {
        auto& succ = out.successors_mut(idx, a);
        for (const auto& tr : mdp.successors(s, a))
          succ.push_back({augmented_index(t + 1, tr.next, S), tr.prob});
        out.rewards(idx, a) = mdp.reward(s, a);
      }
    }
  }
  for (std::size_t s = 0; s < S; ++s) out.start_dist[s] = mdp.start_dist[s];
  return out;
}

/// States ordered from the deepest layer to layer 0; terminal states first within a layer.
inline std::vector<std::size_t> backward_order(const FiniteMdp& mdp) {
  if (!mdp.is_layered()) throw std::invalid_argument("backward sweep requires a layered MDP");
  std::vector<std::size_t> order(mdp.num_states);
  for (std::size_t s = 0; s < order.size(); ++s) order[s] = s;
  const auto& layer = *mdp.layer_of;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return layer[x] > layer[y]; });
  return order;
}

}  // namespace vigpi
