#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "vigpi/mdp.hpp"
#include "vigpi/tables.hpp"

namespace vigpi {

/// A q-function sequence q_0, q_1, ... with a declared limit.
struct QSequence {
  std::string name;
  std::function<QTable(std::size_t)> at;
  QTable limit;
};

inline QSequence constant_sequence(QTable q, std::string name = "constant") {
  return {std::move(name), [q](std::size_t) { return q; }, q};
}

/**
 * Alternating sequence with limit (1, 1, 2), where a1 and a2 swap order every
 * step: q_n = (1 + (-1)^n / 2^n, 1 - (-1)^n / 2^n, 2). Values are stored minus
 * one so the 2^-n perturbation stays representable up to n = 1074 instead of
 * vanishing into 1.0 at n = 53. Every operator here is invariant under a
 * constant shift of a state's row.
 */
inline QSequence oscillating_sequence() {
  QSequence seq;
  seq.name = "oscillating";
  seq.limit = QTable::from_rows({{0.0, 0.0, 1.0}});
  seq.at = [](std::size_t n) {
    const double mag = std::ldexp(1.0, -static_cast<int>(std::min<std::size_t>(n, 2000)));
    const double sign = (n % 2 == 0) ? 1.0 : -1.0;
    return QTable::from_rows({{sign * mag, -sign * mag, 1.0}});
  };
  return seq;
}

struct Counterexample {
  FiniteMdp mdp;
  TabularPolicy pi0;
  std::optional<QSequence> sequence;
};

namespace detail {

// s0 --a1--> s1 (reward 1), s0 --a2--> s2 (reward 2); s1, s2 terminal.
inline Counterexample two_action() {
  FiniteMdp m(3, 2);
  m.set_deterministic(0, 0, 1, 1.0);
  m.set_deterministic(0, 1, 2, 2.0);
  m.make_terminal(1);
  m.make_terminal(2);
  m.horizon = 1;
  m.discount = 1.0;
  m.start_dist[0] = 1.0;
  m.layer_of = std::vector<int>{0, 1, 1};
  return {std::move(m), TabularPolicy::uniform(3, 2), std::nullopt};
}

// States s1..s10 map to indices 0..9. Unspecified actions go to the first
// child terminal with zero reward.
inline Counterexample branching() {
  FiniteMdp m(10, 3);
  m.set_deterministic(0, 0, 1, 0.0);
  m.set_deterministic(0, 1, 2, 0.0);
  m.set_deterministic(0, 2, 3, 0.0);
  m.set_deterministic(1, 0, 4, 2.0);
  m.set_deterministic(1, 1, 5, -1.0);
  m.set_deterministic(1, 2, 4, 0.0);
  m.set_deterministic(2, 0, 6, 1.0);
  m.set_deterministic(2, 1, 7, 0.0);
  m.set_deterministic(2, 2, 6, 0.0);
  m.set_deterministic(3, 0, 8, 3.0);
  m.set_deterministic(3, 1, 9, -2.0);
  m.set_deterministic(3, 2, 8, 0.0);
  for (std::size_t s = 4; s < 10; ++s) m.make_terminal(s);
  m.horizon = 2;
  m.discount = 1.0;
  m.start_dist[0] = 1.0;
  m.layer_of = std::vector<int>{0, 1, 1, 1, 2, 2, 2, 2, 2, 2};
  // pi0: s1 -> a1, s2 -> a2, s3 -> a2, s4 -> a2; terminal rows pick a1.
  auto pi0 = TabularPolicy::deterministic({0, 1, 1, 1, 0, 0, 0, 0, 0, 0}, 3);
  return {std::move(m), std::move(pi0), std::nullopt};
}

// One decision state whose q* equals the oscillating sequence's stored limit.
inline Counterexample oscillating() {
  FiniteMdp m(2, 3);
  m.set_deterministic(0, 0, 1, 0.0);
  m.set_deterministic(0, 1, 1, 0.0);
  m.set_deterministic(0, 2, 1, 1.0);
  m.make_terminal(1);
  m.horizon = 1;
  m.discount = 1.0;
  m.start_dist[0] = 1.0;
  m.layer_of = std::vector<int>{0, 1};
  return {std::move(m), TabularPolicy::deterministic({1, 0}, 3), oscillating_sequence()};
}

}  // namespace detail

/// Builds one of the named counterexample instances: two_action, branching, oscillating.
inline Counterexample build_counterexample(const std::string& name) {
  if (name == "two_action") return detail::two_action();
  if (name == "branching") return detail::branching();
  if (name == "oscillating") return detail::oscillating();
  throw std::invalid_argument("unknown counterexample: " + name);
}

enum GridAction : std::size_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

struct GridWorldParams {
  int width = 5;
  int height = 5;
  double goal_reward = 1.0;
  double step_reward = 0.0;
  double discount = 0.99;
};

/**
 * Deterministic grid: start top-left, absorbing goal bottom-right. Moves into a
 * wall leave the agent in place. Every step from a non-goal cell pays
 * `step_reward`; entering the goal additionally pays `goal_reward`.
 * State index is row * width + col.
 */
inline FiniteMdp build_grid_world(int width, int height, double goal_reward, double step_reward,
                                  double discount) {
  if (width < 2 || height < 2) throw std::invalid_argument("grid world needs width, height >= 2");
  if (!(discount > 0.0 && discount <= 1.0))
    throw std::invalid_argument("grid world discount must lie in (0, 1]");
  const auto W = static_cast<std::size_t>(width);
  const auto Hh = static_cast<std::size_t>(height);
  const std::size_t goal = W * Hh - 1;
  FiniteMdp m(W * Hh, 4);
  m.discount = discount;
  m.start_dist[0] = 1.0;
  for (std::size_t r = 0; r < Hh; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      const std::size_t s = r * W + c;
      if (s == goal) continue;
      const std::size_t targets[4] = {
          r > 0 ? s - W : s,
          r + 1 < Hh ? s + W : s,
          c > 0 ? s - 1 : s,
          c + 1 < W ? s + 1 : s,
      };
      for (std::size_t a = 0; a < 4; ++a)
        m.set_deterministic(s, a, targets[a],
                            step_reward + (targets[a] == goal ? goal_reward : 0.0));
    }
  }
  m.make_terminal(goal);
  return m;
}

inline FiniteMdp build_grid_world(const GridWorldParams& p = {}) {
  return build_grid_world(p.width, p.height, p.goal_reward, p.step_reward, p.discount);
}

/**
 * Seeded random finite-horizon MDP. Layers 0..layers-1 hold decision states,
 * layer `layers` holds terminal states; every layer has `states_per_layer`
 * states. Rewards are uniform in [-1, 1]; each transition row is a normalized
 * vector of uniform draws over the next layer. Discount 1, start uniform on layer 0.
 */
inline FiniteMdp random_layered_mdp(int layers, int states_per_layer, int actions,
                                    std::uint64_t seed) {
  if (layers < 1 || states_per_layer < 1 || actions < 1)
    throw std::invalid_argument("random_layered_mdp: parameters must be >= 1");
  const auto L = static_cast<std::size_t>(layers);
  const auto W = static_cast<std::size_t>(states_per_layer);
  const auto A = static_cast<std::size_t>(actions);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> reward(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  FiniteMdp m((L + 1) * W, A);
  m.horizon = layers;
  m.discount = 1.0;
  m.layer_of = std::vector<int>(m.num_states);
  for (std::size_t t = 0; t <= L; ++t) {
    for (std::size_t i = 0; i < W; ++i) {
      const std::size_t s = t * W + i;
      (*m.layer_of)[s] = static_cast<int>(t);
      if (t == L) {
        m.make_terminal(s);
        continue;
      }
      for (std::size_t a = 0; a < A; ++a) {
        m.rewards(s, a) = reward(rng);
        std::vector<double> w(W);
        double total = 0.0;
        for (auto& x : w) {
          x = 1.0 - unit(rng);  // (0, 1]
          total += x;
        }
        auto& succ = m.successors_mut(s, a);
        for (std::size_t j = 0; j < W; ++j) succ.push_back({(t + 1) * W + j, w[j] / total});
      }
    }
  }
  for (std::size_t i = 0; i < W; ++i) m.start_dist[i] = 1.0 / static_cast<double>(W);
  return m;
}

}  // namespace vigpi
