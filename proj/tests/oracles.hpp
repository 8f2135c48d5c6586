#pragma once

// Reference computations used only by tests. Each one takes a different route
// from the library code it checks: recursion instead of sweeps, enumeration
// instead of closed forms, plain bisection instead of segment solves.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "vigpi/mdp.hpp"
#include "vigpi/tables.hpp"

namespace oracle {

using vigpi::FiniteMdp;
using vigpi::QTable;
using vigpi::TabularPolicy;

/// V^pi(s) on a layered MDP by direct recursion over successors.
inline double recursive_value(const FiniteMdp& m, const TabularPolicy& pi, std::size_t s) {
  if (m.terminal[s]) return 0.0;
  double v = 0.0;
  for (std::size_t a = 0; a < m.num_actions; ++a) {
    if (pi(s, a) == 0.0) continue;
    double cont = 0.0;
    for (const auto& t : m.successors(s, a)) cont += t.prob * recursive_value(m, pi, t.next);
    v += pi(s, a) * (m.reward(s, a) + m.discount * cont);
  }
  return v;
}

inline std::vector<double> recursive_values(const FiniteMdp& m, const TabularPolicy& pi) {
  std::vector<double> v(m.num_states);
  for (std::size_t s = 0; s < m.num_states; ++s) v[s] = recursive_value(m, pi, s);
  return v;
}

/// q*(s, a) on a layered MDP by memoized recursion over successors.
inline QTable recursive_optimal_q(const FiniteMdp& m) {
  QTable q(m.num_states, m.num_actions, 0.0);
  std::vector<int> done(m.num_states, 0);
  std::function<double(std::size_t)> vstar = [&](std::size_t s) -> double {
    if (m.terminal[s]) return 0.0;
    if (!done[s]) {
      for (std::size_t a = 0; a < m.num_actions; ++a) {
        double cont = 0.0;
        for (const auto& t : m.successors(s, a)) cont += t.prob * vstar(t.next);
        q(s, a) = m.reward(s, a) + m.discount * cont;
      }
      done[s] = 1;
    }
    double best = q(s, 0);
    for (std::size_t a = 1; a < m.num_actions; ++a) best = std::max(best, q(s, a));
    return best;
  };
  for (std::size_t s = 0; s < m.num_states; ++s) vstar(s);
  return q;
}

/// Calls f on every deterministic policy (num_actions^num_states of them).
inline void for_each_deterministic_policy(const FiniteMdp& m,
                                          const std::function<void(const TabularPolicy&)>& f) {
  std::vector<std::size_t> choice(m.num_states, 0);
  while (true) {
    f(TabularPolicy::deterministic(choice, m.num_actions));
    std::size_t i = 0;
    while (i < choice.size() && ++choice[i] == m.num_actions) choice[i++] = 0;
    if (i == choice.size()) return;
  }
}

/// max over deterministic policies of V^pi(s), per state.
inline std::vector<double> brute_force_optimal_values(const FiniteMdp& m) {
  std::vector<double> best(m.num_states, -std::numeric_limits<double>::infinity());
  for_each_deterministic_policy(m, [&](const TabularPolicy& pi) {
    const auto v = recursive_values(m, pi);
    for (std::size_t s = 0; s < v.size(); ++s) best[s] = std::max(best[s], v[s]);
  });
  return best;
}

/// Expectile by plain bisection on [min, max] of the support.
inline double bisection_expectile(const std::vector<double>& v, const std::vector<double>& p,
                                  double tau) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (p[i] > 0.0) {
      lo = std::min(lo, v[i]);
      hi = std::max(hi, v[i]);
    }
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    double f = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
      f += p[i] * (v[i] > mid ? tau * (v[i] - mid) : -(1.0 - tau) * (mid - v[i]));
    (f > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Best-of-N distribution by enumerating all |A|^N ordered sample tuples.
inline std::vector<double> enumerate_best_of_n(const std::vector<double>& pi,
                                               const std::vector<double>& q, int n) {
  const std::size_t A = pi.size();
  std::vector<double> out(A, 0.0);
  std::vector<std::size_t> tuple(static_cast<std::size_t>(n), 0);
  while (true) {
    double prob = 1.0;
    double best = -std::numeric_limits<double>::infinity();
    for (auto a : tuple) {
      prob *= pi[a];
      best = std::max(best, q[a]);
    }
    if (prob > 0.0) {
      std::size_t count = 0;
      for (auto a : tuple) count += q[a] == best;
      for (auto a : tuple)
        if (q[a] == best) out[a] += prob / static_cast<double>(count);
    }
    std::size_t i = 0;
    while (i < tuple.size() && ++tuple[i] == A) tuple[i++] = 0;
    if (i == tuple.size()) break;
  }
  return out;
}

/// Random full-support policy from normalized uniform draws.
inline TabularPolicy random_policy(std::size_t S, std::size_t A, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TabularPolicy p(S, A);
  for (std::size_t s = 0; s < S; ++s) {
    double z = 0.0;
    for (std::size_t a = 0; a < A; ++a) z += (p(s, a) = 1.0 - u(rng));
    for (std::size_t a = 0; a < A; ++a) p(s, a) /= z;
  }
  return p;
}

inline QTable random_q(std::size_t S, std::size_t A, std::mt19937_64& rng, double lo = -1.0,
                       double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  QTable q(S, A);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) q(s, a) = u(rng);
  return q;
}

inline double sigmoid_gap(double x) { return 1.0 / (1.0 + std::exp(x)); }

}  // namespace oracle
