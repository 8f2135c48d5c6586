#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "vigpi/bellman.hpp"
#include "vigpi/mdp.hpp"
#include "vigpi/tables.hpp"

namespace vigpi {

/**
 * The tau-expectile of a discrete distribution: the unique e with
 *
 *   tau * E[(X - e)_+] = (1 - tau) * E[(e - X)_+],
 *
 * i.e. the minimizer of E[|tau - 1{X < e}| (X - e)^2]. The balance function is
 * piecewise linear and decreasing in e, so the bracketing segment between two
 * sorted support points is located by bisection over the breakpoints and the
 * root is then solved in closed form on that segment.
 */
inline double expectile_scalar(std::span<const double> values, std::span<const double> probs,
                               double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("expectile: tau must lie in (0, 1)");
  if (values.size() != probs.size()) throw std::invalid_argument("expectile: size mismatch");

  std::vector<std::pair<double, double>> pts;  // (value, prob) on the support
  for (std::size_t i = 0; i < values.size(); ++i)
    if (probs[i] > 0.0) pts.emplace_back(values[i], probs[i]);
  if (pts.empty()) throw std::invalid_argument("expectile: empty support");
  std::sort(pts.begin(), pts.end());
  if (pts.front().first == pts.back().first) return pts.front().first;

  const std::size_t n = pts.size();
  std::vector<double> cum_p(n + 1, 0.0), cum_pv(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    cum_p[i + 1] = cum_p[i] + pts[i].second;
    cum_pv[i + 1] = cum_pv[i] + pts[i].second * pts[i].first;
  }
  const double tot_p = cum_p[n];
  const double tot_pv = cum_pv[n];

  // Balance at e with the first j points below e and the rest above.
  auto balance = [&](double e, std::size_t j) {
    const double above = (tot_pv - cum_pv[j]) - e * (tot_p - cum_p[j]);
    const double below = e * cum_p[j] - cum_pv[j];
    return tau * above - (1.0 - tau) * below;
  };

  // Smallest breakpoint index i with balance(v_i) <= 0; balance(v_0) > 0 here.
  std::size_t lo = 0, hi = n - 1;
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (balance(pts[mid].first, mid) > 0.0) lo = mid;
    else hi = mid;
  }
  // Root lies in [v_lo, v_hi]; points 0..lo are below it.
  const std::size_t j = lo + 1;
  const double num = tau * (tot_pv - cum_pv[j]) + (1.0 - tau) * cum_pv[j];
  const double den = tau * (tot_p - cum_p[j]) + (1.0 - tau) * cum_p[j];
  return std::clamp(num / den, pts[lo].first, pts[hi].first);
}

/**
 * Tabular fixed-point analog of training against expectile targets:
 * q'(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) * expectile_tau(q(s', .) under pi(.|s')).
 */
inline QTable expectile_backup(const QTable& q, const TabularPolicy& pi, const FiniteMdp& mdp,
                               double tau) {
  require_shape(mdp, q, "expectile_backup");
  require_shape(mdp, pi, "expectile_backup");
  if (!(tau >= 0.5 && tau < 1.0))
    throw std::invalid_argument("expectile_backup: tau must lie in [0.5, 1)");
  return backup_with(mdp,
                     [&](std::size_t s) { return expectile_scalar(q.row(s), pi.row(s), tau); });
}

}  // namespace vigpi
