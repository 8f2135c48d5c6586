#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "vigpi/bellman.hpp"
#include "vigpi/instances.hpp"
#include "vigpi/mdp.hpp"

using namespace vigpi;

TEST(Mdp, CounterexamplesValidate) {
  for (const char* name : {"two_action", "branching", "oscillating"}) {
    const auto ce = build_counterexample(name);
    const auto rep = validate_mdp(ce.mdp);
    EXPECT_TRUE(rep.ok()) << name;
  }
  EXPECT_THROW(build_counterexample("nope"), std::invalid_argument);
}

TEST(Mdp, RowNotStochastic) {
  auto m = build_counterexample("two_action").mdp;
  m.successors_mut(0, 0) = {{1, 0.9}};
  EXPECT_TRUE(validate_mdp(m).has("row not stochastic"));
  EXPECT_THROW(require_valid(m), std::invalid_argument);
}

TEST(Mdp, HorizonMustBePositive) {
  auto m = build_counterexample("two_action").mdp;
  m.horizon = 0;
  EXPECT_TRUE(validate_mdp(m).has("horizon must be positive"));
}

TEST(Mdp, OtherViolations) {
  auto base = build_counterexample("two_action").mdp;
  {
    auto m = base;
    m.successors_mut(0, 0) = {{1, 1.5}, {2, -0.5}};
    EXPECT_TRUE(validate_mdp(m).has("negative probability"));
  }
  {
    auto m = base;
    m.successors_mut(0, 0) = {{7, 1.0}};
    EXPECT_TRUE(validate_mdp(m).has("successor out of range"));
  }
  {
    auto m = base;
    m.rewards(0, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_TRUE(validate_mdp(m).has("reward not finite"));
  }
  {
    auto m = base;
    m.rewards(1, 0) = 1.0;
    EXPECT_TRUE(validate_mdp(m).has("terminal state must self-loop with zero reward"));
  }
  {
    auto m = base;
    m.successors_mut(0, 0) = {{0, 1.0}};
    EXPECT_TRUE(validate_mdp(m).has("transition does not advance one layer"));
  }
  {
    auto m = base;
    m.start_dist = {0.5, 0.0, 0.0};
    EXPECT_TRUE(validate_mdp(m).has("start_dist is not a distribution"));
  }
  {
    auto m = base;
    m.discount = 0.0;
    EXPECT_TRUE(validate_mdp(m).has("discount must lie in (0, 1]"));
  }
}

TEST(Mdp, TimeAugmentShapes) {
  FiniteMdp m(2, 2);
  m.set_deterministic(0, 0, 1, 1.0);
  m.set_deterministic(0, 1, 0, 0.5);
  m.set_deterministic(1, 0, 0, 0.0);
  m.set_deterministic(1, 1, 1, 2.0);
  m.discount = 0.9;
  m.start_dist[0] = 1.0;
  const auto aug = time_augment(m, 3);
  EXPECT_EQ(aug.num_states, 8u);
  EXPECT_TRUE(validate_mdp(aug).ok());
  EXPECT_EQ(aug.horizon, 3);
  for (std::size_t s = 0; s < 2; ++s) EXPECT_TRUE(aug.terminal[augmented_index(3, s, 2)]);
  EXPECT_EQ(aug.start_dist[augmented_index(0, 0, 2)], 1.0);
  EXPECT_THROW(time_augment(aug, 2), std::invalid_argument);
}

TEST(Bellman, BranchingPolicyValues) {
  const auto ce = build_counterexample("branching");
  const auto q = backward_induction_evaluation(ce.pi0, ce.mdp);
  EXPECT_DOUBLE_EQ(q(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(q(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(q(0, 2), -2.0);
  const auto opt = optimal_values(ce.mdp);
  EXPECT_DOUBLE_EQ(opt.v[0], 3.0);
  EXPECT_EQ(opt.policy.action(0), 2u);
}

TEST(Bellman, TwoActionOptimum) {
  const auto ce = build_counterexample("two_action");
  const auto opt = optimal_values(ce.mdp);
  EXPECT_DOUBLE_EQ(opt.start_value, 2.0);
  EXPECT_EQ(opt.policy.action(0), 1u);
  EXPECT_DOUBLE_EQ(bellman_residual(QTable(3, 2, 0.0), ce.mdp), 2.0);
  EXPECT_LE(bellman_residual(opt.q, ce.mdp), 1e-12);
}

TEST(Bellman, EvaluationRoutesAgreeWithRecursion) {
  std::mt19937_64 rng(7);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = random_layered_mdp(3, 3, 2, seed);
    const auto pi = oracle::random_policy(m.num_states, m.num_actions, rng);
    const auto ref = oracle::recursive_values(m, pi);
    const auto bi = policy_values(backward_induction_evaluation(pi, m), pi);
    const auto it = iterative_policy_evaluation(pi, m, 1e-14);
    const auto ex = exact_state_values(pi, m);
    for (std::size_t s = 0; s < m.num_states; ++s) {
      EXPECT_NEAR(bi[s], ref[s], 1e-12);
      EXPECT_NEAR(it[s], ref[s], 1e-12);
      EXPECT_NEAR(ex[s], ref[s], 1e-12);
    }
  }
}

TEST(Bellman, OptimalValuesMatchEnumeration) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = random_layered_mdp(2, 2, 2, seed);  // 2^6 deterministic policies
    const auto ref = oracle::brute_force_optimal_values(m);
    const auto opt = optimal_values(m);
    for (std::size_t s = 0; s < m.num_states; ++s) EXPECT_NEAR(opt.v[s], ref[s], 1e-12);
  }
}

TEST(Bellman, BackupKEqualsRepeatedBackups) {
  std::mt19937_64 rng(3);
  const auto m = random_layered_mdp(4, 3, 3, 11);
  const auto pi = oracle::random_policy(m.num_states, m.num_actions, rng);
  const auto q0 = oracle::random_q(m.num_states, m.num_actions, rng);
  QTable q = q0;
  for (int i = 0; i < 3; ++i) q = bellman_backup(q, pi, m, 1);
  EXPECT_EQ(q, bellman_backup(q0, pi, m, 3));
  // H backups reach the exact evaluation on a DAG of depth H.
  const auto exact = backward_induction_evaluation(pi, m);
  EXPECT_LE(sup_norm_diff(bellman_backup(q0, pi, m, 4), exact), 1e-12);
}

TEST(Bellman, StationaryGridWorld) {
  const auto g = build_grid_world();
  EXPECT_TRUE(validate_mdp(g).ok());
  const auto opt = optimal_values(g, 200);
  // Shortest path is 8 moves; reward arrives on the last.
  EXPECT_NEAR(opt.v[0], std::pow(0.99, 7), 1e-12);
  EXPECT_THROW(optimal_values(g, std::nullopt), std::invalid_argument);
  // Exact LU evaluation agrees with iteration.
  const auto pi = TabularPolicy::uniform(g.num_states, 4);
  const auto ex = exact_state_values(pi, g);
  const auto it = iterative_policy_evaluation(pi, g, 1e-13);
  for (std::size_t s = 0; s < g.num_states; ++s) EXPECT_NEAR(ex[s], it[s], 1e-9);
}

TEST(Bellman, GreedificationGap) {
  const auto q = QTable::from_rows({{1.0, 2.0}});
  const auto pi = TabularPolicy::from_rows({{0.5, 0.5}});
  EXPECT_DOUBLE_EQ(greedification_gap(pi, q)[0], 0.5);
  EXPECT_DOUBLE_EQ(sup_gap(TabularPolicy::deterministic({1}, 2), q), 0.0);
}

TEST(Bellman, IterativeCapThrows) {
  const auto g = build_grid_world();
  EXPECT_THROW(iterative_policy_evaluation(TabularPolicy::uniform(g.num_states, 4), g, 1e-12, 3),
               IterationCapExceeded);
}
