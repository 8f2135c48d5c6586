#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vigpi/bellman.hpp"
#include "vigpi/instances.hpp"
#include "vigpi/operators.hpp"

using namespace vigpi;

namespace {

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Greedy, SplitsTiesUniformly) {
  const auto q = QTable::from_rows({{1.0, 3.0, 3.0}, {0.0, -1.0, -2.0}});
  const auto out = greedy_op(TabularPolicy::uniform(2, 3), q);
  EXPECT_DOUBLE_EQ(out(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(out(0, 2), 0.5);
  EXPECT_DOUBLE_EQ(out(1, 0), 1.0);
  EXPECT_FALSE(out.check());
}

TEST(MinDet, StepsToNextBetterAction) {
  const auto q = QTable::from_rows({{0.0, 3.0, 1.0, 2.0}});
  auto pi = TabularPolicy::deterministic({0}, 4);
  std::vector<std::size_t> visited;
  for (int i = 0; i < 5; ++i) {
    pi = min_det_op(pi, q);
    visited.push_back(pi.action(0));
  }
  EXPECT_EQ(visited, (std::vector<std::size_t>{2, 3, 1, 1, 1}));
  EXPECT_THROW(min_det_op(TabularPolicy::uniform(1, 4), q), std::invalid_argument);
}

TEST(MinDet, ReachesArgmaxWithinActionCountSteps) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto q = oracle::random_q(6, 5, rng);
    std::uniform_int_distribution<std::size_t> pick(0, 4);
    std::vector<std::size_t> start(6);
    for (auto& a : start) a = pick(rng);
    auto pi = TabularPolicy::deterministic(start, 5);
    for (int step = 0; step < 4; ++step) pi = min_det_op(pi, q);
    EXPECT_EQ(pi, TabularPolicy::deterministic(argmax_actions(q), 5));
  }
}

TEST(Gmz, MatchesClosedFormSoftmax) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pi = oracle::random_policy(3, 4, rng);
    const auto q = oracle::random_q(3, 4, rng, -3.0, 3.0);
    const double beta = 0.1 + trial * 0.05;
    const auto out = gmz_op(pi, q, beta);
    for (std::size_t s = 0; s < 3; ++s) {
      double z = 0.0;
      for (std::size_t a = 0; a < 4; ++a) z += pi(s, a) * std::exp(beta * q(s, a));
      for (std::size_t a = 0; a < 4; ++a)
        EXPECT_NEAR(out(s, a), pi(s, a) * std::exp(beta * q(s, a)) / z, 1e-14);
    }
  }
}

TEST(Gmz, ZeroBetaIsIdentityAndZeroMassRejected) {
  std::mt19937_64 rng(2);
  const auto pi = oracle::random_policy(4, 3, rng);
  const auto q = oracle::random_q(4, 3, rng);
  EXPECT_EQ(gmz_op(pi, q, 0.0), pi);
  EXPECT_THROW(gmz_op(TabularPolicy::deterministic({0, 1, 2, 0}, 3), q, 1.0),
               std::invalid_argument);
}

TEST(Gmz, RepeatedApplicationGapClosedForm) {
  const auto q = QTable::from_rows({{1.0, 2.0}});
  auto pi = TabularPolicy::uniform(1, 2);
  const auto cfg = OperatorConfig::gmz(1.0);
  for (std::size_t n = 0; n <= 30; ++n) {
    EXPECT_NEAR(greedification_gap(pi, q)[0], oracle::sigmoid_gap(static_cast<double>(n)), 1e-10);
    pi = gmz_op(pi, q, cfg, n);
  }
}

TEST(Gmz, ScheduleScale) {
  const auto cfg = OperatorConfig::gmz_schedule(1.0, 2.0);
  EXPECT_DOUBLE_EQ(gmz_scale(cfg, 0), 1.0);
  EXPECT_DOUBLE_EQ(gmz_scale(cfg, 3), 0.125);
  EXPECT_DOUBLE_EQ(gmz_scale(OperatorConfig::gmz(0.3), 7), 0.3);
}

TEST(BonExact, MatchesTupleEnumeration) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> coarse(0, 2);
  for (int trial = 0; trial < 60; ++trial) {
    const auto pi = oracle::random_policy(1, 4, rng);
    // Coarse values force ties on many trials.
    QTable q(1, 4);
    for (std::size_t a = 0; a < 4; ++a) q(0, a) = trial % 2 ? coarse(rng) : oracle::random_q(1, 1, rng)(0, 0);
    for (int n = 1; n <= 5; ++n) {
      const auto out = bon_exact_op(pi, q, n);
      const auto ref = oracle::enumerate_best_of_n(to_vec(pi.row(0)), to_vec(q.row(0)), n);
      for (std::size_t a = 0; a < 4; ++a) EXPECT_NEAR(out(0, a), ref[a], 1e-12) << n;
    }
  }
}

TEST(BonExact, SingleSampleIsExactlyPi) {
  std::mt19937_64 rng(4);
  const auto pi = oracle::random_policy(5, 3, rng);
  EXPECT_EQ(bon_exact_op(pi, oracle::random_q(5, 3, rng), 1), pi);
}

TEST(BonSampled, DeterministicPerSeed) {
  std::mt19937_64 rng(6);
  const auto pi = oracle::random_policy(5, 3, rng);
  const auto q = oracle::random_q(5, 3, rng);
  EXPECT_EQ(bon_sampled_op(pi, q, 4, 17), bon_sampled_op(pi, q, 4, 17));
  EXPECT_TRUE(bon_sampled_op(pi, q, 4, 17).is_deterministic());
}

TEST(Inadequate, StallsAtSoftmax) {
  const auto q = QTable::from_rows({{1.0, 2.0}});
  auto pi = TabularPolicy::uniform(1, 2);
  for (int i = 0; i < 2000; ++i) pi = inadequate_op(pi, q, 0.9);
  EXPECT_NEAR(pi(0, 1), std::exp(1.0) / (1.0 + std::exp(1.0)), 1e-12);
  // Above the softmax value it jumps to the argmax.
  const auto jump = inadequate_op(TabularPolicy::from_rows({{0.1, 0.9}}), q, 0.9);
  EXPECT_DOUBLE_EQ(jump(0, 1), 1.0);
}

TEST(RandomSearch, FindsImprovementOnBranching) {
  const auto ce = build_counterexample("branching");
  const auto found = random_search_improvement_op(ce.pi0, ce.mdp, 1, 1000);
  ASSERT_TRUE(found.has_value());
  const auto base = oracle::recursive_values(ce.mdp, ce.pi0);
  const auto next = oracle::recursive_values(ce.mdp, *found);
  bool better = false;
  for (std::size_t s = 0; s < base.size(); ++s) {
    EXPECT_GE(next[s], base[s] - 1e-12);
    better = better || next[s] > base[s] + 1e-12;
  }
  EXPECT_TRUE(better);
  EXPECT_THROW(random_search_improvement_op(ce.pi0, build_grid_world(), 1, 5),
               std::invalid_argument);
}

TEST(OperatorConfig, Validation) {
  EXPECT_NO_THROW(validate_operator_config(OperatorConfig::gmz(1.0)));
  EXPECT_NO_THROW(validate_operator_config(OperatorConfig::expectile(0.9)));
  auto bad = OperatorConfig::greedy();
  bad.beta = 1.0;
  EXPECT_THROW(validate_operator_config(bad), std::invalid_argument);
  EXPECT_THROW(validate_operator_config(OperatorConfig::bon_exact(0)), std::invalid_argument);
  EXPECT_THROW(validate_operator_config(OperatorConfig::inadequate(1.0)), std::invalid_argument);
  EXPECT_THROW(validate_operator_config(OperatorConfig::of(OperatorKind::gmz)), std::invalid_argument);
  EXPECT_THROW(validate_operator_config(OperatorConfig::gmz_schedule(1.0, 1.0)),
               std::invalid_argument);
  EXPECT_THROW(operator_kind_from_string("softmax"), std::invalid_argument);
  EXPECT_EQ(operator_kind_from_string("bon_exact"), OperatorKind::bon_exact);
}

TEST(OperatorConfig, ApplyDispatch) {
  std::mt19937_64 rng(8);
  const auto pi = oracle::random_policy(3, 3, rng);
  const auto q = oracle::random_q(3, 3, rng);
  EXPECT_EQ(apply_operator(OperatorConfig::identity(), pi, q), pi);
  EXPECT_EQ(apply_operator(OperatorConfig::greedy(), pi, q), greedy_op(pi, q));
  EXPECT_THROW(apply_operator(OperatorConfig::expectile(0.9), pi, q), std::invalid_argument);
  const auto op = make_operator(OperatorConfig::bon_sampled(3, 5));
  EXPECT_EQ(op(pi, q, 2), op(pi, q, 2));
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
}
