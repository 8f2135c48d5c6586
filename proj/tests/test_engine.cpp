#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "vigpi/engine.hpp"
#include "vigpi/instances.hpp"

using namespace vigpi;

namespace {

void expect_same_trace(const RunTrace& a, const RunTrace& b) {
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].iter, b.records[i].iter);
    EXPECT_EQ(a.records[i].sup_gap, b.records[i].sup_gap);
    EXPECT_EQ(a.records[i].bellman_residual, b.records[i].bellman_residual);
    EXPECT_EQ(a.records[i].q_error, b.records[i].q_error);
    EXPECT_EQ(a.records[i].start_value, b.records[i].start_value);
  }
  EXPECT_EQ(a.converged, b.converged);
  EXPECT_EQ(a.final_policy, b.final_policy);
  EXPECT_EQ(a.final_q, b.final_q);
}

}  // namespace

TEST(Engine, TwoActionGreedyConverges) {
  const auto ce = build_counterexample("two_action");
  EngineConfig c;
  const auto t = gpi_run(ce.mdp, c);
  EXPECT_TRUE(t.converged);
  EXPECT_LE(t.iterations(), 2u);
  EXPECT_DOUBLE_EQ(t.records.back().start_value, 2.0);
}

TEST(Engine, InadequateStalls) {
  const auto ce = build_counterexample("two_action");
  EngineConfig c;
  c.improvement = OperatorConfig::inadequate(0.9);
  c.max_iters = 10'000;
  const auto t = gpi_run(ce.mdp, c);
  EXPECT_FALSE(t.converged);
  EXPECT_EQ(t.iterations(), 10'000u);
  EXPECT_NEAR(t.final_policy(0, 1), std::exp(1.0) / (1.0 + std::exp(1.0)), 1e-6);
}

TEST(Engine, StoppingCheckExamples) {
  const auto ce = build_counterexample("two_action");
  const auto opt = optimal_values(ce.mdp);
  const auto at_opt = stopping_check(opt.policy, opt.q, ce.mdp, 1e-9, 1e-9);
  EXPECT_TRUE(at_opt.stop);
  EXPECT_LE(at_opt.sup_gap, 1e-12);
  EXPECT_LE(at_opt.bellman_residual, 1e-12);
  const auto zeros = stopping_check(ce.pi0, QTable(3, 2, 0.0), ce.mdp, 1e-9, 1e-9);
  EXPECT_FALSE(zeros.stop);
  EXPECT_DOUBLE_EQ(zeros.bellman_residual, 2.0);
  const auto soft = stopping_check(softmax_policy(opt.q), opt.q, ce.mdp, 1e-9, 1e-9);
  EXPECT_FALSE(soft.stop);
  EXPECT_NEAR(soft.sup_gap, 0.26894, 1e-5);
}

TEST(Engine, GreedyMatchesOracleWithinHorizon) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = random_layered_mdp(4, 5, 3, seed);
    const auto opt = optimal_values(m);
    const auto t = gpi_run(m, EngineConfig{}, opt.q);
    EXPECT_TRUE(t.converged);
    EXPECT_LE(t.records[4].q_error.value(), 1e-9) << seed;
  }
}

TEST(Engine, IdentityValueImprovementDegenerates) {
  const auto m = random_layered_mdp(3, 4, 3, 21);
  for (const auto& op : {OperatorConfig::greedy(), OperatorConfig::gmz(0.5),
                         OperatorConfig::bon_sampled(3, 4)}) {
    EngineConfig c;
    c.improvement = op;
    c.max_iters = 50;
    c.seed = 99;
    const auto a = gpi_run(m, c);
    c.value_improvement = OperatorConfig::identity();
    const auto b = vigpi_run(m, c);
    expect_same_trace(a, b);
  }
}

TEST(Engine, Deterministic) {
  const auto m = random_layered_mdp(3, 4, 3, 22);
  EngineConfig c;
  c.improvement = OperatorConfig::bon_sampled(2, 1);
  c.value_improvement = OperatorConfig::bon_sampled(4, 2);
  c.max_iters = 30;
  c.seed = 5;
  expect_same_trace(vigpi_run(m, c), vigpi_run(m, c));
}

TEST(Engine, ExactEvaluationMonotoneStartValue) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = random_layered_mdp(4, 4, 3, seed);
    for (const auto& op : {OperatorConfig::greedy(), OperatorConfig::gmz(1.0),
                           OperatorConfig::bon_exact(3)}) {
      EngineConfig c;
      c.improvement = op;
      c.eval_mode = EvalMode::exact_backward;
      c.max_iters = 40;
      const auto t = gpi_run(m, c);
      for (std::size_t i = 1; i < t.records.size(); ++i)
        EXPECT_GE(t.records[i].start_value, t.records[i - 1].start_value - 1e-10);
    }
  }
}

TEST(Engine, FiniteStepOperatorsConvergeUnderExactEvaluation) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = random_layered_mdp(4, 5, 3, seed);
    EngineConfig c;
    c.eval_mode = EvalMode::exact_backward;
    c.max_iters = 1000;
    EXPECT_TRUE(gpi_run(m, c).converged);
    c.improvement = OperatorConfig::min_det();
    c.pi_init = TabularPolicy::deterministic(std::vector<std::size_t>(m.num_states, 0), 3);
    EXPECT_TRUE(gpi_run(m, c).converged);
  }
}

TEST(Engine, ValueImprovementOperatorsReachOptimum) {
  const auto m = random_layered_mdp(4, 5, 3, 3);
  const auto opt = optimal_values(m);
  for (const auto& vi : {OperatorConfig::greedy(), OperatorConfig::bon_exact(4),
                         OperatorConfig::expectile(0.9)}) {
    EngineConfig c;
    c.value_improvement = vi;
    const auto t = vigpi_run(m, c, opt.q);
    EXPECT_TRUE(t.converged);
    EXPECT_LE(t.records.back().q_error.value(), 1e-9);
  }
}

TEST(Engine, IterativeModeOnGridWorld) {
  const auto g = build_grid_world();
  EngineConfig c;
  c.eval_mode = EvalMode::iterative;
  c.eval_tol = 1e-12;
  c.max_iters = 200;
  const auto opt = optimal_values(g, 200);
  const auto t = gpi_run(g, c, opt.q);
  EXPECT_TRUE(t.converged);
  EXPECT_NEAR(t.records.back().start_value, opt.start_value, 1e-9);
}

TEST(Engine, ErrorsCarryIteration) {
  const auto m = random_layered_mdp(2, 2, 2, 1);
  EngineConfig c;
  c.improvement = OperatorConfig::min_det();  // uniform pi_init is not deterministic
  try {
    gpi_run(m, c);
    FAIL() << "expected EngineError";
  } catch (const EngineError& e) {
    EXPECT_EQ(e.iteration(), 1u);
    EXPECT_FALSE(e.cap_exceeded());
  }
  EngineConfig d;
  d.eval_mode = EvalMode::iterative;
  d.eval_tol = 1e-15;
  d.max_eval_sweeps = 2;
  try {
    gpi_run(build_grid_world(), d);
    FAIL() << "expected EngineError";
  } catch (const EngineError& e) {
    EXPECT_TRUE(e.cap_exceeded());
  }
  EngineConfig bad;
  bad.value_improvement = OperatorConfig::greedy();
  EXPECT_THROW(gpi_run(m, bad), std::invalid_argument);
  EngineConfig exact;
  exact.eval_mode = EvalMode::exact_backward;
  EXPECT_THROW(gpi_run(build_grid_world(), exact), std::invalid_argument);
}

TEST(Engine, ThresholdHelpers) {
  EXPECT_DOUBLE_EQ(start_value_threshold(2.0), 1.9);
  EXPECT_DOUBLE_EQ(start_value_threshold(-2.0), -2.1);
  RunTrace t;
  t.records.resize(3);
  for (std::size_t i = 0; i < 3; ++i) {
    t.records[i].iter = i;
    t.records[i].start_value = static_cast<double>(i);
  }
  EXPECT_EQ(first_iter_reaching(t, 1.5), 2u);
  EXPECT_FALSE(first_iter_reaching(t, 3.0).has_value());
}
