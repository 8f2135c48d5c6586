#include <gtest/gtest.h>

#include <sstream>

#include "vigpi/instances.hpp"
#include "vigpi/io.hpp"

using namespace vigpi;

TEST(Io, MdpRoundTrip) {
  for (const auto& m : {random_layered_mdp(3, 4, 2, 7), build_grid_world(), build_counterexample("branching").mdp}) {
    const auto back = mdp_from_json(Json::parse(mdp_to_json(m).dump()));
    EXPECT_EQ(back, m);
  }
}

TEST(Io, MdpRejectsInvalid) {
  auto j = mdp_to_json(build_counterexample("two_action").mdp);
  auto bad = j;
  bad["transitions"][0]["p"] = 0.5;
  EXPECT_THROW(mdp_from_json(bad), ConfigError);
  bad = j;
  bad["extra"] = 1;
  EXPECT_THROW(mdp_from_json(bad), ConfigError);
  bad = j;
  bad["start_dist"] = {1.0};
  EXPECT_THROW(mdp_from_json(bad), ConfigError);
  bad = j;
  bad["transitions"][0]["s"] = 99;
  EXPECT_THROW(mdp_from_json(bad), ConfigError);
}

TEST(Io, OperatorRoundTripAndSpecs) {
  for (const auto& c : {OperatorConfig::gmz(0.3), OperatorConfig::gmz_schedule(1.0, 2.0),
                        OperatorConfig::bon_sampled(4, 9), OperatorConfig::expectile(0.9),
                        OperatorConfig::inadequate(0.9), OperatorConfig::min_det()}) {
    const auto back = operator_from_json(operator_to_json(c));
    EXPECT_EQ(operator_to_json(back), operator_to_json(c));
  }
  EXPECT_EQ(*parse_operator_spec("gmz:0.1").beta, 0.1);
  EXPECT_EQ(*parse_operator_spec("bon_exact:4").n_samples, 4);
  EXPECT_EQ(parse_operator_spec("greedy").kind, OperatorKind::greedy);
  EXPECT_THROW(parse_operator_spec("greedy:2"), ConfigError);
  EXPECT_THROW(parse_operator_spec("gmz:abc"), ConfigError);
  EXPECT_THROW(parse_operator_spec("softmax"), ConfigError);
  EXPECT_THROW(operator_from_json(Json{{"kind", "gmz"}}), ConfigError);
}

TEST(Io, EngineConfigRoundTrip) {
  EngineConfig c;
  c.improvement = OperatorConfig::gmz(0.5);
  c.value_improvement = OperatorConfig::greedy();
  c.eval_mode = EvalMode::iterative;
  c.eval_tol = 1e-4;
  c.k = 3;
  c.max_iters = 77;
  c.seed = 12;
  c.pi_init = TabularPolicy::uniform(2, 3);
  const auto j = engine_to_json(c);
  EXPECT_EQ(engine_to_json(engine_from_json(j)), j);
  auto bad = j;
  bad["unknown"] = true;
  EXPECT_THROW(engine_from_json(bad), ConfigError);
  bad = j;
  bad["eval_mode"] = "magic";
  EXPECT_THROW(engine_from_json(bad), ConfigError);
}

TEST(Io, TraceRoundTripRebuildsSummary) {
  RunTrace t;
  for (std::size_t i = 0; i < 4; ++i) {
    IterationRecord r;
    r.iter = i;
    r.sup_gap = 0.1 / (i + 1);
    r.bellman_residual = 0.3 / (i + 1);
    r.q_error = i == 0 ? std::nullopt : std::optional<double>(1.0 / 3.0 / i);
    r.start_value = 0.25 * i;
    t.records.push_back(r);
  }
  const auto s = summarize_trace("x_r0", 5, false, t.records, 0.75);
  ASSERT_TRUE(s.iters_to_threshold.has_value());
  EXPECT_EQ(*s.iters_to_threshold, 4u - 1u);
  std::stringstream ss;
  write_trace(ss, t, s);
  const auto parsed = read_trace(ss);
  ASSERT_EQ(parsed.records.size(), 4u);
  EXPECT_FALSE(parsed.records[0].q_error.has_value());
  EXPECT_EQ(parsed.records[2].q_error, t.records[2].q_error);
  EXPECT_EQ(summary_csv_row(parsed.summary), summary_csv_row(s));
  EXPECT_EQ(summary_csv_row(s), "x_r0,5,false,3,0.1111111111111111,0.75,3");
}

TEST(Io, TraceWithoutSummaryRejected) {
  std::stringstream ss("{\"iter\":0,\"sup_gap\":0,\"bellman_residual\":0,\"q_error\":null,\"start_value\":0}\n");
  EXPECT_THROW(read_trace(ss), ConfigError);
}

TEST(Io, ReportSerialization) {
  SuiteReport s;
  s.name = "demo";
  s.assertions.push_back({"a", true, "fine"});
  CertificationReport r;
  r.operator_name = "greedy";
  r.property = "greedification";
  r.verdict = Verdict::refuted;
  auto c = make_check("no_state_worse");
  c.passed = false;
  c.worst_violation = -0.5;
  c.witness = make_witness("here", TabularPolicy::uniform(1, 2), QTable::from_rows({{0.0, 1.0}}), 0);
  r.checks.push_back(c);
  s.certifications.push_back(r);
  const auto j = suite_to_json(s);
  EXPECT_TRUE(j["ok"].get<bool>());
  EXPECT_EQ(j["certifications"][0]["verdict"], "refuted");
  EXPECT_EQ(j["certifications"][0]["checks"][0]["witness"]["state"], 0);
  EXPECT_EQ(j["certifications"][0]["checks"][0]["worst_violation"], -0.5);
}
