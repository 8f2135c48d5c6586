#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vigpi/engine.hpp"
#include "vigpi/mdp.hpp"
#include "vigpi/operators.hpp"
#include "vigpi/tables.hpp"
#include "vigpi/verification.hpp"

namespace vigpi {

using Json = nlohmann::json;

/// Malformed or invalid structured input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace io_detail {

inline void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
T get(const Json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
std::optional<T> get_opt(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get<T>(j, key, where);
}

inline Json rows_json(const DenseTable& t) { return t.to_rows(); }

inline DenseTable table_from(const Json& j, const std::string& where) {
  try {
    return DenseTable::from_rows(j.get<std::vector<std::vector<double>>>());
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace io_detail

// ---- MDP -------------------------------------------------------------------

inline Json mdp_to_json(const FiniteMdp& m) {
  Json j;
  j["num_states"] = m.num_states;
  j["num_actions"] = m.num_actions;
  j["discount"] = m.discount;
  j["horizon"] = m.horizon ? Json(*m.horizon) : Json(nullptr);
  j["start_dist"] = m.start_dist;
  j["terminal"] = m.terminal;
  if (m.layer_of) j["layer_of"] = *m.layer_of;
  j["rewards"] = io_detail::rows_json(m.rewards);
  Json tr = Json::array();
  for (std::size_t s = 0; s < m.num_states; ++s)
    for (std::size_t a = 0; a < m.num_actions; ++a)
      for (const auto& t : m.successors(s, a)) tr.push_back({{"s", s}, {"a", a}, {"s'", t.next}, {"p", t.prob}});
  j["transitions"] = std::move(tr);
  return j;
}

/// Parses and validates; structural violations are reported as ConfigError.
inline FiniteMdp mdp_from_json(const Json& j) {
  using namespace io_detail;
  const std::string w = "mdp";
  reject_unknown_keys(j, {"num_states", "num_actions", "discount", "horizon", "start_dist", "terminal",
                          "layer_of", "rewards", "transitions"},
                      w);
  const auto S = get<std::size_t>(j, "num_states", w);
  const auto A = get<std::size_t>(j, "num_actions", w);
  if (S == 0 || A == 0) throw ConfigError("mdp: num_states and num_actions must be positive");
  FiniteMdp m(S, A);
  m.discount = get_opt<double>(j, "discount", w).value_or(1.0);
  m.horizon = get_opt<int>(j, "horizon", w);
  m.start_dist = get<std::vector<double>>(j, "start_dist", w);
  if (auto t = get_opt<std::vector<bool>>(j, "terminal", w)) m.terminal = *t;
  m.layer_of = get_opt<std::vector<int>>(j, "layer_of", w);
  m.rewards = table_from(j.at("rewards"), "mdp.rewards");
  for (const auto& t : j.at("transitions")) {
    reject_unknown_keys(t, {"s", "a", "s'", "p"}, "mdp.transitions[]");
    const auto s = get<std::size_t>(t, "s", "transition");
    const auto a = get<std::size_t>(t, "a", "transition");
    if (s >= S || a >= A) throw ConfigError("mdp.transitions: (s, a) out of range");
    m.successors_mut(s, a).push_back({get<std::size_t>(t, "s'", "transition"), get<double>(t, "p", "transition")});
  }
  if (m.start_dist.size() != S || m.terminal.size() != S || m.rewards.rows() != S || m.rewards.cols() != A)
    throw ConfigError("mdp: array sizes do not match num_states x num_actions");
  if (m.layer_of && m.layer_of->size() != S) throw ConfigError("mdp.layer_of: wrong length");
  const auto rep = validate_mdp(m);
  if (!rep.ok()) throw ConfigError("mdp: " + rep.violations.front().what);
  return m;
}

// ---- Operators and engine config --------------------------------------------

inline Json operator_to_json(const OperatorConfig& c) {
  Json j;
  j["kind"] = std::string(to_string(c.kind));
  if (c.beta) j["beta"] = *c.beta;
  if (c.schedule) j["schedule"] = {{"alpha", c.schedule->alpha}, {"beta", c.schedule->beta}};
  if (c.n_samples) j["n_samples"] = *c.n_samples;
  if (c.alpha_mix) j["alpha_mix"] = *c.alpha_mix;
  if (c.tau) j["tau"] = *c.tau;
  if (c.seed) j["seed"] = *c.seed;
  if (c.max_attempts) j["max_attempts"] = *c.max_attempts;
  return j;
}

inline OperatorConfig operator_from_json(const Json& j) {
  using namespace io_detail;
  const std::string w = "operator";
  reject_unknown_keys(j, {"kind", "beta", "schedule", "n_samples", "alpha_mix", "tau", "seed", "max_attempts"}, w);
  OperatorConfig c;
  try {
    c.kind = operator_kind_from_string(get<std::string>(j, "kind", w));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.beta = get_opt<double>(j, "beta", w);
  if (j.contains("schedule")) {
    reject_unknown_keys(j.at("schedule"), {"alpha", "beta"}, "operator.schedule");
    c.schedule = BetaSchedule{get<double>(j.at("schedule"), "alpha", "schedule"),
                              get<double>(j.at("schedule"), "beta", "schedule")};
  }
  c.n_samples = get_opt<int>(j, "n_samples", w);
  c.alpha_mix = get_opt<double>(j, "alpha_mix", w);
  c.tau = get_opt<double>(j, "tau", w);
  c.seed = get_opt<std::uint64_t>(j, "seed", w);
  c.max_attempts = get_opt<int>(j, "max_attempts", w);
  try {
    validate_operator_config(c);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

/// "greedy", "gmz:0.1", "bon_exact:4", "expectile:0.9", "inadequate:0.9", "random_search:100".
inline OperatorConfig parse_operator_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  OperatorKind kind;
  try {
    kind = operator_kind_from_string(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  auto c = OperatorConfig::of(kind);
  if (colon != std::string::npos) {
    double x;
    try {
      std::size_t used = 0;
      x = std::stod(spec.substr(colon + 1), &used);
      if (used != spec.size() - colon - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError("bad operator parameter in '" + spec + "'");
    }
    switch (kind) {
      case OperatorKind::gmz: c.beta = x; break;
      case OperatorKind::bon_exact:
      case OperatorKind::bon_sampled: c.n_samples = static_cast<int>(x); break;
      case OperatorKind::inadequate: c.alpha_mix = x; break;
      case OperatorKind::expectile: c.tau = x; break;
      case OperatorKind::random_search: c.max_attempts = static_cast<int>(x); break;
      default: throw ConfigError("operator '" + name + "' takes no parameter");
    }
  }
  if (kind == OperatorKind::bon_sampled || kind == OperatorKind::random_search) c.seed = c.seed.value_or(0);
  try {
    validate_operator_config(c);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline std::string to_string(EvalMode m) {
  switch (m) {
    case EvalMode::backup_k: return "backup_k";
    case EvalMode::exact_backward: return "exact_backward";
    case EvalMode::iterative: return "iterative";
  }
  return "unknown";
}

inline EvalMode eval_mode_from_string(const std::string& s) {
  for (auto m : {EvalMode::backup_k, EvalMode::exact_backward, EvalMode::iterative})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown eval_mode: " + s);
}

inline Json engine_to_json(const EngineConfig& c) {
  Json j;
  j["improvement"] = operator_to_json(c.improvement);
  if (c.value_improvement) j["value_improvement"] = operator_to_json(*c.value_improvement);
  j["k"] = c.k;
  j["eval_mode"] = to_string(c.eval_mode);
  j["eval_tol"] = c.eval_tol;
  j["eps_policy"] = c.eps_policy;
  j["eps_value"] = c.eps_value;
  j["max_iters"] = c.max_iters;
  j["seed"] = c.seed;
  j["record_policies"] = c.record_policies;
  j["max_eval_sweeps"] = c.max_eval_sweeps;
  if (c.q_init) j["q_init"] = io_detail::rows_json(*c.q_init);
  if (c.pi_init) j["pi_init"] = io_detail::rows_json(*c.pi_init);
  return j;
}

inline EngineConfig engine_from_json(const Json& j) {
  using namespace io_detail;
  const std::string w = "engine";
  reject_unknown_keys(j, {"improvement", "value_improvement", "k", "eval_mode", "eval_tol", "eps_policy",
                          "eps_value", "max_iters", "seed", "record_policies", "max_eval_sweeps", "q_init",
                          "pi_init"},
                      w);
  EngineConfig c;
  if (j.contains("improvement")) c.improvement = operator_from_json(j.at("improvement"));
  if (j.contains("value_improvement") && !j.at("value_improvement").is_null())
    c.value_improvement = operator_from_json(j.at("value_improvement"));
  c.k = get_opt<int>(j, "k", w).value_or(c.k);
  if (auto m = get_opt<std::string>(j, "eval_mode", w)) c.eval_mode = eval_mode_from_string(*m);
  c.eval_tol = get_opt<double>(j, "eval_tol", w).value_or(c.eval_tol);
  c.eps_policy = get_opt<double>(j, "eps_policy", w).value_or(c.eps_policy);
  c.eps_value = get_opt<double>(j, "eps_value", w).value_or(c.eps_value);
  c.max_iters = get_opt<std::size_t>(j, "max_iters", w).value_or(c.max_iters);
  c.seed = get_opt<std::uint64_t>(j, "seed", w).value_or(c.seed);
  c.record_policies = get_opt<bool>(j, "record_policies", w).value_or(c.record_policies);
  c.max_eval_sweeps = get_opt<std::size_t>(j, "max_eval_sweeps", w).value_or(c.max_eval_sweeps);
  if (j.contains("q_init")) c.q_init = QTable(table_from(j.at("q_init"), "engine.q_init"));
  if (j.contains("pi_init")) c.pi_init = TabularPolicy(table_from(j.at("pi_init"), "engine.pi_init"));
  if (c.k < 1) throw ConfigError("engine.k must be >= 1");
  if (!(c.eps_policy > 0.0) || !(c.eps_value > 0.0)) throw ConfigError("engine tolerances must be > 0");
  return c;
}

// ---- Traces ------------------------------------------------------------------

inline Json record_to_json(const IterationRecord& r) {
  Json j;
  j["iter"] = r.iter;
  j["sup_gap"] = r.sup_gap;
  j["bellman_residual"] = r.bellman_residual;
  j["q_error"] = r.q_error ? Json(*r.q_error) : Json(nullptr);
  j["start_value"] = r.start_value;
  if (r.policy_snapshot) j["policy"] = io_detail::rows_json(*r.policy_snapshot);
  return j;
}

inline IterationRecord record_from_json(const Json& j) {
  IterationRecord r;
  r.iter = j.at("iter").get<std::size_t>();
  r.sup_gap = j.at("sup_gap").get<double>();
  r.bellman_residual = j.at("bellman_residual").get<double>();
  if (!j.at("q_error").is_null()) r.q_error = j.at("q_error").get<double>();
  r.start_value = j.at("start_value").get<double>();
  if (j.contains("policy"))
    r.policy_snapshot = TabularPolicy(io_detail::table_from(j.at("policy"), "record.policy"));
  return r;
}

/// Identity and outcome of one run; the last line of a trace stream.
struct RunSummary {
  std::string run_id;
  std::uint64_t seed = 0;
  bool converged = false;
  std::size_t iters = 0;
  std::optional<double> final_q_error;
  double final_start_value = 0.0;
  std::optional<double> oracle_start_value;
  std::optional<std::size_t> iters_to_threshold;
};

inline constexpr const char* kSummaryHeader =
    "run_id,seed,converged,iters,final_q_error,final_start_value,iters_to_threshold";

/// Summary derived purely from the iteration records plus run identity.
inline RunSummary summarize_trace(const std::string& run_id, std::uint64_t seed, bool converged,
                                  const std::vector<IterationRecord>& records,
                                  std::optional<double> oracle_start_value) {
  RunSummary s;
  s.run_id = run_id;
  s.seed = seed;
  s.converged = converged;
  if (!records.empty()) {
    s.iters = records.back().iter;
    s.final_q_error = records.back().q_error;
    s.final_start_value = records.back().start_value;
  }
  s.oracle_start_value = oracle_start_value;
  if (oracle_start_value) {
    const double thr = start_value_threshold(*oracle_start_value);
    for (const auto& r : records)
      if (r.start_value >= thr) {
        s.iters_to_threshold = r.iter;
        break;
      }
  }
  return s;
}

inline Json summary_to_json(const RunSummary& s) {
  Json j;
  j["run_id"] = s.run_id;
  j["seed"] = s.seed;
  j["converged"] = s.converged;
  j["iters"] = s.iters;
  j["final_q_error"] = s.final_q_error ? Json(*s.final_q_error) : Json(nullptr);
  j["final_start_value"] = s.final_start_value;
  j["oracle_start_value"] = s.oracle_start_value ? Json(*s.oracle_start_value) : Json(nullptr);
  j["iters_to_threshold"] = s.iters_to_threshold ? Json(*s.iters_to_threshold) : Json(nullptr);
  return j;
}

/// One JSON object per iteration, then {"summary": {...}}.
inline void write_trace(std::ostream& os, const RunTrace& t, const RunSummary& s) {
  for (const auto& r : t.records) os << record_to_json(r).dump() << '\n';
  os << Json{{"summary", summary_to_json(s)}}.dump() << '\n';
}

struct ParsedTrace {
  std::vector<IterationRecord> records;
  RunSummary summary;
};

inline ParsedTrace read_trace(std::istream& is) {
  ParsedTrace out;
  bool have_summary = false;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw ConfigError(std::string("trace: ") + e.what());
    }
    if (j.contains("summary")) {
      const auto& s = j.at("summary");
      out.summary.run_id = s.at("run_id").get<std::string>();
      out.summary.seed = s.at("seed").get<std::uint64_t>();
      out.summary.converged = s.at("converged").get<bool>();
      if (!s.at("oracle_start_value").is_null())
        out.summary.oracle_start_value = s.at("oracle_start_value").get<double>();
      have_summary = true;
    } else {
      out.records.push_back(record_from_json(j));
    }
  }
  if (!have_summary) throw ConfigError("trace: missing summary record");
  out.summary = summarize_trace(out.summary.run_id, out.summary.seed, out.summary.converged, out.records,
                                out.summary.oracle_start_value);
  return out;
}

/// Shortest round-trip rendering, identical to the trace stream's.
inline std::string format_number(double x) { return Json(x).dump(); }

inline std::string summary_csv_row(const RunSummary& s) {
  std::ostringstream os;
  os << s.run_id << ',' << s.seed << ',' << (s.converged ? "true" : "false") << ',' << s.iters << ','
     << (s.final_q_error ? format_number(*s.final_q_error) : "") << ',' << format_number(s.final_start_value)
     << ',' << (s.iters_to_threshold ? std::to_string(*s.iters_to_threshold) : "");
  return os.str();
}

inline void write_summary_csv(std::ostream& os, const std::vector<RunSummary>& rows) {
  os << kSummaryHeader << '\n';
  for (const auto& r : rows) os << summary_csv_row(r) << '\n';
}

// ---- Reports -----------------------------------------------------------------

inline Json witness_to_json(const Witness& w) {
  Json j;
  j["note"] = w.note;
  if (w.pi) j["pi"] = io_detail::rows_json(*w.pi);
  if (w.q) j["q"] = io_detail::rows_json(*w.q);
  if (w.state) j["state"] = *w.state;
  if (w.iteration) j["iteration"] = *w.iteration;
  if (w.seed) j["seed"] = *w.seed;
  return j;
}

inline Json report_to_json(const CertificationReport& r) {
  Json j;
  j["operator"] = r.operator_name;
  if (r.op) j["config"] = operator_to_json(*r.op);
  j["property"] = r.property;
  j["verdict"] = std::string(to_string(r.verdict));
  Json checks = Json::array();
  for (const auto& c : r.checks) {
    Json cj;
    cj["name"] = c.name;
    cj["instances_tested"] = c.instances_tested;
    cj["passed"] = c.passed;
    cj["worst_violation"] = c.worst_violation;  // +inf serializes as null
    if (!c.detail.empty()) cj["detail"] = c.detail;
    if (c.witness) cj["witness"] = witness_to_json(*c.witness);
    checks.push_back(std::move(cj));
  }
  j["checks"] = std::move(checks);
  return j;
}

inline Json suite_to_json(const SuiteReport& s) {
  Json j;
  j["suite"] = s.name;
  j["ok"] = s.ok();
  Json a = Json::array();
  for (const auto& x : s.assertions) a.push_back({{"name", x.name}, {"passed", x.passed}, {"detail", x.detail}});
  j["assertions"] = std::move(a);
  Json c = Json::array();
  for (const auto& r : s.certifications) c.push_back(report_to_json(r));
  j["certifications"] = std::move(c);
  return j;
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace vigpi
