#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vigpi/bellman.hpp"
#include "vigpi/engine.hpp"
#include "vigpi/instances.hpp"
#include "vigpi/io.hpp"
#include "vigpi/verification.hpp"

namespace vigpi {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 1;
inline constexpr int config = 2;
inline constexpr int verification = 3;
inline constexpr int cap_exceeded = 4;
inline constexpr int mdp_source = 5;
}  // namespace exit_code

/// The MDP named in a config or on the command line could not be found.
class MdpSourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& builtin_mdp_names() {
  static const std::vector<std::string> names{"two_action", "branching", "oscillating", "grid_world",
                                              "random_layered"};
  return names;
}

/// Builtin by name (with optional params object) or a JSON file path.
inline FiniteMdp resolve_mdp(const std::string& source, const Json& params = Json::object(),
                             const std::filesystem::path& base_dir = {}) {
  using namespace io_detail;
  if (source == "two_action" || source == "branching" || source == "oscillating") {
    if (!params.empty()) throw ConfigError(source + " takes no params");
    return build_counterexample(source).mdp;
  }
  if (source == "grid_world") {
    reject_unknown_keys(params, {"width", "height", "goal_reward", "step_reward", "discount"}, "grid_world");
    GridWorldParams p;
    p.width = get_opt<int>(params, "width", "grid_world").value_or(p.width);
    p.height = get_opt<int>(params, "height", "grid_world").value_or(p.height);
    p.goal_reward = get_opt<double>(params, "goal_reward", "grid_world").value_or(p.goal_reward);
    p.step_reward = get_opt<double>(params, "step_reward", "grid_world").value_or(p.step_reward);
    p.discount = get_opt<double>(params, "discount", "grid_world").value_or(p.discount);
    try {
      return build_grid_world(p);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (source == "random_layered") {
    reject_unknown_keys(params, {"layers", "states_per_layer", "actions", "seed"}, "random_layered");
    const auto w = std::string("random_layered");
    try {
      return random_layered_mdp(get_opt<int>(params, "layers", w).value_or(4),
                                get_opt<int>(params, "states_per_layer", w).value_or(5),
                                get_opt<int>(params, "actions", w).value_or(3),
                                get_opt<std::uint64_t>(params, "seed", w).value_or(0));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  std::filesystem::path p(source);
  if (p.is_relative() && !base_dir.empty() && !std::filesystem::exists(p)) p = base_dir / p;
  if (!std::filesystem::is_regular_file(p))
    throw MdpSourceError("cannot resolve MDP source '" + source + "' (not a builtin or readable file)");
  return mdp_from_json(load_json_file(p.string()));
}

/// Optimal solution used as the run oracle; stationary MDPs are truncated at `horizon`.
inline OptimalSolution oracle_for(const FiniteMdp& m, std::optional<int> horizon) {
  if (m.is_layered()) return optimal_values(m);
  return optimal_values(m, horizon ? horizon : (m.horizon ? m.horizon : std::optional<int>(200)));
}

struct ExperimentConfig {
  std::string name = "run";
  FiniteMdp mdp;
  EngineConfig engine;
  int repeats = 1;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  bool emit_trace = true;
  bool emit_summary = true;
  bool emit_policy = true;
  std::optional<int> oracle_horizon;
};

inline ExperimentConfig experiment_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
  using namespace io_detail;
  const std::string w = "config";
  reject_unknown_keys(j, {"name", "mdp", "engine", "repeats", "seed", "output_dir", "emit", "oracle_horizon"}, w);
  ExperimentConfig c;
  c.name = get_opt<std::string>(j, "name", w).value_or(c.name);
  if (c.name.empty() || c.name.find('/') != std::string::npos) throw ConfigError("config.name must be a plain file stem");
  if (!j.contains("mdp")) throw ConfigError("config.mdp is required");
  const auto& m = j.at("mdp");
  reject_unknown_keys(m, {"builtin", "params", "file"}, "config.mdp");
  if (m.contains("builtin") == m.contains("file"))
    throw ConfigError("config.mdp needs exactly one of 'builtin' or 'file'");
  if (m.contains("builtin")) {
    const auto name = get<std::string>(m, "builtin", "config.mdp");
    if (std::find(builtin_mdp_names().begin(), builtin_mdp_names().end(), name) == builtin_mdp_names().end())
      throw MdpSourceError("unknown builtin MDP '" + name + "'");
    c.mdp = resolve_mdp(name, m.value("params", Json::object()), base_dir);
  } else {
    if (m.contains("params")) throw ConfigError("config.mdp.params only applies to builtins");
    c.mdp = resolve_mdp(get<std::string>(m, "file", "config.mdp"), Json::object(), base_dir);
  }
  if (j.contains("engine")) c.engine = engine_from_json(j.at("engine"));
  c.repeats = get_opt<int>(j, "repeats", w).value_or(1);
  if (c.repeats < 1) throw ConfigError("config.repeats must be >= 1");
  c.seed = get_opt<std::uint64_t>(j, "seed", w).value_or(0);
  c.output_dir = get_opt<std::string>(j, "output_dir", w).value_or(c.output_dir);
  if (auto emit = get_opt<std::vector<std::string>>(j, "emit", w)) {
    c.emit_trace = c.emit_summary = c.emit_policy = false;
    for (const auto& e : *emit) {
      if (e == "trace") c.emit_trace = true;
      else if (e == "summary") c.emit_summary = true;
      else if (e == "policy") c.emit_policy = true;
      else throw ConfigError("config.emit: unknown item '" + e + "'");
    }
  }
  c.oracle_horizon = get_opt<int>(j, "oracle_horizon", w);
  return c;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("cannot open config " + path);
  return experiment_from_json(load_json_file(path), std::filesystem::path(path).parent_path());
}

/// VIGPI_SEED, when set, replaces the config base seed.
inline std::uint64_t effective_seed(std::uint64_t config_seed) {
  const char* env = std::getenv("VIGPI_SEED");
  if (!env || !*env) return config_seed;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("VIGPI_SEED is not an unsigned integer: ") + env);
  }
}

struct RunOutcome {
  RunSummary summary;
  RunTrace trace;
};

/// One engine run; GPI when no value-improvement operator is configured.
inline RunOutcome execute_run(const FiniteMdp& mdp, EngineConfig engine, const std::string& run_id,
                              std::uint64_t seed, const OptimalSolution& oracle) {
  engine.seed = seed;
  RunOutcome o;
  o.trace = engine.value_improvement ? vigpi_run(mdp, engine, oracle.q) : gpi_run(mdp, engine, oracle.q);
  o.summary = summarize_trace(run_id, seed, o.trace.converged, o.trace.records, oracle.start_value);
  return o;
}

inline void write_run_files(const ExperimentConfig& c, const std::filesystem::path& dir, const RunOutcome& o) {
  if (c.emit_trace) {
    std::ofstream f(dir / (o.summary.run_id + ".trace.jsonl"));
    write_trace(f, o.trace, o.summary);
  }
  if (c.emit_policy) {
    Json j;
    j["run_id"] = o.summary.run_id;
    j["policy"] = o.trace.final_policy.to_rows();
    j["q"] = o.trace.final_q.to_rows();
    std::ofstream f(dir / (o.summary.run_id + ".policy.json"));
    f << j.dump(2) << '\n';
  }
}

/// A named sweep axis and the raw value strings to apply.
struct SweepAxis {
  std::string param;
  std::vector<std::string> values;
};

inline double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double x = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(what + ": not a number: '" + s + "'");
  }
}

inline bool is_bon(const OperatorConfig& c) {
  return c.kind == OperatorKind::bon_exact || c.kind == OperatorKind::bon_sampled;
}

/// Operator-kind parameters (pi, vi) first so numeric parameters land on the final kinds.
inline void apply_sweep_value(EngineConfig& e, const std::string& param, const std::string& value) {
  if (param == "pi") {
    e.improvement = parse_operator_spec(value);
  } else if (param == "vi") {
    if (value == "none") e.value_improvement.reset();
    else e.value_improvement = parse_operator_spec(value);
  } else if (param == "beta") {
    if (e.improvement.kind != OperatorKind::gmz) throw ConfigError("sweep beta needs a gmz improvement operator");
    e.improvement.beta = parse_number(value, param);
    e.improvement.schedule.reset();
  } else if (param == "vi_beta") {
    if (!e.value_improvement || e.value_improvement->kind != OperatorKind::gmz)
      throw ConfigError("sweep vi_beta needs a gmz value-improvement operator");
    e.value_improvement->beta = parse_number(value, param);
  } else if (param == "tau") {
    if (!e.value_improvement || e.value_improvement->kind != OperatorKind::expectile)
      throw ConfigError("sweep tau needs an expectile value-improvement operator");
    e.value_improvement->tau = parse_number(value, param);
  } else if (param == "n") {
    const double x = parse_number(value, param);
    bool any = false;
    if (is_bon(e.improvement)) e.improvement.n_samples = static_cast<int>(x), any = true;
    if (e.value_improvement && is_bon(*e.value_improvement)) e.value_improvement->n_samples = static_cast<int>(x), any = true;
    if (!any) throw ConfigError("sweep n needs a best-of-N operator");
  } else if (param == "k") {
    e.k = static_cast<int>(parse_number(value, param));
  } else {
    throw ConfigError("unknown sweep parameter '" + param + "' (beta, vi_beta, tau, n, k, vi, pi)");
  }
}

inline std::string sanitize(std::string s) {
  for (auto& ch : s)
    if (ch == ':' || ch == '/' || ch == ' ' || ch == ',') ch = '-';
  return s;
}

inline std::string pad3(std::size_t i) {
  std::ostringstream os;
  os << std::setw(3) << std::setfill('0') << i;
  return os.str();
}

/// Runs every cell x repeat, writes files and summary.csv, prints the summary table.
inline int run_experiment(const ExperimentConfig& c, const std::vector<SweepAxis>& axes, std::ostream& out) {
  const std::uint64_t base_seed = effective_seed(c.seed);
  const auto oracle = oracle_for(c.mdp, c.oracle_horizon);

  std::vector<std::vector<std::size_t>> cells{{}};
  for (const auto& axis : axes) {
    std::vector<std::vector<std::size_t>> next;
    for (const auto& cell : cells)
      for (std::size_t i = 0; i < axis.values.size(); ++i) {
        auto x = cell;
        x.push_back(i);
        next.push_back(std::move(x));
      }
    cells = std::move(next);
  }

  std::vector<std::size_t> order(axes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    auto kind = [&](std::size_t i) { return axes[i].param == "pi" || axes[i].param == "vi"; };
    return kind(a) && !kind(b);
  });

  const std::filesystem::path dir(c.output_dir);
  std::filesystem::create_directories(dir);
  std::vector<RunSummary> rows;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    EngineConfig e = c.engine;
    std::string id = c.name;
    if (!axes.empty()) id += "_c" + pad3(ci);
    for (std::size_t i = 0; i < axes.size(); ++i)
      id += "_" + axes[i].param + "=" + sanitize(axes[i].values[cells[ci][i]]);
    for (std::size_t i : order) apply_sweep_value(e, axes[i].param, axes[i].values[cells[ci][i]]);
    try {
      validate_operator_config(e.improvement);
      if (e.value_improvement) validate_operator_config(*e.value_improvement);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(id + ": " + ex.what());
    }
    for (int r = 0; r < c.repeats; ++r) {
      const std::string run_id = id + "_r" + std::to_string(r);
      const auto o = execute_run(c.mdp, e, run_id, base_seed + static_cast<std::uint64_t>(r), oracle);
      write_run_files(c, dir, o);
      rows.push_back(o.summary);
    }
  }
  std::sort(rows.begin(), rows.end(), [](const RunSummary& a, const RunSummary& b) { return a.run_id < b.run_id; });
  if (c.emit_summary) {
    std::ofstream f(dir / "summary.csv");
    write_summary_csv(f, rows);
  }
  write_summary_csv(out, rows);
  return exit_code::ok;
}

/// summary.csv rebuilt from the trace files in `dir`, ordered by run_id.
inline std::vector<RunSummary> summaries_from_traces(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    const std::string suffix = ".trace.jsonl";
    if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunSummary> rows;
  for (const auto& f : files) {
    std::ifstream in(f);
    rows.push_back(read_trace(in).summary);
  }
  std::sort(rows.begin(), rows.end(), [](const RunSummary& a, const RunSummary& b) { return a.run_id < b.run_id; });
  return rows;
}

inline void print_suite(std::ostream& out, const SuiteReport& s) {
  out << "suite " << s.name << ": " << (s.ok() ? "ok" : "FAILED") << '\n';
  for (const auto& a : s.assertions)
    out << "  [" << (a.passed ? "pass" : "FAIL") << "] " << a.name << (a.detail.empty() ? "" : ": " + a.detail)
        << '\n';
  for (const auto& r : s.certifications) {
    out << "  " << r.operator_name << " / " << r.property << ": " << to_string(r.verdict) << '\n';
    for (const auto& ch : r.checks)
      if (!ch.passed) out << "      " << ch.name << " failed" << (ch.detail.empty() ? "" : ": " + ch.detail) << '\n';
  }
}

inline void print_oracle(std::ostream& out, const FiniteMdp& m, const OptimalSolution& sol) {
  out << "V*(start)=" << format_number(sol.start_value) << '\n';
  for (std::size_t s = 0; s < m.num_states; ++s) {
    if (m.terminal[s]) continue;
    out << "V*(s" << s << ")=" << format_number(sol.v[s]) << " pi*(s" << s << ")=a" << (sol.policy.action(s) + 1)
        << " q*(s" << s << ",.)=[";
    for (std::size_t a = 0; a < m.num_actions; ++a) out << (a ? ", " : "") << format_number(sol.q(s, a));
    out << "]\n";
  }
}

/**
 * Entry point shared by the executable and the tests. Subcommands: run,
 * sweep, verify, oracle, summarize. Returns the process exit status.
 */
inline int execute_command(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Value-improved generalized policy iteration toolkit", "vigpi"};
  app.require_subcommand(1);

  std::string config_path, output_dir;
  auto* run = app.add_subcommand("run", "Run the configured engine for every repeat");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--output-dir", output_dir, "Override config output_dir");

  std::vector<std::string> sweep_params, sweep_values;
  auto* sweep = app.add_subcommand("sweep", "Cross product of runs over parameters");
  sweep->add_option("--config", config_path, "Experiment config (JSON)")->required();
  sweep->add_option("--param", sweep_params, "beta, vi_beta, tau, n, k, vi or pi (repeatable)")->required();
  sweep->add_option("--values", sweep_values, "Comma-separated values, one list per --param")->required();
  sweep->add_option("--output-dir", output_dir, "Override config output_dir");

  std::string suite = "all", report_path;
  std::uint64_t verify_seed = 0;
  std::size_t oracle_instances = 100;
  auto* verify = app.add_subcommand("verify", "Run verification suites");
  verify->add_option("--suite", suite, "counterexamples, operators, oracle or all")
      ->check(CLI::IsMember({"counterexamples", "operators", "oracle", "all"}));
  verify->add_option("--seed", verify_seed, "Suite seed");
  verify->add_option("--instances", oracle_instances, "Random MDPs in the oracle suite");
  verify->add_option("--out", report_path, "Write the JSON report here");

  std::string mdp_source;
  std::optional<int> horizon;
  bool as_json = false;
  auto* oracle = app.add_subcommand("oracle", "Print q*, V* and an optimal deterministic policy");
  oracle->add_option("--mdp", mdp_source, "Builtin name or MDP file")->required();
  oracle->add_option("--horizon", horizon, "Truncation horizon for stationary MDPs");
  oracle->add_flag("--json", as_json, "Print JSON instead of text");

  std::string summarize_dir, summarize_out;
  auto* summarize = app.add_subcommand("summarize", "Rebuild summary.csv from trace files");
  summarize->add_option("--dir", summarize_dir, "Directory holding *.trace.jsonl")->required();
  summarize->add_option("--out", summarize_out, "Write here instead of stdout");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "vigpi: usage error: " << e.what() << " (see --help)\n";
    return exit_code::usage;
  }

  try {
    if (*run || *sweep) {
      auto cfg = load_experiment(config_path);
      if (!output_dir.empty()) cfg.output_dir = output_dir;
      std::vector<SweepAxis> axes;
      if (*sweep) {
        if (sweep_params.size() != sweep_values.size())
          throw ConfigError("sweep needs one --values list per --param");
        for (std::size_t i = 0; i < sweep_params.size(); ++i) {
          SweepAxis a{sweep_params[i], {}};
          std::stringstream ss(sweep_values[i]);
          for (std::string v; std::getline(ss, v, ',');)
            if (!v.empty()) a.values.push_back(v);
          if (a.values.empty()) throw ConfigError("sweep: empty value list for " + a.param);
          axes.push_back(std::move(a));
        }
      }
      return run_experiment(cfg, axes, out);
    }
    if (*verify) {
      std::vector<SuiteReport> reports;
      if (suite == "counterexamples" || suite == "all") reports.push_back(run_counterexample_suite());
      if (suite == "operators" || suite == "all") reports.push_back(run_operator_suite(verify_seed));
      if (suite == "oracle" || suite == "all")
        reports.push_back(oracle_equivalence_suite(oracle_instances, verify_seed, OracleSuiteOptions{}));
      bool ok = true;
      Json j = Json::array();
      for (const auto& r : reports) {
        print_suite(out, r);
        ok = ok && r.ok();
        j.push_back(suite_to_json(r));
      }
      if (!report_path.empty()) {
        std::ofstream f(report_path);
        if (!f) throw ConfigError("cannot write " + report_path);
        f << j.dump(2) << '\n';
      }
      return ok ? exit_code::ok : exit_code::verification;
    }
    if (*oracle) {
      auto m = resolve_mdp(mdp_source);
      if (horizon && *horizon < 1) throw ConfigError("--horizon must be >= 1");
      const auto sol = oracle_for(m, horizon);
      if (as_json) {
        Json j;
        j["start_value"] = sol.start_value;
        j["v"] = sol.v;
        j["q"] = sol.q.to_rows();
        j["policy"] = argmax_actions(sol.q);
        out << j.dump(2) << '\n';
      } else {
        print_oracle(out, m, sol);
      }
      return exit_code::ok;
    }
    if (*summarize) {
      const auto rows = summaries_from_traces(summarize_dir);
      if (summarize_out.empty()) {
        write_summary_csv(out, rows);
      } else {
        std::ofstream f(summarize_out);
        write_summary_csv(f, rows);
      }
      return exit_code::ok;
    }
  } catch (const MdpSourceError& e) {
    err << "vigpi: " << e.what() << '\n';
    return exit_code::mdp_source;
  } catch (const ConfigError& e) {
    err << "vigpi: config error: " << e.what() << '\n';
    return exit_code::config;
  } catch (const EngineError& e) {
    err << "vigpi: engine error at iteration " << e.iteration() << ": " << e.what() << '\n';
    return e.cap_exceeded() ? exit_code::cap_exceeded : exit_code::config;
  } catch (const std::invalid_argument& e) {
    err << "vigpi: config error: " << e.what() << '\n';
    return exit_code::config;
  } catch (const Json::exception& e) {
    err << "vigpi: config error: " << e.what() << '\n';
    return exit_code::config;
  }
  return exit_code::usage;
}

}  // namespace vigpi
