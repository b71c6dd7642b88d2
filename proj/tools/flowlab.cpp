// flowlab command-line entry point: train, theory, target, dump-x.
//
// Exit codes: 0 success, 1 failed check or internal error, 2 configuration or
// I/O error, 3 enumeration budget exceeded. Errors are one line on stderr:
//   flowlab: error[<kind>]: <message>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowlab/config.hpp"
#include "flowlab/error.hpp"
#include "flowlab/eval.hpp"
#include "flowlab/theory.hpp"
#include "flowlab/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace flowlab;

namespace {

struct Failure {
  int code;
  std::string kind;
  std::string message;
};

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json config_json(const ExperimentConfig& c) {
  json motifs = json::array();
  for (const auto& m : c.reward.motifs) motifs.push_back({{"pattern", m.pattern}, {"bonus", m.bonus}});
  const auto& t = c.train;
  return {
      {"env",
       {{"kind", std::string(to_string(c.env.kind))},
        {"alphabet_size", c.env.alphabet_size},
        {c.env.kind == EnvKind::bag ? "capacity" : "seq_len", c.env.horizon}}},
      {"reward",
       {{"kind", std::string(to_string(c.reward.kind))},
        {"exponent", c.reward.exponent},
        {"max_scale", c.reward.max_scale},
        {"table_path", c.reward.table_path},
        {"motifs", motifs},
        {"base", c.reward.base},
        {"bag_base", c.reward.bag_base},
        {"threshold", c.reward.threshold},
        {"low", c.reward.low},
        {"high", c.reward.high},
        {"low_probability", c.reward.low_probability},
        {"seed", c.reward.seed}}},
      {"train",
       {{"objective", std::string(to_string(t.objective))},
        {"parametrization", std::string(to_string(t.parametrization))},
        {"prt", t.prt},
        {"alpha", t.alpha},
        {"epsilon", t.epsilon},
        {"learning_rate", t.learning_rate},
        {"logz_learning_rate", t.logz_learning_rate},
        {"rounds", t.rounds},
        {"batch_size", t.batch_size},
        {"monitor_every", t.monitor_every},
        {"monitor_samples", t.monitor_samples},
        {"eval_window_rounds", t.eval_window_rounds},
        {"seed", t.seed},
        {"hidden", t.hidden},
        {"guide_smoothing", t.guide_smoothing},
        {"guide_trajectories", std::string(to_string(t.guide_trajectories))},
        {"prt_top_fraction", t.prt_top_fraction},
        {"prt_batch_fraction", t.prt_batch_fraction},
        {"enumeration_budget", t.enumeration_budget}}},
      {"output", {{"directory", c.output_directory}}},
  };
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

int cmd_train(const std::string& config_path, const std::string& out_override,
              const std::optional<std::uint64_t>& seed, const std::optional<int>& rounds) {
  auto cfg = load_config(config_path);
  if (!out_override.empty()) cfg.output_directory = fs::absolute(out_override).lexically_normal().string();
  if (seed) cfg.train.seed = *seed;
  if (rounds) cfg.train.rounds = *rounds;
  validate(cfg);

  const Env env = make_env(cfg.env);
  const RewardFn reward = make_reward(cfg.reward, env);
  const fs::path dir(cfg.output_directory);
  fs::create_directories(dir);
  std::ostringstream echo;
  write_config(echo, cfg);
  write_text(dir / "config.ini", echo.str());

  const auto result = run_experiment(env, reward, cfg.train, nullptr, dir.string());

  json summary;
  summary["config"] = config_json(cfg);
  summary["rounds_to_match_target"] =
      result.rounds_to_match_target ? json(*result.rounds_to_match_target) : json(nullptr);
  const MetricsRecord* last = result.log.empty() ? nullptr : &result.log.back();
  summary["final_rel_mean_error"] = last ? number_or_null(last->rel_mean_error) : json(nullptr);
  summary["final_ad_statistic"] = last ? number_or_null(last->ad_statistic) : json(nullptr);
  summary["wall_time_seconds"] = result.wall_time_seconds;
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  std::cout << "rounds " << cfg.train.rounds << ", evaluations " << result.log.size();
  if (last) std::cout << ", final rel_mean_error " << last->rel_mean_error;
  std::cout << ", rounds_to_match_target "
            << (result.rounds_to_match_target ? std::to_string(*result.rounds_to_match_target) : "null")
            << "\nwrote " << dir.string() << "/{metrics.csv,summary.json,checkpoint.txt,config.ini}\n";
  return 0;
}

int cmd_theory(const TheoryOptions& options, const std::string& json_path) {
  const auto checks = run_theory_checks(options);
  bool all = true;
  std::size_t width = 5;
  for (const auto& c : checks) width = std::max(width, c.name.size());
  std::cout << std::left << std::setw(static_cast<int>(width)) << "check"
            << "  result  seconds  detail\n";
  json report = json::array();
  for (const auto& c : checks) {
    all = all && c.passed;
    char secs[32];
    std::snprintf(secs, sizeof secs, "%7.3f", c.seconds);
    std::cout << std::left << std::setw(static_cast<int>(width)) << c.name << "  "
              << (c.passed ? "PASS  " : "FAIL  ") << "  " << secs << "  " << c.detail << "\n";
    report.push_back({{"name", c.name}, {"passed", c.passed}, {"seconds", c.seconds}, {"detail", c.detail}});
  }
  json doc = {{"passed", all}, {"checks", report}};
  if (json_path == "-") {
    std::cout << doc.dump(2) << "\n";
  } else if (!json_path.empty()) {
    write_text(json_path, doc.dump(2) + "\n");
  }
  if (!all) {
    std::string failed;
    for (const auto& c : checks) {
      if (!c.passed) failed += (failed.empty() ? "" : ",") + c.name;
    }
    throw Failure{1, "check", "failed: " + failed};
  }
  return 0;
}

int cmd_target(const std::string& config_path, const std::string& out_path,
               const std::optional<std::uint64_t>& budget) {
  const auto cfg = load_config(config_path);
  const Env env = make_env(cfg.env);
  const RewardFn reward = make_reward(cfg.reward, env);
  const auto target = build_target(env, reward, budget.value_or(cfg.train.enumeration_budget));

  const fs::path path = out_path.empty() ? fs::path(cfg.output_directory) / "target.csv" : fs::path(out_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "terminal,reward,p_star\n";
  char buf[64];
  for (std::size_t i = 0; i < target.size(); ++i) {
    out << env.to_string(target.terminals[i]) << ',';
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", target.rewards[i], target.probs[i]);
    out << buf;
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");

  std::printf("terminals %zu\nZ %.17g\ntarget_mean %.17g\nmodes %zu\n", target.size(), target.z,
              target.target_mean, target.modes.size());
  std::printf("reward CDF under p* (%zu distinct levels):\n", target.levels.size());
  std::printf("  %-14s %-14s %s\n", "reward", "P(R=r)", "P(R<=r)");
  // At most 20 rows: every level when few, otherwise evenly spaced ones.
  const std::size_t n = target.levels.size();
  const std::size_t rows = std::min<std::size_t>(n, 20);
  for (std::size_t k = 0; k < rows; ++k) {
    const std::size_t i = rows == n ? k : (k * (n - 1)) / (rows - 1);
    std::printf("  %-14.6g %-14.6g %.6g\n", target.levels[i], target.mass_at[i],
                target.mass_below[i] + target.mass_at[i]);
  }
  std::printf("wrote %s\n", path.string().c_str());
  return 0;
}

int cmd_dump_x(const std::string& run_dir, const std::string& out_path) {
  const fs::path dir(run_dir);
  const auto cfg = load_config((dir / "config.ini").string());
  const Env env = make_env(cfg.env);
  const RewardFn reward = make_reward(cfg.reward, env);
  Trainer trainer(env, reward, cfg.train);
  trainer.load((dir / "checkpoint.txt").string());
  if (out_path.empty() || out_path == "-") {
    trainer.dataset().write_csv(std::cout);
    return 0;
  }
  std::ofstream out(out_path);
  if (!out) throw Error("cannot write '" + out_path + "'");
  trainer.dataset().write_csv(out);
  if (!out) throw Error("write failed for '" + out_path + "'");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowlab: GFlowNet training and verification on enumerable DAG environments"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Run an experiment from a config file");
  std::string train_config, train_out;
  std::optional<std::uint64_t> train_seed;
  std::optional<int> train_rounds;
  train->add_option("config", train_config, "Config file (INI)")->required();
  train->add_option("--out", train_out, "Output directory (overrides [output] directory)");
  train->add_option("--seed", train_seed, "Override train.seed");
  train->add_option("--rounds", train_rounds, "Override train.rounds");

  auto* theory = app.add_subcommand("theory", "Run the theory checks");
  TheoryOptions topt;
  std::string theory_json;
  theory->add_option("--count-nmax", topt.n_max_count, "Largest n for the counting check")->capture_default_str();
  theory->add_option("--nmax", topt.pascal_n_max, "Largest n for the Pascal-row check")->capture_default_str();
  theory->add_option("--trials", topt.polya_trials, "Polya-urn trials")->capture_default_str();
  theory->add_option("--steps", topt.polya_steps, "Polya-urn updates per trial")->capture_default_str();
  theory->add_option("--seed", topt.seed, "Seed")->capture_default_str();
  theory->add_flag("--violate", topt.violate, "Debug: include a setting that violates the hypotheses");
  theory->add_option("--json", theory_json, "Write the report as JSON to this path ('-' for stdout)");

  auto* target = app.add_subcommand("target", "Enumerate the exact target distribution");
  std::string target_config, target_out;
  std::optional<std::uint64_t> target_budget;
  target->add_option("config", target_config, "Config file (INI)")->required();
  target->add_option("--out", target_out, "CSV path (default: <output directory>/target.csv)");
  target->add_option("--budget", target_budget, "Override train.enumeration_budget");

  auto* dump = app.add_subcommand("dump-x", "Print the observed dataset X of a finished run");
  std::string dump_dir, dump_out;
  dump->add_option("run_dir", dump_dir, "Run directory with config.ini and checkpoint.txt")->required();
  dump->add_option("--out", dump_out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "flowlab: error[usage]: " << one_line(e.what()) << "\n";
    return 2;
  }

  Failure failure{0, "", ""};
  try {
    if (*train) return cmd_train(train_config, train_out, train_seed, train_rounds);
    if (*theory) return cmd_theory(topt, theory_json);
    if (*target) return cmd_target(target_config, target_out, target_budget);
    if (*dump) return cmd_dump_x(dump_dir, dump_out);
  } catch (const Failure& f) {
    failure = f;
  } catch (const BudgetExceeded& e) {
    failure = {3, "budget", e.what()};
  } catch (const ConfigError& e) {
    failure = {2, "config", e.what()};
  } catch (const ParseError& e) {
    failure = {2, "parse", e.what()};
  } catch (const fs::filesystem_error& e) {
    failure = {2, "io", e.what()};
  } catch (const Error& e) {
    failure = {2, "io", e.what()};
  } catch (const std::exception& e) {
    failure = {1, "internal", e.what()};
  }
  std::cerr << "flowlab: error[" << failure.kind << "]: " << one_line(failure.message) << "\n";
  return failure.code;
}
