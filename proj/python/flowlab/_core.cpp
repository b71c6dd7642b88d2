// Python bindings: config-driven training, exact targets and theory checks.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "flowlab/config.hpp"
#include "flowlab/error.hpp"
#include "flowlab/eval.hpp"
#include "flowlab/theory.hpp"
#include "flowlab/trainer.hpp"

namespace py = pybind11;
using namespace flowlab;

namespace {

py::dict record_dict(const MetricsRecord& r) {
  py::dict d;
  d["round"] = r.round;
  d["n_seen"] = r.n_seen;
  d["loss"] = r.loss;
  d["logZ"] = r.log_z;
  d["sample_mean_reward"] = r.sample_mean_reward;
  d["target_mean_reward"] = r.target_mean_reward;
  d["rel_mean_error"] = r.rel_mean_error;
  d["ad_statistic"] = r.ad_statistic;
  d["modes_found"] = r.modes_found;
  d["diversity"] = r.diversity;
  return d;
}

py::dict train(const std::string& config_path, std::optional<int> rounds, std::optional<std::uint64_t> seed,
               const std::string& output_dir) {
  auto cfg = load_config(config_path);
  if (rounds) cfg.train.rounds = *rounds;
  if (seed) cfg.train.seed = *seed;
  validate(cfg);
  const Env env = make_env(cfg.env);
  const RewardFn reward = make_reward(cfg.reward, env);
  ExperimentResult res;
  {
    py::gil_scoped_release release;
    res = run_experiment(env, reward, cfg.train, nullptr, output_dir);
  }
  py::list log;
  for (const auto& r : res.log) log.append(record_dict(r));
  py::dict out;
  out["log"] = log;
  out["rounds_to_match_target"] =
      res.rounds_to_match_target ? py::object(py::int_(*res.rounds_to_match_target)) : py::none();
  out["wall_time_seconds"] = res.wall_time_seconds;
  return out;
}

py::dict target(const std::string& config_path, std::optional<std::uint64_t> budget) {
  const auto cfg = load_config(config_path);
  const Env env = make_env(cfg.env);
  const RewardFn reward = make_reward(cfg.reward, env);
  const auto t = build_target(env, reward, budget.value_or(cfg.train.enumeration_budget));
  std::vector<std::string> names;
  names.reserve(t.size());
  for (const auto& x : t.terminals) names.push_back(env.to_string(x));
  py::dict out;
  out["terminals"] = names;
  out["rewards"] = t.rewards;
  out["probs"] = t.probs;
  out["z"] = t.z;
  out["target_mean"] = t.target_mean;
  out["modes"] = t.modes.size();
  return out;
}

py::list theory(int trials, int steps, int nmax, std::uint64_t seed, bool violate) {
  TheoryOptions opt;
  opt.polya_trials = trials;
  opt.polya_steps = steps;
  opt.pascal_n_max = nmax;
  opt.seed = seed;
  opt.violate = violate;
  std::vector<TheoryCheck> checks;
  {
    py::gil_scoped_release release;
    checks = run_theory_checks(opt);
  }
  py::list out;
  for (const auto& c : checks) {
    py::dict d;
    d["name"] = c.name;
    d["passed"] = c.passed;
    d["detail"] = c.detail;
    d["seconds"] = c.seconds;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "GFlowNet training and verification on enumerable DAG environments";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<BudgetExceeded>(m, "BudgetExceeded", PyExc_RuntimeError);

  m.def("train", &train, py::arg("config_path"), py::arg("rounds") = py::none(), py::arg("seed") = py::none(),
        py::arg("output_dir") = "",
        "Run an experiment from an INI config. Returns the metrics log and rounds_to_match_target.");
  m.def("target", &target, py::arg("config_path"), py::arg("budget") = py::none(),
        "Enumerate the exact target distribution of a config's environment and reward.");
  m.def("theory", &theory, py::arg("trials") = 2000, py::arg("steps") = 200, py::arg("nmax") = 30,
        py::arg("seed") = 0, py::arg("violate") = false, "Run the theory checks; one dict per check.");
  m.def("count_trajectories", &count_trajectories, py::arg("n"));
  m.def("count_through", &count_through, py::arg("n"), py::arg("k"), py::arg("a"));
  m.def(
      "maxent_flow_ratio",
      [](int n, int k) {
        const auto r = maxent_flow_ratio(n, k);
        return py::make_tuple(r.ratio, r.expected);
      },
      py::arg("n"), py::arg("k"), "Returns (ratio, 2/(n-k)).");
}
