#include "flowlab/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "flowlab/error.hpp"

namespace flowlab {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string key_name(const std::string& section, const std::string& key) { return section + "." + key; }

double to_double(const std::string& section, const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(key_name(section, key) + ": expected a number, got '" + t + "'");
  }
  if (!std::isfinite(v)) throw ConfigError(key_name(section, key) + ": must be finite");
  return v;
}

long long to_integer(const std::string& section, const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(key_name(section, key) + ": expected an integer, got '" + t + "'");
  }
  return v;
}

int to_int(const std::string& section, const std::string& key, const std::string& text) {
  const long long v = to_integer(section, key, text);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(key_name(section, key) + ": out of range");
  }
  return static_cast<int>(v);
}

std::uint64_t to_u64(const std::string& section, const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(key_name(section, key) + ": expected a non-negative integer, got '" + t + "'");
  }
  return v;
}

bool to_bool(const std::string& section, const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key_name(section, key) + ": expected true or false, got '" + t + "'");
}

std::vector<int> to_int_list(const std::string& section, const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(to_int(section, key, item));
  }
  return out;
}

// "aab:1, bb:0.5"
std::vector<Motif> to_motifs(const std::string& text) {
  std::vector<Motif> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("reward.motifs: expected pattern:bonus, got '" + item + "'");
    }
    Motif m;
    m.pattern = trim(std::string_view(item).substr(0, colon));
    m.bonus = to_double("reward", "motifs", item.substr(colon + 1));
    out.push_back(std::move(m));
  }
  return out;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty()) return path;
  fs::path p(path);
  if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
  return fs::absolute(p).lexically_normal().string();
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

using Handler = std::function<void(const std::string&)>;

void apply_section(const pt::ptree& section, const std::string& name,
                   const std::map<std::string, Handler>& handlers) {
  for (const auto& [key, node] : section) {
    if (!node.empty()) throw ConfigError("unexpected nested key " + key_name(name, key));
    const auto it = handlers.find(key);
    if (it == handlers.end()) throw ConfigError("unknown key " + key_name(name, key));
    it->second(node.data());
  }
}

}  // namespace

ExperimentConfig parse_config(std::istream& is, const std::string& base_dir, const std::string& name) {
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(name, static_cast<int>(e.line()), e.message());
  }

  ExperimentConfig c;
  bool saw_seq_len = false;
  bool saw_capacity = false;
  bool saw_env_kind = false;

  auto& env = c.env;
  const std::map<std::string, Handler> env_keys = {
      {"kind", [&](const std::string& v) { env.kind = parse_env_kind(trim(v)); saw_env_kind = true; }},
      {"alphabet_size", [&](const std::string& v) { env.alphabet_size = to_int("env", "alphabet_size", v); }},
      {"seq_len", [&](const std::string& v) { env.horizon = to_int("env", "seq_len", v); saw_seq_len = true; }},
      {"capacity", [&](const std::string& v) { env.horizon = to_int("env", "capacity", v); saw_capacity = true; }},
  };

  auto& r = c.reward;
  const std::map<std::string, Handler> reward_keys = {
      {"kind", [&](const std::string& v) { r.kind = parse_reward_kind(trim(v)); }},
      {"exponent", [&](const std::string& v) { r.exponent = to_double("reward", "exponent", v); }},
      {"max_scale", [&](const std::string& v) { r.max_scale = to_double("reward", "max_scale", v); }},
      {"table_path", [&](const std::string& v) { r.table_path = resolve(base_dir, trim(v)); }},
      {"motifs", [&](const std::string& v) { r.motifs = to_motifs(v); }},
      {"base", [&](const std::string& v) { r.base = to_double("reward", "base", v); }},
      {"bag_base", [&](const std::string& v) { r.bag_base = to_double("reward", "bag_base", v); }},
      {"threshold", [&](const std::string& v) { r.threshold = to_int("reward", "threshold", v); }},
      {"low", [&](const std::string& v) { r.low = to_double("reward", "low", v); }},
      {"high", [&](const std::string& v) { r.high = to_double("reward", "high", v); }},
      {"low_probability", [&](const std::string& v) { r.low_probability = to_double("reward", "low_probability", v); }},
      {"seed", [&](const std::string& v) { r.seed = to_u64("reward", "seed", v); }},
  };

  auto& t = c.train;
  const std::map<std::string, Handler> train_keys = {
      {"objective", [&](const std::string& v) { t.objective = parse_objective(trim(v)); }},
      {"parametrization", [&](const std::string& v) { t.parametrization = parse_parametrization(trim(v)); }},
      {"prt", [&](const std::string& v) { t.prt = to_bool("train", "prt", v); }},
      {"alpha", [&](const std::string& v) { t.alpha = to_double("train", "alpha", v); }},
      {"epsilon", [&](const std::string& v) { t.epsilon = to_double("train", "epsilon", v); }},
      {"learning_rate", [&](const std::string& v) { t.learning_rate = to_double("train", "learning_rate", v); }},
      {"logz_learning_rate", [&](const std::string& v) { t.logz_learning_rate = to_double("train", "logz_learning_rate", v); }},
      {"rounds", [&](const std::string& v) { t.rounds = to_int("train", "rounds", v); }},
      {"batch_size", [&](const std::string& v) { t.batch_size = to_int("train", "batch_size", v); }},
      {"monitor_every", [&](const std::string& v) { t.monitor_every = to_int("train", "monitor_every", v); }},
      {"monitor_samples", [&](const std::string& v) { t.monitor_samples = to_int("train", "monitor_samples", v); }},
      {"eval_window_rounds", [&](const std::string& v) { t.eval_window_rounds = to_int("train", "eval_window_rounds", v); }},
      {"seed", [&](const std::string& v) { t.seed = to_u64("train", "seed", v); }},
      {"hidden", [&](const std::string& v) { t.hidden = to_int_list("train", "hidden", v); }},
      {"guide_smoothing", [&](const std::string& v) { t.guide_smoothing = to_double("train", "guide_smoothing", v); }},
      {"guide_trajectories", [&](const std::string& v) { t.guide_trajectories = parse_guide_source(trim(v)); }},
      {"prt_top_fraction", [&](const std::string& v) { t.prt_top_fraction = to_double("train", "prt_top_fraction", v); }},
      {"prt_batch_fraction", [&](const std::string& v) { t.prt_batch_fraction = to_double("train", "prt_batch_fraction", v); }},
      {"enumeration_budget", [&](const std::string& v) { t.enumeration_budget = to_u64("train", "enumeration_budget", v); }},
  };

  const std::map<std::string, Handler> output_keys = {
      {"directory", [&](const std::string& v) { c.output_directory = trim(v); }},
  };

  std::set<std::string> seen;
  for (const auto& [section, node] : tree) {
    if (node.empty() && !node.data().empty()) throw ConfigError("key '" + section + "' outside any section");
    if (section == "env") {
      apply_section(node, section, env_keys);
    } else if (section == "reward") {
      apply_section(node, section, reward_keys);
    } else if (section == "train") {
      apply_section(node, section, train_keys);
    } else if (section == "output") {
      apply_section(node, section, output_keys);
    } else {
      throw ConfigError("unknown section [" + section + "]");
    }
    seen.insert(section);
  }
  if (!seen.count("env") || !saw_env_kind) throw ConfigError("missing env.kind");
  if (saw_seq_len && saw_capacity) throw ConfigError("env: give seq_len or capacity, not both");
  if (env.kind == EnvKind::bag && saw_seq_len) throw ConfigError("env.seq_len given for a bag; use capacity");
  if (env.kind != EnvKind::bag && saw_capacity) throw ConfigError("env.capacity given for a string; use seq_len");
  if (!saw_seq_len && !saw_capacity) {
    throw ConfigError(env.kind == EnvKind::bag ? "missing env.capacity" : "missing env.seq_len");
  }
  if (c.output_directory.empty()) throw ConfigError("output.directory must not be empty");
  c.output_directory = resolve(base_dir, c.output_directory);
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open config file");
  const std::string dir = fs::path(path).parent_path().string();
  return parse_config(in, dir.empty() ? "." : dir, path);
}

void validate(const ExperimentConfig& c) {
  c.train.validate();
  (void)make_env(c.env);
  const auto& r = c.reward;
  switch (r.kind) {
    case RewardKind::bag_builtin:
      if (c.env.kind != EnvKind::bag) throw ConfigError("reward.kind bag_builtin requires env.kind bag");
      if (r.threshold < 1) throw ConfigError("reward.threshold must be at least 1");
      if (!(r.bag_base > 0.0 && r.low > 0.0 && r.high > 0.0)) {
        throw ConfigError("reward.bag_base, reward.low and reward.high must be positive");
      }
      if (!(r.low_probability >= 0.0 && r.low_probability <= 1.0)) {
        throw ConfigError("reward.low_probability must be in [0, 1]");
      }
      if (r.exponent != 1.0 || r.max_scale != 0.0) {
        throw ConfigError("reward.exponent and reward.max_scale do not apply to bag_builtin");
      }
      break;
    case RewardKind::string_motif:
      if (c.env.kind == EnvKind::bag) throw ConfigError("reward.kind string_motif requires a string env");
      if (!(r.base > 0.0)) throw ConfigError("reward.base must be positive");
      if (!(r.exponent > 0.0)) throw ConfigError("reward.exponent must be positive");
      if (r.max_scale < 0.0) throw ConfigError("reward.max_scale must be non-negative");
      break;
    case RewardKind::table:
      if (r.table_path.empty()) throw ConfigError("reward.kind table requires reward.table_path");
      if (!(r.exponent > 0.0)) throw ConfigError("reward.exponent must be positive");
      if (!(r.max_scale > 0.0)) throw ConfigError("reward.kind table requires a positive reward.max_scale");
      break;
  }
}

void write_config(std::ostream& os, const ExperimentConfig& c) {
  os << "[env]\n";
  os << "kind = " << to_string(c.env.kind) << "\n";
  os << "alphabet_size = " << c.env.alphabet_size << "\n";
  os << (c.env.kind == EnvKind::bag ? "capacity = " : "seq_len = ") << c.env.horizon << "\n";

  const auto& r = c.reward;
  os << "\n[reward]\n";
  os << "kind = " << to_string(r.kind) << "\n";
  os << "exponent = " << fmt(r.exponent) << "\n";
  os << "max_scale = " << fmt(r.max_scale) << "\n";
  if (!r.table_path.empty()) os << "table_path = " << r.table_path << "\n";
  os << "motifs =";
  for (std::size_t i = 0; i < r.motifs.size(); ++i) {
    os << (i ? ", " : " ") << r.motifs[i].pattern << ":" << fmt(r.motifs[i].bonus);
  }
  os << "\n";
  os << "base = " << fmt(r.base) << "\n";
  os << "bag_base = " << fmt(r.bag_base) << "\n";
  os << "threshold = " << r.threshold << "\n";
  os << "low = " << fmt(r.low) << "\n";
  os << "high = " << fmt(r.high) << "\n";
  os << "low_probability = " << fmt(r.low_probability) << "\n";
  os << "seed = " << r.seed << "\n";

  const auto& t = c.train;
  os << "\n[train]\n";
  os << "objective = " << to_string(t.objective) << "\n";
  os << "parametrization = " << to_string(t.parametrization) << "\n";
  os << "prt = " << (t.prt ? "true" : "false") << "\n";
  os << "alpha = " << fmt(t.alpha) << "\n";
  os << "epsilon = " << fmt(t.epsilon) << "\n";
  os << "learning_rate = " << fmt(t.learning_rate) << "\n";
  os << "logz_learning_rate = " << fmt(t.logz_learning_rate) << "\n";
  os << "rounds = " << t.rounds << "\n";
  os << "batch_size = " << t.batch_size << "\n";
  os << "monitor_every = " << t.monitor_every << "\n";
  os << "monitor_samples = " << t.monitor_samples << "\n";
  os << "eval_window_rounds = " << t.eval_window_rounds << "\n";
  os << "seed = " << t.seed << "\n";
  os << "hidden =";
  for (std::size_t i = 0; i < t.hidden.size(); ++i) os << (i ? ", " : " ") << t.hidden[i];
  os << "\n";
  os << "guide_smoothing = " << fmt(t.guide_smoothing) << "\n";
  os << "guide_trajectories = " << to_string(t.guide_trajectories) << "\n";
  os << "prt_top_fraction = " << fmt(t.prt_top_fraction) << "\n";
  os << "prt_batch_fraction = " << fmt(t.prt_batch_fraction) << "\n";
  os << "enumeration_budget = " << t.enumeration_budget << "\n";

  os << "\n[output]\n";
  os << "directory = " << c.output_directory << "\n";
}

Env make_env(const EnvConfig& config) { return Env::make(config.kind, config.alphabet_size, config.horizon); }

RewardFn make_reward(const RewardConfig& r, const Env& env) {
  switch (r.kind) {
    case RewardKind::bag_builtin: {
      BagRewardParams p;
      p.base = r.bag_base;
      p.threshold = r.threshold;
      p.low = r.low;
      p.high = r.high;
      p.low_probability = r.low_probability;
      p.seed = r.seed;
      return RewardFn::bag_builtin(env, p);
    }
    case RewardKind::string_motif: {
      MotifRewardParams p;
      p.base = r.base;
      p.motifs = r.motifs;
      p.exponent = r.exponent;
      p.max_scale = r.max_scale;
      return RewardFn::string_motif(env, p);
    }
    case RewardKind::table:
      return load_reward_table(r.table_path, env, r.exponent, r.max_scale);
  }
  throw ConfigError("unknown reward kind");
}

}  // namespace flowlab
