#pragma once

// Experiment configuration files: INI sections [env], [reward], [train],
// [output]. Unknown sections and keys are rejected. See README for the schema.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "flowlab/env.hpp"
#include "flowlab/reward.hpp"
#include "flowlab/trainer.hpp"

namespace flowlab {

struct EnvConfig {
  EnvKind kind = EnvKind::string_pa;
  int alphabet_size = 2;
  int horizon = 4;  // seq_len for strings, capacity for bags

  bool operator==(const EnvConfig&) const = default;
};

struct RewardConfig {
  RewardKind kind = RewardKind::string_motif;
  double exponent = 1.0;
  double max_scale = 0.0;
  std::string table_path;  // resolved against the config file's directory
  std::vector<Motif> motifs;
  double base = 0.1;  // motif base r0; the bag base is bag_base
  double bag_base = 0.01;
  int threshold = 7;
  double low = 10.0;
  double high = 30.0;
  double low_probability = 0.75;
  std::uint64_t seed = 0;

  bool operator==(const RewardConfig&) const = default;
};

struct ExperimentConfig {
  EnvConfig env;
  RewardConfig reward;
  TrainConfig train;
  std::string output_directory = "run";  // resolved against the config file's directory

  bool operator==(const ExperimentConfig&) const = default;
};

// Parses and validates. Relative paths resolve against base_dir. Throws
// ConfigError (schema) or ParseError (syntax).
ExperimentConfig parse_config(std::istream& is, const std::string& base_dir,
                              const std::string& name = "<config>");
ExperimentConfig load_config(const std::string& path);

// Writes every field; parse_config of the output gives back an equal config.
void write_config(std::ostream& os, const ExperimentConfig& config);

// Cross-field checks (env/reward compatibility, train invariants).
void validate(const ExperimentConfig& config);

Env make_env(const EnvConfig& config);
RewardFn make_reward(const RewardConfig& config, const Env& env);

}  // namespace flowlab
