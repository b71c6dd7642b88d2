#include "flowlab/trainer.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "flowlab/error.hpp"

namespace flowlab {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::tb: return "tb";
    case Objective::maxent: return "maxent";
    case Objective::gtb_sub: return "gtb_sub";
  }
  return "?";
}

Objective parse_objective(std::string_view name) {
  if (name == "tb") return Objective::tb;
  if (name == "maxent") return Objective::maxent;
  if (name == "gtb_sub") return Objective::gtb_sub;
  throw ConfigError("unknown objective '" + std::string(name) + "' (expected tb, maxent or gtb_sub)");
}

std::string_view to_string(GuideSource g) { return g == GuideSource::policy ? "policy" : "guide"; }

GuideSource parse_guide_source(std::string_view name) {
  if (name == "policy") return GuideSource::policy;
  if (name == "guide") return GuideSource::guide;
  throw ConfigError("unknown guide_trajectories '" + std::string(name) + "' (expected policy or guide)");
}

void TrainConfig::validate() const {
  if (parametrization == Parametrization::tabular_uniform) {
    throw ConfigError("train.parametrization must be sa or ssr");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("train.alpha must be in [0, 1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("train.epsilon must be in [0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (!(logz_learning_rate > 0.0)) throw ConfigError("train.logz_learning_rate must be positive");
  if (rounds < 0) throw ConfigError("train.rounds must be non-negative");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (monitor_every < 1) throw ConfigError("train.monitor_every must be at least 1");
  if (monitor_samples < 1) throw ConfigError("train.monitor_samples must be at least 1");
  if (eval_window_rounds < monitor_every || eval_window_rounds % monitor_every != 0) {
    throw ConfigError("train.eval_window_rounds must be a positive multiple of train.monitor_every");
  }
  for (int h : hidden) {
    if (h < 1) throw ConfigError("train.hidden sizes must be positive");
  }
  if (!(guide_smoothing >= 0.0 && guide_smoothing <= 1.0)) throw ConfigError("train.guide_smoothing must be in [0, 1]");
  if (!(prt_top_fraction > 0.0 && prt_top_fraction <= 1.0)) throw ConfigError("train.prt_top_fraction must be in (0, 1]");
  if (!(prt_batch_fraction >= 0.0 && prt_batch_fraction <= 1.0)) {
    throw ConfigError("train.prt_batch_fraction must be in [0, 1]");
  }
  if (enumeration_budget < 1) throw ConfigError("train.enumeration_budget must be positive");
}

Trainer::Trainer(const Env& env, const RewardFn& reward, const TrainConfig& config,
                 std::shared_ptr<const TargetDistribution> target)
    : env_(env),
      reward_(reward),
      config_(config),
      target_(std::move(target)),
      adam_forward_(AdamConfig{config.learning_rate}),
      adam_backward_(AdamConfig{config.learning_rate}),
      train_rng_(Rng::substream(config.seed, "train")),
      monitor_rng_(Rng::substream(config.seed, "monitor")),
      guide_rng_(Rng::substream(config.seed, "guide")),
      X_(env, PrtConfig{config.prt_top_fraction, config.prt_batch_fraction}) {
  config_.validate();
  if (!(reward_.env() == env_)) throw ConfigError("reward was built for a different environment");
  if (!target_) target_ = std::make_shared<TargetDistribution>(build_target(env_, reward_, config_.enumeration_budget));
  Rng init = Rng::substream(config_.seed, "init");
  pf_ = PolicyHead::learned(env_, config_.parametrization, Direction::forward, config_.hidden, init);
  pb_ = config_.objective == Objective::maxent
            ? PolicyHead::uniform(env_, Direction::backward)
            : PolicyHead::learned(env_, config_.parametrization, Direction::backward, config_.hidden, init);
}

bool Trainer::apply_forward(const Eigen::VectorXd& grad_pf, double grad_log_z) {
  auto& p = pf_.net().parameters();
  const std::array<ParamBlock, 2> blocks = {
      ParamBlock{{p.data(), static_cast<std::size_t>(p.size())},
                 {grad_pf.data(), static_cast<std::size_t>(grad_pf.size())},
                 config_.learning_rate},
      ParamBlock{{&log_z_, 1}, {&grad_log_z, 1}, config_.logz_learning_rate},
  };
  const bool ok = adam_forward_.step(blocks);
  ok ? ++gradient_steps_ : ++skipped_;
  return ok;
}

bool Trainer::apply_backward(const Eigen::VectorXd& grad_pb) {
  auto& p = pb_.net().parameters();
  const std::array<ParamBlock, 1> blocks = {
      ParamBlock{{p.data(), static_cast<std::size_t>(p.size())},
                 {grad_pb.data(), static_cast<std::size_t>(grad_pb.size())},
                 config_.learning_rate},
  };
  const bool ok = adam_backward_.step(blocks);
  ok ? ++gradient_steps_ : ++skipped_;
  return ok;
}

double Trainer::tb_update(const std::vector<Trajectory>& batch, const std::vector<double>& rewards) {
  Eigen::VectorXd grad_pf = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pf_.parameter_count()));
  Eigen::VectorXd grad_pb = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pb_.parameter_count()));
  const TrajectoryBatch fwd(pf_, batch);
  const TrajectoryBatch bwd(pb_, batch);
  std::vector<double> c(batch.size());
  double grad_log_z = 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double r = log_z_ + fwd.log_probs()[i] - std::log(rewards[i]) - bwd.log_probs()[i];
    loss += r * r;
    c[i] = 2.0 * r;
    grad_log_z += c[i];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  loss *= inv;
  if (!std::isfinite(loss)) {
    ++skipped_;
    return loss;
  }
  fwd.accumulate_gradient(c, grad_pf);
  for (double& v : c) v = -v;
  bwd.accumulate_gradient(c, grad_pb);
  grad_pf *= inv;
  grad_pb *= inv;
  grad_log_z *= inv;
  if (!pb_.trainable()) {
    apply_forward(grad_pf, grad_log_z);
    return loss;
  }
  // Trajectory balance: one clipped step over P_F, log Z and P_B together.
  auto& p = pf_.net().parameters();
  auto& q = pb_.net().parameters();
  const std::array<ParamBlock, 3> blocks = {
      ParamBlock{{p.data(), static_cast<std::size_t>(p.size())},
                 {grad_pf.data(), static_cast<std::size_t>(grad_pf.size())},
                 config_.learning_rate},
      ParamBlock{{&log_z_, 1}, {&grad_log_z, 1}, config_.logz_learning_rate},
      ParamBlock{{q.data(), static_cast<std::size_t>(q.size())},
                 {grad_pb.data(), static_cast<std::size_t>(grad_pb.size())},
                 config_.learning_rate},
  };
  adam_forward_.step(blocks) ? ++gradient_steps_ : ++skipped_;
  return loss;
}

GuideDistribution& Trainer::guide_for(const State& x) {
  auto& slot = guides_[env_.canonical_id(x)];
  if (!slot) {
    slot = std::make_unique<GuideDistribution>(env_, std::span<const Observation>(X_.entries()), x,
                                               config_.guide_smoothing);
  }
  return *slot;
}

double Trainer::gtb_update(const std::vector<Trajectory>& input, const std::vector<double>& rewards) {
  std::vector<Trajectory> batch;
  std::vector<double> guide_lp(input.size());
  if (config_.guide_trajectories == GuideSource::guide) {
    batch.reserve(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
      auto sample = guide_for(input[i].terminal).sample(guide_rng_);
      guide_lp[i] = sample.log_prob;
      batch.push_back(std::move(sample.trajectory));
    }
  } else {
    batch = input;
    for (std::size_t i = 0; i < batch.size(); ++i) guide_lp[i] = guide_for(batch[i].terminal).log_prob(batch[i]);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());

  // P_B phase.
  Eigen::VectorXd grad_pb = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pb_.parameter_count()));
  std::vector<double> c(batch.size());
  double back_loss = 0.0;
  {
    const TrajectoryBatch bwd(pb_, batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double r = bwd.log_probs()[i] - guide_lp[i];
      back_loss += r * r;
      c[i] = 2.0 * r * inv;
    }
    if (std::isfinite(back_loss)) {
      bwd.accumulate_gradient(c, grad_pb);
      apply_backward(grad_pb);
    } else {
      ++skipped_;
    }
  }

  // P_F and log Z phase against the (now updated) backward target.
  Eigen::VectorXd grad_pf = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pf_.parameter_count()));
  const TrajectoryBatch fwd(pf_, batch);
  std::vector<double> back_lp(batch.size(), 0.0);
  if (config_.alpha < 1.0) back_lp = TrajectoryBatch(pb_, batch).log_probs();
  double grad_log_z = 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double psi_f = log_z_ + fwd.log_probs()[i];
    double psi_b = std::log(rewards[i]) + config_.alpha * guide_lp[i];
    if (config_.alpha < 1.0) psi_b += (1.0 - config_.alpha) * back_lp[i];
    const double r = psi_f - psi_b;
    loss += r * r;
    c[i] = 2.0 * r * inv;
    grad_log_z += c[i];
  }
  loss *= inv;
  if (!std::isfinite(loss)) {
    ++skipped_;
    return loss;
  }
  fwd.accumulate_gradient(c, grad_pf);
  apply_forward(grad_pf, grad_log_z);
  return loss;
}

double Trainer::update(const std::vector<Trajectory>& batch) {
  std::vector<double> rewards;
  rewards.reserve(batch.size());
  for (const auto& tau : batch) rewards.push_back(reward_(tau.terminal));
  return config_.objective == Objective::gtb_sub ? gtb_update(batch, rewards) : tb_update(batch, rewards);
}

void Trainer::monitor() {
  MonitorBatch mb;
  mb.round = round_;
  for (int i = 0; i < config_.monitor_samples; ++i) {
    auto tau = sample_forward_trajectory(pf_, 0.0, monitor_rng_);
    mb.rewards.push_back(reward_(tau.terminal));
    mb.samples.push_back(std::move(tau.terminal));
  }
  monitor_.push_back(std::move(mb));
  while (!monitor_.empty() && monitor_.front().round <= round_ - config_.eval_window_rounds) monitor_.pop_front();
}

std::vector<State> Trainer::window_samples() const {
  std::vector<State> out;
  for (const auto& mb : monitor_) out.insert(out.end(), mb.samples.begin(), mb.samples.end());
  return out;
}

std::vector<double> Trainer::window_rewards() const {
  std::vector<double> out;
  for (const auto& mb : monitor_) out.insert(out.end(), mb.rewards.begin(), mb.rewards.end());
  return out;
}

MetricsRecord Trainer::evaluate() const {
  const auto samples = window_samples();
  const auto rewards = window_rewards();
  const auto m = summary_metrics(samples, rewards, *target_, X_);
  MetricsRecord rec;
  rec.round = round_;
  rec.n_seen = X_.size();
  rec.loss = last_loss_;
  rec.log_z = log_z_;
  rec.sample_mean_reward = m.sample_mean_reward;
  rec.target_mean_reward = m.target_mean_reward;
  rec.rel_mean_error = m.rel_mean_error;
  rec.ad_statistic = m.ad_statistic;
  rec.modes_found = m.modes_found;
  rec.diversity = m.diversity;
  return rec;
}

RoundResult Trainer::run_round() {
  ++round_;
  std::vector<Trajectory> batch;
  batch.reserve(static_cast<std::size_t>(config_.batch_size));
  for (int i = 0; i < config_.batch_size; ++i) {
    batch.push_back(sample_forward_trajectory(pf_, config_.epsilon, train_rng_));
    X_.insert(batch.back().terminal, reward_(batch.back().terminal), round_);
  }
  guides_.clear();
  double loss = update(batch);

  if (config_.prt && X_.size() >= 2) {
    std::vector<Trajectory> replay;
    for (auto idx : X_.prt_sample(static_cast<std::size_t>(config_.batch_size), train_rng_)) {
      replay.push_back(sample_backward_trajectory(pb_, X_[idx].x, train_rng_));
    }
    update(replay);
  }
  last_loss_ = loss;

  RoundResult out;
  if (round_ % config_.monitor_every == 0) {
    monitor();
    out.record = evaluate();
    out.evaluated = true;
  } else {
    out.record = MetricsRecord{round_, X_.size(), last_loss_, log_z_, kNaN, target_->target_mean, kNaN, kNaN, 0, kNaN};
  }
  return out;
}

void Trainer::save(std::ostream& os) const {
  os << "flowlab-checkpoint " << kCheckpointVersion << '\n';
  os << "env " << to_string(env_.kind()) << ' ' << env_.alphabet_size() << ' ' << env_.horizon() << '\n';
  os << "round " << round_ << '\n';
  os << "logz ";
  write_double(os, log_z_);
  os << "\nlast_loss ";
  write_double(os, last_loss_);
  os << "\ncounters " << skipped_ << ' ' << gradient_steps_ << '\n';
  os << "pf\n";
  pf_.net().write(os);
  os << "\npb " << (pb_.trainable() ? 1 : 0) << '\n';
  if (pb_.trainable()) pb_.net().write(os);
  os << "\nadam_forward\n";
  adam_forward_.write(os);
  os << "\nadam_backward\n";
  adam_backward_.write(os);
  os << "\nrng_train " << train_rng_ << "\nrng_monitor " << monitor_rng_ << "\nrng_guide " << guide_rng_ << '\n';
  X_.write(os);
  os << "monitor " << monitor_.size() << '\n';
  for (const auto& mb : monitor_) {
    os << mb.round << ' ' << mb.samples.size() << '\n';
    for (std::size_t i = 0; i < mb.samples.size(); ++i) {
      const auto text = env_.to_string(mb.samples[i]);
      os << (text.empty() ? "-" : text) << ' ';
      write_double(os, mb.rewards[i]);
      os << '\n';
    }
  }
  os << "end\n";
}

void Trainer::load(std::istream& is) {
  expect_token(is, "flowlab-checkpoint");
  int version = 0;
  is >> version;
  if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  expect_token(is, "env");
  std::string kind;
  int alphabet = 0;
  int horizon = 0;
  is >> kind >> alphabet >> horizon;
  if (!(Env::make(parse_env_kind(kind), alphabet, horizon) == env_)) {
    throw Error("checkpoint environment does not match the configuration");
  }
  expect_token(is, "round");
  is >> round_;
  expect_token(is, "logz");
  log_z_ = read_double(is);
  expect_token(is, "last_loss");
  last_loss_ = read_double(is);
  expect_token(is, "counters");
  is >> skipped_ >> gradient_steps_;
  expect_token(is, "pf");
  pf_ = PolicyHead::from_net(env_, config_.parametrization, Direction::forward, Mlp::read(is));
  expect_token(is, "pb");
  int trainable = 0;
  is >> trainable;
  if ((trainable != 0) != pb_.trainable()) throw Error("checkpoint objective does not match the configuration");
  if (trainable) pb_ = PolicyHead::from_net(env_, config_.parametrization, Direction::backward, Mlp::read(is));
  expect_token(is, "adam_forward");
  adam_forward_ = Adam::read(is);
  expect_token(is, "adam_backward");
  adam_backward_ = Adam::read(is);
  expect_token(is, "rng_train");
  is >> train_rng_;
  expect_token(is, "rng_monitor");
  is >> monitor_rng_;
  expect_token(is, "rng_guide");
  is >> guide_rng_;
  X_ = DatasetX::read(is, env_, PrtConfig{config_.prt_top_fraction, config_.prt_batch_fraction});
  expect_token(is, "monitor");
  std::size_t batches = 0;
  is >> batches;
  monitor_.clear();
  for (std::size_t b = 0; b < batches; ++b) {
    MonitorBatch mb;
    std::size_t n = 0;
    is >> mb.round >> n;
    for (std::size_t i = 0; i < n; ++i) {
      std::string text;
      is >> text;
      mb.samples.push_back(env_.parse(text == "-" ? "" : text));
      mb.rewards.push_back(read_double(is));
    }
    monitor_.push_back(std::move(mb));
  }
  expect_token(is, "end");
  if (!is) throw Error("checkpoint is truncated");
  guides_.clear();
}

void Trainer::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw Error("cannot write checkpoint '" + path + "'");
  save(os);
  if (!os) throw Error("failed writing checkpoint '" + path + "'");
}

void Trainer::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read checkpoint '" + path + "'");
  load(is);
}

void write_metrics_row(std::ostream& os, const MetricsRecord& rec) {
  auto num = [](double v) {
    if (std::isnan(v)) return std::string("nan");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  os << rec.round << ',' << rec.n_seen << ',' << num(rec.loss) << ',' << num(rec.log_z) << ','
     << num(rec.sample_mean_reward) << ',' << num(rec.target_mean_reward) << ',' << num(rec.rel_mean_error) << ','
     << num(rec.ad_statistic) << ',' << rec.modes_found << ',' << num(rec.diversity) << '\n';
}

ExperimentResult run_experiment(const Env& env, const RewardFn& reward, const TrainConfig& config,
                                std::shared_ptr<const TargetDistribution> target, const std::string& output_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult out;
  Trainer trainer(env, reward, config, std::move(target));
  std::ofstream metrics;
  if (!output_dir.empty()) {
    std::filesystem::create_directories(output_dir);
    const auto path = (std::filesystem::path(output_dir) / "metrics.csv").string();
    metrics.open(path);
    if (!metrics) throw Error("cannot write '" + path + "'");
    metrics << kMetricsHeader << '\n';
    metrics.flush();
  }
  for (int r = 0; r < config.rounds; ++r) {
    auto res = trainer.run_round();
    if (!res.evaluated) continue;
    out.log.push_back(res.record);
    if (metrics.is_open()) {
      write_metrics_row(metrics, res.record);
      metrics.flush();
    }
  }
  if (!output_dir.empty()) trainer.save((std::filesystem::path(output_dir) / "checkpoint.txt").string());
  out.rounds_to_match_target = rounds_to_match_target(out.log);
  out.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace flowlab
