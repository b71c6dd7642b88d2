#include "flowlab/mlp.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <stdexcept>
#include <string>

namespace flowlab {

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  layout();
  params_.setZero();
}

Mlp::Mlp(std::vector<int> layer_sizes, Rng& rng) : sizes_(std::move(layer_sizes)) {
  layout();
  for (std::size_t k = 0; k + 1 < sizes_.size(); ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[k]));
    const std::size_t count =
        static_cast<std::size_t>(sizes_[k + 1]) * static_cast<std::size_t>(sizes_[k] + 1);
    for (std::size_t i = 0; i < count; ++i) {
      params_[static_cast<Eigen::Index>(offsets_[k] + i)] = (2.0 * rng.uniform() - 1.0) * bound;
    }
  }
}

void Mlp::layout() {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
  std::size_t total = 0;
  offsets_.clear();
  for (std::size_t k = 0; k + 1 < sizes_.size(); ++k) {
    if (sizes_[k] <= 0 || sizes_[k + 1] <= 0) throw std::invalid_argument("Mlp layer sizes must be positive");
    offsets_.push_back(total);
    total += static_cast<std::size_t>(sizes_[k + 1]) * static_cast<std::size_t>(sizes_[k] + 1);
  }
  params_.resize(static_cast<Eigen::Index>(total));
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(std::size_t k) const {
  return {params_.data() + offsets_[k], sizes_[k + 1], sizes_[k]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t k) const {
  return {params_.data() + offsets_[k] + static_cast<std::size_t>(sizes_[k + 1]) * sizes_[k],
          sizes_[k + 1]};
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != input_size()) {
    throw std::invalid_argument("Mlp::forward: input has " + std::to_string(inputs.rows()) +
                                " rows, expected " + std::to_string(input_size()));
  }
  Eigen::MatrixXd h = inputs;
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t k = 0; k < layers; ++k) {
    Eigen::MatrixXd z = weight(k) * h;
    z.colwise() += bias(k);
    if (k + 1 < layers) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& inputs, Tape& tape) const {
  if (inputs.rows() != input_size()) {
    throw std::invalid_argument("Mlp::forward: input has " + std::to_string(inputs.rows()) +
                                " rows, expected " + std::to_string(input_size()));
  }
  const std::size_t layers = sizes_.size() - 1;
  tape.activations.resize(layers + 1);
  tape.activations[0] = inputs;
  for (std::size_t k = 0; k < layers; ++k) {
    Eigen::MatrixXd z = weight(k) * tape.activations[k];
    z.colwise() += bias(k);
    if (k + 1 < layers) z = z.cwiseMax(0.0);
    tape.activations[k + 1] = std::move(z);
  }
  return tape.activations.back();
}

void Mlp::backward(const Tape& tape, const Eigen::MatrixXd& output_grad,
                   Eigen::Ref<Eigen::VectorXd> param_grad) const {
  const std::size_t layers = sizes_.size() - 1;
  if (tape.activations.size() != layers + 1) throw std::invalid_argument("Mlp::backward: tape mismatch");
  if (param_grad.size() != params_.size()) throw std::invalid_argument("Mlp::backward: gradient size mismatch");
  Eigen::MatrixXd delta = output_grad;
  for (std::size_t k = layers; k-- > 0;) {
    const Eigen::MatrixXd& input = tape.activations[k];
    const auto rows = sizes_[k + 1];
    const auto cols = sizes_[k];
    Eigen::Map<Eigen::MatrixXd> dw(param_grad.data() + offsets_[k], rows, cols);
    Eigen::Map<Eigen::VectorXd> db(param_grad.data() + offsets_[k] + static_cast<std::size_t>(rows) * cols, rows);
    dw.noalias() += delta * input.transpose();
    db += delta.rowwise().sum();
    if (k == 0) break;
    Eigen::MatrixXd upstream = weight(k).transpose() * delta;
    // Rectifier derivative, using the post-activation value.
    delta = upstream.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
  }
}

void write_double(std::ostream& os, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  os << buf;
}

double read_double(std::istream& is) {
  std::string token;
  if (!(is >> token)) throw std::runtime_error("checkpoint: unexpected end of input");
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size()) throw std::runtime_error("checkpoint: bad number '" + token + "'");
  return v;
}

void write_vector(std::ostream& os, const Eigen::VectorXd& v) {
  os << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    os << (i % 8 == 0 ? '\n' : ' ');
    write_double(os, v[i]);
  }
  os << '\n';
}

Eigen::VectorXd read_vector(std::istream& is) {
  Eigen::Index n = 0;
  if (!(is >> n) || n < 0) throw std::runtime_error("checkpoint: bad vector length");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = read_double(is);
  return v;
}

void expect_token(std::istream& is, const char* token) {
  std::string got;
  if (!(is >> got) || got != token) {
    throw std::runtime_error(std::string("checkpoint: expected '") + token + "', got '" + got + "'");
  }
}

void Mlp::write(std::ostream& os) const {
  os << "mlp " << sizes_.size();
  for (int s : sizes_) os << ' ' << s;
  os << "\nparams ";
  write_vector(os, params_);
}

Mlp Mlp::read(std::istream& is) {
  expect_token(is, "mlp");
  std::size_t n = 0;
  is >> n;
  std::vector<int> sizes(n);
  for (auto& s : sizes) is >> s;
  if (!is) throw std::runtime_error("checkpoint: bad layer sizes");
  Mlp net(sizes);
  expect_token(is, "params");
  Eigen::VectorXd p = read_vector(is);
  if (p.size() != net.params_.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  net.params_ = std::move(p);
  return net;
}

bool Adam::step(std::span<const ParamBlock> blocks) {
  if (m_.empty()) {
    for (const auto& b : blocks) {
      m_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b.params.size())));
      v_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b.params.size())));
    }
  }
  if (m_.size() != blocks.size()) throw std::invalid_argument("Adam::step: block count changed");
  double sq = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.params.size() != b.grads.size() ||
        static_cast<Eigen::Index>(b.params.size()) != m_[i].size()) {
      throw std::invalid_argument("Adam::step: parameter/gradient shape mismatch");
    }
    for (double g : b.grads) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) {
    ++skipped_;
    std::cerr << "flowlab: warning: non-finite gradient, skipping optimizer step (" << skipped_
              << " skipped so far)\n";
    return false;
  }
  last_norm_ = norm;
  const double scale = norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < b.params.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double g = b.grads[j] * scale;
      m[jj] = config_.beta1 * m[jj] + (1.0 - config_.beta1) * g;
      v[jj] = config_.beta2 * v[jj] + (1.0 - config_.beta2) * g * g;
      const double mhat = m[jj] / bc1;
      const double vhat = v[jj] / bc2;
      b.params[j] -= b.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
  return true;
}

void Adam::write(std::ostream& os) const {
  os << "adam " << steps_ << ' ' << skipped_ << ' ';
  write_double(os, last_norm_);
  for (double c : {config_.learning_rate, config_.beta1, config_.beta2, config_.epsilon, config_.clip_norm}) {
    os << ' ';
    write_double(os, c);
  }
  os << "\nblocks " << m_.size() << '\n';
  for (std::size_t i = 0; i < m_.size(); ++i) {
    write_vector(os, m_[i]);
    write_vector(os, v_[i]);
  }
}

Adam Adam::read(std::istream& is) {
  expect_token(is, "adam");
  Adam a;
  is >> a.steps_ >> a.skipped_;
  a.last_norm_ = read_double(is);
  a.config_.learning_rate = read_double(is);
  a.config_.beta1 = read_double(is);
  a.config_.beta2 = read_double(is);
  a.config_.epsilon = read_double(is);
  a.config_.clip_norm = read_double(is);
  expect_token(is, "blocks");
  std::size_t n = 0;
  is >> n;
  for (std::size_t i = 0; i < n; ++i) {
    a.m_.push_back(read_vector(is));
    a.v_.push_back(read_vector(is));
  }
  return a;
}

bool Adam::operator==(const Adam& o) const {
  if (steps_ != o.steps_ || skipped_ != o.skipped_ || m_.size() != o.m_.size()) return false;
  for (std::size_t i = 0; i < m_.size(); ++i) {
    if (m_[i].size() != o.m_[i].size() || m_[i] != o.m_[i] || v_[i] != o.v_[i]) return false;
  }
  return true;
}

}  // namespace flowlab
