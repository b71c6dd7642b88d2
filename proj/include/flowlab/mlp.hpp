#pragma once

// Small feedforward network with exact backpropagation, and an Adam
// optimizer with global-norm gradient clipping.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "flowlab/rng.hpp"

namespace flowlab {

// Rectifier on hidden layers, identity on the output layer. All parameters
// live in one contiguous vector; layer k stores W_k (column-major,
// out x in) followed by b_k.
class Mlp {
 public:
  Mlp() = default;
  // Weights and biases uniform in +-1/sqrt(fan_in).
  Mlp(std::vector<int> layer_sizes, Rng& rng);
  // Zero-initialized.
  explicit Mlp(std::vector<int> layer_sizes);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }
  bool empty() const { return sizes_.empty(); }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  // Activations saved by a forward pass for the matching backward pass.
  struct Tape {
    std::vector<Eigen::MatrixXd> activations;  // input, then each layer's output
  };

  // Columns are samples.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs, Tape& tape) const;

  // Accumulates d(sum_ij output_grad_ij * out_ij)/d(params) into param_grad.
  void backward(const Tape& tape, const Eigen::MatrixXd& output_grad,
                Eigen::Ref<Eigen::VectorXd> param_grad) const;

  // Layer views into the parameter vector.
  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

  void write(std::ostream& os) const;
  static Mlp read(std::istream& is);

  bool operator==(const Mlp& other) const {
    return sizes_ == other.sizes_ && params_.size() == other.params_.size() &&
           params_ == other.params_;
  }

 private:
  void layout();

  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;  // start of W_k in params_
  Eigen::VectorXd params_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 10.0;
};

// One group of parameters updated together. Blocks passed to a single step()
// share the global clipping norm.
struct ParamBlock {
  std::span<double> params;
  std::span<const double> grads;
  double learning_rate = 1e-3;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig config) : config_(config) {}

  // Clips the global gradient norm to config.clip_norm, then applies one
  // Adam update in place. Returns false (and leaves everything untouched)
  // when any gradient is non-finite.
  bool step(std::span<const ParamBlock> blocks);

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }
  std::int64_t skipped_steps() const { return skipped_; }
  // Norm of the last accepted gradient before clipping.
  double last_grad_norm() const { return last_norm_; }
  const std::vector<Eigen::VectorXd>& first_moments() const { return m_; }
  const std::vector<Eigen::VectorXd>& second_moments() const { return v_; }

  void write(std::ostream& os) const;
  static Adam read(std::istream& is);

  bool operator==(const Adam& o) const;

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::int64_t skipped_ = 0;
  double last_norm_ = 0.0;
  std::vector<Eigen::VectorXd> m_;
  std::vector<Eigen::VectorXd> v_;
};

// Bit-exact text serialization helpers (hexadecimal floating point).
void write_double(std::ostream& os, double v);
double read_double(std::istream& is);
void write_vector(std::ostream& os, const Eigen::VectorXd& v);
Eigen::VectorXd read_vector(std::istream& is);
void expect_token(std::istream& is, const char* token);

}  // namespace flowlab
