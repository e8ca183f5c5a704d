#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lvsa/ops.hpp"
#include "lvsa/tensor.hpp"

namespace lvsa {

class CounterRng;

// A trainable tensor with its checkpoint name. `bipolar` marks latent weights
// that are deployed through sign() and account for one bit per entry.
struct NamedParameter {
  std::string name;
  Tensor tensor;
  bool bipolar = false;
};

// Non-trainable state that still has to be checkpointed.
struct NamedBuffer {
  std::string name;
  std::vector<double>* values;
};

using ParameterList = std::vector<NamedParameter>;
using BufferList = std::vector<NamedBuffer>;

std::size_t parameter_count(const ParameterList& params) noexcept;

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor init_uniform_fan_in(Shape shape, std::size_t fan_in, CounterRng& rng);
// N(0, 1) / sqrt(fan_in).
Tensor init_normal_fan_in(Shape shape, std::size_t fan_in, CounterRng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool bias, CounterRng& rng);

  [[nodiscard]] Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  [[nodiscard]] const Tensor& weight() const noexcept { return weight_; }
  [[nodiscard]] Tensor& weight() noexcept { return weight_; }
  [[nodiscard]] const Tensor& bias() const noexcept { return bias_; }

 private:
  Tensor weight_;  // [in, out]
  Tensor bias_;    // [out] or undefined
};

// Batch normalization over all leading dimensions, one statistic per entry
// of the last dimension. Running statistics follow
// running = momentum * running + (1 - momentum) * batch (biased variance).
struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.99;
  double eps = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t features);

  void collect(const std::string& prefix, ParameterList& params, BufferList& buffers);
};

// Training mode uses batch statistics and updates the running averages;
// evaluation mode normalizes with the running averages.
Tensor batch_norm(const Tensor& x, BatchNormState& state, bool training);

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t features);
  [[nodiscard]] Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

}  // namespace lvsa
