#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lvsa/nn.hpp"

namespace lvsa {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
  double weight_decay = 0.0;  // decoupled; 0 gives plain Adam
  bool operator==(const AdamWConfig&) const = default;
};

// One decoupled-weight-decay Adam update of a single tensor. `step` is the
// 1-based step index used for bias correction.
void adamw_update(std::span<double> param, std::span<const double> grad,
                  std::span<double> first_moment, std::span<double> second_moment,
                  std::uint64_t step, const AdamWConfig& config) noexcept;

class AdamW {
 public:
  AdamW(ParameterList params, AdamWConfig config);

  void zero_grad();
  // Throws NumericalError, leaving every parameter untouched, when any
  // gradient entry is non-finite.
  void step();

  [[nodiscard]] std::uint64_t step_count() const noexcept { return step_; }
  [[nodiscard]] const AdamWConfig& config() const noexcept { return config_; }
  [[nodiscard]] const ParameterList& parameters() const noexcept { return params_; }

  [[nodiscard]] std::vector<std::vector<double>>& first_moments() noexcept { return m_; }
  [[nodiscard]] std::vector<std::vector<double>>& second_moments() noexcept { return v_; }
  [[nodiscard]] const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
  [[nodiscard]] const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }
  void set_step_count(std::uint64_t step) noexcept { step_ = step; }

 private:
  ParameterList params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t step_ = 0;
};

}  // namespace lvsa
