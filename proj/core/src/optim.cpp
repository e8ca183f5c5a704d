#include "lvsa/optim.hpp"

#include <cmath>

#include "lvsa/error.hpp"

namespace lvsa {

void adamw_update(std::span<double> param, std::span<const double> grad,
                  std::span<double> first_moment, std::span<double> second_moment,
                  std::uint64_t step, const AdamWConfig& config) noexcept {
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    first_moment[i] = config.beta1 * first_moment[i] + (1.0 - config.beta1) * g;
    second_moment[i] = config.beta2 * second_moment[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = first_moment[i] / c1;
    const double v_hat = second_moment[i] / c2;
    param[i] -= config.learning_rate * config.weight_decay * param[i];
    param[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

AdamW::AdamW(ParameterList params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void AdamW::step() {
  for (const auto& p : params_) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient in parameter '" + p.name + "' at step " +
                             std::to_string(step_ + 1));
      }
    }
  }
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    adamw_update(t.mutable_values(), t.grad(), m_[i], v_[i], step_, config_);
  }
}

}  // namespace lvsa
