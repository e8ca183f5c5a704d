#include "lvsa/nn.hpp"

#include <cmath>

#include "lvsa/error.hpp"
#include "lvsa/rng.hpp"

namespace lvsa {

std::size_t parameter_count(const ParameterList& params) noexcept {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

Tensor init_uniform_fan_in(Shape shape, std::size_t fan_in, CounterRng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-limit, limit);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor init_normal_fan_in(Shape shape, std::size_t fan_in, CounterRng& rng) {
  std::vector<double> v(numel(shape));
  rng.fill_gaussian(v);
  const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& x : v) x *= s;
  return Tensor(std::move(shape), std::move(v), true);
}

Linear::Linear(std::size_t in, std::size_t out, bool bias, CounterRng& rng)
    : weight_(init_uniform_fan_in({in, out}, in, rng)) {
  if (bias) bias_ = Tensor::zeros({out}, true);
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, weight_);
  return bias_.defined() ? add(y, bias_) : y;
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight_});
  if (bias_.defined()) out.push_back({prefix + ".bias", bias_});
}

BatchNormState::BatchNormState(std::size_t features)
    : gamma(Tensor::full({features}, 1.0, true)),
      beta(Tensor::zeros({features}, true)),
      running_mean(features, 0.0),
      running_var(features, 1.0) {}

void BatchNormState::collect(const std::string& prefix, ParameterList& params,
                             BufferList& buffers) {
  params.push_back({prefix + ".gamma", gamma});
  params.push_back({prefix + ".beta", beta});
  buffers.push_back({prefix + ".running_mean", &running_mean});
  buffers.push_back({prefix + ".running_var", &running_var});
}

Tensor batch_norm(const Tensor& x, BatchNormState& state, bool training) {
  const std::size_t cols = x.shape().back();
  if (state.gamma.size() != cols) {
    throw_usage("batch_norm: expected " + std::to_string(state.gamma.size()) +
                " features, got " + to_string(x.shape()));
  }
  const std::size_t rows = x.size() / cols;
  const auto& xv = x.node()->value;
  const auto& gv = state.gamma.node()->value;
  const auto& bv = state.beta.node()->value;

  std::vector<double> mu(cols, 0.0);
  std::vector<double> var(cols, 0.0);
  if (training) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) mu[c] += xv[r * cols + c];
    }
    for (auto& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double d = xv[r * cols + c] - mu[c];
        var[c] += d * d;
      }
    }
    for (auto& v : var) v /= static_cast<double>(rows);
    for (std::size_t c = 0; c < cols; ++c) {
      state.running_mean[c] = state.momentum * state.running_mean[c] + (1.0 - state.momentum) * mu[c];
      state.running_var[c] = state.momentum * state.running_var[c] + (1.0 - state.momentum) * var[c];
    }
  } else {
    mu = state.running_mean;
    var = state.running_var;
  }

  std::vector<double> inv_std(cols);
  for (std::size_t c = 0; c < cols; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + state.eps);
  std::vector<double> xhat(x.size());
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      xhat[i] = (xv[i] - mu[c]) * inv_std[c];
      out[i] = gv[c] * xhat[i] + bv[c];
    }
  }

  GradTape* tape = detail::recording_tape({&x, &state.gamma, &state.beta});
  Tensor result = detail::make_output(x.shape(), std::move(out), tape);
  if (tape) {
    tape->record(result, [xn = x.node(), gn = state.gamma.node(), bn = state.beta.node(),
                          on = result.node(), xhat = std::move(xhat),
                          inv_std = std::move(inv_std), rows, cols, training] {
      const auto& g = on->grad;
      if (gn->requires_grad || bn->requires_grad) {
        auto gg = gn->ensure_grad();
        auto gb = bn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            gg[c] += g[r * cols + c] * xhat[r * cols + c];
            gb[c] += g[r * cols + c];
          }
        }
      }
      if (!xn->requires_grad) return;
      auto gx = xn->ensure_grad();
      if (!training) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            gx[r * cols + c] += g[r * cols + c] * gn->value[c] * inv_std[c];
          }
        }
        return;
      }
      std::vector<double> mean_d(cols, 0.0);
      std::vector<double> mean_dx(cols, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const double d = g[r * cols + c] * gn->value[c];
          mean_d[c] += d;
          mean_dx[c] += d * xhat[r * cols + c];
        }
      }
      const double inv_n = 1.0 / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const double d = g[r * cols + c] * gn->value[c];
          gx[r * cols + c] += inv_std[c] * (d - mean_d[c] * inv_n -
                                            xhat[r * cols + c] * mean_dx[c] * inv_n);
        }
      }
    });
  }
  return result;
}

LayerNorm::LayerNorm(std::size_t features)
    : gamma(Tensor::full({features}, 1.0, true)), beta(Tensor::zeros({features}, true)) {}

void LayerNorm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

}  // namespace lvsa
