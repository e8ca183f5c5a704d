#pragma once

// Central finite-difference gradient checks for the autodiff tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "lvsa/rng.hpp"
#include "lvsa/tensor.hpp"

namespace lvsa::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  CounterRng rng(seed);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

struct GradCheckResult {
  double rel_error = 0.0;
  double max_abs_analytic = 0.0;
};

// ||analytic - numeric|| / max(||analytic||, ||numeric||), worst over inputs.
inline GradCheckResult grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                  std::vector<Tensor> inputs, double step = 1e-3) {
  for (auto& t : inputs) t.zero_grad();
  {
    GradTape tape;
    tape.backward(f(inputs));
  }
  GradCheckResult out;
  for (auto& t : inputs) {
    std::vector<double> analytic(t.size(), 0.0);
    if (!t.grad().empty()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    std::vector<double> numeric(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t.value(i);
      t.mutable_values()[i] = saved + step;
      const double up = f(inputs).item();
      t.mutable_values()[i] = saved - step;
      const double down = f(inputs).item();
      t.mutable_values()[i] = saved;
      numeric[i] = (up - down) / (2.0 * step);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
      out.max_abs_analytic = std::max(out.max_abs_analytic, std::abs(analytic[i]));
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
    out.rel_error = std::max(out.rel_error, std::sqrt(diff) / denom);
  }
  return out;
}

// Weighted sum so that every output entry gets a distinct upstream gradient.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed = 99);

}  // namespace lvsa::testing
