#pragma once

// Differentiable tensor operations.
//
// "Rows" below means all leading dimensions flattened; most ops act on the
// last dimension. Binary elementwise ops accept a right operand whose shape
// equals the left shape or is a suffix of it (broadcast over leading dims).

#include <cstdint>
#include <span>
#include <vector>

#include "lvsa/tensor.hpp"

namespace lvsa {

class CounterRng;

// [..., K] x [K, M] -> [..., M]
Tensor matmul(const Tensor& a, const Tensor& b);
// [B, N, K] x [B, K, M] -> [B, N, M]
Tensor bmm(const Tensor& a, const Tensor& b);
// [B, N, K] x [B, M, K]^T -> [B, N, M]
Tensor bmm_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// Concatenation along the last dimension.
Tensor concat(std::span<const Tensor> parts);
// Swaps the last two dimensions.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
// First `count` entries along dimension 0.
Tensor slice_rows(const Tensor& a, std::size_t count);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// Forward: sign with ties to +1. Backward: upstream gradient where |x| <= 1.
Tensor sign_ste(const Tensor& x);

// Softmax over the last dimension with max subtraction.
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// [..., D] -> [..., F]: window k = D / F, output j averages [j*k, (j+1)*k).
Tensor global_avg_pool(const Tensor& x, std::size_t out_dim);

// Inverted dropout. Identity when rate == 0 or not training.
Tensor dropout(const Tensor& x, double rate, bool training, CounterRng& rng);

// table [V, E]; indices shaped `index_shape` -> index_shape + [E].
Tensor embedding(const Tensor& table, std::span<const std::int32_t> indices,
                 const Shape& index_shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// logits [M, C], targets in [0, C). Mean over M.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets);
// prob [M] (any shape with M entries), targets in {0, 1}. Probabilities are
// clamped to [1e-7, 1 - 1e-7]. Mean over M.
Tensor binary_cross_entropy(const Tensor& prob, std::span<const double> targets);

inline constexpr double kProbClamp = 1e-7;

}  // namespace lvsa
