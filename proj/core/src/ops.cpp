#include "lvsa/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "lvsa/error.hpp"
#include "lvsa/rng.hpp"

namespace lvsa {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using Vec = Eigen::Map<Eigen::VectorXd>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;

ConstMatMap cmap(const std::vector<double>& v, std::size_t rows, std::size_t cols,
                 std::size_t offset = 0) {
  return ConstMatMap(v.data() + offset, static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

MatMap mmap(std::vector<double>& v, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
  return MatMap(v.data() + offset, static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

void require(bool ok, const std::string& what) {
  if (!ok) throw_usage(what);
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(b.rank() == 2 && last_dim(a) == b.dim(0),
          "matmul: shape mismatch " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const std::size_t k = b.dim(0);
  const std::size_t m = b.dim(1);
  const std::size_t rows = a.size() / k;
  Shape shape = a.shape();
  shape.back() = m;
  std::vector<double> out(rows * m);
  mmap(out, rows, m).noalias() = cmap(a.node()->value, rows, k) * cmap(b.node()->value, k, m);

  GradTape* tape = detail::recording_tape({&a, &b});
  Tensor result = detail::make_output(std::move(shape), std::move(out), tape);
  if (tape) {
    tape->record(result, [an = a.node(), bn = b.node(), on = result.node(), rows, k, m] {
      const auto dout = cmap(on->grad, rows, m);
      if (an->requires_grad) {
        an->ensure_grad();
        mmap(an->grad, rows, k).noalias() += dout * cmap(bn->value, k, m).transpose();
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        mmap(bn->grad, k, m).noalias() += cmap(an->value, rows, k).transpose() * dout;
      }
    });
  }
  return result;
}

namespace {

// Shared implementation of bmm / bmm_nt.
Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0),
          "bmm: expected two rank-3 tensors with equal batch, got " + to_string(a.shape()) +
              " and " + to_string(b.shape()));
  const std::size_t batch = a.dim(0);
  const std::size_t n = a.dim(1);
  const std::size_t k = a.dim(2);
  const std::size_t m = transpose_b ? b.dim(1) : b.dim(2);
  require((transpose_b ? b.dim(2) : b.dim(1)) == k,
          "bmm: inner dimension mismatch " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const std::size_t bk = transpose_b ? m : k;  // rows of each b slice
  const std::size_t bc = transpose_b ? k : m;  // cols of each b slice
  std::vector<double> out(batch * n * m);
  for (std::size_t s = 0; s < batch; ++s) {
    auto as = cmap(a.node()->value, n, k, s * n * k);
    auto bs = cmap(b.node()->value, bk, bc, s * bk * bc);
    auto os = mmap(out, n, m, s * n * m);
    if (transpose_b) {
      os.noalias() = as * bs.transpose();
    } else {
      os.noalias() = as * bs;
    }
  }
  GradTape* tape = detail::recording_tape({&a, &b});
  Tensor result = detail::make_output({batch, n, m}, std::move(out), tape);
  if (tape) {
    tape->record(result, [an = a.node(), bn = b.node(), on = result.node(), batch, n, k, m, bk,
                          bc, transpose_b] {
      if (an->requires_grad) an->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      for (std::size_t s = 0; s < batch; ++s) {
        auto dout = cmap(on->grad, n, m, s * n * m);
        auto bs = cmap(bn->value, bk, bc, s * bk * bc);
        auto as = cmap(an->value, n, k, s * n * k);
        if (an->requires_grad) {
          auto da = mmap(an->grad, n, k, s * n * k);
          if (transpose_b) {
            da.noalias() += dout * bs;
          } else {
            da.noalias() += dout * bs.transpose();
          }
        }
        if (bn->requires_grad) {
          auto db = mmap(bn->grad, bk, bc, s * bk * bc);
          if (transpose_b) {
            db.noalias() += dout.transpose() * as;
          } else {
            db.noalias() += as.transpose() * dout;
          }
        }
      }
    });
  }
  return result;
}

enum class Elementwise { add, sub, mul };

Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise kind) {
  require(is_suffix(b.shape(), a.shape()),
          "elementwise: cannot broadcast " + to_string(b.shape()) + " onto " +
              to_string(a.shape()));
  const std::size_t n = a.size();
  const std::size_t period = b.size();
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> out(n);
  for (std::size_t base = 0; base < n; base += period) {
    const double* ap = av.data() + base;
    double* op = out.data() + base;
    switch (kind) {
      case Elementwise::add:
        for (std::size_t i = 0; i < period; ++i) op[i] = ap[i] + bv[i];
        break;
      case Elementwise::sub:
        for (std::size_t i = 0; i < period; ++i) op[i] = ap[i] - bv[i];
        break;
      case Elementwise::mul:
        for (std::size_t i = 0; i < period; ++i) op[i] = ap[i] * bv[i];
        break;
    }
  }
  GradTape* tape = detail::recording_tape({&a, &b});
  Tensor result = detail::make_output(a.shape(), std::move(out), tape);
  if (tape) {
    tape->record(result, [an = a.node(), bn = b.node(), on = result.node(), n, period, kind] {
      const auto& g = on->grad;
      if (an->requires_grad) {
        auto ga = an->ensure_grad();
        if (kind == Elementwise::mul) {
          for (std::size_t base = 0; base < n; base += period) {
            for (std::size_t i = 0; i < period; ++i) ga[base + i] += g[base + i] * bn->value[i];
          }
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
      }
      if (bn->requires_grad) {
        auto gb = bn->ensure_grad();
        for (std::size_t base = 0; base < n; base += period) {
          for (std::size_t i = 0; i < period; ++i) {
            const double gi = g[base + i];
            switch (kind) {
              case Elementwise::add: gb[i] += gi; break;
              case Elementwise::sub: gb[i] -= gi; break;
              case Elementwise::mul: gb[i] += gi * an->value[base + i]; break;
            }
          }
        }
      }
    });
  }
  return result;
}

// Unary op whose backward only needs x and y: dx = g * deriv(x, y).
template <class Forward, class Deriv>
Tensor unary(const Tensor& x, Forward forward, Deriv deriv) {
  std::vector<double> out(x.size());
  const auto& xv = x.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(xv[i]);
  GradTape* tape = detail::recording_tape({&x});
  Tensor result = detail::make_output(x.shape(), std::move(out), tape);
  if (tape) {
    tape->record(result, [xn = x.node(), on = result.node(), deriv] {
      auto gx = xn->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += on->grad[i] * deriv(xn->value[i], on->value[i]);
      }
    });
  }
  return result;
}

}  // namespace

Tensor bmm(const Tensor& a, const Tensor& b) { return batched_matmul(a, b, false); }
Tensor bmm_nt(const Tensor& a, const Tensor& b) { return batched_matmul(a, b, true); }

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::mul); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sign_ste(const Tensor& x) {
  return unary(
      x, [](double v) { return v < 0.0 ? -1.0 : 1.0; },
      [](double v, double) { return std::abs(v) <= 1.0 ? 1.0 : 0.0; });
}

Tensor concat(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat: no inputs");
  Shape shape = parts[0].shape();
  const std::size_t rows = parts[0].size() / last_dim(parts[0]);
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape lead(p.shape().begin(), p.shape().end() - 1);
    require(p.rank() == shape.size() &&
                std::equal(lead.begin(), lead.end(), shape.begin()),
            "concat: leading dimensions differ");
    total += last_dim(p);
  }
  shape.back() = total;
  std::vector<double> out(rows * total);
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = last_dim(p);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.node()->value.data() + r * w, w, out.data() + r * total + offset);
    }
    widths.push_back(w);
    offset += w;
  }
  GradTape* tape = detail::recording_tape(parts);
  Tensor result = detail::make_output(std::move(shape), std::move(out), tape);
  if (tape) {
    std::vector<std::shared_ptr<TensorNode>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape->record(result, [nodes, widths, on = result.node(), rows, total] {
      std::size_t off = 0;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::size_t w = widths[i];
        if (nodes[i]->requires_grad) {
          auto g = nodes[i]->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < w; ++c) g[r * w + c] += on->grad[r * total + off + c];
          }
        }
        off += w;
      }
    });
  }
  return result;
}

Tensor transpose(const Tensor& a) {
  require(a.rank() >= 2, "transpose: rank must be at least 2");
  const std::size_t r = a.dim(a.rank() - 2);
  const std::size_t c = a.dim(a.rank() - 1);
  const std::size_t batch = a.size() / (r * c);
  Shape shape = a.shape();
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  std::vector<double> out(a.size());
  for (std::size_t s = 0; s < batch; ++s) {
    mmap(out, c, r, s * r * c) = cmap(a.node()->value, r, c, s * r * c).transpose();
  }
  GradTape* tape = detail::recording_tape({&a});
  Tensor result = detail::make_output(std::move(shape), std::move(out), tape);
  if (tape) {
    tape->record(result, [an = a.node(), on = result.node(), batch, r, c] {
      an->ensure_grad();
      for (std::size_t s = 0; s < batch; ++s) {
        mmap(an->grad, r, c, s * r * c) += cmap(on->grad, c, r, s * r * c).transpose();
      }
    });
  }
  return result;
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(numel(shape) == a.size(),
          "reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  GradTape* tape = detail::recording_tape({&a});
  Tensor result = detail::make_output(std::move(shape), a.node()->value, tape);
  if (tape) {
    tape->record(result, [an = a.node(), on = result.node()] {
      auto g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
    });
  }
  return result;
}

Tensor slice_rows(const Tensor& a, std::size_t count) {
  require(count >= 1 && count <= a.dim(0), "slice_rows: count out of range");
  if (count == a.dim(0)) return a;
  const std::size_t stride = a.size() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = count;
  std::vector<double> out(a.node()->value.begin(),
                          a.node()->value.begin() + static_cast<std::ptrdiff_t>(count * stride));
  GradTape* tape = detail::recording_tape({&a});
  Tensor result = detail::make_output(std::move(shape), std::move(out), tape);
  if (tape) {
    tape->record(result, [an = a.node(), on = result.node()] {
      auto g = an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += on->grad[i];
    });
  }
  return result;
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t cols = last_dim(x);
  const std::size_t rows = x.size() / cols;
  const auto& xv = x.node()->value;
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  GradTape* tape = detail::recording_tape({&x});
  Tensor result = detail::make_output(x.shape(), std::move(out), tape);
  if (tape) {
    tape->record(result, [xn = x.node(), on = result.node(), rows, cols] {
      auto gx = xn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = on->value.data() + r * cols;
        const double* g = on->grad.data() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += y[c] * (g[c] - dot);
      }
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t cols = last_dim(x);
  require(gamma.size() == cols && beta.size() == cols, "layer_norm: parameter size mismatch");
  const std::size_t rows = x.size() / cols;
  const auto& xv = x.node()->value;
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat[r * cols + c] = (in[c] - mu) * inv_std[r];
      out[r * cols + c] = gamma.node()->value[c] * xhat[r * cols + c] + beta.node()->value[c];
    }
  }
  GradTape* tape = detail::recording_tape({&x, &gamma, &beta});
  Tensor result = detail::make_output(x.shape(), std::move(out), tape);
  if (tape) {
    tape->record(result, [xn = x.node(), gn = gamma.node(), bn = beta.node(), on = result.node(),
                          xhat = std::move(xhat), inv_std = std::move(inv_std), rows, cols] {
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
      if (xn->requires_grad) {
        auto gx = xn->ensure_grad();
        const double inv_n = 1.0 / static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0.0;
          double mean_dx = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const double d = g[r * cols + c] * gn->value[c];
            mean_d += d;
            mean_dx += d * xhat[r * cols + c];
          }
          mean_d *= inv_n;
          mean_dx *= inv_n;
          for (std::size_t c = 0; c < cols; ++c) {
            const double d = g[r * cols + c] * gn->value[c];
            gx[r * cols + c] += inv_std[r] * (d - mean_d - xhat[r * cols + c] * mean_dx);
          }
        }
      }
    });
  }
  return result;
}

Tensor global_avg_pool(const Tensor& x, std::size_t out_dim) {
  const std::size_t d = last_dim(x);
  if (out_dim == 0 || out_dim > d) {
    throw_usage("global_avg_pool: output dim " + std::to_string(out_dim) +
                " must be in [1, " + std::to_string(d) + "]");
  }
  const std::size_t k = d / out_dim;
  const std::size_t rows = x.size() / d;
  Shape shape = x.shape();
  shape.back() = out_dim;
  std::vector<double> out(rows * out_dim, 0.0);
  const auto& xv = x.node()->value;
  const double inv_k = 1.0 / static_cast<double>(k);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < out_dim; ++j) {
      double acc = 0.0;
      for (std::size_t m = 0; m < k; ++m) acc += xv[r * d + j * k + m];
      out[r * out_dim + j] = acc * inv_k;
    }
  }
  GradTape* tape = detail::recording_tape({&x});
  Tensor result = detail::make_output(std::move(shape), std::move(out), tape);
  if (tape) {
    tape->record(result, [xn = x.node(), on = result.node(), rows, d, k, out_dim, inv_k] {
      auto gx = xn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < out_dim; ++j) {
          const double g = on->grad[r * out_dim + j] * inv_k;
          for (std::size_t m = 0; m < k; ++m) gx[r * d + j * k + m] += g;
        }
      }
    });
  }
  return result;
}

Tensor dropout(const Tensor& x, double rate, bool training, CounterRng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw_usage("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = rng.next_unit() > rate ? keep_scale : 0.0;
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> indices,
                 const Shape& index_shape) {
  require(table.rank() == 2, "embedding: table must be rank 2");
  require(numel(index_shape) == indices.size(), "embedding: index shape mismatch");
  const std::size_t vocab = table.dim(0);
  const std::size_t width = table.dim(1);
  std::vector<std::int32_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * width);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab) {
      throw_usage("embedding: index " + std::to_string(idx[i]) + " out of range");
    }
    std::copy_n(table.node()->value.data() + static_cast<std::size_t>(idx[i]) * width, width,
                out.data() + i * width);
  }
  Shape shape = index_shape;
  shape.push_back(width);
  GradTape* tape = detail::recording_tape({&table});
  Tensor result = detail::make_output(std::move(shape), std::move(out), tape);
  if (tape) {
    tape->record(result, [tn = table.node(), on = result.node(), idx = std::move(idx), width] {
      auto g = tn->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const std::size_t row = static_cast<std::size_t>(idx[i]) * width;
        for (std::size_t c = 0; c < width; ++c) g[row + c] += on->grad[i * width + c];
      }
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  GradTape* tape = detail::recording_tape({&x});
  Tensor result = detail::make_output({1}, {total}, tape);
  if (tape) {
    tape->record(result, [xn = x.node(), on = result.node()] {
      auto g = xn->ensure_grad();
      for (auto& gi : g) gi += on->grad[0];
    });
  }
  return result;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets) {
  require(logits.rank() == 2, "cross_entropy: logits must be [M, C]");
  const std::size_t rows = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  require(targets.size() == rows, "cross_entropy: target count mismatch");
  const auto& lv = logits.node()->value;
  std::vector<double> probs(lv.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::int32_t t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      throw_usage("cross_entropy: target index " + std::to_string(t) + " out of range");
    }
    const double* in = lv.data() + r * classes;
    const double mx = *std::max_element(in, in + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[r * classes + c] = std::exp(in[c] - mx);
      z += probs[r * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] /= z;
    loss += -(in[t] - mx - std::log(z));
  }
  loss /= static_cast<double>(rows);
  GradTape* tape = detail::recording_tape({&logits});
  Tensor result = detail::make_output({1}, {loss}, tape);
  if (tape) {
    std::vector<std::int32_t> tv(targets.begin(), targets.end());
    tape->record(result, [ln = logits.node(), on = result.node(), probs = std::move(probs),
                          tv = std::move(tv), rows, classes] {
      auto g = ln->ensure_grad();
      const double s = on->grad[0] / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < classes; ++c) {
          const double onehot = static_cast<std::int32_t>(c) == tv[r] ? 1.0 : 0.0;
          g[r * classes + c] += s * (probs[r * classes + c] - onehot);
        }
      }
    });
  }
  return result;
}

Tensor binary_cross_entropy(const Tensor& prob, std::span<const double> targets) {
  require(targets.size() == prob.size(), "binary_cross_entropy: target count mismatch");
  const std::size_t n = prob.size();
  const auto& pv = prob.node()->value;
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = targets[i];
    if (t != 0.0 && t != 1.0) throw_usage("binary_cross_entropy: targets must be 0 or 1");
    const double p = std::clamp(pv[i], kProbClamp, 1.0 - kProbClamp);
    loss += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
  }
  loss /= static_cast<double>(n);
  GradTape* tape = detail::recording_tape({&prob});
  Tensor result = detail::make_output({1}, {loss}, tape);
  if (tape) {
    std::vector<double> tv(targets.begin(), targets.end());
    tape->record(result, [pn = prob.node(), on = result.node(), tv = std::move(tv), n] {
      auto g = pn->ensure_grad();
      const double s = on->grad[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double raw = pn->value[i];
        if (raw < kProbClamp || raw > 1.0 - kProbClamp) continue;  // clamped: flat
        g[i] += s * (-(tv[i] / raw) + (1.0 - tv[i]) / (1.0 - raw));
      }
    });
  }
  return result;
}

}  // namespace lvsa
