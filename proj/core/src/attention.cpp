#include "lvsa/attention.hpp"

#include <cmath>

#include "lvsa/error.hpp"
#include "lvsa/hdc.hpp"
#include "lvsa/ops.hpp"
#include "lvsa/rng.hpp"

namespace lvsa {

std::string to_string(ScoreMode mode) {
  return mode == ScoreMode::exact ? "exact" : "binarized";
}

std::string to_string(ProjectionMode mode) {
  return mode == ProjectionMode::bipolar ? "bipolar" : "real";
}

ScoreMode parse_score_mode(const std::string& text) {
  if (text == "exact") return ScoreMode::exact;
  if (text == "binarized") return ScoreMode::binarized;
  throw_usage("unknown score mode '" + text + "' (expected exact|binarized)");
}

ProjectionMode parse_projection_mode(const std::string& text) {
  if (text == "bipolar") return ProjectionMode::bipolar;
  if (text == "real") return ProjectionMode::real;
  throw_usage("unknown projection mode '" + text + "' (expected bipolar|real)");
}

void LarsVsaConfig::validate() const {
  if (heads == 0) throw_usage("LarsVsaConfig: heads must be >= 1");
  if (feature_dim == 0) throw_usage("LarsVsaConfig: feature_dim must be >= 1");
  if (hyper_dim < feature_dim) throw_usage("LarsVsaConfig: hyper_dim must be >= feature_dim");
  if (max_positions == 0) throw_usage("LarsVsaConfig: max_positions must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw_usage("LarsVsaConfig: dropout must be in [0, 1)");
}

ProjectionLayer::ProjectionLayer(std::size_t in_dim, std::size_t out_dim, ProjectionMode mode,
                                 CounterRng& rng)
    : latent_(init_normal_fan_in({in_dim, out_dim}, in_dim, rng)), mode_(mode) {}

ProjectionLayer::ProjectionLayer(Tensor latent, ProjectionMode mode)
    : latent_(std::move(latent)), mode_(mode) {
  if (latent_.rank() != 2) throw_usage("ProjectionLayer: latent weight must be rank 2");
}

Tensor ProjectionLayer::effective_weight() const {
  return mode_ == ProjectionMode::bipolar ? sign_ste(latent_) : latent_;
}

SymbolLibrary::SymbolLibrary(std::size_t positions, std::size_t features, CounterRng& rng)
    : symbols(init_normal_fan_in({positions, features}, features, rng)) {}

Tensor project_hypervectors(const Tensor& x, const ProjectionLayer& layer) {
  if (x.shape().back() != layer.in_dim()) {
    throw_usage("project_hypervectors: feature dim " + std::to_string(x.shape().back()) +
                " does not match projection input " + std::to_string(layer.in_dim()));
  }
  return sign_ste(layer.project(x));
}

namespace {

void require_bipolar(const Tensor& h, const char* op) {
  for (double v : h.values()) {
    if (v != 1.0 && v != -1.0) throw_usage(std::string(op) + ": rows must be bipolar");
  }
}

struct ScoreLayout {
  std::size_t batch;
  std::size_t n;
  std::size_t d;
  Shape out_shape;
};

ScoreLayout score_layout(const Tensor& h, const char* op) {
  if (h.rank() == 2) return {1, h.dim(0), h.dim(1), {h.dim(0), h.dim(0)}};
  if (h.rank() == 3) return {h.dim(0), h.dim(1), h.dim(2), {h.dim(0), h.dim(1), h.dim(1)}};
  throw_usage(std::string(op) + ": expected [N, D] or [B, N, D], got " + to_string(h.shape()));
}

// Packs every row of a bipolar tensor.
std::vector<PackedBits> pack_rows(const Tensor& h, std::size_t rows, std::size_t d) {
  std::vector<PackedBits> packed;
  packed.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) packed.push_back(pack_signs(h.values().subspan(r * d, d)));
  return packed;
}

template <class Score>
Tensor binarized_scores(const Tensor& h, const ScoreLayout& lay, Score score) {
  const auto packed = pack_rows(h, lay.batch * lay.n, lay.d);
  std::vector<double> out(lay.batch * lay.n * lay.n);
  for (std::size_t b = 0; b < lay.batch; ++b) {
    for (std::size_t i = 0; i < lay.n; ++i) {
      for (std::size_t j = 0; j < lay.n; ++j) {
        out[(b * lay.n + i) * lay.n + j] =
            score(packed[b * lay.n + i], packed[b * lay.n + j]).value;
      }
    }
  }
  return Tensor(lay.out_shape, std::move(out));
}

bool binarized_path(ScoreMode mode, const Tensor& h) {
  return mode == ScoreMode::binarized && detail::recording_tape({&h}) == nullptr;
}

}  // namespace

Tensor hd_attention_scores(const Tensor& hobj, ScoreMode mode) {
  const ScoreLayout lay = score_layout(hobj, "hd_attention_scores");
  require_bipolar(hobj, "hd_attention_scores");
  if (binarized_path(mode, hobj)) {
    return binarized_scores(hobj, lay, context_similarity_binarized);
  }

  const auto& hv = hobj.values();
  const std::size_t n = lay.n;
  const std::size_t d = lay.d;
  std::vector<double> out(lay.batch * n * n);
  for (std::size_t b = 0; b < lay.batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* hi = hv.data() + (b * n + i) * d;
      for (std::size_t j = 0; j < n; ++j) {
        const double* hj = hv.data() + (b * n + j) * d;
        std::int64_t dot = 0;
        for (std::size_t k = 0; k < d; ++k) {
          const double ctx = hi[k] + hj[k] < 0.0 ? -1.0 : 1.0;
          dot += static_cast<std::int64_t>(hi[k] * ctx);
        }
        out[(b * n + i) * n + j] = static_cast<double>(dot) / static_cast<double>(d);
      }
    }
  }

  GradTape* tape = detail::recording_tape({&hobj});
  Tensor result = detail::make_output(lay.out_shape, std::move(out), tape);
  if (tape) {
    tape->record(result, [hn = hobj.node(), on = result.node(), lay] {
      // r_ij = (1/D) sum_k h_ik * sign(h_ik + h_jk); the inner sign uses the
      // clipped STE, which only passes at ties (h_ik != h_jk).
      auto gh = hn->ensure_grad();
      const auto& h = hn->value;
      const std::size_t n = lay.n;
      const std::size_t d = lay.d;
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t b = 0; b < lay.batch; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t ri = (b * n + i) * d;
          for (std::size_t j = 0; j < n; ++j) {
            const double g = on->grad[(b * n + i) * n + j] * inv_d;
            if (g == 0.0) continue;
            const std::size_t rj = (b * n + j) * d;
            for (std::size_t k = 0; k < d; ++k) {
              const double s = h[ri + k] + h[rj + k];
              const double ctx = s < 0.0 ? -1.0 : 1.0;
              const double pass = std::abs(s) <= 1.0 ? h[ri + k] : 0.0;
              gh[ri + k] += g * (ctx + pass);
              gh[rj + k] += g * pass;
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor ablation_scores(const Tensor& hobj, ScoreMode mode) {
  const ScoreLayout lay = score_layout(hobj, "ablation_scores");
  require_bipolar(hobj, "ablation_scores");
  if (binarized_path(mode, hobj)) return binarized_scores(hobj, lay, cosine_binarized);
  const Tensor h3 = hobj.rank() == 3 ? hobj : reshape(hobj, {1, lay.n, lay.d});
  Tensor r = scale(bmm_nt(h3, h3), 1.0 / static_cast<double>(lay.d));
  return hobj.rank() == 3 ? r : reshape(r, lay.out_shape);
}

Tensor hd_symbolic_attention(const Tensor& objects, const SymbolLibrary& symbols,
                             const ProjectionLayer& layer, SymbolicAttentionOptions options) {
  if (objects.rank() != 2 && objects.rank() != 3) {
    throw_usage("hd_symbolic_attention: objects must be [N, F] or [B, N, F]");
  }
  const bool batched = objects.rank() == 3;
  const std::size_t n = objects.dim(batched ? 1 : 0);
  if (n > symbols.symbols.dim(0)) {
    throw_usage("hd_symbolic_attention: sequence length " + std::to_string(n) +
                " exceeds the " + std::to_string(symbols.symbols.dim(0)) + " symbol positions");
  }
  const Tensor x = batched ? objects : reshape(objects, {1, n, objects.dim(1)});
  const Tensor hobj = project_hypervectors(x, layer);
  const Tensor hsym = project_hypervectors(slice_rows(symbols.symbols, n), layer);
  const Tensor scores = options.ablation ? ablation_scores(hobj, options.score_mode)
                                         : hd_attention_scores(hobj, options.score_mode);
  Tensor out = mul(bmm(softmax_rows(scores), hobj), hsym);
  return batched ? out : reshape(out, {n, layer.out_dim()});
}

LarsVsa::LarsVsa(const LarsVsaConfig& config, CounterRng& rng) : config_(config) {
  config_.validate();
  for (std::size_t h = 0; h < config_.heads; ++h) {
    Head head;
    head.projection =
        ProjectionLayer(config_.feature_dim, config_.hyper_dim, config_.projection, rng);
    head.symbols = SymbolLibrary(config_.max_positions, config_.feature_dim, rng);
    head.norm = BatchNormState(config_.hyper_dim);
    heads_.push_back(std::move(head));
  }
}

Tensor LarsVsa::accumulate(const Tensor& objects, bool training) {
  if (objects.shape().back() != config_.feature_dim) {
    throw_usage("LarsVsa: expected feature dim " + std::to_string(config_.feature_dim) +
                ", got " + to_string(objects.shape()));
  }
  const SymbolicAttentionOptions options{config_.score_mode, config_.ablation};
  Tensor acc;
  for (auto& head : heads_) {
    Tensor a = hd_symbolic_attention(objects, head.symbols, head.projection, options);
    a = batch_norm(a, head.norm, training);
    acc = acc.defined() ? add(acc, a) : a;
  }
  return acc;
}

Tensor LarsVsa::forward(const Tensor& objects, bool training) {
  return global_avg_pool(accumulate(objects, training), config_.feature_dim);
}

void LarsVsa::collect(const std::string& prefix, ParameterList& params, BufferList& buffers) {
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const std::string p = prefix + ".head" + std::to_string(h);
    params.push_back({p + ".projection", heads_[h].projection.latent(),
                      heads_[h].projection.mode() == ProjectionMode::bipolar});
    params.push_back({p + ".symbols", heads_[h].symbols.symbols});
    heads_[h].norm.collect(p + ".norm", params, buffers);
  }
}

Tensor causal_mask(std::size_t len) {
  std::vector<double> m(len * len, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = i + 1; j < len; ++j) m[i * len + j] = -1e9;
  }
  return Tensor({len, len}, std::move(m));
}

MultiHeadAttention::MultiHeadAttention(std::size_t query_dim, std::size_t kv_dim,
                                       std::size_t heads, std::size_t key_dim,
                                       std::size_t out_dim, CounterRng& rng, bool scale_scores)
    : scale_scores_(scale_scores) {
  if (heads == 0 || key_dim == 0) throw_usage("MultiHeadAttention: heads and key_dim must be >= 1");
  for (std::size_t h = 0; h < heads; ++h) {
    heads_.push_back({init_uniform_fan_in({query_dim, key_dim}, query_dim, rng),
                      init_uniform_fan_in({kv_dim, key_dim}, kv_dim, rng),
                      init_uniform_fan_in({kv_dim, key_dim}, kv_dim, rng)});
  }
  output_ = init_uniform_fan_in({heads * key_dim, out_dim}, heads * key_dim, rng);
}

Tensor MultiHeadAttention::forward(const Tensor& query_src, const Tensor& kv_src,
                                   const Tensor* mask) const {
  if (query_src.rank() != 3 || kv_src.rank() != 3 || query_src.dim(0) != kv_src.dim(0)) {
    throw_usage("MultiHeadAttention: expected [B, L, d] inputs with equal batch");
  }
  std::vector<Tensor> outputs;
  outputs.reserve(heads_.size());
  for (const auto& w : heads_) {
    const Tensor q = matmul(query_src, w.query);
    const Tensor k = matmul(kv_src, w.key);
    const Tensor v = matmul(kv_src, w.value);
    Tensor scores = bmm_nt(q, k);
    if (scale_scores_) scores = scale(scores, 1.0 / std::sqrt(static_cast<double>(w.query.dim(1))));
    if (mask != nullptr) scores = add(scores, *mask);
    outputs.push_back(bmm(softmax_rows(scores), v));
  }
  const Tensor joined = outputs.size() == 1 ? outputs[0] : concat(outputs);
  return matmul(joined, output_);
}

void MultiHeadAttention::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const std::string p = prefix + ".head" + std::to_string(h);
    out.push_back({p + ".query", heads_[h].query});
    out.push_back({p + ".key", heads_[h].key});
    out.push_back({p + ".value", heads_[h].value});
  }
  out.push_back({prefix + ".output", output_});
}

Tensor self_attention(const Tensor& objects, const MultiHeadAttention& params) {
  return params.forward(objects, objects);
}

FeedForward::FeedForward(std::size_t model_dim, std::size_t hidden_dim, CounterRng& rng)
    : hidden(model_dim, hidden_dim, true, rng), output(hidden_dim, model_dim, true, rng) {}

void FeedForward::collect(const std::string& prefix, ParameterList& out) const {
  hidden.collect(prefix + ".hidden", out);
  output.collect(prefix + ".output", out);
}

TransformerEncoder::TransformerEncoder(std::size_t input_dim, std::size_t model_dim,
                                       std::size_t layers, std::size_t heads,
                                       std::size_t ff_dim, CounterRng& rng)
    : input_(input_dim, model_dim, true, rng) {
  if (heads == 0 || model_dim % heads != 0) {
    throw_usage("TransformerEncoder: model_dim must be divisible by heads");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    layers_.push_back({MultiHeadAttention(model_dim, model_dim, heads, model_dim / heads,
                                          model_dim, rng),
                       LayerNorm(model_dim), FeedForward(model_dim, ff_dim, rng),
                       LayerNorm(model_dim)});
  }
}

Tensor TransformerEncoder::forward(const Tensor& objects) const {
  Tensor x = input_.forward(objects);
  for (const auto& layer : layers_) {
    x = layer.norm1.forward(add(x, self_attention(x, layer.attention)));
    x = layer.norm2.forward(add(x, layer.feed_forward.forward(x)));
  }
  return x;
}

void TransformerEncoder::collect(const std::string& prefix, ParameterList& out) const {
  input_.collect(prefix + ".input", out);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    layers_[l].attention.collect(p + ".attention", out);
    layers_[l].norm1.collect(p + ".norm1", out);
    layers_[l].feed_forward.collect(p + ".ff", out);
    layers_[l].norm2.collect(p + ".norm2", out);
  }
}

}  // namespace lvsa
