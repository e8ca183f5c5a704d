#pragma once

// HDSymbolicAttention and the multi-head LARS-VSA block.
//
// For one head with shared projection W (F x D), objects O (N x F) and
// symbols S (N x F):
//
//   Hobj = sign(O . sign(W))            object hypervectors, bipolar
//   Hsym = sign(S . sign(W))            symbol hypervectors, bipolar
//   R[i][j] = cos(Hobj_i, Hobj_i (+) Hobj_j)
//   A = (softmax_rows(R) . Hobj) * Hsym  (elementwise binding)
//
// The block sums batch-normalized heads and average-pools D down to F.
// Every sign() goes through the clipped straight-through estimator.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lvsa/nn.hpp"
#include "lvsa/tensor.hpp"

namespace lvsa {

class CounterRng;

enum class ScoreMode { exact, binarized };
enum class ProjectionMode { bipolar, real };

std::string to_string(ScoreMode mode);
std::string to_string(ProjectionMode mode);
ScoreMode parse_score_mode(const std::string& text);
ProjectionMode parse_projection_mode(const std::string& text);

struct LarsVsaConfig {
  std::size_t heads = 1;
  std::size_t hyper_dim = 1000;
  std::size_t feature_dim = 32;
  std::size_t max_positions = 2;
  double dropout = 0.1;
  ScoreMode score_mode = ScoreMode::exact;
  bool ablation = false;  // score with cos(h_i, h_j) instead of cos(h_i, h_i (+) h_j)
  ProjectionMode projection = ProjectionMode::bipolar;

  // Throws UsageError unless hyper_dim >= feature_dim >= 1, heads >= 1 and
  // the dropout rate lies in [0, 1).
  void validate() const;
  bool operator==(const LarsVsaConfig&) const = default;
};

class ProjectionLayer {
 public:
  ProjectionLayer() = default;
  ProjectionLayer(std::size_t in_dim, std::size_t out_dim, ProjectionMode mode, CounterRng& rng);
  // Wraps an existing latent matrix [in, out].
  ProjectionLayer(Tensor latent, ProjectionMode mode);

  // sign_ste(latent) in bipolar mode, the latent matrix otherwise.
  [[nodiscard]] Tensor effective_weight() const;
  [[nodiscard]] Tensor project(const Tensor& x) const { return matmul(x, effective_weight()); }

  [[nodiscard]] const Tensor& latent() const noexcept { return latent_; }
  [[nodiscard]] ProjectionMode mode() const noexcept { return mode_; }
  [[nodiscard]] std::size_t in_dim() const { return latent_.dim(0); }
  [[nodiscard]] std::size_t out_dim() const { return latent_.dim(1); }

 private:
  Tensor latent_;
  ProjectionMode mode_ = ProjectionMode::bipolar;
};

// One trainable row per sequence position, independent of the input.
struct SymbolLibrary {
  Tensor symbols;  // [max_positions, F]

  SymbolLibrary() = default;
  SymbolLibrary(std::size_t positions, std::size_t features, CounterRng& rng);
  explicit SymbolLibrary(Tensor rows) : symbols(std::move(rows)) {}
};

// Bipolarized projection sign_ste(x . W); x is [N, F] or [B, N, F].
Tensor project_hypervectors(const Tensor& x, const ProjectionLayer& layer);

// Score matrices for bipolar rows hobj ([N, D] -> [N, N], [B, N, D] ->
// [B, N, N]). Binarized mode packs rows and uses popcount kernels; it is only
// taken when no gradient is being recorded and yields identical values.
// Throws UsageError for non-bipolar rows.
Tensor hd_attention_scores(const Tensor& hobj, ScoreMode mode = ScoreMode::exact);
Tensor ablation_scores(const Tensor& hobj, ScoreMode mode = ScoreMode::exact);

struct SymbolicAttentionOptions {
  ScoreMode score_mode = ScoreMode::exact;
  bool ablation = false;
};

// Single head: (softmax_rows(R) . Hobj) * Hsym. Throws UsageError when the
// sequence is longer than the symbol library.
Tensor hd_symbolic_attention(const Tensor& objects, const SymbolLibrary& symbols,
                             const ProjectionLayer& layer,
                             SymbolicAttentionOptions options = {});

class LarsVsa {
 public:
  struct Head {
    ProjectionLayer projection;
    SymbolLibrary symbols;
    BatchNormState norm;
  };

  LarsVsa() = default;
  LarsVsa(const LarsVsaConfig& config, CounterRng& rng);

  // [B, N, F] (or [N, F]) -> same shape.
  [[nodiscard]] Tensor forward(const Tensor& objects, bool training);
  // Sum of the batch-normalized heads before pooling, [B, N, D].
  [[nodiscard]] Tensor accumulate(const Tensor& objects, bool training);

  void collect(const std::string& prefix, ParameterList& params, BufferList& buffers);

  [[nodiscard]] const LarsVsaConfig& config() const noexcept { return config_; }
  void set_score_mode(ScoreMode mode) noexcept { config_.score_mode = mode; }
  void set_ablation(bool on) noexcept { config_.ablation = on; }
  [[nodiscard]] std::vector<Head>& heads() noexcept { return heads_; }
  [[nodiscard]] const std::vector<Head>& heads() const noexcept { return heads_; }

 private:
  LarsVsaConfig config_;
  std::vector<Head> heads_;
};

// Additive mask [len, len]: 0 on and below the diagonal, -1e9 above.
Tensor causal_mask(std::size_t len);

// Multi-head dot-product attention with per-head projections and an output
// projection: concat_h(softmax(Q_h K_h^T / sqrt(d_k)) V_h) . W_o.
class MultiHeadAttention {
 public:
  struct HeadWeights {
    Tensor query;  // [query_dim, key_dim]
    Tensor key;    // [kv_dim, key_dim]
    Tensor value;  // [kv_dim, key_dim]
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t query_dim, std::size_t kv_dim, std::size_t heads,
                     std::size_t key_dim, std::size_t out_dim, CounterRng& rng,
                     bool scale_scores = true);

  // query_src [B, Lq, query_dim], kv_src [B, Lk, kv_dim], optional additive
  // mask [Lq, Lk].
  [[nodiscard]] Tensor forward(const Tensor& query_src, const Tensor& kv_src,
                               const Tensor* mask = nullptr) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  [[nodiscard]] std::vector<HeadWeights>& heads() noexcept { return heads_; }
  [[nodiscard]] Tensor& output() noexcept { return output_; }
  [[nodiscard]] bool scales_scores() const noexcept { return scale_scores_; }

 private:
  std::vector<HeadWeights> heads_;
  Tensor output_;  // [heads * key_dim, out_dim]
  bool scale_scores_ = true;
};

// Standard transformer self-attention over a sequence of objects.
Tensor self_attention(const Tensor& objects, const MultiHeadAttention& params);

struct FeedForward {
  Linear hidden;
  Linear output;

  FeedForward() = default;
  FeedForward(std::size_t model_dim, std::size_t hidden_dim, CounterRng& rng);
  [[nodiscard]] Tensor forward(const Tensor& x) const { return output.forward(relu(hidden.forward(x))); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

// Post-norm transformer encoder used as the comparison model for memory
// accounting and benchmarks.
class TransformerEncoder {
 public:
  struct Layer {
    MultiHeadAttention attention;
    LayerNorm norm1;
    FeedForward feed_forward;
    LayerNorm norm2;
  };

  TransformerEncoder(std::size_t input_dim, std::size_t model_dim, std::size_t layers,
                     std::size_t heads, std::size_t ff_dim, CounterRng& rng);

  [[nodiscard]] Tensor forward(const Tensor& objects) const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  Linear input_;
  std::vector<Layer> layers_;
};

}  // namespace lvsa
