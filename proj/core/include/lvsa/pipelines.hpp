#pragma once

// End-to-end models for the two relational tasks, their training loops and
// checkpoint round trips.
//
// ClassifierModel:  objects [B, 2, F] -> batch norm -> dropout -> LARS-VSA
//                   -> flatten -> dense(hidden) relu -> dense(1) -> sigmoid
// Seq2SeqModel:     objects [B, N, F] -> batch norm -> LARS-VSA (memory)
//                   decoder: token embedding + sinusoidal positions, then
//                   post-norm layers of causal self-attention, cross-attention
//                   to the memory and a feed-forward block; logits over the N
//                   position indices.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lvsa/attention.hpp"
#include "lvsa/checkpoint.hpp"
#include "lvsa/kv_config.hpp"
#include "lvsa/nn.hpp"
#include "lvsa/optim.hpp"
#include "lvsa/rng.hpp"
#include "lvsa/tasks.hpp"

namespace lvsa {

enum class ModelKind { classifier, sorter };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

struct ClassifierConfig {
  LarsVsaConfig lars{};  // heads 1, D 1000, F 32, two positions, dropout 0.1
  std::size_t hidden = 32;
  AdamWConfig optimizer{1e-4, 0.9, 0.999, 1e-7, 0.004};
  std::size_t batch_size = 64;
  std::size_t epochs = 50;

  void validate() const;
  // Flat keys ("lars.heads", "optimizer.learning_rate", ...).
  [[nodiscard]] KvMap to_kv() const;
  // Reads every key it knows from `reader`, keeping defaults for the rest.
  static ClassifierConfig from_kv(KvReader& reader);
  bool operator==(const ClassifierConfig&) const = default;
};

struct SorterConfig {
  std::size_t seq_len = 5;
  LarsVsaConfig lars{2, 1000, 12, 5, 0.0};
  std::size_t model_dim = 64;
  std::size_t decoder_layers = 4;
  std::size_t decoder_heads = 2;
  std::size_t decoder_ff = 64;
  double decoder_dropout = 0.1;
  AdamWConfig optimizer{5e-4, 0.9, 0.999, 1e-7, 0.0};
  std::size_t batch_size = 64;
  std::size_t epochs = 150;
  // Validation runs every `val_every` epochs and after the last one.
  std::size_t val_every = 1;

  void validate() const;
  [[nodiscard]] KvMap to_kv() const;
  static SorterConfig from_kv(KvReader& reader);
  bool operator==(const SorterConfig&) const = default;
};

class ClassifierModel {
 public:
  ClassifierModel(const ClassifierConfig& config, CounterRng& init_rng);

  // objects [B, 2, F] -> pre-sigmoid logits [B].
  [[nodiscard]] Tensor logits(const Tensor& objects, bool training, CounterRng& dropout_rng);
  void collect(ParameterList& params, BufferList& buffers);

  [[nodiscard]] const ClassifierConfig& config() const noexcept { return config_; }
  [[nodiscard]] LarsVsa& lars() noexcept { return lars_; }

 private:
  ClassifierConfig config_;
  BatchNormState encoder_norm_;
  LarsVsa lars_;
  Linear hidden_;
  Linear output_;
};

// Fixed sinusoidal position table [length, dim].
Tensor sinusoidal_positions(std::size_t length, std::size_t dim);

class Decoder {
 public:
  struct Layer {
    MultiHeadAttention self_attention;
    LayerNorm norm1;
    MultiHeadAttention cross_attention;
    LayerNorm norm2;
    FeedForward feed_forward;
    LayerNorm norm3;
  };

  Decoder(std::size_t vocab, std::size_t classes, std::size_t max_len, std::size_t memory_dim,
          std::size_t model_dim, std::size_t layers, std::size_t heads, std::size_t ff_dim,
          double dropout, CounterRng& rng);

  // tokens [B, L] row-major, memory [B, N, memory_dim] -> logits [B, L, classes].
  // Dropout on the input and on every sublayer output is active only when
  // `dropout_rng` is given.
  [[nodiscard]] Tensor forward(std::span<const std::int32_t> tokens, std::size_t batch,
                               std::size_t length, const Tensor& memory,
                               CounterRng* dropout_rng = nullptr) const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  Tensor embedding_;  // [vocab, model_dim]; the last row is the start token
  Tensor positions_;  // [max_len, model_dim], fixed
  double dropout_ = 0.0;
  std::vector<Layer> layers_;
  Linear output_;
};

class Seq2SeqModel {
 public:
  Seq2SeqModel(const SorterConfig& config, CounterRng& init_rng);

  // objects [B, N, F] -> abstract states [B, N, F].
  [[nodiscard]] Tensor encode(const Tensor& objects, bool training);
  // Teacher-forced logits [B, N, N]: decoder input is the start token
  // followed by targets[:, :-1].
  [[nodiscard]] Tensor logits(const Tensor& objects, std::span<const std::int32_t> targets,
                              bool training, CounterRng* dropout_rng = nullptr);
  // Logits for an explicit decoder input sequence [B, N].
  [[nodiscard]] Tensor decode(const Tensor& memory, std::span<const std::int32_t> inputs,
                              std::size_t batch) const;
  // Autoregressive greedy decoding in eval mode, [B, N] predicted indices.
  [[nodiscard]] std::vector<std::int32_t> greedy(const Tensor& objects);
  void collect(ParameterList& params, BufferList& buffers);

  [[nodiscard]] const SorterConfig& config() const noexcept { return config_; }
  [[nodiscard]] LarsVsa& lars() noexcept { return lars_; }
  [[nodiscard]] std::int32_t start_token() const noexcept {
    return static_cast<std::int32_t>(config_.seq_len);
  }

 private:
  SorterConfig config_;
  BatchNormState encoder_norm_;
  LarsVsa lars_;
  Decoder decoder_;
};

struct ReportRow {
  std::size_t epoch = 0;
  Split split = Split::train;
  double loss = 0.0;
  double accuracy = 0.0;
  bool operator==(const ReportRow&) const = default;
};

struct TrainReport {
  std::uint64_t seed = 0;
  std::vector<ReportRow> rows;  // nondecreasing epoch
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  double wall_seconds = 0.0;
};

// "epoch,split,loss,accuracy" with a header line; the test row carries the
// final epoch index.
void write_report_csv(const TrainReport& report, std::ostream& out, bool header = true);

struct Metrics {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

struct TrainOptions {
  // Continue from this state instead of initializing; training runs until
  // the config's epoch count.
  const Checkpoint* resume = nullptr;
  // Called after every completed epoch with the current state and the report
  // rows so far.
  std::function<void(const Checkpoint&, const TrainReport&)> on_epoch;
  // Evaluate the test split once training finishes.
  bool evaluate_test = true;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainReport report;
};

// Throws NumericalError when the loss or a gradient becomes non-finite and
// UsageError when the dataset does not fit the model or has no training
// examples, or when `resume` holds a different architecture.
TrainResult train_classifier(const TaskDataset& dataset, const ClassifierConfig& config,
                             std::uint64_t seed, const TrainOptions& options = {});
TrainResult train_sorter(const TaskDataset& dataset, const SorterConfig& config,
                         std::uint64_t seed, const TrainOptions& options = {});

// A frozen model rebuilt from a checkpoint. Evaluation uses running batch
// statistics and no dropout.
class TrainedModel {
 public:
  explicit TrainedModel(const Checkpoint& checkpoint);
  ~TrainedModel();
  TrainedModel(TrainedModel&&) noexcept;
  TrainedModel& operator=(TrainedModel&&) noexcept;

  [[nodiscard]] ModelKind kind() const noexcept { return kind_; }
  void set_score_mode(ScoreMode mode);

  // Throws UsageError for an empty split or a dataset of the wrong shape.
  [[nodiscard]] Metrics evaluate(const TaskDataset& dataset, Split split);
  // Classifier: one logit per example. Sorter: teacher-forced logits,
  // flattened [examples, N, N].
  [[nodiscard]] std::vector<double> logits(const TaskDataset& dataset, Split split);

  [[nodiscard]] ClassifierModel* classifier() noexcept { return classifier_.get(); }
  [[nodiscard]] Seq2SeqModel* sorter() noexcept { return sorter_.get(); }

 private:
  ModelKind kind_;
  std::unique_ptr<ClassifierModel> classifier_;
  std::unique_ptr<Seq2SeqModel> sorter_;
};

// Convenience wrapper around TrainedModel.
Metrics evaluate(const Checkpoint& checkpoint, const TaskDataset& dataset, Split split,
                 ScoreMode mode = ScoreMode::exact);

// Gathers examples into model inputs.
Tensor gather_objects(const TaskDataset& dataset, std::span<const std::size_t> rows);
std::vector<std::int32_t> gather_targets(const TaskDataset& dataset,
                                         std::span<const std::size_t> rows);

ModelKind checkpoint_kind(const Checkpoint& checkpoint);
ClassifierConfig classifier_config(const Checkpoint& checkpoint);
SorterConfig sorter_config(const Checkpoint& checkpoint);

}  // namespace lvsa
