#include "lvsa/pipelines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "lvsa/error.hpp"
#include "lvsa/ops.hpp"

namespace lvsa {

namespace {

constexpr std::size_t kEvalBatch = 256;
constexpr const char* kInitNote =
    "dense U(-1/sqrt(fan_in),1/sqrt(fan_in)); projection latent and symbols N(0,1)/sqrt(F)";
constexpr const char* kNormNote = "per hyperdimension coordinate over batch x position";

void put_lars(KvMap& m, const LarsVsaConfig& c) {
  m["lars.heads"] = std::to_string(c.heads);
  m["lars.hyper_dim"] = std::to_string(c.hyper_dim);
  m["lars.feature_dim"] = std::to_string(c.feature_dim);
  m["lars.max_positions"] = std::to_string(c.max_positions);
  m["lars.dropout"] = format_double(c.dropout);
  m["lars.score_mode"] = to_string(c.score_mode);
  m["lars.ablation"] = c.ablation ? "true" : "false";
  m["lars.projection"] = to_string(c.projection);
}

LarsVsaConfig get_lars(KvReader& r, LarsVsaConfig c) {
  c.heads = r.get_size("lars.heads", c.heads);
  c.hyper_dim = r.get_size("lars.hyper_dim", c.hyper_dim);
  c.feature_dim = r.get_size("lars.feature_dim", c.feature_dim);
  c.max_positions = r.get_size("lars.max_positions", c.max_positions);
  c.dropout = r.get_double("lars.dropout", c.dropout);
  c.score_mode = parse_score_mode(r.get("lars.score_mode", to_string(c.score_mode)));
  c.ablation = r.get_bool("lars.ablation", c.ablation);
  c.projection = parse_projection_mode(r.get("lars.projection", to_string(c.projection)));
  return c;
}

void put_optimizer(KvMap& m, const AdamWConfig& c) {
  m["optimizer.learning_rate"] = format_double(c.learning_rate);
  m["optimizer.beta1"] = format_double(c.beta1);
  m["optimizer.beta2"] = format_double(c.beta2);
  m["optimizer.eps"] = format_double(c.eps);
  m["optimizer.weight_decay"] = format_double(c.weight_decay);
}

AdamWConfig get_optimizer(KvReader& r, AdamWConfig c) {
  c.learning_rate = r.get_double("optimizer.learning_rate", c.learning_rate);
  c.beta1 = r.get_double("optimizer.beta1", c.beta1);
  c.beta2 = r.get_double("optimizer.beta2", c.beta2);
  c.eps = r.get_double("optimizer.eps", c.eps);
  c.weight_decay = r.get_double("optimizer.weight_decay", c.weight_decay);
  return c;
}

void validate_optimizer(const AdamWConfig& c) {
  if (!(c.learning_rate > 0.0) || !(c.beta1 >= 0.0 && c.beta1 < 1.0) ||
      !(c.beta2 >= 0.0 && c.beta2 < 1.0) || !(c.eps > 0.0) || !(c.weight_decay >= 0.0)) {
    throw_usage("optimizer settings out of range");
  }
}

KvMap with_prefix(const KvMap& m, const std::string& prefix) {
  KvMap out;
  for (const auto& [k, v] : m) out[prefix + k] = v;
  return out;
}

KvMap strip_prefix(const KvMap& m, const std::string& prefix) {
  KvMap out;
  for (const auto& [k, v] : m) {
    if (k.starts_with(prefix)) out[k.substr(prefix.size())] = v;
  }
  return out;
}

// Keys that may change between a checkpoint and a resumed run.
bool schedule_key(const std::string& key) { return key == "train.epochs" || key == "train.val_every"; }

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::string to_string(ModelKind kind) { return kind == ModelKind::classifier ? "classifier" : "sorter"; }

ModelKind parse_model_kind(const std::string& text) {
  if (text == "classifier") return ModelKind::classifier;
  if (text == "sorter") return ModelKind::sorter;
  throw_usage("unknown model kind '" + text + "'");
}

// ---- configs ----------------------------------------------------------------

void ClassifierConfig::validate() const {
  lars.validate();
  if (lars.max_positions < 2) throw_usage("classifier: lars.max_positions must be >= 2");
  if (hidden == 0 || batch_size == 0) throw_usage("classifier: hidden and batch_size must be >= 1");
  validate_optimizer(optimizer);
}

KvMap ClassifierConfig::to_kv() const {
  KvMap m;
  put_lars(m, lars);
  m["model.hidden"] = std::to_string(hidden);
  put_optimizer(m, optimizer);
  m["train.batch_size"] = std::to_string(batch_size);
  m["train.epochs"] = std::to_string(epochs);
  return m;
}

ClassifierConfig ClassifierConfig::from_kv(KvReader& r) {
  ClassifierConfig c;
  c.lars = get_lars(r, c.lars);
  c.hidden = r.get_size("model.hidden", c.hidden);
  c.optimizer = get_optimizer(r, c.optimizer);
  c.batch_size = r.get_size("train.batch_size", c.batch_size);
  c.epochs = r.get_size("train.epochs", c.epochs);
  return c;
}

void SorterConfig::validate() const {
  lars.validate();
  if (seq_len < 2) throw_usage("sorter: seq_len must be >= 2");
  if (lars.max_positions < seq_len) throw_usage("sorter: lars.max_positions must be >= seq_len");
  if (decoder_heads == 0 || model_dim % decoder_heads != 0) {
    throw_usage("sorter: model_dim must be divisible by decoder_heads");
  }
  if (decoder_layers == 0 || decoder_ff == 0 || batch_size == 0 || val_every == 0) {
    throw_usage("sorter: decoder_layers, decoder_ff, batch_size and val_every must be >= 1");
  }
  if (!(decoder_dropout >= 0.0 && decoder_dropout < 1.0)) {
    throw_usage("sorter: decoder_dropout must lie in [0, 1)");
  }
  validate_optimizer(optimizer);
}

KvMap SorterConfig::to_kv() const {
  KvMap m;
  put_lars(m, lars);
  m["model.seq_len"] = std::to_string(seq_len);
  m["model.model_dim"] = std::to_string(model_dim);
  m["model.decoder_layers"] = std::to_string(decoder_layers);
  m["model.decoder_heads"] = std::to_string(decoder_heads);
  m["model.decoder_ff"] = std::to_string(decoder_ff);
  m["model.decoder_dropout"] = format_double(decoder_dropout);
  put_optimizer(m, optimizer);
  m["train.batch_size"] = std::to_string(batch_size);
  m["train.epochs"] = std::to_string(epochs);
  m["train.val_every"] = std::to_string(val_every);
  return m;
}

SorterConfig SorterConfig::from_kv(KvReader& r) {
  SorterConfig c;
  c.seq_len = r.get_size("model.seq_len", c.seq_len);
  c.lars.max_positions = c.seq_len;
  c.lars = get_lars(r, c.lars);
  c.model_dim = r.get_size("model.model_dim", c.model_dim);
  c.decoder_layers = r.get_size("model.decoder_layers", c.decoder_layers);
  c.decoder_heads = r.get_size("model.decoder_heads", c.decoder_heads);
  c.decoder_ff = r.get_size("model.decoder_ff", c.decoder_ff);
  c.decoder_dropout = r.get_double("model.decoder_dropout", c.decoder_dropout);
  c.optimizer = get_optimizer(r, c.optimizer);
  c.batch_size = r.get_size("train.batch_size", c.batch_size);
  c.epochs = r.get_size("train.epochs", c.epochs);
  c.val_every = r.get_size("train.val_every", c.val_every);
  return c;
}

// ---- models -----------------------------------------------------------------

ClassifierModel::ClassifierModel(const ClassifierConfig& config, CounterRng& init_rng)
    : config_(config), encoder_norm_(config.lars.feature_dim) {
  config_.validate();
  lars_ = LarsVsa(config_.lars, init_rng);
  const std::size_t flat = config_.lars.max_positions * config_.lars.feature_dim;
  hidden_ = Linear(flat, config_.hidden, true, init_rng);
  output_ = Linear(config_.hidden, 1, true, init_rng);
}

Tensor ClassifierModel::logits(const Tensor& objects, bool training, CounterRng& dropout_rng) {
  if (objects.rank() != 3 || objects.dim(1) != config_.lars.max_positions) {
    throw_usage("classifier: expected objects [B, " + std::to_string(config_.lars.max_positions) +
                ", F], got " + to_string(objects.shape()));
  }
  const std::size_t batch = objects.dim(0);
  Tensor x = batch_norm(objects, encoder_norm_, training);
  x = dropout(x, config_.lars.dropout, training, dropout_rng);
  const Tensor abstract = lars_.forward(x, training);
  const Tensor flat = reshape(abstract, {batch, abstract.size() / batch});
  const Tensor z = output_.forward(relu(hidden_.forward(flat)));
  return reshape(z, {batch});
}

void ClassifierModel::collect(ParameterList& params, BufferList& buffers) {
  encoder_norm_.collect("encoder.norm", params, buffers);
  lars_.collect("lars", params, buffers);
  hidden_.collect("head.hidden", params);
  output_.collect("head.output", params);
}

Tensor sinusoidal_positions(std::size_t length, std::size_t dim) {
  std::vector<double> table(length * dim);
  for (std::size_t p = 0; p < length; ++p) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(p) * rate;
      table[p * dim + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor({length, dim}, std::move(table));
}

Decoder::Decoder(std::size_t vocab, std::size_t classes, std::size_t max_len,
                 std::size_t memory_dim, std::size_t model_dim, std::size_t layers,
                 std::size_t heads, std::size_t ff_dim, double dropout, CounterRng& rng)
    : embedding_(init_uniform_fan_in({vocab, model_dim}, 1, rng)),
      positions_(sinusoidal_positions(max_len, model_dim)),
      dropout_(dropout) {
  const std::size_t key_dim = model_dim / heads;
  for (std::size_t l = 0; l < layers; ++l) {
    Layer layer{MultiHeadAttention(model_dim, model_dim, heads, key_dim, model_dim, rng),
                LayerNorm(model_dim),
                MultiHeadAttention(model_dim, memory_dim, heads, key_dim, model_dim, rng),
                LayerNorm(model_dim),
                FeedForward(model_dim, ff_dim, rng),
                LayerNorm(model_dim)};
    layers_.push_back(std::move(layer));
  }
  output_ = Linear(model_dim, classes, true, rng);
}

Tensor Decoder::forward(std::span<const std::int32_t> tokens, std::size_t batch,
                        std::size_t length, const Tensor& memory,
                        CounterRng* dropout_rng) const {
  if (length > positions_.dim(0)) throw_usage("decoder: sequence longer than position table");
  const auto drop = [&](const Tensor& t) {
    return dropout_rng != nullptr ? dropout(t, dropout_, true, *dropout_rng) : t;
  };
  Tensor pos = positions_;
  if (length < positions_.dim(0)) pos = slice_rows(positions_, length);
  Tensor x = drop(add(embedding(embedding_, tokens, {batch, length}), pos));
  const Tensor mask = causal_mask(length);
  for (const auto& layer : layers_) {
    x = layer.norm1.forward(add(x, drop(layer.self_attention.forward(x, x, &mask))));
    x = layer.norm2.forward(add(x, drop(layer.cross_attention.forward(x, memory))));
    x = layer.norm3.forward(add(x, drop(layer.feed_forward.forward(x))));
  }
  return output_.forward(x);
}

void Decoder::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".embedding", embedding_});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    layers_[l].self_attention.collect(p + ".self_attention", out);
    layers_[l].norm1.collect(p + ".norm1", out);
    layers_[l].cross_attention.collect(p + ".cross_attention", out);
    layers_[l].norm2.collect(p + ".norm2", out);
    layers_[l].feed_forward.collect(p + ".feed_forward", out);
    layers_[l].norm3.collect(p + ".norm3", out);
  }
  output_.collect(prefix + ".output", out);
}

Seq2SeqModel::Seq2SeqModel(const SorterConfig& config, CounterRng& init_rng)
    : config_(config),
      encoder_norm_(config.lars.feature_dim),
      lars_((config.validate(), config.lars), init_rng),
      decoder_(config.seq_len + 1, config.seq_len, config.seq_len, config.lars.feature_dim,
               config.model_dim, config.decoder_layers, config.decoder_heads,
               config.decoder_ff, config.decoder_dropout, init_rng) {}

Tensor Seq2SeqModel::encode(const Tensor& objects, bool training) {
  if (objects.rank() != 3 || objects.dim(1) != config_.seq_len) {
    throw_usage("sorter: expected objects [B, " + std::to_string(config_.seq_len) + ", F], got " +
                to_string(objects.shape()));
  }
  return lars_.forward(batch_norm(objects, encoder_norm_, training), training);
}

Tensor Seq2SeqModel::decode(const Tensor& memory, std::span<const std::int32_t> inputs,
                            std::size_t batch) const {
  return decoder_.forward(inputs, batch, config_.seq_len, memory);
}

Tensor Seq2SeqModel::logits(const Tensor& objects, std::span<const std::int32_t> targets,
                            bool training, CounterRng* dropout_rng) {
  const std::size_t batch = objects.dim(0);
  const std::size_t len = config_.seq_len;
  if (targets.size() != batch * len) throw_usage("sorter: target size mismatch");
  std::vector<std::int32_t> inputs(batch * len);
  for (std::size_t b = 0; b < batch; ++b) {
    inputs[b * len] = start_token();
    for (std::size_t t = 1; t < len; ++t) inputs[b * len + t] = targets[b * len + t - 1];
  }
  return decoder_.forward(inputs, batch, len, encode(objects, training),
                          training ? dropout_rng : nullptr);
}

std::vector<std::int32_t> Seq2SeqModel::greedy(const Tensor& objects) {
  NoGradGuard no_grad;
  const std::size_t batch = objects.dim(0);
  const std::size_t len = config_.seq_len;
  const Tensor memory = encode(objects, false);
  std::vector<std::int32_t> inputs(batch * len, 0);
  std::vector<std::int32_t> out(batch * len, 0);
  for (std::size_t b = 0; b < batch; ++b) inputs[b * len] = start_token();
  for (std::size_t t = 0; t < len; ++t) {
    const Tensor z = decode(memory, inputs, batch);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto row = z.values().subspan((b * len + t) * len, len);
      out[b * len + t] = static_cast<std::int32_t>(argmax(row));
      if (t + 1 < len) inputs[b * len + t + 1] = out[b * len + t];
    }
  }
  return out;
}

void Seq2SeqModel::collect(ParameterList& params, BufferList& buffers) {
  encoder_norm_.collect("encoder.norm", params, buffers);
  lars_.collect("lars", params, buffers);
  decoder_.collect("decoder", params);
}

// ---- data -------------------------------------------------------------------

Tensor gather_objects(const TaskDataset& dataset, std::span<const std::size_t> rows) {
  const std::size_t width = dataset.seq_len * dataset.feat_dim;
  std::vector<double> values(rows.size() * width);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= dataset.num_examples) throw_usage("gather_objects: row out of range");
    std::copy_n(dataset.objects.data() + rows[k] * width, width, values.data() + k * width);
  }
  return Tensor({rows.size(), dataset.seq_len, dataset.feat_dim}, std::move(values));
}

std::vector<std::int32_t> gather_targets(const TaskDataset& dataset,
                                         std::span<const std::size_t> rows) {
  std::vector<std::int32_t> out;
  out.reserve(rows.size() * dataset.target_len);
  for (auto r : rows) {
    const auto* t = dataset.targets.data() + r * dataset.target_len;
    out.insert(out.end(), t, t + dataset.target_len);
  }
  return out;
}

void write_report_csv(const TrainReport& report, std::ostream& out, bool header) {
  if (header) out << "epoch,split,loss,accuracy\n";
  for (const auto& row : report.rows) {
    out << row.epoch << ',' << to_string(row.split) << ',' << format_double(row.loss) << ','
        << format_double(row.accuracy) << '\n';
  }
}

// ---- shared training machinery ------------------------------------------------

namespace {

void check_classifier_data(const TaskDataset& d, const ClassifierConfig& c) {
  if (d.seq_len != c.lars.max_positions || d.feat_dim != c.lars.feature_dim || d.target_len != 1) {
    throw_usage("classifier: dataset shape [" + std::to_string(d.seq_len) + " x " +
                std::to_string(d.feat_dim) + "] does not match the model");
  }
}

void check_sorter_data(const TaskDataset& d, const SorterConfig& c) {
  if (d.task != TaskId::sorting || d.seq_len != c.seq_len || d.feat_dim != c.lars.feature_dim ||
      d.target_len != c.seq_len) {
    throw_usage("sorter: dataset (seq_len " + std::to_string(d.seq_len) + ", feat_dim " +
                std::to_string(d.feat_dim) + ") does not match the model");
  }
}

std::vector<std::size_t> require_rows(const TaskDataset& d, Split split) {
  auto rows = d.indices(split);
  if (rows.empty()) throw_usage("split '" + to_string(split) + "' has no examples");
  return rows;
}

std::vector<double> as_doubles(std::span<const std::int32_t> v) { return {v.begin(), v.end()}; }

struct BatchResult {
  double loss_sum = 0.0;  // summed over elements
  double correct = 0.0;
  double elements = 0.0;
};

Metrics classifier_metrics(ClassifierModel& model, const TaskDataset& d, Split split) {
  check_classifier_data(d, model.config());
  const auto rows = require_rows(d, split);
  NoGradGuard no_grad;
  CounterRng unused;
  BatchResult acc;
  for (std::size_t start = 0; start < rows.size(); start += kEvalBatch) {
    const auto chunk = std::span(rows).subspan(start, std::min(kEvalBatch, rows.size() - start));
    const Tensor z = model.logits(gather_objects(d, chunk), false, unused);
    const auto targets = as_doubles(gather_targets(d, chunk));
    acc.loss_sum += binary_cross_entropy(sigmoid(z), targets).item() * static_cast<double>(chunk.size());
    for (std::size_t k = 0; k < chunk.size(); ++k) {
      acc.correct += ((z.value(k) >= 0.0) == (targets[k] > 0.5)) ? 1.0 : 0.0;
    }
    acc.elements += static_cast<double>(chunk.size());
  }
  return {acc.loss_sum / acc.elements, acc.correct / acc.elements, rows.size()};
}

Metrics sorter_metrics(Seq2SeqModel& model, const TaskDataset& d, Split split) {
  check_sorter_data(d, model.config());
  const auto rows = require_rows(d, split);
  const std::size_t len = model.config().seq_len;
  NoGradGuard no_grad;
  double loss_sum = 0.0;
  double correct = 0.0;
  for (std::size_t start = 0; start < rows.size(); start += kEvalBatch) {
    const auto chunk = std::span(rows).subspan(start, std::min(kEvalBatch, rows.size() - start));
    const Tensor objects = gather_objects(d, chunk);
    const auto targets = gather_targets(d, chunk);
    const Tensor z = model.logits(objects, targets, false);
    loss_sum += cross_entropy(reshape(z, {chunk.size() * len, len}), targets).item() *
                static_cast<double>(chunk.size() * len);
    const auto predicted = model.greedy(objects);
    for (std::size_t i = 0; i < targets.size(); ++i) correct += predicted[i] == targets[i] ? 1.0 : 0.0;
  }
  const double elements = static_cast<double>(rows.size() * len);
  return {loss_sum / elements, correct / elements, rows.size()};
}

Checkpoint snapshot(ModelKind kind, const KvMap& config_kv, std::uint64_t seed, std::size_t epoch,
                    const ParameterList& params, const BufferList& buffers, const AdamW& optimizer,
                    const CounterRng& rng) {
  Checkpoint ck;
  ck.metadata = with_prefix(config_kv, "config.");
  ck.metadata["kind"] = to_string(kind);
  ck.metadata["state.seed"] = std::to_string(seed);
  ck.metadata["state.epoch"] = std::to_string(epoch);
  ck.metadata["state.rng_key"] = std::to_string(rng.state().key);
  ck.metadata["state.rng_counter"] = std::to_string(rng.state().counter);
  ck.metadata["state.adam_step"] = std::to_string(optimizer.step_count());
  ck.metadata["note.init"] = kInitNote;
  ck.metadata["note.batch_norm_axes"] = kNormNote;
  for (const auto& p : params) {
    ck.add("param/" + p.name, p.tensor.shape(), {p.tensor.values().begin(), p.tensor.values().end()});
  }
  for (const auto& b : buffers) ck.add("buffer/" + b.name, {b.values->size()}, *b.values);
  const auto& m = optimizer.first_moments();
  const auto& v = optimizer.second_moments();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ck.add("adam_m/" + params[i].name, params[i].tensor.shape(), m[i]);
    ck.add("adam_v/" + params[i].name, params[i].tensor.shape(), v[i]);
  }
  return ck;
}

void restore_model(const Checkpoint& ck, ParameterList& params, BufferList& buffers) {
  for (auto& p : params) {
    const auto& r = ck.require("param/" + p.name, p.tensor.shape());
    std::copy(r.values.begin(), r.values.end(), p.tensor.mutable_values().begin());
  }
  for (auto& b : buffers) {
    const auto& r = ck.require("buffer/" + b.name, {b.values->size()});
    *b.values = r.values;
  }
}

std::uint64_t meta_u64(const Checkpoint& ck, const std::string& key) {
  KvReader r(ck.metadata);
  if (!r.has(key)) throw FormatError("checkpoint: missing metadata '" + key + "'");
  try {
    return r.get_u64(key, 0);
  } catch (const UsageError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

void restore_training(const Checkpoint& ck, const ParameterList& params, AdamW& optimizer,
                      CounterRng& rng, std::size_t& epoch) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    optimizer.first_moments()[i] = ck.require("adam_m/" + params[i].name, params[i].tensor.shape()).values;
    optimizer.second_moments()[i] = ck.require("adam_v/" + params[i].name, params[i].tensor.shape()).values;
  }
  optimizer.set_step_count(meta_u64(ck, "state.adam_step"));
  rng = CounterRng(RngState{meta_u64(ck, "state.rng_key"), meta_u64(ck, "state.rng_counter")});
  epoch = static_cast<std::size_t>(meta_u64(ck, "state.epoch"));
}

void check_resume(const Checkpoint& ck, ModelKind kind, const KvMap& config_kv) {
  if (checkpoint_kind(ck) != kind) {
    throw_usage("cannot resume a " + to_string(checkpoint_kind(ck)) + " checkpoint as " + to_string(kind));
  }
  const KvMap saved = strip_prefix(ck.metadata, "config.");
  for (const auto& [key, value] : config_kv) {
    if (schedule_key(key)) continue;
    auto it = saved.find(key);
    if (it == saved.end() || it->second != value) {
      throw_usage("resume: config key '" + key + "' differs from the checkpoint");
    }
  }
}

// One pass of the training loop shared by both tasks. `step` runs forward and
// backward on a batch and returns its loss statistics.
struct Loop {
  ModelKind kind;
  KvMap config_kv;
  std::size_t epochs;
  std::size_t batch_size;
  std::size_t val_every;
  std::uint64_t seed;
  std::function<BatchResult(std::span<const std::size_t>, CounterRng&)> step;
  std::function<Metrics(Split)> eval;
};

TrainResult run(const Loop& loop, const TaskDataset& dataset, ParameterList params,
                BufferList buffers, AdamWConfig opt_config, const TrainOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto train_rows = require_rows(dataset, Split::train);
  AdamW optimizer(params, opt_config);
  CounterRng rng(derive_seed(loop.seed, "dropout"));
  std::size_t epoch = 0;
  if (options.resume != nullptr) {
    check_resume(*options.resume, loop.kind, loop.config_kv);
    restore_model(*options.resume, params, buffers);
    restore_training(*options.resume, params, optimizer, rng, epoch);
  }
  const bool has_val = dataset.count(Split::val) > 0;

  TrainResult result;
  result.report.seed = loop.seed;
  for (; epoch < loop.epochs; ++epoch) {
    std::vector<std::size_t> order = train_rows;
    CounterRng shuffle_rng(derive_seed(loop.seed, "shuffle", epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_below(i)]);
    }
    BatchResult total;
    for (std::size_t start = 0; start < order.size(); start += loop.batch_size) {
      const auto batch =
          std::span(order).subspan(start, std::min(loop.batch_size, order.size() - start));
      optimizer.zero_grad();
      const BatchResult b = loop.step(batch, rng);
      if (!std::isfinite(b.loss_sum)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1) +
                             ", batch starting at example " + std::to_string(start));
      }
      optimizer.step();
      total.loss_sum += b.loss_sum;
      total.correct += b.correct;
      total.elements += b.elements;
    }
    const std::size_t done = epoch + 1;
    result.report.rows.push_back(
        {done, Split::train, total.loss_sum / total.elements, total.correct / total.elements});
    if (has_val && (done % loop.val_every == 0 || done == loop.epochs)) {
      const Metrics m = loop.eval(Split::val);
      result.report.rows.push_back({done, Split::val, m.loss, m.accuracy});
    }
    if (options.on_epoch) {
      options.on_epoch(snapshot(loop.kind, loop.config_kv, loop.seed, done, params, buffers,
                                optimizer, rng),
                       result.report);
    }
  }
  result.checkpoint =
      snapshot(loop.kind, loop.config_kv, loop.seed, epoch, params, buffers, optimizer, rng);
  if (options.evaluate_test && dataset.count(Split::test) > 0) {
    const Metrics m = loop.eval(Split::test);
    result.report.test_loss = m.loss;
    result.report.test_accuracy = m.accuracy;
    result.report.rows.push_back({epoch, Split::test, m.loss, m.accuracy});
  }
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace

TrainResult train_classifier(const TaskDataset& dataset, const ClassifierConfig& config,
                             std::uint64_t seed, const TrainOptions& options) {
  config.validate();
  check_classifier_data(dataset, config);
  CounterRng init_rng(derive_seed(seed, "init"));
  ClassifierModel model(config, init_rng);
  ParameterList params;
  BufferList buffers;
  model.collect(params, buffers);

  Loop loop;
  loop.kind = ModelKind::classifier;
  loop.config_kv = config.to_kv();
  loop.epochs = config.epochs;
  loop.batch_size = config.batch_size;
  loop.val_every = 1;
  loop.seed = seed;
  loop.step = [&](std::span<const std::size_t> rows, CounterRng& rng) {
    GradTape tape;
    const Tensor z = model.logits(gather_objects(dataset, rows), true, rng);
    const auto targets = as_doubles(gather_targets(dataset, rows));
    const Tensor loss = binary_cross_entropy(sigmoid(z), targets);
    BatchResult r;
    r.elements = static_cast<double>(rows.size());
    r.loss_sum = loss.item() * r.elements;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      r.correct += ((z.value(k) >= 0.0) == (targets[k] > 0.5)) ? 1.0 : 0.0;
    }
    if (std::isfinite(r.loss_sum)) tape.backward(loss);
    return r;
  };
  loop.eval = [&](Split split) { return classifier_metrics(model, dataset, split); };
  return run(loop, dataset, std::move(params), std::move(buffers), config.optimizer, options);
}

TrainResult train_sorter(const TaskDataset& dataset, const SorterConfig& config,
                         std::uint64_t seed, const TrainOptions& options) {
  config.validate();
  check_sorter_data(dataset, config);
  CounterRng init_rng(derive_seed(seed, "init"));
  Seq2SeqModel model(config, init_rng);
  ParameterList params;
  BufferList buffers;
  model.collect(params, buffers);
  const std::size_t len = config.seq_len;

  Loop loop;
  loop.kind = ModelKind::sorter;
  loop.config_kv = config.to_kv();
  loop.epochs = config.epochs;
  loop.batch_size = config.batch_size;
  loop.val_every = config.val_every;
  loop.seed = seed;
  loop.step = [&](std::span<const std::size_t> rows, CounterRng& rng) {
    GradTape tape;
    const auto targets = gather_targets(dataset, rows);
    const Tensor z = model.logits(gather_objects(dataset, rows), targets, true, &rng);
    const Tensor loss = cross_entropy(reshape(z, {rows.size() * len, len}), targets);
    BatchResult r;
    r.elements = static_cast<double>(targets.size());
    r.loss_sum = loss.item() * r.elements;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      r.correct += static_cast<std::int32_t>(argmax(z.values().subspan(i * len, len))) == targets[i];
    }
    if (std::isfinite(r.loss_sum)) tape.backward(loss);
    return r;
  };
  loop.eval = [&](Split split) { return sorter_metrics(model, dataset, split); };
  return run(loop, dataset, std::move(params), std::move(buffers), config.optimizer, options);
}

// ---- frozen models ----------------------------------------------------------

ModelKind checkpoint_kind(const Checkpoint& checkpoint) {
  auto it = checkpoint.metadata.find("kind");
  if (it == checkpoint.metadata.end()) throw FormatError("checkpoint: missing model kind");
  try {
    return parse_model_kind(it->second);
  } catch (const UsageError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

namespace {

template <class Config>
Config read_config(const Checkpoint& ck) {
  const KvMap values = strip_prefix(ck.metadata, "config.");
  KvReader r(values);
  try {
    Config c = Config::from_kv(r);
    r.reject_unknown();
    c.validate();
    return c;
  } catch (const UsageError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
}

}  // namespace

ClassifierConfig classifier_config(const Checkpoint& checkpoint) {
  if (checkpoint_kind(checkpoint) != ModelKind::classifier) throw FormatError("checkpoint is not a classifier");
  return read_config<ClassifierConfig>(checkpoint);
}

SorterConfig sorter_config(const Checkpoint& checkpoint) {
  if (checkpoint_kind(checkpoint) != ModelKind::sorter) throw FormatError("checkpoint is not a sorter");
  return read_config<SorterConfig>(checkpoint);
}

TrainedModel::TrainedModel(const Checkpoint& checkpoint) : kind_(checkpoint_kind(checkpoint)) {
  CounterRng init_rng(0);
  ParameterList params;
  BufferList buffers;
  if (kind_ == ModelKind::classifier) {
    classifier_ = std::make_unique<ClassifierModel>(classifier_config(checkpoint), init_rng);
    classifier_->collect(params, buffers);
  } else {
    sorter_ = std::make_unique<Seq2SeqModel>(sorter_config(checkpoint), init_rng);
    sorter_->collect(params, buffers);
  }
  restore_model(checkpoint, params, buffers);
}

TrainedModel::~TrainedModel() = default;
TrainedModel::TrainedModel(TrainedModel&&) noexcept = default;
TrainedModel& TrainedModel::operator=(TrainedModel&&) noexcept = default;

void TrainedModel::set_score_mode(ScoreMode mode) {
  if (classifier_) classifier_->lars().set_score_mode(mode);
  if (sorter_) sorter_->lars().set_score_mode(mode);
}

Metrics TrainedModel::evaluate(const TaskDataset& dataset, Split split) {
  return classifier_ ? classifier_metrics(*classifier_, dataset, split)
                     : sorter_metrics(*sorter_, dataset, split);
}

std::vector<double> TrainedModel::logits(const TaskDataset& dataset, Split split) {
  const auto rows = require_rows(dataset, split);
  NoGradGuard no_grad;
  CounterRng unused;
  std::vector<double> out;
  for (std::size_t start = 0; start < rows.size(); start += kEvalBatch) {
    const auto chunk = std::span(rows).subspan(start, std::min(kEvalBatch, rows.size() - start));
    Tensor z;
    if (classifier_) {
      check_classifier_data(dataset, classifier_->config());
      z = classifier_->logits(gather_objects(dataset, chunk), false, unused);
    } else {
      check_sorter_data(dataset, sorter_->config());
      z = sorter_->logits(gather_objects(dataset, chunk), gather_targets(dataset, chunk), false);
    }
    if (!all_finite(z.values())) throw NumericalError("non-finite logits during evaluation");
    out.insert(out.end(), z.values().begin(), z.values().end());
  }
  return out;
}

Metrics evaluate(const Checkpoint& checkpoint, const TaskDataset& dataset, Split split,
                 ScoreMode mode) {
  TrainedModel model(checkpoint);
  model.set_score_mode(mode);
  return model.evaluate(dataset, split);
}

}  // namespace lvsa
