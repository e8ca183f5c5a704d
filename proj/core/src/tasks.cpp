#include "lvsa/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "lvsa/error.hpp"
#include "lvsa/kv_config.hpp"
#include "lvsa/rng.hpp"

namespace lvsa {

namespace {

constexpr std::string_view kMagic = "LVSA1\n";
constexpr std::size_t kAttrA = 4;
constexpr std::size_t kAttrB = 12;
constexpr std::size_t kDimA = 4;
constexpr std::size_t kDimB = 8;

std::vector<float> gaussian_floats(std::size_t count, CounterRng& rng) {
  std::vector<double> g(count);
  rng.fill_gaussian(g);
  return {g.begin(), g.end()};
}

template <class T>
void shuffle(std::vector<T>& v, CounterRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.uniform_below(i)]);
  }
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unused: return "unused";
  }
  return "?";
}

std::string to_string(TaskId task) {
  return task == TaskId::pairwise_order ? "pairwise-order" : "sorting";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  if (text == "unused") return Split::unused;
  throw_usage("unknown split '" + text + "'");
}

TaskId parse_task(const std::string& text) {
  if (text == "pairwise-order") return TaskId::pairwise_order;
  if (text == "sorting") return TaskId::sorting;
  throw_usage("unknown task '" + text + "' (expected pairwise-order|sorting)");
}

std::size_t TaskDataset::count(Split split) const noexcept {
  return static_cast<std::size_t>(
      std::count(splits.begin(), splits.end(), static_cast<std::int32_t>(split)));
}

std::vector<std::size_t> TaskDataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == static_cast<std::int32_t>(split)) out.push_back(i);
  }
  return out;
}

void TaskDataset::validate() const {
  if (objects.size() != num_examples * seq_len * feat_dim ||
      targets.size() != num_examples * target_len || splits.size() != num_examples ||
      object_ids.size() != num_examples * seq_len) {
    throw FormatError("dataset arrays do not match header shape");
  }
  for (auto s : splits) {
    if (s < 0 || s > 3) throw FormatError("dataset has an invalid split tag");
  }
}

SplitCounts pairwise_split_counts(std::size_t total) noexcept {
  SplitCounts c;
  c.pool = total / 2;
  c.val = total * 15 / 100;
  c.test = total - c.pool - c.val;
  return c;
}

OrderedObjectSet pairwise_objects(std::uint64_t seed) {
  CounterRng rng(derive_seed(seed, "pairwise/objects"));
  OrderedObjectSet set;
  set.dims = kPairwiseFeatures;
  set.features = gaussian_floats(kPairwiseObjects * kPairwiseFeatures, rng);
  set.rank.resize(kPairwiseObjects);
  std::iota(set.rank.begin(), set.rank.end(), 0);
  return set;
}

OrderedObjectSet sorting_objects(std::uint64_t seed) {
  CounterRng rng(derive_seed(seed, "sorting/attributes"));
  const auto a = gaussian_floats(kAttrA * kDimA, rng);
  const auto b = gaussian_floats(kAttrB * kDimB, rng);
  OrderedObjectSet set;
  set.dims = kDimA + kDimB;
  for (std::size_t i = 0; i < kAttrA; ++i) {
    for (std::size_t j = 0; j < kAttrB; ++j) {
      set.features.insert(set.features.end(), a.begin() + static_cast<std::ptrdiff_t>(i * kDimA),
                          a.begin() + static_cast<std::ptrdiff_t>((i + 1) * kDimA));
      set.features.insert(set.features.end(), b.begin() + static_cast<std::ptrdiff_t>(j * kDimB),
                          b.begin() + static_cast<std::ptrdiff_t>((j + 1) * kDimB));
      // a is the primary key, b the secondary key.
      set.rank.push_back(static_cast<std::int32_t>(i * kAttrB + j));
    }
  }
  return set;
}

TaskDataset gen_pairwise_order(std::uint64_t seed, std::size_t train_size, std::uint64_t trial,
                               bool include_diagonal) {
  const OrderedObjectSet objects = pairwise_objects(seed);
  const std::size_t n = objects.size();

  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j && !include_diagonal) continue;
      pairs.emplace_back(static_cast<std::int32_t>(i), static_cast<std::int32_t>(j));
    }
  }
  const SplitCounts counts = pairwise_split_counts(pairs.size());
  if (train_size == 0 || train_size > counts.pool) {
    throw_usage("gen_pairwise_order: train_size " + std::to_string(train_size) +
                " must be in [1, " + std::to_string(counts.pool) + "]");
  }
  CounterRng split_rng(derive_seed(seed, "pairwise/split"));
  shuffle(pairs, split_rng);

  std::vector<Split> tags(pairs.size(), Split::test);
  std::fill_n(tags.begin(), counts.pool, Split::unused);
  std::fill_n(tags.begin() + static_cast<std::ptrdiff_t>(counts.pool), counts.val, Split::val);
  std::vector<std::size_t> pool(counts.pool);
  std::iota(pool.begin(), pool.end(), 0);
  CounterRng trial_rng(derive_seed(seed, "pairwise/train-subset", trial));
  for (std::size_t k = 0; k < train_size; ++k) {
    const std::size_t pick = k + trial_rng.uniform_below(pool.size() - k);
    std::swap(pool[k], pool[pick]);
    tags[pool[k]] = Split::train;
  }

  TaskDataset d;
  d.task = TaskId::pairwise_order;
  d.seed = seed;
  d.trial = trial;
  d.include_diagonal = include_diagonal;
  d.num_examples = pairs.size();
  d.seq_len = 2;
  d.feat_dim = objects.dims;
  d.target_len = 1;
  d.objects.reserve(pairs.size() * 2 * objects.dims);
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const auto [i, j] = pairs[e];
    for (auto idx : {i, j}) {
      const auto* f = objects.features.data() + static_cast<std::size_t>(idx) * objects.dims;
      d.objects.insert(d.objects.end(), f, f + objects.dims);
      d.object_ids.push_back(idx);
    }
    d.targets.push_back(objects.precedes(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) ? 1 : 0);
    d.splits.push_back(static_cast<std::int32_t>(tags[e]));
  }
  return d;
}

TaskDataset gen_sorting(std::uint64_t seed, std::size_t seq_len, std::size_t n_samples) {
  if (seq_len != 5 && seq_len != 6) throw_usage("gen_sorting: seq_len must be 5 or 6");
  if (n_samples < 10) throw_usage("gen_sorting: n_samples must be >= 10");
  const OrderedObjectSet objects = sorting_objects(seed);
  CounterRng rng(derive_seed(seed, "sorting/sequences", seq_len));

  TaskDataset d;
  d.task = TaskId::sorting;
  d.seed = seed;
  d.num_examples = n_samples;
  d.seq_len = seq_len;
  d.feat_dim = objects.dims;
  d.target_len = seq_len;

  std::set<std::vector<std::int32_t>> seen;
  std::vector<std::int32_t> deck(objects.size());
  while (seen.size() < n_samples) {
    std::iota(deck.begin(), deck.end(), 0);
    for (std::size_t k = 0; k < seq_len; ++k) {
      std::swap(deck[k], deck[k + rng.uniform_below(deck.size() - k)]);
    }
    std::vector<std::int32_t> seq(deck.begin(), deck.begin() + static_cast<std::ptrdiff_t>(seq_len));
    if (!seen.insert(seq).second) continue;  // sample without replacement

    std::vector<std::int32_t> order(seq_len);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int32_t x, std::int32_t y) {
      return objects.precedes(static_cast<std::size_t>(seq[x]), static_cast<std::size_t>(seq[y]));
    });
    for (auto id : seq) {
      const auto* f = objects.features.data() + static_cast<std::size_t>(id) * objects.dims;
      d.objects.insert(d.objects.end(), f, f + objects.dims);
      d.object_ids.push_back(id);
    }
    d.targets.insert(d.targets.end(), order.begin(), order.end());
  }

  const std::size_t val = n_samples * 10 / 100;
  const std::size_t test = n_samples * 20 / 100;
  const std::size_t train = n_samples - val - test;
  d.splits.assign(train, static_cast<std::int32_t>(Split::train));
  d.splits.insert(d.splits.end(), val, static_cast<std::int32_t>(Split::val));
  d.splits.insert(d.splits.end(), test, static_cast<std::int32_t>(Split::test));
  return d;
}

TaskDataset subsample_train(const TaskDataset& dataset, std::size_t train_size,
                            std::uint64_t seed) {
  auto train = dataset.indices(Split::train);
  if (train_size == 0 || train_size > train.size()) {
    throw_usage("subsample_train: train_size " + std::to_string(train_size) +
                " must be in [1, " + std::to_string(train.size()) + "]");
  }
  TaskDataset out = dataset;
  CounterRng rng(derive_seed(seed, "train-subset"));
  for (std::size_t k = 0; k < train_size; ++k) {
    std::swap(train[k], train[k + rng.uniform_below(train.size() - k)]);
  }
  for (std::size_t k = train_size; k < train.size(); ++k) {
    out.splits[train[k]] = static_cast<std::int32_t>(Split::unused);
  }
  return out;
}

namespace {

std::string dataset_metadata(const TaskDataset& d) {
  KvMap m;
  m["task"] = to_string(d.task);
  m["seed"] = std::to_string(d.seed);
  m["trial"] = std::to_string(d.trial);
  m["include_diagonal"] = d.include_diagonal ? "true" : "false";
  m["examples"] = std::to_string(d.num_examples);
  m["seq_len"] = std::to_string(d.seq_len);
  m["feat_dim"] = std::to_string(d.feat_dim);
  m["target_len"] = std::to_string(d.target_len);
  m["split_train"] = std::to_string(d.count(Split::train));
  m["split_val"] = std::to_string(d.count(Split::val));
  m["split_test"] = std::to_string(d.count(Split::test));
  m["split_unused"] = std::to_string(d.count(Split::unused));
  m["objects_shape"] = std::to_string(d.num_examples) + "x" + std::to_string(d.seq_len) + "x" +
                       std::to_string(d.feat_dim);
  m["int_blocks"] = "targets,splits,object_ids";
  return format_kv(m);
}

}  // namespace

std::size_t encoded_size(const TaskDataset& d) {
  const std::size_t elements =
      d.objects.size() + d.targets.size() + d.splits.size() + d.object_ids.size();
  return kMagic.size() + 4 + dataset_metadata(d).size() + 4 * elements;
}

void write_dataset(const TaskDataset& d, std::ostream& out) {
  d.validate();
  out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
  binio::put_string(out, dataset_metadata(d));
  for (float v : d.objects) binio::put_f32(out, v);
  for (auto v : d.targets) binio::put_i32(out, v);
  for (auto v : d.splits) binio::put_i32(out, v);
  for (auto v : d.object_ids) binio::put_i32(out, v);
  if (!out) throw FormatError("dataset write failed");
}

TaskDataset read_dataset(std::istream& in) {
  binio::expect_magic(in, std::string(kMagic), "dataset");
  const KvMap meta = parse_kv(binio::get_string(in));
  KvReader r(meta);
  TaskDataset d;
  try {
    d.task = parse_task(r.require("task"));
    d.seed = r.get_u64("seed", 0);
    d.trial = r.get_u64("trial", 0);
    d.include_diagonal = r.get_bool("include_diagonal", false);
    d.num_examples = r.get_size("examples", 0);
    d.seq_len = r.get_size("seq_len", 0);
    d.feat_dim = r.get_size("feat_dim", 0);
    d.target_len = r.get_size("target_len", 0);
  } catch (const UsageError& e) {
    throw FormatError(std::string("dataset metadata: ") + e.what());
  }
  if (d.num_examples == 0 || d.seq_len == 0 || d.feat_dim == 0 || d.target_len == 0 ||
      d.num_examples > (1u << 26)) {
    throw FormatError("dataset metadata: invalid shape");
  }
  d.objects.resize(d.num_examples * d.seq_len * d.feat_dim);
  for (auto& v : d.objects) v = binio::get_f32(in);
  d.targets.resize(d.num_examples * d.target_len);
  for (auto& v : d.targets) v = binio::get_i32(in);
  d.splits.resize(d.num_examples);
  for (auto& v : d.splits) v = binio::get_i32(in);
  d.object_ids.resize(d.num_examples * d.seq_len);
  for (auto& v : d.object_ids) v = binio::get_i32(in);
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("dataset: trailing bytes");
  d.validate();
  const auto check = [&](const char* key, Split s) {
    if (meta.contains(key) && meta.at(key) != std::to_string(d.count(s))) {
      throw FormatError(std::string("dataset: ") + key + " does not match content");
    }
  };
  check("split_train", Split::train);
  check("split_val", Split::val);
  check("split_test", Split::test);
  check("split_unused", Split::unused);
  return d;
}

void write_dataset_file(const TaskDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_usage("cannot write dataset '" + path + "'");
  write_dataset(dataset, out);
}

TaskDataset read_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_usage("cannot open dataset '" + path + "'");
  return read_dataset(in);
}

}  // namespace lvsa
