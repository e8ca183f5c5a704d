#pragma once

// Synthetic relational datasets.
//
// pairwise-order: 64 objects o_i ~ N(0, I_32) ordered by index. Every ordered
//   pair (o_i, o_j) is an example labelled 1 iff i < j. Pairs are shuffled and
//   partitioned into a training pool (floor 50%), validation (floor 15%) and
//   test (remainder); `train_size` pairs are drawn from the pool per trial and
//   the rest of the pool is tagged unused. Self-pairs are excluded unless
//   `include_diagonal` is set, in which case they are labelled 0.
//
// sorting: attributes a_1..a_4 ~ N(0, I_4) and b_1..b_12 ~ N(0, I_8); the 48
//   objects (a_i, b_j) are ordered by a first, then b. Each example is a
//   random sequence of distinct objects and its target is the argsort of the
//   sequence. Sequences are distinct; 70/10/20 train/val/test with floor for
//   val and test.
//
// Container (little-endian):
//   "LVSA1\n"
//   u32 metadata length, metadata bytes (UTF-8 "key=value\n" lines)
//   f32 objects      [examples, seq_len, feat_dim]
//   i32 targets      [examples, target_len]
//   i32 split tags   [examples]           (0 train, 1 val, 2 test, 3 unused)
//   i32 object ids   [examples, seq_len]

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lvsa {

enum class Split : std::int32_t { train = 0, val = 1, test = 2, unused = 3 };
enum class TaskId { pairwise_order, sorting };

std::string to_string(Split split);
std::string to_string(TaskId task);
Split parse_split(const std::string& text);
TaskId parse_task(const std::string& text);

// Objects with a strict total order given by `rank` (lower is earlier).
struct OrderedObjectSet {
  std::size_t dims = 0;
  std::vector<float> features;  // [count, dims]
  std::vector<std::int32_t> rank;

  [[nodiscard]] std::size_t size() const noexcept { return rank.size(); }
  [[nodiscard]] bool precedes(std::size_t i, std::size_t j) const { return rank.at(i) < rank.at(j); }
};

struct TaskDataset {
  TaskId task = TaskId::pairwise_order;
  std::uint64_t seed = 0;
  std::uint64_t trial = 0;
  bool include_diagonal = false;
  std::size_t num_examples = 0;
  std::size_t seq_len = 0;
  std::size_t feat_dim = 0;
  std::size_t target_len = 0;
  std::vector<float> objects;
  std::vector<std::int32_t> targets;
  std::vector<std::int32_t> splits;
  std::vector<std::int32_t> object_ids;

  [[nodiscard]] std::size_t count(Split split) const noexcept;
  [[nodiscard]] std::vector<std::size_t> indices(Split split) const;
  // Throws FormatError when the array sizes disagree with the header fields.
  void validate() const;
  bool operator==(const TaskDataset&) const = default;
};

struct SplitCounts {
  std::size_t pool = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

inline constexpr std::size_t kPairwiseObjects = 64;
inline constexpr std::size_t kPairwiseFeatures = 32;

// Pool / val / test sizes for `total` pairs.
SplitCounts pairwise_split_counts(std::size_t total) noexcept;

OrderedObjectSet pairwise_objects(std::uint64_t seed);
OrderedObjectSet sorting_objects(std::uint64_t seed);

// Throws UsageError when train_size is 0 or exceeds the training pool.
TaskDataset gen_pairwise_order(std::uint64_t seed, std::size_t train_size,
                               std::uint64_t trial = 0, bool include_diagonal = false);
// Throws UsageError unless seq_len is 5 or 6 and n_samples >= 10.
TaskDataset gen_sorting(std::uint64_t seed, std::size_t seq_len, std::size_t n_samples);

// Keeps `train_size` randomly chosen training examples and tags the other
// training examples unused.
TaskDataset subsample_train(const TaskDataset& dataset, std::size_t train_size,
                            std::uint64_t seed);

void write_dataset(const TaskDataset& dataset, std::ostream& out);
TaskDataset read_dataset(std::istream& in);
void write_dataset_file(const TaskDataset& dataset, const std::string& path);
TaskDataset read_dataset_file(const std::string& path);

// Bytes written by write_dataset for this dataset.
std::size_t encoded_size(const TaskDataset& dataset);

}  // namespace lvsa
