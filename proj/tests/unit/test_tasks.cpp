#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "lvsa/error.hpp"
#include "lvsa/tasks.hpp"

namespace lvsa {
namespace {

std::string encode(const TaskDataset& d) {
  std::ostringstream out;
  write_dataset(d, out);
  return out.str();
}

TEST(PairwiseOrder, SplitSizes) {
  const SplitCounts with_diag = pairwise_split_counts(64 * 64);
  EXPECT_EQ(with_diag.pool, 2048u);
  EXPECT_EQ(with_diag.val, 614u);
  EXPECT_EQ(with_diag.test, 1434u);
  const SplitCounts plain = pairwise_split_counts(64 * 63);
  EXPECT_EQ(plain.pool, 2016u);
  EXPECT_EQ(plain.val, 604u);
  EXPECT_EQ(plain.test, 1412u);

  const TaskDataset d = gen_pairwise_order(1, 200);
  EXPECT_EQ(d.num_examples, 4032u);
  EXPECT_EQ(d.count(Split::train), 200u);
  EXPECT_EQ(d.count(Split::unused), 1816u);
  EXPECT_EQ(d.count(Split::val), 604u);
  EXPECT_EQ(d.count(Split::test), 1412u);
  const TaskDataset diag = gen_pairwise_order(1, 10, 0, true);
  EXPECT_EQ(diag.num_examples, 4096u);
  EXPECT_EQ(diag.count(Split::test), 1434u);
}

TEST(PairwiseOrder, LabelsFollowObjectOrder) {
  const TaskDataset d = gen_pairwise_order(2, 100, 0, true);
  const OrderedObjectSet objs = pairwise_objects(2);
  ASSERT_EQ(objs.size(), 64u);
  std::set<std::pair<int, int>> seen;
  std::size_t positives = 0;
  for (std::size_t e = 0; e < d.num_examples; ++e) {
    const int i = d.object_ids[e * 2];
    const int j = d.object_ids[e * 2 + 1];
    seen.insert({i, j});
    EXPECT_EQ(d.targets[e], objs.precedes(i, j) ? 1 : 0);
    positives += static_cast<std::size_t>(d.targets[e]);
    for (std::size_t k = 0; k < 32; ++k) {
      EXPECT_EQ(d.objects[(e * 2) * 32 + k], objs.features[i * 32 + k]);
      EXPECT_EQ(d.objects[(e * 2 + 1) * 32 + k], objs.features[j * 32 + k]);
    }
  }
  EXPECT_EQ(seen.size(), 4096u);
  EXPECT_EQ(positives, 64u * 63u / 2u);
}

TEST(PairwiseOrder, ObjectsAreStandardNormal) {
  const OrderedObjectSet objs = pairwise_objects(3);
  double m = 0.0, v = 0.0;
  for (float x : objs.features) m += x;
  m /= objs.features.size();
  for (float x : objs.features) v += (x - m) * (x - m);
  v /= objs.features.size();
  EXPECT_NEAR(m, 0.0, 0.1);
  EXPECT_NEAR(v, 1.0, 0.1);
}

TEST(PairwiseOrder, TrialsShareSplitsButResampleTraining) {
  const TaskDataset a = gen_pairwise_order(4, 50, 0);
  const TaskDataset b = gen_pairwise_order(4, 50, 1);
  EXPECT_EQ(a.object_ids, b.object_ids);
  EXPECT_EQ(a.indices(Split::test), b.indices(Split::test));
  EXPECT_EQ(a.indices(Split::val), b.indices(Split::val));
  EXPECT_NE(a.indices(Split::train), b.indices(Split::train));
  // Smaller training sets are drawn from the same pool.
  const TaskDataset small = gen_pairwise_order(4, 10, 0);
  for (std::size_t e : small.indices(Split::train)) {
    EXPECT_TRUE(a.splits[e] == 0 || a.splits[e] == 3);
  }
}

TEST(PairwiseOrder, RejectsBadSizes) {
  EXPECT_THROW((void)gen_pairwise_order(1, 0), UsageError);
  EXPECT_THROW((void)gen_pairwise_order(1, 2017), UsageError);
  EXPECT_NO_THROW((void)gen_pairwise_order(1, 2016));
}

TEST(Sorting, TargetsAreArgsort) {
  const TaskDataset d = gen_sorting(5, 5, 1000);
  const OrderedObjectSet objs = sorting_objects(5);
  ASSERT_EQ(objs.size(), 48u);
  EXPECT_EQ(objs.dims, 12u);
  EXPECT_EQ(d.count(Split::train), 700u);
  EXPECT_EQ(d.count(Split::val), 100u);
  EXPECT_EQ(d.count(Split::test), 200u);
  std::set<std::vector<int>> sequences;
  for (std::size_t e = 0; e < d.num_examples; ++e) {
    std::vector<int> ids(d.object_ids.begin() + e * 5, d.object_ids.begin() + (e + 1) * 5);
    EXPECT_EQ(std::set<int>(ids.begin(), ids.end()).size(), 5u);
    sequences.insert(ids);
    std::vector<int> perm(d.targets.begin() + e * 5, d.targets.begin() + (e + 1) * 5);
    for (std::size_t k = 1; k < 5; ++k) {
      EXPECT_TRUE(objs.precedes(ids[perm[k - 1]], ids[perm[k]]));
    }
  }
  EXPECT_EQ(sequences.size(), 1000u);
}

TEST(Sorting, OrderIsAttributeAThenB) {
  const OrderedObjectSet objs = sorting_objects(6);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(objs.rank[i * 12 + j], int(i * 12 + j));
  }
  // Objects that share an attribute share its features.
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(objs.features[0 * 12 + k], objs.features[5 * 12 + k]);
  for (std::size_t k = 4; k < 12; ++k) EXPECT_EQ(objs.features[1 * 12 + k], objs.features[13 * 12 + k]);
}

TEST(Sorting, RejectsBadArguments) {
  EXPECT_THROW((void)gen_sorting(1, 4, 100), UsageError);
  EXPECT_THROW((void)gen_sorting(1, 5, 9), UsageError);
  EXPECT_NO_THROW((void)gen_sorting(1, 6, 100));
}

TEST(Subsample, KeepsOnlyRequestedTrainingExamples) {
  const TaskDataset d = gen_sorting(7, 5, 1000);
  const TaskDataset s = subsample_train(d, 460, 3);
  EXPECT_EQ(s.count(Split::train), 460u);
  EXPECT_EQ(s.count(Split::unused), 240u);
  EXPECT_EQ(s.indices(Split::test), d.indices(Split::test));
  for (std::size_t e : s.indices(Split::train)) EXPECT_EQ(d.splits[e], 0);
  EXPECT_EQ(encode(subsample_train(d, 460, 3)), encode(s));
  EXPECT_THROW((void)subsample_train(d, 701, 3), UsageError);
}

TEST(Datasets, IdenticalSeedsGiveIdenticalBytes) {
  EXPECT_EQ(encode(gen_pairwise_order(9, 150, 2)), encode(gen_pairwise_order(9, 150, 2)));
  EXPECT_EQ(encode(gen_sorting(9, 6, 500)), encode(gen_sorting(9, 6, 500)));
  EXPECT_NE(encode(gen_sorting(9, 5, 500)), encode(gen_sorting(10, 5, 500)));
}

TEST(Datasets, RoundTrip) {
  for (const TaskDataset& d : {gen_pairwise_order(11, 30, 1, true), gen_sorting(11, 5, 200)}) {
    const std::string bytes = encode(d);
    EXPECT_EQ(bytes.size(), encoded_size(d));
    std::istringstream in(bytes);
    const TaskDataset back = read_dataset(in);
    EXPECT_EQ(back, d);
  }
}

TEST(Datasets, FormatErrors) {
  const std::string good = encode(gen_sorting(12, 5, 100));
  {
    std::istringstream in("LVSA2\n" + good.substr(6));
    EXPECT_THROW((void)read_dataset(in), FormatError);
  }
  {
    std::istringstream in(good.substr(0, good.size() - 3));
    EXPECT_THROW((void)read_dataset(in), FormatError);
  }
  {
    std::istringstream in(good + "x");
    EXPECT_THROW((void)read_dataset(in), FormatError);
  }
  {
    std::string bad = good;
    bad[bad.size() - 4 * 5 * 100 - 4] = 7;  // a split tag outside 0..3
    std::istringstream in(bad);
    EXPECT_THROW((void)read_dataset(in), FormatError);
  }
  EXPECT_THROW((void)read_dataset_file("/nonexistent/lvsa/data.lvsa"), UsageError);
}

}  // namespace
}  // namespace lvsa
