#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lvsa/checkpoint.hpp"
#include "lvsa/error.hpp"
#include "lvsa/pipelines.hpp"
#include "lvsa/tasks.hpp"

namespace lvsa {
namespace {

ClassifierConfig small_classifier(std::size_t epochs) {
  ClassifierConfig c;
  c.lars.hyper_dim = 256;
  c.epochs = epochs;
  c.optimizer.learning_rate = 1e-3;
  return c;
}

SorterConfig small_sorter(std::size_t epochs) {
  SorterConfig s;
  s.lars.hyper_dim = 256;
  s.model_dim = 16;
  s.decoder_layers = 1;
  s.decoder_ff = 16;
  s.epochs = epochs;
  return s;
}

Checkpoint reload(const Checkpoint& c) {
  std::stringstream io;
  write_checkpoint(c, io);
  return read_checkpoint(io);
}

TEST(Classifier, TrainingIsDeterministicPerSeed) {
  const TaskDataset d = gen_pairwise_order(1, 100);
  const TrainResult a = train_classifier(d, small_classifier(2), 7);
  const TrainResult b = train_classifier(d, small_classifier(2), 7);
  EXPECT_EQ(a.checkpoint, b.checkpoint);
  EXPECT_EQ(a.report.rows, b.report.rows);
  const TrainResult c = train_classifier(d, small_classifier(2), 8);
  EXPECT_NE(a.checkpoint.records, c.checkpoint.records);
}

TEST(Classifier, ReportRowsAreMonotoneAndWellFormed) {
  const TaskDataset d = gen_pairwise_order(2, 100);
  const TrainResult r = train_classifier(d, small_classifier(3), 1);
  std::size_t last = 0;
  for (const ReportRow& row : r.report.rows) {
    EXPECT_GE(row.epoch, last);
    last = row.epoch;
    EXPECT_TRUE(std::isfinite(row.loss));
    EXPECT_GE(row.accuracy, 0.0);
    EXPECT_LE(row.accuracy, 1.0);
  }
  EXPECT_EQ(r.report.rows.back().split, Split::test);
  std::ostringstream csv;
  write_report_csv(r.report, csv);
  EXPECT_EQ(csv.str().substr(0, 26), "epoch,split,loss,accuracy\n");
}

TEST(Classifier, UntrainedModelIsAtChance) {
  const TaskDataset d = gen_pairwise_order(3, 200);
  double acc = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    acc += train_classifier(d, small_classifier(0), seed).report.test_accuracy;
  }
  EXPECT_NEAR(acc / 10.0, 0.5, 0.05);
}

TEST(Classifier, SaveLoadEvaluateIsBitExact) {
  const TaskDataset d = gen_pairwise_order(4, 150);
  const TrainResult r = train_classifier(d, small_classifier(2), 3);
  const Metrics before = evaluate(r.checkpoint, d, Split::test);
  const Metrics after = evaluate(reload(r.checkpoint), d, Split::test);
  EXPECT_EQ(before.loss, after.loss);
  EXPECT_EQ(before.accuracy, after.accuracy);
  EXPECT_EQ(before.accuracy, r.report.test_accuracy);
  EXPECT_EQ(before.loss, r.report.test_loss);
  const Metrics again = evaluate(r.checkpoint, d, Split::test);
  EXPECT_EQ(before.loss, again.loss);
}

TEST(Classifier, ResumeMatchesStraightTraining) {
  const TaskDataset d = gen_pairwise_order(5, 100);
  const TrainResult straight = train_classifier(d, small_classifier(4), 11);
  const TrainResult first = train_classifier(d, small_classifier(2), 11);
  const Checkpoint saved = reload(first.checkpoint);
  TrainOptions opts;
  opts.resume = &saved;
  const TrainResult second = train_classifier(d, small_classifier(4), 11, opts);
  EXPECT_EQ(second.checkpoint, straight.checkpoint);
  EXPECT_EQ(second.report.test_loss, straight.report.test_loss);
}

TEST(Classifier, ResumingForZeroEpochsIsANoOp) {
  const TaskDataset d = gen_pairwise_order(6, 64);
  const TrainResult r = train_classifier(d, small_classifier(2), 1);
  TrainOptions opts;
  opts.resume = &r.checkpoint;
  const TrainResult again = train_classifier(d, small_classifier(2), 1, opts);
  EXPECT_EQ(again.checkpoint, r.checkpoint);
}

TEST(Classifier, ResumeRejectsAChangedArchitecture) {
  const TaskDataset d = gen_pairwise_order(6, 64);
  const TrainResult r = train_classifier(d, small_classifier(1), 1);
  TrainOptions opts;
  opts.resume = &r.checkpoint;
  ClassifierConfig other = small_classifier(2);
  other.lars.heads = 2;
  EXPECT_THROW((void)train_classifier(d, other, 1, opts), UsageError);
  EXPECT_THROW((void)train_sorter(gen_sorting(1, 5, 100), small_sorter(1), 1, opts), UsageError);
}

TEST(Classifier, BinarizedLogitsEqualExact) {
  const TaskDataset d = gen_pairwise_order(7, 100);
  ClassifierConfig c = small_classifier(2);
  c.lars.heads = 2;
  const TrainResult r = train_classifier(d, c, 5);
  TrainedModel model(r.checkpoint);
  const auto exact = model.logits(d, Split::test);
  model.set_score_mode(ScoreMode::binarized);
  const auto bin = model.logits(d, Split::test);
  ASSERT_EQ(exact.size(), bin.size());
  for (std::size_t i = 0; i < exact.size(); ++i) EXPECT_LE(std::abs(exact[i] - bin[i]), 1e-9);
}

TEST(Classifier, EmptySplitIsAnError) {
  const TaskDataset d = gen_sorting(1, 5, 100);
  TaskDataset p = gen_pairwise_order(8, 64);
  const TrainResult r = train_classifier(p, small_classifier(1), 1);
  for (auto& s : p.splits) {
    if (s == static_cast<std::int32_t>(Split::val)) s = static_cast<std::int32_t>(Split::unused);
  }
  EXPECT_THROW((void)evaluate(r.checkpoint, p, Split::val), UsageError);
  EXPECT_THROW((void)evaluate(r.checkpoint, d, Split::test), UsageError);
}

TEST(Classifier, NonFiniteInputsAbort) {
  TaskDataset d = gen_pairwise_order(9, 64);
  for (auto& x : d.objects) x = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW((void)train_classifier(d, small_classifier(1), 1), NumericalError);
}

TEST(Sorter, UntrainedModelIsNearChance) {
  const TaskDataset d = gen_sorting(2, 5, 500);
  double acc = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    acc += train_sorter(d, small_sorter(0), seed).report.test_accuracy;
  }
  EXPECT_NEAR(acc / 5.0, 0.2, 0.07);
}

TEST(Sorter, DecoderIsCausal) {
  const TaskDataset d = gen_sorting(3, 5, 100);
  const TrainResult r = train_sorter(d, small_sorter(1), 2);
  TrainedModel model(r.checkpoint);
  Seq2SeqModel& net = *model.sorter();
  const std::vector<std::size_t> rows{0, 1, 2};
  const Tensor objects = gather_objects(d, rows);
  NoGradGuard guard;
  const Tensor memory = net.encode(objects, false);
  std::vector<std::int32_t> inputs{5, 0, 1, 2, 3, 5, 4, 3, 2, 1, 5, 1, 1, 1, 1};
  const Tensor base = net.decode(memory, inputs, 3);
  for (std::size_t t = 0; t < 5; ++t) {
    std::vector<std::int32_t> changed = inputs;
    for (std::size_t b = 0; b < 3; ++b) {
      for (std::size_t u = t + 1; u < 5; ++u) changed[b * 5 + u] = (changed[b * 5 + u] + 2) % 5;
    }
    const Tensor z = net.decode(memory, changed, 3);
    for (std::size_t b = 0; b < 3; ++b) {
      for (std::size_t k = 0; k < 5; ++k) {
        const std::size_t i = (b * 5 + t) * 5 + k;
        EXPECT_EQ(z.value(i), base.value(i)) << "step " << t;
      }
    }
  }
}

TEST(Sorter, GreedyDecodingAgreesWithTeacherForcingOnItsOwnOutput) {
  const TaskDataset d = gen_sorting(4, 5, 100);
  const TrainResult r = train_sorter(d, small_sorter(2), 3);
  TrainedModel model(r.checkpoint);
  Seq2SeqModel& net = *model.sorter();
  const std::vector<std::size_t> rows{0, 1, 2, 3};
  const Tensor objects = gather_objects(d, rows);
  const auto pred = net.greedy(objects);
  ASSERT_EQ(pred.size(), 20u);
  NoGradGuard guard;
  const Tensor z = net.logits(objects, pred, false);
  for (std::size_t i = 0; i < 20; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 5; ++k) {
      if (z.value(i * 5 + k) > z.value(i * 5 + best)) best = k;
    }
    EXPECT_EQ(static_cast<std::int32_t>(best), pred[i]);
  }
}

TEST(Sorter, ResumeMatchesStraightTrainingAndBinarizedAgrees) {
  const TaskDataset d = subsample_train(gen_sorting(5, 5, 300), 100, 1);
  const TrainResult straight = train_sorter(d, small_sorter(2), 4);
  const TrainResult first = train_sorter(d, small_sorter(1), 4);
  TrainOptions opts;
  const Checkpoint saved = reload(first.checkpoint);
  opts.resume = &saved;
  EXPECT_EQ(train_sorter(d, small_sorter(2), 4, opts).checkpoint, straight.checkpoint);

  TrainedModel model(straight.checkpoint);
  const auto exact = model.logits(d, Split::test);
  const Metrics m_exact = model.evaluate(d, Split::test);
  model.set_score_mode(ScoreMode::binarized);
  const auto bin = model.logits(d, Split::test);
  for (std::size_t i = 0; i < exact.size(); ++i) EXPECT_LE(std::abs(exact[i] - bin[i]), 1e-9);
  EXPECT_EQ(model.evaluate(d, Split::test).accuracy, m_exact.accuracy);
}

TEST(Sorter, DecoderDropoutOnlyActsWithAnRng) {
  const TaskDataset d = gen_sorting(6, 5, 100);
  const std::vector<std::size_t> rows{0, 1, 2, 3};
  const Tensor objects = gather_objects(d, rows);
  const auto targets = gather_targets(d, rows);
  NoGradGuard guard;
  for (double rate : {0.0, 0.5}) {
    SorterConfig cfg = small_sorter(1);
    cfg.decoder_dropout = rate;
    CounterRng init(1);
    Seq2SeqModel net(cfg, init);
    CounterRng a(9);
    CounterRng b(9);
    const Tensor plain = net.logits(objects, targets, true);
    const Tensor da = net.logits(objects, targets, true, &a);
    const Tensor db = net.logits(objects, targets, true, &b);
    EXPECT_EQ(da.values().size(), plain.values().size());
    EXPECT_TRUE(std::equal(da.values().begin(), da.values().end(), db.values().begin()));
    const bool same = std::equal(da.values().begin(), da.values().end(), plain.values().begin());
    EXPECT_EQ(same, rate == 0.0) << "rate " << rate;
  }
}

TEST(Sorter, RejectsMismatchedData) {
  EXPECT_THROW((void)train_sorter(gen_sorting(1, 6, 100), small_sorter(1), 1), UsageError);
  EXPECT_THROW((void)train_sorter(gen_pairwise_order(1, 10), small_sorter(1), 1), UsageError);
}

}  // namespace
}  // namespace lvsa
