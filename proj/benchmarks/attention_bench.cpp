#include <benchmark/benchmark.h>

#include "lvsa/attention.hpp"
#include "lvsa/ops.hpp"
#include "lvsa/rng.hpp"

namespace {

lvsa::Tensor random_objects(std::size_t batch, std::size_t n, std::size_t f) {
  lvsa::CounterRng rng(lvsa::derive_seed(3, "gbench/objects"));
  std::vector<double> v(batch * n * f);
  rng.fill_gaussian(v);
  return lvsa::Tensor({batch, n, f}, std::move(v));
}

// One LARS-VSA head over a batch of sequences, inference only.
void BM_HdScores(benchmark::State& state) {
  const auto mode = state.range(1) == 0 ? lvsa::ScoreMode::exact : lvsa::ScoreMode::binarized;
  lvsa::CounterRng rng(11);
  lvsa::LarsVsaConfig cfg{1, static_cast<std::size_t>(state.range(0)), 12, 6, 0.0};
  cfg.score_mode = mode;
  lvsa::LarsVsa lars(cfg, rng);
  const auto objects = random_objects(64, 6, 12);
  for (auto _ : state) {
    const auto out = lars.forward(objects, false);
    benchmark::DoNotOptimize(out.values().data());
  }
  state.SetLabel(lvsa::to_string(mode));
}

void BM_SelfAttention(benchmark::State& state) {
  lvsa::CounterRng rng(11);
  const auto model_dim = static_cast<std::size_t>(state.range(0));
  const lvsa::MultiHeadAttention mha(model_dim, model_dim, 2, model_dim / 2, model_dim, rng);
  const auto objects = random_objects(64, 6, model_dim);
  for (auto _ : state) {
    const auto out = lvsa::self_attention(objects, mha);
    benchmark::DoNotOptimize(out.values().data());
  }
}

}  // namespace

BENCHMARK(BM_HdScores)->ArgsProduct({{1024, 4096}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SelfAttention)->Arg(64)->Unit(benchmark::kMicrosecond);
