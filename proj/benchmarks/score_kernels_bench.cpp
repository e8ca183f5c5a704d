#include <benchmark/benchmark.h>

#include <vector>

#include "lvsa/bench.hpp"
#include "lvsa/hdc.hpp"
#include "lvsa/rng.hpp"

namespace {

struct Operands {
  std::vector<float> fa, fb;
  lvsa::PackedBits pa{64}, pb{64};
};

Operands make_operands(std::size_t dim) {
  lvsa::CounterRng rng(lvsa::derive_seed(7, "gbench", dim));
  const auto a = lvsa::Hypervector::random(dim, rng);
  const auto b = lvsa::Hypervector::random(dim, rng);
  Operands op;
  op.fa.assign(a.values().begin(), a.values().end());
  op.fb.assign(b.values().begin(), b.values().end());
  op.pa = lvsa::pack(a);
  op.pb = lvsa::pack(b);
  return op;
}

void BM_FloatDotScalar(benchmark::State& state) {
  const auto op = make_operands(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(op.fa.data());
    benchmark::DoNotOptimize(lvsa::kernels::float_dot_scalar(op.fa, op.fb));
  }
  state.SetComplexityN(state.range(0));
}

void BM_FloatDotVectorized(benchmark::State& state) {
  const auto op = make_operands(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(op.fa.data());
    benchmark::DoNotOptimize(lvsa::kernels::float_dot_vectorized(op.fa, op.fb));
  }
  state.SetComplexityN(state.range(0));
}

void BM_BinarizedCosine(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  const auto op = make_operands(dim);
  for (auto _ : state) {
    benchmark::DoNotOptimize(op.pa.words().data());
    benchmark::DoNotOptimize(lvsa::kernels::binarized_cosine(op.pa.words(), op.pb.words(), dim));
  }
  state.SetComplexityN(state.range(0));
}

void BM_BinarizedContext(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  const auto op = make_operands(dim);
  for (auto _ : state) {
    benchmark::DoNotOptimize(op.pa.words().data());
    benchmark::DoNotOptimize(lvsa::kernels::binarized_context_score(op.pa.words(), op.pb.words(), dim));
  }
  state.SetComplexityN(state.range(0));
}

}  // namespace

BENCHMARK(BM_FloatDotScalar)->RangeMultiplier(2)->Range(1024, 16384)->Complexity(benchmark::oN);
BENCHMARK(BM_FloatDotVectorized)->RangeMultiplier(2)->Range(1024, 16384)->Complexity(benchmark::oN);
BENCHMARK(BM_BinarizedCosine)->RangeMultiplier(2)->Range(1024, 16384)->Complexity(benchmark::oN);
BENCHMARK(BM_BinarizedContext)->RangeMultiplier(2)->Range(1024, 16384)->Complexity(benchmark::oN);
