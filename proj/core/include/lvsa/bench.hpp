#pragma once

// Score-kernel microbenchmarks and parameter-memory accounting.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lvsa/nn.hpp"
#include "lvsa/pipelines.hpp"

namespace lvsa {

namespace kernels {

// Plain sequential float dot product divided by D.
double float_dot_scalar(std::span<const float> a, std::span<const float> b) noexcept;
// Same score with independent partial sums that the compiler can vectorize.
double float_dot_vectorized(std::span<const float> a, std::span<const float> b) noexcept;

}  // namespace kernels

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Ordinary least squares; r2 is 1 when ys has no variance and the fit is exact.
LinearFit fit_linear(std::span<const double> xs, std::span<const double> ys);

struct KernelSeries {
  std::string kernel;
  std::vector<double> median_ns;  // one per dim
  std::vector<std::size_t> batch;  // calls per timed repetition, one per dim
  LinearFit fit;                   // slope is the rate in ns per dimension
};

struct BenchReport {
  std::vector<std::size_t> dims;
  std::vector<KernelSeries> kernels;
  std::size_t iterations = 0;
  std::size_t repetitions = 0;
  std::size_t warmups = 0;
  std::string cpu_model;
  std::string timestamp;
  std::string notes;

  [[nodiscard]] const KernelSeries& series(const std::string& kernel) const;
  // median(slow) / median(fast) at `dim`.
  [[nodiscard]] double speedup(const std::string& slow, const std::string& fast,
                               std::size_t dim) const;
};

struct BenchOptions {
  std::size_t repetitions = 31;
  std::size_t warmups = 5;
  // Lower bound on one timed repetition; batching grows until it is reached.
  double min_repetition_ns = 20000.0;
  std::uint64_t seed = 1;
};

inline const std::vector<std::size_t> kDefaultBenchDims{1024, 2048, 4096, 8192, 16384};

// Times the float and binarized scores on the same logical vectors. `iters`
// is the number of score evaluations per kernel and dim, spread over the
// repetitions. Throws UsageError unless dims are ascending multiples of 64,
// and std::logic_error when the kernels disagree.
BenchReport bench_score_kernels(const std::vector<std::size_t>& dims, std::size_t iters,
                                const BenchOptions& options = {});

void write_kernel_csv(const BenchReport& report, std::ostream& out);
// "key=value" summary with the fingerprint and fits.
void write_bench_summary(const BenchReport& report, std::ostream& out);

std::string cpu_model_string();
std::string utc_timestamp();

struct MemoryEntry {
  std::string module;
  std::size_t params = 0;
  std::size_t bits_per_param = 32;
  std::size_t bits = 0;
};

struct MemoryAccount {
  std::string model;
  std::vector<MemoryEntry> modules;
  std::size_t total_params = 0;
  std::size_t total_bits = 0;

  // Sum over modules whose name starts with `prefix`.
  [[nodiscard]] std::size_t bits_with_prefix(const std::string& prefix) const;
};

// One entry per parameter. With `deployed`, bipolar parameters count one
// bit each; otherwise everything counts 32.
MemoryAccount account_memory(const std::string& model, const ParameterList& params,
                             bool deployed = true);

MemoryAccount account_classifier(const ClassifierConfig& config, bool deployed = true);
MemoryAccount account_sorter(const SorterConfig& config, bool deployed = true);

struct TransformerBaselineConfig {
  std::size_t layers = 2;
  std::size_t model_dim = 64;
  std::size_t heads = 2;
  std::size_t ff_dim = 128;
};

// Transformer encoder followed by the sorter's decoder, with cross-attention
// reading the encoder's model_dim outputs.
MemoryAccount account_transformer_seq2seq(const SorterConfig& decoder_config,
                                          const TransformerBaselineConfig& encoder = {});

// "model,module,bits" rows plus one "total" row per account.
void write_memory_csv(std::span<const MemoryAccount> accounts, std::ostream& out);

}  // namespace lvsa
