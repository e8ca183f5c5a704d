#pragma once

// Counter-based SplitMix64 generator.
//
// Output k of a stream keyed by `key` is mix64(key + k * 0x9E3779B97F4A7C15),
// so the full state is the (key, counter) pair and streams are reproducible
// byte-for-byte on every platform. Gaussian samples use the Box-Muller
// transform on pairs of uniforms drawn in order (u1, u2); the cosine branch
// is emitted first, then the sine branch.
//
// Sub-streams are derived from a root seed and a stream name with
// derive_seed(root, name) = mix64(root ^ mix64(fnv1a64(name))).

#include <cstdint>
#include <span>
#include <string_view>

namespace lvsa {

std::uint64_t mix64(std::uint64_t z) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) noexcept;
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                          std::uint64_t index) noexcept;

struct RngState {
  std::uint64_t key = 0;
  std::uint64_t counter = 0;
  bool operator==(const RngState&) const = default;
};

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key = 0) noexcept : state_{key, 0} {}
  explicit CounterRng(RngState state) noexcept : state_(state) {}

  std::uint64_t next_u64() noexcept;
  // Uniform in (0, 1], 53 bits of resolution.
  double next_unit() noexcept;
  // Uniform integer in [0, bound). Rejection sampling keeps it unbiased.
  std::uint64_t uniform_below(std::uint64_t bound);
  // Fills `out` with N(0, 1) samples, consuming uniforms pairwise.
  void fill_gaussian(std::span<double> out) noexcept;
  // Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept;

  [[nodiscard]] RngState state() const noexcept { return state_; }

 private:
  RngState state_;
};

}  // namespace lvsa
