#include "lvsa/rng.hpp"

#include <cmath>
#include <numbers>

#include "lvsa/error.hpp"

namespace lvsa {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) noexcept {
  return mix64(root ^ mix64(fnv1a64(stream)));
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                          std::uint64_t index) noexcept {
  return mix64(derive_seed(root, stream) + index * kGolden);
}

std::uint64_t CounterRng::next_u64() noexcept {
  ++state_.counter;
  return mix64(state_.key + state_.counter * kGolden);
}

double CounterRng::next_unit() noexcept {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

std::uint64_t CounterRng::uniform_below(std::uint64_t bound) {
  if (bound == 0) throw_usage("uniform_below: bound must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % bound;
}

void CounterRng::fill_gaussian(std::span<double> out) noexcept {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < out.size(); i += 2) {
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    out[i] = r * std::cos(two_pi * u2);
    if (i + 1 < out.size()) out[i + 1] = r * std::sin(two_pi * u2);
  }
}

double CounterRng::uniform(double lo, double hi) noexcept {
  // next_unit() is in (0, 1]; flip to [0, 1).
  return lo + (hi - lo) * (1.0 - next_unit());
}

}  // namespace lvsa
