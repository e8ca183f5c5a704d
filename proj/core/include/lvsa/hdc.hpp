#pragma once

// Bipolar hypervector arithmetic.
//
// A Hypervector holds D entries in {-1, +1}. Its binary image under
// B(x) = (x + 1) / 2 is stored as PackedBits: bit i of the stream lives at
// position (i mod 64) of word i / 64, padding bits are zero.
//
// sign() resolves ties (x == 0) to +1 everywhere in this library so that
// bundling never leaves the bipolar domain.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lvsa {

class CounterRng;

class Hypervector {
 public:
  // Throws UsageError if `values` is empty or holds anything but +-1.
  explicit Hypervector(std::vector<std::int8_t> values);

  static Hypervector ones(std::size_t dims);
  static Hypervector random(std::size_t dims, CounterRng& rng);

  [[nodiscard]] std::size_t dims() const noexcept { return values_.size(); }
  [[nodiscard]] std::span<const std::int8_t> values() const noexcept { return values_; }
  [[nodiscard]] std::int8_t operator[](std::size_t i) const { return values_[i]; }

  Hypervector operator-() const;
  bool operator==(const Hypervector&) const = default;

 private:
  std::vector<std::int8_t> values_;
};

class PackedBits {
 public:
  // Zero vector (all bits clear, i.e. the image of all -1).
  explicit PackedBits(std::size_t dims);
  // Throws UsageError when the word count is wrong or padding bits are set.
  static PackedBits from_words(std::size_t dims, std::vector<std::uint64_t> words);

  [[nodiscard]] std::size_t dims() const noexcept { return dims_; }
  [[nodiscard]] std::span<const std::uint64_t> words() const noexcept { return words_; }
  [[nodiscard]] bool bit(std::size_t i) const noexcept {
    return (words_[i >> 6] >> (i & 63)) & 1u;
  }
  void set_bit(std::size_t i) noexcept { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  // L0 norm of the binary vector.
  [[nodiscard]] std::uint64_t popcount() const noexcept;

  bool operator==(const PackedBits&) const = default;

 private:
  PackedBits(std::size_t dims, std::vector<std::uint64_t> words) noexcept
      : dims_(dims), words_(std::move(words)) {}

  std::size_t dims_;
  std::vector<std::uint64_t> words_;
};

// Strong type for a cosine-like score; |value| <= 1.
struct SimilarityScore {
  double value = 0.0;
  auto operator<=>(const SimilarityScore&) const = default;
};

inline constexpr std::size_t words_for(std::size_t dims) noexcept { return (dims + 63) / 64; }

Hypervector sign_bipolarize(std::span<const double> x);
Hypervector bundle(const Hypervector& a, const Hypervector& b);
Hypervector bind(const Hypervector& a, const Hypervector& b);
SimilarityScore cosine(const Hypervector& a, const Hypervector& b);
// cos(a, a (+) b).
SimilarityScore context_similarity(const Hypervector& a, const Hypervector& b);

PackedBits pack(const Hypervector& h);
Hypervector unpack(const PackedBits& b);
// Packs a row of +-1 doubles; throws UsageError on any other value.
PackedBits pack_signs(std::span<const double> row);

// Bundling in the binary domain: sign(a + b) with +1 ties is B^-1(B(a) | B(b)).
PackedBits bundle_packed(const PackedBits& a, const PackedBits& b);
// 1 + (4|a & b| - 2|a| - 2|b|) / D.
SimilarityScore cosine_binarized(const PackedBits& a, const PackedBits& b);
SimilarityScore context_similarity_binarized(const PackedBits& a, const PackedBits& b);

namespace kernels {

// Raw word kernels. `a` and `b` must have the same length; no float until the
// final division.
std::int64_t binarized_dot(std::span<const std::uint64_t> a,
                           std::span<const std::uint64_t> b,
                           std::size_t dims) noexcept;
double binarized_cosine(std::span<const std::uint64_t> a,
                        std::span<const std::uint64_t> b, std::size_t dims) noexcept;
double binarized_context_score(std::span<const std::uint64_t> a,
                               std::span<const std::uint64_t> b,
                               std::size_t dims) noexcept;

}  // namespace kernels

}  // namespace lvsa
