#include "lvsa/hdc.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "lvsa/error.hpp"
#include "lvsa/rng.hpp"

namespace lvsa {

namespace {

void require_same_dims(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw_usage(std::string(op) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                std::to_string(b) + ")");
  }
}

std::int8_t sign_of(double x) noexcept { return x < 0.0 ? std::int8_t{-1} : std::int8_t{1}; }

}  // namespace

Hypervector::Hypervector(std::vector<std::int8_t> values) : values_(std::move(values)) {
  if (values_.empty()) throw_usage("Hypervector: dims must be positive");
  for (auto v : values_) {
    if (v != 1 && v != -1) throw_usage("Hypervector: entries must be +1 or -1");
  }
}

Hypervector Hypervector::ones(std::size_t dims) {
  return Hypervector(std::vector<std::int8_t>(dims, 1));
}

Hypervector Hypervector::random(std::size_t dims, CounterRng& rng) {
  std::vector<std::int8_t> v(dims);
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < dims; ++i) {
    if ((i & 63) == 0) bits = rng.next_u64();
    v[i] = (bits >> (i & 63)) & 1u ? 1 : -1;
  }
  return Hypervector(std::move(v));
}

Hypervector Hypervector::operator-() const {
  std::vector<std::int8_t> v(values_);
  for (auto& x : v) x = static_cast<std::int8_t>(-x);
  return Hypervector(std::move(v));
}

PackedBits::PackedBits(std::size_t dims) : dims_(dims), words_(words_for(dims), 0) {
  if (dims == 0) throw_usage("PackedBits: dims must be positive");
}

PackedBits PackedBits::from_words(std::size_t dims, std::vector<std::uint64_t> words) {
  if (dims == 0) throw_usage("PackedBits: dims must be positive");
  if (words.size() != words_for(dims)) throw_usage("PackedBits: wrong word count");
  if (const std::size_t tail = dims & 63; tail != 0) {
    if (words.back() >> tail) throw_usage("PackedBits: padding bits must be zero");
  }
  return PackedBits(dims, std::move(words));
}

std::uint64_t PackedBits::popcount() const noexcept {
  std::uint64_t n = 0;
  for (auto w : words_) n += static_cast<std::uint64_t>(std::popcount(w));
  return n;
}

Hypervector sign_bipolarize(std::span<const double> x) {
  std::vector<std::int8_t> v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw_usage("sign_bipolarize: non-finite input");
    v[i] = sign_of(x[i]);
  }
  return Hypervector(std::move(v));
}

Hypervector bundle(const Hypervector& a, const Hypervector& b) {
  require_same_dims(a.dims(), b.dims(), "bundle");
  std::vector<std::int8_t> v(a.dims());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = sign_of(a[i] + b[i]);
  return Hypervector(std::move(v));
}

Hypervector bind(const Hypervector& a, const Hypervector& b) {
  require_same_dims(a.dims(), b.dims(), "bind");
  std::vector<std::int8_t> v(a.dims());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::int8_t>(a[i] * b[i]);
  return Hypervector(std::move(v));
}

SimilarityScore cosine(const Hypervector& a, const Hypervector& b) {
  require_same_dims(a.dims(), b.dims(), "cosine");
  std::int64_t dot = 0;
  for (std::size_t i = 0; i < a.dims(); ++i) dot += a[i] * b[i];
  return {static_cast<double>(dot) / static_cast<double>(a.dims())};
}

SimilarityScore context_similarity(const Hypervector& a, const Hypervector& b) {
  return cosine(a, bundle(a, b));
}

PackedBits pack(const Hypervector& h) {
  PackedBits out(h.dims());
  for (std::size_t i = 0; i < h.dims(); ++i) {
    if (h[i] > 0) out.set_bit(i);
  }
  return out;
}

Hypervector unpack(const PackedBits& b) {
  std::vector<std::int8_t> v(b.dims());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = b.bit(i) ? 1 : -1;
  return Hypervector(std::move(v));
}

PackedBits pack_signs(std::span<const double> row) {
  PackedBits out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row[i] == 1.0) {
      out.set_bit(i);
    } else if (row[i] != -1.0) {
      throw_usage("pack_signs: row is not bipolar");
    }
  }
  return out;
}

PackedBits bundle_packed(const PackedBits& a, const PackedBits& b) {
  require_same_dims(a.dims(), b.dims(), "bundle_packed");
  std::vector<std::uint64_t> w(a.words().begin(), a.words().end());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] |= b.words()[i];
  return PackedBits::from_words(a.dims(), std::move(w));
}

SimilarityScore cosine_binarized(const PackedBits& a, const PackedBits& b) {
  require_same_dims(a.dims(), b.dims(), "cosine_binarized");
  return {kernels::binarized_cosine(a.words(), b.words(), a.dims())};
}

SimilarityScore context_similarity_binarized(const PackedBits& a, const PackedBits& b) {
  require_same_dims(a.dims(), b.dims(), "context_similarity_binarized");
  return {kernels::binarized_context_score(a.words(), b.words(), a.dims())};
}

namespace kernels {

std::int64_t binarized_dot(std::span<const std::uint64_t> a,
                           std::span<const std::uint64_t> b, std::size_t dims) noexcept {
  std::int64_t both = 0;
  std::int64_t pa = 0;
  std::int64_t pb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    both += std::popcount(a[i] & b[i]);
    pa += std::popcount(a[i]);
    pb += std::popcount(b[i]);
  }
  // <2B(a)-1, 2B(b)-1> = D + 4|a&b| - 2|a| - 2|b|
  return static_cast<std::int64_t>(dims) + 4 * both - 2 * pa - 2 * pb;
}

double binarized_cosine(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                        std::size_t dims) noexcept {
  return static_cast<double>(binarized_dot(a, b, dims)) / static_cast<double>(dims);
}

double binarized_context_score(std::span<const std::uint64_t> a,
                               std::span<const std::uint64_t> b, std::size_t dims) noexcept {
  // Context word c = a | b is the packed bundle of a and b.
  std::int64_t both = 0;
  std::int64_t pa = 0;
  std::int64_t pc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::uint64_t c = a[i] | b[i];
    both += std::popcount(a[i] & c);
    pa += std::popcount(a[i]);
    pc += std::popcount(c);
  }
  const std::int64_t dot = static_cast<std::int64_t>(dims) + 4 * both - 2 * pa - 2 * pc;
  return static_cast<double>(dot) / static_cast<double>(dims);
}

}  // namespace kernels

}  // namespace lvsa
