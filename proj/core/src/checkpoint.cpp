#include "lvsa/checkpoint.hpp"

#include <cstdio>
#include <fstream>

#include "binary_io.hpp"
#include "lvsa/error.hpp"

namespace lvsa {

namespace {

constexpr std::string_view kMagic = "LVCK1\n";
constexpr std::uint8_t kF32 = 1;
constexpr std::uint8_t kF64 = 2;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

}  // namespace

const TensorRecord* Checkpoint::find(const std::string& name) const noexcept {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

const TensorRecord& Checkpoint::require(const std::string& name, const Shape& shape) const {
  const TensorRecord* r = find(name);
  if (r == nullptr) throw FormatError("checkpoint: missing record '" + name + "'");
  if (r->shape != shape) {
    throw FormatError("checkpoint: record '" + name + "' has shape " + to_string(r->shape) +
                      ", expected " + to_string(shape));
  }
  return *r;
}

void Checkpoint::add(std::string name, Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size()) throw_usage("checkpoint: record '" + name + "' size mismatch");
  if (find(name) != nullptr) throw_usage("checkpoint: duplicate record '" + name + "'");
  records.push_back({std::move(name), std::move(shape), std::move(values)});
}

void write_checkpoint(const Checkpoint& checkpoint, std::ostream& out) {
  out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
  binio::put_uint(out, kCheckpointVersion);
  binio::put_string(out, format_kv(checkpoint.metadata));
  binio::put_uint(out, static_cast<std::uint32_t>(checkpoint.records.size()));
  for (const auto& r : checkpoint.records) {
    binio::put_string(out, r.name);
    binio::put_uint(out, kF64);
    binio::put_uint(out, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) binio::put_uint(out, static_cast<std::uint64_t>(d));
    for (double v : r.values) binio::put_f64(out, v);
  }
  if (!out) throw FormatError("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  binio::expect_magic(in, std::string(kMagic), "checkpoint");
  const auto version = binio::get_uint<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  try {
    ck.metadata = parse_kv(binio::get_string(in));
  } catch (const UsageError& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  const auto count = binio::get_uint<std::uint32_t>(in);
  for (std::uint32_t k = 0; k < count; ++k) {
    TensorRecord r;
    r.name = binio::get_string(in, 4096);
    const auto dtype = binio::get_uint<std::uint8_t>(in);
    if (dtype != kF32 && dtype != kF64) throw FormatError("checkpoint: unknown dtype in '" + r.name + "'");
    const auto rank = binio::get_uint<std::uint32_t>(in);
    if (rank == 0 || rank > 8) throw FormatError("checkpoint: bad rank in '" + r.name + "'");
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = binio::get_uint<std::uint64_t>(in);
      if (dim == 0 || dim > kMaxElements || (total *= dim) > kMaxElements) {
        throw FormatError("checkpoint: bad shape in '" + r.name + "'");
      }
      r.shape.push_back(static_cast<std::size_t>(dim));
    }
    r.values.resize(static_cast<std::size_t>(total));
    for (auto& v : r.values) v = dtype == kF64 ? binio::get_f64(in) : binio::get_f32(in);
    if (ck.find(r.name) != nullptr) throw FormatError("checkpoint: duplicate record '" + r.name + "'");
    ck.records.push_back(std::move(r));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  // Write to a sibling file first so an interrupted save never clobbers the
  // previous checkpoint.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw_usage("cannot write checkpoint '" + path + "'");
    write_checkpoint(checkpoint, out);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw_usage("cannot move checkpoint into place at '" + path + "'");
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_usage("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace lvsa
