#pragma once

// Checkpoint container (little-endian):
//   "LVCK1\n"
//   u32 format version
//   u32 metadata length, metadata bytes ("key=value\n" lines)
//   u32 record count, then per record:
//     u32 name length, name bytes
//     u8 dtype (1 = f32, 2 = f64)
//     u32 rank, u64 dims[rank]
//     values
// Records are written as f64 so that a reload reproduces training state
// exactly; f32 records are accepted on read.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lvsa/kv_config.hpp"
#include "lvsa/tensor.hpp"

namespace lvsa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
  bool operator==(const TensorRecord&) const = default;
};

struct Checkpoint {
  KvMap metadata;
  std::vector<TensorRecord> records;

  [[nodiscard]] const TensorRecord* find(const std::string& name) const noexcept;
  // Throws FormatError when the record is missing or its shape differs.
  [[nodiscard]] const TensorRecord& require(const std::string& name, const Shape& shape) const;
  void add(std::string name, Shape shape, std::vector<double> values);
  bool operator==(const Checkpoint&) const = default;
};

void write_checkpoint(const Checkpoint& checkpoint, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
// Throws UsageError when the file cannot be opened, FormatError when it is
// not a readable LVCK1 file of a supported version.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lvsa
