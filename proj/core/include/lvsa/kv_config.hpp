#pragma once

// Flat UTF-8 "key=value" text. A "[section]" header prefixes the keys that
// follow it with "section."; '#' starts a comment line.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace lvsa {

using KvMap = std::map<std::string, std::string>;

// Throws UsageError on malformed lines or duplicate keys.
KvMap parse_kv(std::string_view text);
std::string format_kv(const KvMap& values);
KvMap read_kv_file(const std::string& path);
void write_kv_file(const KvMap& values, const std::string& path);

// Typed lookups that remember which keys were consumed so leftovers can be
// rejected.
class KvReader {
 public:
  explicit KvReader(const KvMap& values) : values_(values) {}

  [[nodiscard]] bool has(const std::string& key) const { return values_.contains(key); }
  std::string get(const std::string& key, const std::string& fallback);
  std::string require(const std::string& key);
  std::size_t get_size(const std::string& key, std::size_t fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);

  // Throws UsageError naming every key that was never read.
  void reject_unknown() const;

 private:
  const KvMap& values_;
  std::set<std::string> used_;
};

std::string format_double(double value);

}  // namespace lvsa
