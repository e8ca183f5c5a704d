#include "run_config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>

#include "lvsa/error.hpp"

namespace lvsa::cli {

KvMap merge_config(const std::optional<std::string>& file, const KvMap& flags) {
  KvMap merged = file ? read_kv_file(*file) : KvMap{};
  for (const auto& [key, value] : flags) merged[key] = value;
  return merged;
}

std::string output_root() {
  const char* env = std::getenv("LVSA_OUT");
  return env != nullptr && *env != '\0' ? env : "lvsa_out";
}

std::size_t parse_count(const std::string& text) {
  std::uint64_t n = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
  if (ec == std::errc{} && ptr == text.data() + text.size()) return static_cast<std::size_t>(n);
  double d = 0.0;
  auto [dptr, dec] = std::from_chars(text.data(), text.data() + text.size(), d);
  if (dec != std::errc{} || dptr != text.data() + text.size() || !(d >= 0.0) || d > 1e18 ||
      d != std::floor(d)) {
    throw_usage("expected a non-negative integer, got '" + text + "'");
  }
  return static_cast<std::size_t>(d);
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (item.empty()) throw_usage("empty entry in list '" + text + "'");
    out.push_back(parse_count(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::size_t> parse_sweep(const std::string& text) {
  const std::string prefix = "sizes=";
  if (!text.starts_with(prefix)) throw_usage("--sweep expects sizes=N,N,..., got '" + text + "'");
  return parse_size_list(text.substr(prefix.size()));
}

}  // namespace lvsa::cli
