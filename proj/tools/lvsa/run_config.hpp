#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "lvsa/kv_config.hpp"

namespace lvsa::cli {

// Config file values overlaid with command-line flags; flags win.
KvMap merge_config(const std::optional<std::string>& file, const KvMap& flags);

// $LVSA_OUT, or "lvsa_out" when unset or empty.
std::string output_root();

// "10,50,100" -> {10, 50, 100}. Throws UsageError on empty or bad entries.
std::vector<std::size_t> parse_size_list(const std::string& text);
// Non-negative integer that may be written in scientific notation ("1e7").
std::size_t parse_count(const std::string& text);
// "sizes=10,50" -> {10, 50}.
std::vector<std::size_t> parse_sweep(const std::string& text);

}  // namespace lvsa::cli
