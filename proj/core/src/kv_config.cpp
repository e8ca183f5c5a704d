#include "lvsa/kv_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lvsa/error.hpp"

namespace lvsa {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KvMap parse_kv(std::string_view text) {
  KvMap out;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw_usage("config line " + std::to_string(line_no) + ": malformed section header");
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw_usage("config line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key(trim(line.substr(0, eq)));
    if (!section.empty()) key = section + "." + key;
    if (!out.emplace(key, std::string(trim(line.substr(eq + 1)))).second) {
      throw_usage("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

std::string format_kv(const KvMap& values) {
  std::ostringstream os;
  std::map<std::string, std::map<std::string, std::string>> sections;
  for (const auto& [key, value] : values) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      os << key << '=' << value << '\n';
    } else {
      sections[key.substr(0, dot)][key.substr(dot + 1)] = value;
    }
  }
  for (const auto& [name, entries] : sections) {
    os << '[' << name << "]\n";
    for (const auto& [key, value] : entries) os << key << '=' << value << '\n';
  }
  return os.str();
}

KvMap read_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_usage("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_kv(ss.str());
}

void write_kv_file(const KvMap& values, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw_usage("cannot write '" + path + "'");
  out << format_kv(values);
}

std::string KvReader::get(const std::string& key, const std::string& fallback) {
  used_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string KvReader::require(const std::string& key) {
  used_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) throw_usage("missing required key '" + key + "'");
  return it->second;
}

std::uint64_t KvReader::get_u64(const std::string& key, std::uint64_t fallback) {
  if (!has(key)) {
    used_.insert(key);
    return fallback;
  }
  const std::string text = get(key, "");
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw_usage("key '" + key + "': expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

std::size_t KvReader::get_size(const std::string& key, std::size_t fallback) {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

double KvReader::get_double(const std::string& key, double fallback) {
  if (!has(key)) {
    used_.insert(key);
    return fallback;
  }
  const std::string text = get(key, "");
  try {
    std::size_t consumed = 0;
    const double v = std::stod(text, &consumed);
    if (consumed != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw_usage("key '" + key + "': expected a number, got '" + text + "'");
  }
}

bool KvReader::get_bool(const std::string& key, bool fallback) {
  if (!has(key)) {
    used_.insert(key);
    return fallback;
  }
  const std::string text = get(key, "");
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw_usage("key '" + key + "': expected a boolean, got '" + text + "'");
}

void KvReader::reject_unknown() const {
  std::string unknown;
  for (const auto& [key, value] : values_) {
    if (!used_.contains(key)) unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty()) throw_usage("unknown config keys: " + unknown);
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

}  // namespace lvsa
