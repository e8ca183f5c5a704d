#pragma once

#include <stdexcept>
#include <string>

namespace lvsa {

// Invalid arguments, shapes or configuration. Maps to CLI exit code 2.
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

// Corrupt or incompatible file contents (bad magic, version, shape).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values encountered during training. Maps to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] void throw_usage(const std::string& what);

}  // namespace lvsa
