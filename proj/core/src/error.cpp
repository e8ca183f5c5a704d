#include "lvsa/error.hpp"

namespace lvsa {

void throw_usage(const std::string& what) { throw UsageError(what); }

}  // namespace lvsa
