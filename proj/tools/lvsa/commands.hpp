#pragma once

#include "lvsa/kv_config.hpp"

namespace lvsa::cli {

struct RunFlags {
  bool force = false;
  bool resume = false;
  bool verbose = false;
};

// Each command reads its settings from `config`, rejects unknown keys and
// returns the process exit code. Errors propagate as exceptions.
int cmd_gen_data(const KvMap& config, const RunFlags& flags);
int cmd_train(const KvMap& config, const RunFlags& flags);
int cmd_eval(const KvMap& config, const RunFlags& flags);
int cmd_bench(const KvMap& config, const RunFlags& flags);

}  // namespace lvsa::cli
