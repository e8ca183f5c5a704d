// lvsa: dataset generation, training, evaluation and benchmarks.
//
// Exit codes: 0 success, 2 usage/config/format error, 3 numerical failure.

#include <CLI11.hpp>
#include <malloc.h>

#include <iostream>
#include <optional>
#include <string>

#include "commands.hpp"
#include "lvsa/error.hpp"
#include "run_config.hpp"

namespace {

using lvsa::KvMap;

struct Command {
  CLI::App* app = nullptr;
  KvMap flags;
  std::optional<std::string> config_file;
};

void setting(Command& c, const std::string& flag, const std::string& key, const std::string& help) {
  c.app->add_option_function<std::string>(
      flag, [&c, key](const std::string& v) { c.flags[key] = v; }, help);
}

void toggle(Command& c, const std::string& flag, const std::string& key, const std::string& help) {
  c.app->add_flag_function(
      flag, [&c, key](std::int64_t) { c.flags[key] = "true"; }, help);
}

void model_settings(Command& c) {
  setting(c, "--epochs", "train.epochs", "Training epochs");
  setting(c, "--batch-size", "train.batch_size", "Minibatch size");
  setting(c, "--lr", "optimizer.learning_rate", "Learning rate");
  setting(c, "--weight-decay", "optimizer.weight_decay", "Decoupled weight decay");
  setting(c, "--heads", "lars.heads", "LARS-VSA heads");
  setting(c, "--hyper-dim", "lars.hyper_dim", "Hypervector dimension D");
  setting(c, "--dropout", "lars.dropout", "Encoder dropout rate");
  setting(c, "--decoder-dropout", "model.decoder_dropout", "Sorter: decoder dropout rate");
  setting(c, "--projection", "lars.projection", "bipolar|real projection weights");
  setting(c, "--val-every", "train.val_every", "Sorter: validate every N epochs");
  toggle(c, "--ablation", "lars.ablation", "Score with cos(h_i, h_j) instead of the bundled context");
}

void data_settings(Command& c) {
  setting(c, "--train-size", "data.train_size", "Training examples to keep");
  setting(c, "--trial", "data.trial", "Pairwise-order: training subset draw");
  toggle(c, "--include-diagonal", "data.include_diagonal", "Pairwise-order: include self-pairs");
  setting(c, "--seq-len", "data.seq_len", "Sorting: sequence length (5 or 6)");
  setting(c, "--samples", "data.samples", "Sorting: total sequences");
}

}  // namespace

int main(int argc, char** argv) {
  // Keep large tensor buffers on the heap instead of mapping and unmapping
  // them on every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"LARS-VSA hyperdimensional symbolic attention"};
  app.require_subcommand(1);
  lvsa::cli::RunFlags run_flags;

  Command gen{app.add_subcommand("gen-data", "Generate a dataset container"), {}, {}};
  Command train{app.add_subcommand("train", "Train a model, or sweep sizes and seeds"), {}, {}};
  Command eval{app.add_subcommand("eval", "Evaluate a checkpoint on a dataset"), {}, {}};
  Command bench{app.add_subcommand("bench", "Kernel timings and memory accounting"), {}, {}};

  for (Command* c : {&gen, &train, &eval, &bench}) {
    c->app->add_option("--config", c->config_file, "key=value config file (flags override it)");
    setting(*c, "--out", "run.out", "Output file or directory (default under $LVSA_OUT)");
  }

  setting(gen, "--task", "run.task", "pairwise-order|sorting");
  setting(gen, "--seed", "run.seed", "Root seed");
  data_settings(gen);
  gen.app->add_flag("--force", run_flags.force, "Overwrite existing files");

  setting(train, "--task", "run.task", "pairwise-order|sorting");
  setting(train, "--data", "run.data", "Dataset file");
  setting(train, "--seed", "run.seed", "Root seed (first seed of a sweep)");
  setting(train, "--sweep", "sweep.sizes", "Learning curve, e.g. sizes=10,50,100,150,200");
  setting(train, "--seeds", "sweep.seeds", "Seeds per sweep size");
  setting(train, "--jobs", "sweep.jobs", "Sweep runs in parallel processes");
  model_settings(train);
  data_settings(train);
  train.app->add_flag("--force", run_flags.force, "Overwrite an existing run");
  train.app->add_flag("--resume", run_flags.resume, "Continue from the run's last checkpoint");
  train.app->add_flag("--verbose,-v", run_flags.verbose, "Print per-epoch metrics");

  setting(eval, "--checkpoint", "run.checkpoint", "Checkpoint file");
  setting(eval, "--data", "run.data", "Dataset file");
  setting(eval, "--split", "run.split", "train|val|test|all");
  toggle(eval, "--binarized", "eval.binarized", "Check popcount scores against exact ones and report both");

  setting(bench, "--dims", "bench.dims", "Comma-separated dims, multiples of 64");
  setting(bench, "--iters", "bench.iters", "Score evaluations per kernel and dim (1e7 accepted)");
  setting(bench, "--repetitions", "bench.repetitions", "Timed repetitions (>= 30)");
  setting(bench, "--warmups", "bench.warmups", "Warmup repetitions (>= 5)");
  setting(bench, "--seed", "bench.seed", "Seed for the benchmark vectors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    for (const auto& [c, fn] : {std::pair{&gen, &lvsa::cli::cmd_gen_data},
                                std::pair{&train, &lvsa::cli::cmd_train},
                                std::pair{&eval, &lvsa::cli::cmd_eval},
                                std::pair{&bench, &lvsa::cli::cmd_bench}}) {
      if (c->app->parsed()) return fn(lvsa::cli::merge_config(c->config_file, c->flags), run_flags);
    }
  } catch (const lvsa::NumericalError& e) {
    std::cerr << "lvsa: numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "lvsa: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
