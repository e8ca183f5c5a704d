#include "commands.hpp"

#include <sched.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "lvsa/bench.hpp"
#include "lvsa/checkpoint.hpp"
#include "lvsa/error.hpp"
#include "lvsa/pipelines.hpp"
#include "lvsa/tasks.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;

namespace lvsa::cli {

namespace {

constexpr double kDualPathTolerance = 1e-9;

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

void refuse_overwrite(const fs::path& path, bool force) {
  if (fs::exists(path) && !force) {
    throw_usage("'" + path.string() + "' already exists (pass --force to overwrite)");
  }
}

std::string split_summary(const TaskDataset& d) {
  return "train=" + std::to_string(d.count(Split::train)) +
         " val=" + std::to_string(d.count(Split::val)) +
         " test=" + std::to_string(d.count(Split::test)) +
         " unused=" + std::to_string(d.count(Split::unused));
}

struct DataSpec {
  TaskId task = TaskId::pairwise_order;
  std::size_t train_size = 200;
  bool train_size_set = false;
  std::uint64_t trial = 0;
  bool include_diagonal = false;
  std::size_t seq_len = 5;
  std::size_t samples = 1000;

  void put(KvMap& m) const {
    m["data.train_size"] = std::to_string(train_size);
    if (task == TaskId::pairwise_order) {
      m["data.trial"] = std::to_string(trial);
      m["data.include_diagonal"] = include_diagonal ? "true" : "false";
    } else {
      m["data.seq_len"] = std::to_string(seq_len);
      m["data.samples"] = std::to_string(samples);
    }
  }
};

DataSpec read_data_spec(KvReader& r, TaskId task) {
  DataSpec s;
  s.task = task;
  s.train_size_set = r.has("data.train_size");
  s.train_size = r.get_size("data.train_size", s.train_size);
  s.trial = r.get_u64("data.trial", s.trial);
  s.include_diagonal = r.get_bool("data.include_diagonal", s.include_diagonal);
  s.seq_len = r.get_size("data.seq_len", s.seq_len);
  s.samples = r.get_size("data.samples", s.samples);
  return s;
}

TaskDataset make_dataset(const DataSpec& s, std::uint64_t seed, std::optional<std::size_t> train_size) {
  if (s.task == TaskId::pairwise_order) {
    return gen_pairwise_order(seed, train_size.value_or(s.train_size), s.trial, s.include_diagonal);
  }
  TaskDataset d = gen_sorting(seed, s.seq_len, s.samples);
  if (train_size) return subsample_train(d, *train_size, seed);
  if (s.train_size_set) return subsample_train(d, s.train_size, seed);
  return d;
}

// Model settings for one task, read from the merged config.
struct ModelSettings {
  TaskId task = TaskId::pairwise_order;
  ClassifierConfig classifier;
  SorterConfig sorter;

  [[nodiscard]] KvMap to_kv() const {
    return task == TaskId::pairwise_order ? classifier.to_kv() : sorter.to_kv();
  }
};

ModelSettings read_model(KvReader& r, TaskId task) {
  ModelSettings m;
  m.task = task;
  if (task == TaskId::pairwise_order) {
    m.classifier = ClassifierConfig::from_kv(r);
    m.classifier.validate();
  } else {
    m.sorter = SorterConfig::from_kv(r);
    m.sorter.validate();
  }
  return m;
}

TrainResult train_model(const ModelSettings& m, const TaskDataset& data, std::uint64_t seed,
                        const TrainOptions& options) {
  return m.task == TaskId::pairwise_order ? train_classifier(data, m.classifier, seed, options)
                                          : train_sorter(data, m.sorter, seed, options);
}

// Appends new report rows to a CSV as epochs complete.
class ReportSink {
 public:
  ReportSink(fs::path path, bool append) : path_(std::move(path)) {
    const bool fresh = !append || !fs::exists(path_);
    std::ofstream out(path_, fresh ? std::ios::trunc : std::ios::app);
    if (!out) throw_usage("cannot write '" + path_.string() + "'");
    if (fresh) out << "epoch,split,loss,accuracy\n";
  }

  void flush(const TrainReport& report) {
    if (report.rows.size() <= written_) return;
    TrainReport tail;
    tail.rows.assign(report.rows.begin() + static_cast<std::ptrdiff_t>(written_), report.rows.end());
    std::ofstream out(path_, std::ios::app);
    write_report_csv(tail, out, false);
    written_ = report.rows.size();
  }

 private:
  fs::path path_;
  std::size_t written_ = 0;
};

struct RunOutcome {
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  double wall_seconds = 0.0;
  std::size_t epochs = 0;
};

// Trains one model into `dir` (checkpoint.lvck, report.csv, result.cfg).
RunOutcome train_into(const fs::path& dir, const ModelSettings& model, const TaskDataset& data,
                      std::uint64_t seed, const RunFlags& flags, const KvMap& effective) {
  fs::create_directories(dir);
  const fs::path ck_path = dir / "checkpoint.lvck";
  const fs::path report_path = dir / "report.csv";
  std::optional<Checkpoint> resume;
  if (flags.resume) {
    if (!fs::exists(ck_path)) throw_usage("--resume: no checkpoint at '" + ck_path.string() + "'");
    resume = load_checkpoint(ck_path.string());
  } else {
    refuse_overwrite(ck_path, flags.force);
  }
  write_kv_file(effective, (dir / "effective.cfg").string());

  ReportSink sink(report_path, flags.resume);
  TrainOptions options;
  options.resume = resume ? &*resume : nullptr;
  options.on_epoch = [&](const Checkpoint& ck, const TrainReport& report) {
    save_checkpoint(ck, ck_path.string());
    sink.flush(report);
    if (flags.verbose && !report.rows.empty()) {
      const auto& r = report.rows.back();
      std::cerr << "epoch " << r.epoch << ' ' << to_string(r.split) << " loss " << r.loss
                << " accuracy " << r.accuracy << '\n';
    }
  };
  const TrainResult result = train_model(model, data, seed, options);
  save_checkpoint(result.checkpoint, ck_path.string());
  sink.flush(result.report);

  RunOutcome out;
  out.test_loss = result.report.test_loss;
  out.test_accuracy = result.report.test_accuracy;
  out.wall_seconds = result.report.wall_seconds;
  out.epochs = model.task == TaskId::pairwise_order ? model.classifier.epochs : model.sorter.epochs;
  KvMap summary;
  summary["test_loss"] = format_double(out.test_loss);
  summary["test_accuracy"] = format_double(out.test_accuracy);
  summary["wall_seconds"] = format_double(out.wall_seconds);
  summary["epochs"] = std::to_string(out.epochs);
  write_kv_file(summary, (dir / "result.cfg").string());
  return out;
}

RunOutcome read_outcome(const fs::path& dir) {
  const KvMap m = read_kv_file((dir / "result.cfg").string());
  KvReader r(m);
  RunOutcome o;
  o.test_loss = r.get_double("test_loss", 0.0);
  o.test_accuracy = r.get_double("test_accuracy", 0.0);
  o.wall_seconds = r.get_double("wall_seconds", 0.0);
  o.epochs = r.get_size("epochs", 0);
  return o;
}

struct SweepJob {
  std::size_t size = 0;
  std::uint64_t seed = 0;
  fs::path dir;
};

int run_job(const SweepJob& job, const ModelSettings& model, const DataSpec& spec,
            const RunFlags& flags, KvMap effective) {
  const TaskDataset data = make_dataset(spec, job.seed, job.size);
  effective["run.seed"] = std::to_string(job.seed);
  effective["data.train_size"] = std::to_string(job.size);
  effective["run.out"] = job.dir.string();
  const RunOutcome o = train_into(job.dir, model, data, job.seed, flags, effective);
  std::cout << "size " << job.size << " seed " << job.seed << " test_accuracy "
            << format_double(o.test_accuracy) << std::endl;
  return 0;
}

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const NumericalError& e) {
    std::cerr << "lvsa: numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "lvsa: " << e.what() << '\n';
    return 2;
  }
}

int run_sweep(const std::vector<std::size_t>& sizes, std::size_t seeds, std::size_t jobs,
              std::uint64_t base_seed, const fs::path& out_dir, const ModelSettings& model,
              const DataSpec& spec, const RunFlags& flags, const KvMap& effective) {
  std::vector<SweepJob> work;
  for (auto size : sizes) {
    for (std::size_t k = 0; k < seeds; ++k) {
      const std::uint64_t seed = base_seed + k;
      work.push_back({size, seed, out_dir / ("size" + std::to_string(size)) / ("seed" + std::to_string(seed))});
    }
  }
  fs::create_directories(out_dir);
  write_kv_file(effective, (out_dir / "effective.cfg").string());

  // A finished run leaves result.cfg behind; --resume skips those.
  const auto finished = [&](const SweepJob& j) { return flags.resume && fs::exists(j.dir / "result.cfg"); };
  const auto job_flags = [&](const SweepJob& j) {
    RunFlags f = flags;
    f.resume = flags.resume && fs::exists(j.dir / "checkpoint.lvck");
    return f;
  };
  int status = 0;
  if (jobs <= 1) {
    for (const auto& j : work) {
      if (!finished(j)) run_job(j, model, spec, job_flags(j), effective);
    }
  } else {
    std::size_t running = 0;
    const auto reap = [&] {
      int st = 0;
      if (::wait(&st) > 0) {
        --running;
        if (!WIFEXITED(st) || WEXITSTATUS(st) != 0) status = WIFEXITED(st) ? WEXITSTATUS(st) : 3;
      }
    };
    for (const auto& j : work) {
      if (finished(j)) continue;
      while (running >= jobs) reap();
      std::cout.flush();
      const pid_t pid = ::fork();
      if (pid < 0) throw std::runtime_error("fork failed");
      if (pid == 0) {
        int code = 0;
        try {
          code = run_job(j, model, spec, job_flags(j), effective);
        } catch (...) {
          code = exit_code_for_current_exception();
        }
        std::cout.flush();
        std::_Exit(code);
      }
      ++running;
    }
    while (running > 0) reap();
    if (status != 0) return status;
  }

  std::ofstream runs(out_dir / "sweep.csv");
  runs << "size,seed,test_loss,test_accuracy,wall_seconds\n";
  std::ofstream summary(out_dir / "sweep_summary.csv");
  summary << "size,runs,mean_accuracy,std_accuracy\n";
  std::cout << "size  runs  mean_accuracy  std\n";
  std::size_t k = 0;
  for (auto size : sizes) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t s = 0; s < seeds; ++s, ++k) {
      const RunOutcome o = read_outcome(work[k].dir);
      runs << size << ',' << work[k].seed << ',' << format_double(o.test_loss) << ','
           << format_double(o.test_accuracy) << ',' << format_double(o.wall_seconds) << '\n';
      sum += o.test_accuracy;
      sq += o.test_accuracy * o.test_accuracy;
    }
    const double n = static_cast<double>(seeds);
    const double mean = sum / n;
    const double sd = std::sqrt(std::max(0.0, sq / n - mean * mean));
    summary << size << ',' << seeds << ',' << format_double(mean) << ',' << format_double(sd) << '\n';
    std::printf("%-5zu %-5zu %-14.4f %.4f\n", size, seeds, mean, sd);
  }
  return 0;
}

}  // namespace

int cmd_gen_data(const KvMap& config, const RunFlags& flags) {
  KvReader r(config);
  const TaskId task = parse_task(r.require("run.task"));
  const std::uint64_t seed = r.get_u64("run.seed", 0);
  const DataSpec spec = read_data_spec(r, task);
  const fs::path out = r.get("run.out", (fs::path(output_root()) / "data" /
                                         (to_string(task) + "_seed" + std::to_string(seed) + ".lvsa"))
                                            .string());
  r.reject_unknown();
  refuse_overwrite(out, flags.force);

  const TaskDataset data = make_dataset(spec, seed, std::nullopt);
  ensure_parent(out);
  write_dataset_file(data, out.string());
  KvMap effective;
  effective["run.task"] = to_string(task);
  effective["run.seed"] = std::to_string(seed);
  effective["run.out"] = out.string();
  spec.put(effective);
  write_kv_file(effective, out.string() + ".cfg");
  std::cout << out.string() << ": " << data.num_examples << " examples, " << split_summary(data) << '\n';
  return 0;
}

int cmd_train(const KvMap& config, const RunFlags& flags) {
  KvMap cfg = config;
  std::optional<TaskDataset> data;
  if (cfg.contains("run.data")) {
    data = read_dataset_file(cfg.at("run.data"));
    if (cfg.contains("run.task") && parse_task(cfg.at("run.task")) != data->task) {
      throw_usage("run.task does not match the dataset's task '" + to_string(data->task) + "'");
    }
    cfg["run.task"] = to_string(data->task);
  }
  if (!cfg.contains("run.task")) throw_usage("train: pass --data FILE or --task");
  const TaskId task = parse_task(cfg.at("run.task"));
  if (task == TaskId::sorting && !cfg.contains("model.seq_len")) {
    const std::size_t len = data ? data->seq_len : (cfg.contains("data.seq_len") ? parse_count(cfg.at("data.seq_len")) : 5);
    cfg["model.seq_len"] = std::to_string(len);
  }

  KvReader r(cfg);
  r.get("run.task", "");
  const std::uint64_t seed = r.get_u64("run.seed", 0);
  const std::string data_path = r.get("run.data", "");
  const bool sweep = r.has("sweep.sizes");
  const std::string sweep_text = r.get("sweep.sizes", "");
  const std::size_t seeds = r.get_size("sweep.seeds", 1);
  const std::size_t jobs = r.get_size("sweep.jobs", 1);
  const DataSpec spec = read_data_spec(r, task);
  const ModelSettings model = read_model(r, task);
  const std::string default_dir =
      (fs::path(output_root()) / "runs" /
       (to_string(task) + (sweep ? "_sweep" : "_seed" + std::to_string(seed))))
          .string();
  const fs::path out_dir = r.get("run.out", default_dir);
  r.reject_unknown();
  if (seeds == 0) throw_usage("--seeds must be >= 1");

  KvMap effective = model.to_kv();
  effective["run.task"] = to_string(task);
  effective["run.seed"] = std::to_string(seed);
  effective["run.out"] = out_dir.string();

  if (sweep) {
    if (data) throw_usage("--sweep generates its own datasets; drop --data");
    const auto sizes = parse_sweep(sweep_text);
    spec.put(effective);
    effective["sweep.sizes"] = sweep_text;
    effective["sweep.seeds"] = std::to_string(seeds);
    effective["sweep.jobs"] = std::to_string(jobs);
    return run_sweep(sizes, seeds, jobs, seed, out_dir, model, spec, flags, effective);
  }
  if (!data) throw_usage("train: --data FILE is required unless --sweep is given");
  effective["run.data"] = data_path;
  const RunOutcome o = train_into(out_dir, model, *data, seed, flags, effective);
  std::cout << "trained " << to_string(task) << " seed " << seed << " for " << o.epochs
            << " epochs in " << format_double(std::round(o.wall_seconds * 100) / 100) << " s\n"
            << "test loss " << format_double(o.test_loss) << " accuracy "
            << format_double(o.test_accuracy) << '\n'
            << "outputs in " << out_dir.string() << '\n';
  return 0;
}

int cmd_eval(const KvMap& config, const RunFlags&) {
  KvReader r(config);
  const std::string ck_path = r.require("run.checkpoint");
  const std::string data_path = r.require("run.data");
  const std::string split_text = r.get("run.split", "all");
  const bool binarized = r.get_bool("eval.binarized", false);
  const fs::path out = r.get("run.out", (fs::path(ck_path).parent_path() / "eval.csv").string());
  r.reject_unknown();

  const Checkpoint ck = load_checkpoint(ck_path);
  const TaskDataset data = read_dataset_file(data_path);
  std::vector<Split> splits;
  if (split_text == "all") {
    for (Split s : {Split::train, Split::val, Split::test}) {
      if (data.count(s) > 0) splits.push_back(s);
    }
  } else {
    splits.push_back(parse_split(split_text));
  }

  TrainedModel model(ck);
  ensure_parent(out);
  std::ofstream csv(out);
  if (!csv) throw_usage("cannot write '" + out.string() + "'");
  csv << "split,mode,loss,accuracy,count\n";
  const auto report = [&](Split s, const char* mode, const Metrics& m) {
    std::printf("%-6s %-9s loss %.6f accuracy %.4f (n=%zu)\n", to_string(s).c_str(), mode, m.loss,
                m.accuracy, m.count);
    csv << to_string(s) << ',' << mode << ',' << format_double(m.loss) << ','
        << format_double(m.accuracy) << ',' << m.count << '\n';
  };
  for (Split s : splits) {
    model.set_score_mode(ScoreMode::exact);
    report(s, "exact", model.evaluate(data, s));
    if (!binarized) continue;
    const auto exact = model.logits(data, s);
    model.set_score_mode(ScoreMode::binarized);
    const auto packed = model.logits(data, s);
    double worst = 0.0;
    for (std::size_t i = 0; i < exact.size(); ++i) worst = std::max(worst, std::abs(exact[i] - packed[i]));
    std::printf("%-6s dual-path max |logit difference| %.3g\n", to_string(s).c_str(), worst);
    if (!(worst <= kDualPathTolerance)) {
      throw NumericalError("binarized logits diverge from exact logits by " + format_double(worst));
    }
    report(s, "binarized", model.evaluate(data, s));
  }
  return 0;
}

int cmd_bench(const KvMap& config, const RunFlags&) {
  KvReader r(config);
  std::vector<std::size_t> dims = kDefaultBenchDims;
  if (r.has("bench.dims")) dims = parse_size_list(r.get("bench.dims", ""));
  const std::size_t iters = parse_count(r.get("bench.iters", "100000"));
  BenchOptions options;
  options.repetitions = r.get_size("bench.repetitions", options.repetitions);
  options.warmups = r.get_size("bench.warmups", options.warmups);
  options.seed = r.get_u64("bench.seed", options.seed);
  const fs::path out_dir = r.get("run.out", (fs::path(output_root()) / "bench").string());
  r.reject_unknown();

  // Keep timing on one core.
  cpu_set_t set;
  CPU_ZERO(&set);
  const int cpu = sched_getcpu();
  CPU_SET(cpu < 0 ? 0 : cpu, &set);
  sched_setaffinity(0, sizeof set, &set);

  const BenchReport report = bench_score_kernels(dims, iters, options);
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "bench_kernels.csv");
    write_kernel_csv(report, out);
    std::ofstream summary(out_dir / "bench_summary.cfg");
    write_bench_summary(report, summary);
  }
  const SorterConfig sorter;
  const std::vector<MemoryAccount> accounts{
      account_classifier(ClassifierConfig{}, true), account_classifier(ClassifierConfig{}, false),
      account_sorter(sorter, true), account_sorter(sorter, false),
      account_transformer_seq2seq(sorter)};
  {
    std::ofstream out(out_dir / "memory.csv");
    write_memory_csv(accounts, out);
  }
  KvMap effective;
  std::string dims_text;
  for (auto d : dims) dims_text += (dims_text.empty() ? "" : ",") + std::to_string(d);
  effective["bench.dims"] = dims_text;
  effective["bench.iters"] = std::to_string(iters);
  effective["bench.repetitions"] = std::to_string(options.repetitions);
  effective["bench.warmups"] = std::to_string(options.warmups);
  effective["bench.seed"] = std::to_string(options.seed);
  effective["run.out"] = out_dir.string();
  write_kv_file(effective, (out_dir / "effective.cfg").string());

  std::cout << "cpu: " << report.cpu_model << '\n';
  std::printf("%-8s %-22s %12s\n", "dim", "kernel", "median_ns");
  for (std::size_t i = 0; i < report.dims.size(); ++i) {
    for (const auto& k : report.kernels) {
      std::printf("%-8zu %-22s %12.2f\n", report.dims[i], k.kernel.c_str(), k.median_ns[i]);
    }
  }
  for (const auto& k : report.kernels) {
    std::printf("%-22s rate %.5f ns/dim  r2 %.4f\n", k.kernel.c_str(), k.fit.slope, k.fit.r2);
  }
  for (const auto& a : accounts) std::printf("%-30s %12zu bits\n", a.model.c_str(), a.total_bits);
  std::cout << "outputs in " << out_dir.string() << '\n';
  return 0;
}

}  // namespace lvsa::cli
