#include "lvsa/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "lvsa/attention.hpp"
#include "lvsa/error.hpp"
#include "lvsa/hdc.hpp"
#include "lvsa/kv_config.hpp"
#include "lvsa/rng.hpp"

namespace lvsa {

namespace kernels {

double float_dot_scalar(std::span<const float> a, std::span<const float> b) noexcept {
  float acc = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return static_cast<double>(acc) / static_cast<double>(a.size());
}

double float_dot_vectorized(std::span<const float> a, std::span<const float> b) noexcept {
  constexpr std::size_t kLanes = 32;
  float part[kLanes] = {};
  const std::size_t n = a.size() - a.size() % kLanes;
  for (std::size_t i = 0; i < n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) part[l] += a[i + l] * b[i + l];
  }
  float acc = 0.0f;
  for (float p : part) acc += p;
  for (std::size_t i = n; i < a.size(); ++i) acc += a[i] * b[i];
  return static_cast<double>(acc) / static_cast<double>(a.size());
}

}  // namespace kernels

namespace {

inline void clobber(const void* p) { asm volatile("" : : "r"(p) : "memory"); }

template <class Fn>
double time_batch_ns(Fn& fn, std::size_t batch, double& sink) {
  const auto t0 = std::chrono::steady_clock::now();
  double local = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    local += fn();
    clobber(&local);
  }
  const auto t1 = std::chrono::steady_clock::now();
  sink += local;
  return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
}

template <class Fn>
double median_ns(Fn fn, std::size_t iters, const BenchOptions& opt, std::size_t& batch_out) {
  volatile double keep = 0.0;
  double sink = 0.0;
  std::size_t batch = std::max<std::size_t>(1, iters / opt.repetitions);
  // Grow the batch until one repetition clears the timer-resolution floor.
  for (std::size_t probe = 1;; probe *= 2) {
    if (time_batch_ns(fn, probe, sink) >= opt.min_repetition_ns || probe >= (std::size_t{1} << 30)) {
      batch = std::max(batch, probe);
      break;
    }
  }
  for (std::size_t w = 0; w < opt.warmups; ++w) time_batch_ns(fn, batch, sink);
  std::vector<double> per_call(opt.repetitions);
  for (auto& t : per_call) t = time_batch_ns(fn, batch, sink) / static_cast<double>(batch);
  keep = sink;
  (void)keep;
  std::nth_element(per_call.begin(), per_call.begin() + static_cast<std::ptrdiff_t>(per_call.size() / 2),
                   per_call.end());
  batch_out = batch;
  return per_call[per_call.size() / 2];
}

}  // namespace

LinearFit fit_linear(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw_usage("fit_linear: need >= 2 paired points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) throw_usage("fit_linear: xs have no spread");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (f.intercept + f.slope * xs[i]);
    ss_res += r * r;
  }
  f.r2 = syy == 0.0 ? (ss_res == 0.0 ? 1.0 : 0.0) : 1.0 - ss_res / syy;
  return f;
}

const KernelSeries& BenchReport::series(const std::string& kernel) const {
  for (const auto& k : kernels) {
    if (k.kernel == kernel) return k;
  }
  throw_usage("no kernel '" + kernel + "' in bench report");
}

double BenchReport::speedup(const std::string& slow, const std::string& fast, std::size_t dim) const {
  const auto it = std::find(dims.begin(), dims.end(), dim);
  if (it == dims.end()) throw_usage("dim " + std::to_string(dim) + " was not benchmarked");
  const auto i = static_cast<std::size_t>(it - dims.begin());
  return series(slow).median_ns[i] / series(fast).median_ns[i];
}

std::string cpu_model_string() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.starts_with("model name")) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        auto v = line.substr(colon + 1);
        v.erase(0, v.find_first_not_of(' '));
        return v;
      }
    }
  }
  return "unknown";
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

BenchReport bench_score_kernels(const std::vector<std::size_t>& dims, std::size_t iters,
                                const BenchOptions& options) {
  if (dims.size() < 2) throw_usage("bench: need at least two dims");
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] == 0 || dims[i] % 64 != 0) throw_usage("bench: dims must be multiples of 64");
    if (i > 0 && dims[i] <= dims[i - 1]) throw_usage("bench: dims must be strictly ascending");
  }
  if (options.repetitions < 30 || options.warmups < 5) {
    throw_usage("bench: need >= 30 repetitions and >= 5 warmups");
  }

  BenchReport report;
  report.dims = dims;
  report.iterations = iters;
  report.repetitions = options.repetitions;
  report.warmups = options.warmups;
  report.cpu_model = cpu_model_string();
  report.timestamp = utc_timestamp();
  report.notes = "single thread; float kernels use 32-bit floats; the baseline self-attention "
                 "kernel scales scores by 1/sqrt(d_k)";
  const std::vector<std::string> names{"float_dot_scalar", "float_dot_vectorized",
                                       "binarized_cosine", "binarized_context"};
  for (const auto& n : names) report.kernels.push_back({n, {}, {}, {}});

  CounterRng rng(derive_seed(options.seed, "bench"));
  for (std::size_t dim : dims) {
    const Hypervector ha = Hypervector::random(dim, rng);
    const Hypervector hb = Hypervector::random(dim, rng);
    std::vector<float> fa(ha.values().begin(), ha.values().end());
    std::vector<float> fb(hb.values().begin(), hb.values().end());
    const PackedBits pa = pack(ha);
    const PackedBits pb = pack(hb);
    const auto wa = pa.words();
    const auto wb = pb.words();

    // Correctness before speed: all scores must agree with the exact path.
    const double exact = cosine(ha, hb).value;
    const double exact_ctx = context_similarity(ha, hb).value;
    if (kernels::float_dot_scalar(fa, fb) != exact || kernels::float_dot_vectorized(fa, fb) != exact ||
        kernels::binarized_cosine(wa, wb, dim) != exact ||
        kernels::binarized_context_score(wa, wb, dim) != exact_ctx) {
      throw std::logic_error("bench: kernel outputs disagree at D=" + std::to_string(dim));
    }

    const float* pfa = fa.data();
    const float* pfb = fb.data();
    const auto run = [&](std::size_t k, auto fn) {
      std::size_t batch = 0;
      report.kernels[k].median_ns.push_back(median_ns(fn, iters, options, batch));
      report.kernels[k].batch.push_back(batch);
    };
    run(0, [&] {
      clobber(pfa);
      return kernels::float_dot_scalar({pfa, dim}, {pfb, dim});
    });
    run(1, [&] {
      clobber(pfa);
      return kernels::float_dot_vectorized({pfa, dim}, {pfb, dim});
    });
    run(2, [&] {
      clobber(wa.data());
      return kernels::binarized_cosine(wa, wb, dim);
    });
    run(3, [&] {
      clobber(wa.data());
      return kernels::binarized_context_score(wa, wb, dim);
    });
  }
  std::vector<double> xs(dims.begin(), dims.end());
  for (auto& k : report.kernels) k.fit = fit_linear(xs, k.median_ns);
  return report;
}

void write_kernel_csv(const BenchReport& report, std::ostream& out) {
  out << "dim,kernel,median_ns,rate_ns_per_dim,r2\n";
  for (std::size_t i = 0; i < report.dims.size(); ++i) {
    for (const auto& k : report.kernels) {
      out << report.dims[i] << ',' << k.kernel << ',' << format_double(k.median_ns[i]) << ','
          << format_double(k.fit.slope) << ',' << format_double(k.fit.r2) << '\n';
    }
  }
}

void write_bench_summary(const BenchReport& report, std::ostream& out) {
  KvMap m;
  m["cpu_model"] = report.cpu_model;
  m["timestamp"] = report.timestamp;
  m["iterations"] = std::to_string(report.iterations);
  m["repetitions"] = std::to_string(report.repetitions);
  m["warmups"] = std::to_string(report.warmups);
  m["notes"] = report.notes;
  std::string dims;
  for (auto d : report.dims) dims += (dims.empty() ? "" : ",") + std::to_string(d);
  m["dims"] = dims;
  for (const auto& k : report.kernels) {
    m["fit." + k.kernel + ".rate_ns_per_dim"] = format_double(k.fit.slope);
    m["fit." + k.kernel + ".intercept_ns"] = format_double(k.fit.intercept);
    m["fit." + k.kernel + ".r2"] = format_double(k.fit.r2);
  }
  for (auto d : report.dims) {
    m["speedup.scalar_over_binarized." + std::to_string(d)] =
        format_double(report.speedup("float_dot_scalar", "binarized_cosine", d));
    m["speedup.vectorized_over_binarized." + std::to_string(d)] =
        format_double(report.speedup("float_dot_vectorized", "binarized_cosine", d));
  }
  out << format_kv(m);
}

// ---- memory -----------------------------------------------------------------

std::size_t MemoryAccount::bits_with_prefix(const std::string& prefix) const {
  std::size_t bits = 0;
  for (const auto& e : modules) {
    if (e.module.starts_with(prefix)) bits += e.bits;
  }
  return bits;
}

MemoryAccount account_memory(const std::string& model, const ParameterList& params, bool deployed) {
  MemoryAccount acc;
  acc.model = model;
  for (const auto& p : params) {
    MemoryEntry e;
    e.module = p.name;
    e.params = p.tensor.size();
    e.bits_per_param = deployed && p.bipolar ? 1 : 32;
    e.bits = e.params * e.bits_per_param;
    acc.total_params += e.params;
    acc.total_bits += e.bits;
    acc.modules.push_back(std::move(e));
  }
  return acc;
}

MemoryAccount account_classifier(const ClassifierConfig& config, bool deployed) {
  CounterRng rng(0);
  ClassifierModel model(config, rng);
  ParameterList params;
  BufferList buffers;
  model.collect(params, buffers);
  return account_memory(deployed ? "lars_vsa_classifier:deployed" : "lars_vsa_classifier:latent",
                        params, deployed);
}

MemoryAccount account_sorter(const SorterConfig& config, bool deployed) {
  CounterRng rng(0);
  Seq2SeqModel model(config, rng);
  ParameterList params;
  BufferList buffers;
  model.collect(params, buffers);
  return account_memory(deployed ? "lars_vsa_seq2seq:deployed" : "lars_vsa_seq2seq:latent", params,
                        deployed);
}

MemoryAccount account_transformer_seq2seq(const SorterConfig& decoder_config,
                                          const TransformerBaselineConfig& encoder) {
  CounterRng rng(0);
  const TransformerEncoder enc(decoder_config.lars.feature_dim, encoder.model_dim, encoder.layers,
                               encoder.heads, encoder.ff_dim, rng);
  const Decoder dec(decoder_config.seq_len + 1, decoder_config.seq_len, decoder_config.seq_len,
                    encoder.model_dim, decoder_config.model_dim, decoder_config.decoder_layers,
                    decoder_config.decoder_heads, decoder_config.decoder_ff,
                    decoder_config.decoder_dropout, rng);
  ParameterList params;
  enc.collect("encoder", params);
  dec.collect("decoder", params);
  return account_memory("transformer_seq2seq", params, true);
}

void write_memory_csv(std::span<const MemoryAccount> accounts, std::ostream& out) {
  out << "model,module,bits\n";
  for (const auto& a : accounts) {
    for (const auto& e : a.modules) out << a.model << ',' << e.module << ',' << e.bits << '\n';
    out << a.model << ",total," << a.total_bits << '\n';
  }
}

}  // namespace lvsa
