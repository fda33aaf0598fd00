#include "spectra/experiments.hpp"

#include "spectra/diagnostics.hpp"
#include "spectra/matrix_io.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>
#include <variant>

namespace spectra {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Output plumbing: CSV writers plus a manifest of everything emitted.

class OutputDir {
 public:
  OutputDir(fs::path dir, bool force) : dir_(std::move(dir)) {
    std::error_code ec;
    if (fs::exists(dir_, ec)) {
      if (!force) {
        throw IoError("output directory exists (pass --force to overwrite): " +
                      dir_.string());
      }
    } else if (!fs::create_directories(dir_, ec) || ec) {
      throw IoError("cannot create output directory: " + dir_.string());
    }
  }

  const fs::path& path() const { return dir_; }

  void register_file(const fs::path& file) { files_.push_back(file); }

  void write_text(const std::string& name, const std::string& content) {
    const fs::path file = dir_ / name;
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot write " + file.string());
    out << content;
    out.close();
    register_file(file);
  }

  void write_manifest() {
    json entries = json::array();
    for (const fs::path& file : files_) {
      std::ifstream in(file, std::ios::binary);
      if (!in) throw IoError("manifest: cannot re-open " + file.string());
      std::ostringstream buf;
      buf << in.rdbuf();
      const std::string bytes = buf.str();
      char hex[24];
      std::snprintf(hex, sizeof(hex), "%016llx",
                    static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
      entries.push_back({{"file", file.filename().string()},
                         {"bytes", bytes.size()},
                         {"fnv1a64", hex}});
    }
    json manifest = {{"files", entries}};
    const fs::path file = dir_ / "manifest.json";
    std::ofstream out(file);
    if (!out) throw IoError("cannot write " + file.string());
    out << manifest.dump(2) << '\n';
  }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
};

class CsvFile {
 public:
  CsvFile(OutputDir& dir, const std::string& name, const std::vector<std::string>& header)
      : out_(dir.path() / name, std::ios::binary) {
    if (!out_) throw IoError("cannot write " + (dir.path() / name).string());
    dir.register_file(dir.path() / name);
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i > 0) out_ << ',';
      out_ << header[i];
    }
    out_ << '\n';
    columns_ = header.size();
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw std::logic_error("csv row arity mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  std::size_t columns_ = 0;
};

std::string fmt(double x) { return format_double(x); }
std::string fmt(std::uint64_t x) { return std::to_string(x); }
std::string fmt(std::int64_t x) { return std::to_string(x); }
std::string fmt(int x) { return std::to_string(x); }

// ---------------------------------------------------------------------------
// Bounded worker pool over an indexed job list. Results land in job order,
// so downstream CSV content does not depend on the worker count.

template <typename Fn>
void parallel_jobs(int workers, std::size_t job_count, Fn&& fn) {
  workers = std::max(1, workers);
  if (workers == 1 || job_count <= 1) {
    for (std::size_t i = 0; i < job_count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= job_count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<int>(workers, static_cast<int>(job_count));
  pool.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Training machinery shared by train and ablate.

class TrainWorkload {
 public:
  virtual ~TrainWorkload() = default;
  virtual Matrix initial_weights() = 0;
  // gradient at W plus the loss observed while sampling it
  virtual std::pair<Matrix, double> sample(const Eigen::Ref<const Matrix>& W) = 0;
  // deterministic post-step loss when the workload has one (else NaN)
  virtual double exact_loss(const Eigen::Ref<const Matrix>& W) const = 0;
  virtual double tail_error(const Eigen::Ref<const Matrix>& W) const = 0;
  virtual std::string rng_state() const = 0;
  virtual void set_rng_state(const std::string& s) = 0;
};

class QuadraticWorkload final : public TrainWorkload {
 public:
  explicit QuadraticWorkload(const SpikedQuadraticConfig& cfg) : task_(cfg) {}
  Matrix initial_weights() override { return task_.initial_weights(); }
  std::pair<Matrix, double> sample(const Eigen::Ref<const Matrix>& W) override {
    return {task_.gradient(W), task_.loss(W)};
  }
  double exact_loss(const Eigen::Ref<const Matrix>& W) const override {
    return task_.loss(W);
  }
  double tail_error(const Eigen::Ref<const Matrix>& W) const override {
    return task_.tail_error(W);
  }
  std::string rng_state() const override { return task_.rng_state(); }
  void set_rng_state(const std::string& s) override { task_.set_rng_state(s); }
  SpikedQuadraticTask& task() { return task_; }

 private:
  SpikedQuadraticTask task_;
};

class ZipfWorkload final : public TrainWorkload {
 public:
  explicit ZipfWorkload(const ZipfTaskConfig& cfg) : task_(cfg) {}
  Matrix initial_weights() override { return task_.initial_weights(); }
  std::pair<Matrix, double> sample(const Eigen::Ref<const Matrix>& W) override {
    auto batch = task_.next_batch(W);
    return {std::move(batch.G), batch.loss};
  }
  double exact_loss(const Eigen::Ref<const Matrix>&) const override {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double tail_error(const Eigen::Ref<const Matrix>&) const override {
    return std::numeric_limits<double>::quiet_NaN();
  }
  std::string rng_state() const override { return task_.rng_state(); }
  void set_rng_state(const std::string& s) override { task_.set_rng_state(s); }

 private:
  ZipfSoftmaxTask task_;
};

std::unique_ptr<TrainWorkload> make_train_workload(const WorkloadConfig& cfg,
                                                   std::uint64_t seed) {
  if (cfg.kind == "spiked_quadratic") {
    SpikedQuadraticConfig c = cfg.quadratic;
    c.seed = seed;
    return std::make_unique<QuadraticWorkload>(c);
  }
  if (cfg.kind == "zipf_softmax") {
    ZipfTaskConfig c = cfg.zipf;
    c.seed = seed;
    return std::make_unique<ZipfWorkload>(c);
  }
  throw ConfigError("config: workload.kind: '" + cfg.kind + "' cannot be trained on");
}

// One optimizer instance bound to a weight shape; wraps the three state types.
class OptimizerDriver {
 public:
  OptimizerDriver(OptimizerConfig cfg, Index rows, Index cols, std::uint64_t seed)
      : cfg_(std::move(cfg)) {
    switch (cfg_.kind) {
      case OptimizerKind::kSpectra:
        cfg_.spectra.seed = seed;
        state_ = make_spectra_state(rows, cols, cfg_.spectra);
        break;
      case OptimizerKind::kAdamW:
        state_ = make_adamw_state(rows, cols);
        break;
      case OptimizerKind::kMuon:
        state_ = make_muon_state(rows, cols);
        break;
    }
  }

  void step(Matrix& W, const Eigen::Ref<const Matrix>& G, FlopCounter* flops) {
    switch (cfg_.kind) {
      case OptimizerKind::kSpectra:
        spectra_step(W, G, std::get<SpectraState>(state_), cfg_.spectra, flops);
        break;
      case OptimizerKind::kAdamW:
        adamw_step(W, G, std::get<AdamWState>(state_), cfg_.adamw, flops);
        break;
      case OptimizerKind::kMuon:
        muon_step(W, G, std::get<MuonState>(state_), cfg_.muon, flops);
        break;
    }
  }

  void fill_checkpoint(Checkpoint& ckpt) const {
    ckpt.meta["optimizer"] = to_string(cfg_.kind);
    switch (cfg_.kind) {
      case OptimizerKind::kSpectra: {
        const auto& st = std::get<SpectraState>(state_);
        ckpt.meta["t"] = st.t;
        ckpt.meta["k"] = st.k;
        ckpt.meta["bootstrap_count"] = st.cache.bootstrap_count;
        ckpt.meta["refresh_count"] = st.cache.refresh_count;
        ckpt.matrices.emplace_back("momentum", st.M);
        if (st.cache.v_cache.has_value()) {
          ckpt.matrices.emplace_back("v_cache", *st.cache.v_cache);
        }
        break;
      }
      case OptimizerKind::kAdamW: {
        const auto& st = std::get<AdamWState>(state_);
        ckpt.meta["t"] = st.t;
        ckpt.matrices.emplace_back("momentum", st.M);
        ckpt.matrices.emplace_back("second_moment", st.V);
        break;
      }
      case OptimizerKind::kMuon: {
        const auto& st = std::get<MuonState>(state_);
        ckpt.meta["t"] = st.t;
        ckpt.matrices.emplace_back("momentum", st.M);
        break;
      }
    }
  }

  void restore(const Checkpoint& ckpt) {
    const std::string kind = ckpt.meta.value("optimizer", "");
    if (kind != to_string(cfg_.kind)) {
      throw IoError("checkpoint optimizer kind '" + kind + "' does not match config '" +
                    to_string(cfg_.kind) + "'");
    }
    switch (cfg_.kind) {
      case OptimizerKind::kSpectra: {
        auto& st = std::get<SpectraState>(state_);
        st.M = ckpt.matrix("momentum");
        st.t = ckpt.meta.value("t", std::int64_t{0});
        st.cache.bootstrap_count = ckpt.meta.value("bootstrap_count", std::int64_t{0});
        st.cache.refresh_count = ckpt.meta.value("refresh_count", std::int64_t{0});
        if (ckpt.has_matrix("v_cache")) st.cache.v_cache = ckpt.matrix("v_cache");
        break;
      }
      case OptimizerKind::kAdamW: {
        auto& st = std::get<AdamWState>(state_);
        st.M = ckpt.matrix("momentum");
        st.V = ckpt.matrix("second_moment");
        st.t = ckpt.meta.value("t", std::int64_t{0});
        break;
      }
      case OptimizerKind::kMuon: {
        auto& st = std::get<MuonState>(state_);
        st.M = ckpt.matrix("momentum");
        st.t = ckpt.meta.value("t", std::int64_t{0});
        break;
      }
    }
  }

  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::variant<SpectraState, AdamWState, MuonState> state_;
};

struct StepRecord {
  int step;
  double loss;
  double tail_error;
};

struct TrainJobSpec {
  std::size_t index = 0;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  std::string tag;  // row label, carries @lr when a grid is active
};

struct TrainJobOutcome {
  std::vector<StepRecord> trajectory;
  std::int64_t steps_to_target = -1;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double final_tail_error = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t flops = 0;
  bool diverged = false;
};

std::string sanitize_tag(std::string s) {
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.')) c = '_';
  }
  return s;
}

TrainJobOutcome run_train_job(const RunConfig& cfg, const TrainJobSpec& spec,
                              OutputDir* dir) {
  const std::uint64_t job_root =
      derive_seed(cfg.root_seed, "seed-" + std::to_string(spec.seed));
  auto workload = make_train_workload(cfg.workload, derive_seed(job_root, "workload"));

  Matrix W = workload->initial_weights();
  OptimizerDriver opt(spec.optimizer, W.rows(), W.cols(), derive_seed(job_root, "bootstrap"));

  int start_step = 0;
  if (!cfg.resume_from.empty()) {
    const fs::path file = cfg.resume_from / ("ckpt_" + spec.tag + ".spck");
    Checkpoint ckpt = load_checkpoint(file);
    W = ckpt.matrix("weights");
    opt.restore(ckpt);
    workload->set_rng_state(ckpt.meta.at("rng_workload").get<std::string>());
    start_step = static_cast<int>(ckpt.meta.at("step").get<std::int64_t>());
  }

  FlopCounter flops;
  TrainJobOutcome out;
  const bool has_exact_loss = cfg.workload.kind == "spiked_quadratic";

  for (int step = start_step + 1; step <= cfg.steps; ++step) {
    auto [G, sampled_loss] = workload->sample(W);
    opt.step(W, G, &flops);

    const double loss = has_exact_loss ? workload->exact_loss(W) : sampled_loss;
    const double tail = workload->tail_error(W);
    out.trajectory.push_back({step, loss, tail});

    if (!W.allFinite() || !std::isfinite(loss) || std::abs(loss) > 1e12) {
      out.diverged = true;
      break;
    }
    const bool hit = has_exact_loss
                         ? tail <= cfg.target_tail_error
                         : (!cfg.target_losses.empty() &&
                            loss <= *std::min_element(cfg.target_losses.begin(),
                                                      cfg.target_losses.end()));
    if (hit && out.steps_to_target < 0) out.steps_to_target = step;

    if (dir != nullptr && cfg.checkpoint_at == step) {
      Checkpoint ckpt;
      ckpt.meta["step"] = static_cast<std::int64_t>(step);
      ckpt.meta["seed"] = spec.seed;
      ckpt.meta["tag"] = spec.tag;
      ckpt.meta["rng_workload"] = workload->rng_state();
      ckpt.matrices.emplace_back("weights", W);
      opt.fill_checkpoint(ckpt);
      const fs::path file = dir->path() / ("ckpt_" + spec.tag + ".spck");
      save_checkpoint(file, ckpt);
      dir->register_file(file);
    }
  }
  if (!out.trajectory.empty()) {
    out.final_loss = out.trajectory.back().loss;
    out.final_tail_error = out.trajectory.back().tail_error;
  }
  out.flops = flops.count;

  if (dir != nullptr && cfg.save_final_state) {
    Checkpoint ckpt;
    ckpt.meta["step"] = static_cast<std::int64_t>(cfg.steps);
    ckpt.meta["seed"] = spec.seed;
    ckpt.meta["tag"] = spec.tag;
    ckpt.meta["rng_workload"] = workload->rng_state();
    ckpt.matrices.emplace_back("weights", W);
    opt.fill_checkpoint(ckpt);
    const fs::path file = dir->path() / ("final_" + spec.tag + ".spck");
    save_checkpoint(file, ckpt);
    dir->register_file(file);
  }
  return out;
}

// ---------------------------------------------------------------------------
// train

json run_train(const RunConfig& cfg, OutputDir& dir, const RunOptions& opts) {
  const bool grid = !cfg.lr_grid.empty();
  std::vector<double> lrs;
  std::vector<TrainJobSpec> jobs;
  for (const OptimizerConfig& opt : cfg.optimizers) {
    const std::vector<double> opt_lrs = grid ? cfg.lr_grid : std::vector<double>{opt.base_lr()};
    for (const std::uint64_t seed : cfg.seeds) {
      for (const double lr : opt_lrs) {
        TrainJobSpec spec;
        spec.index = jobs.size();
        spec.optimizer = opt;
        spec.optimizer.set_lr(lr);
        spec.seed = seed;
        spec.tag = sanitize_tag(train_job_tag(opt.label, seed, lr, grid));
        jobs.push_back(std::move(spec));
        lrs.push_back(lr);
      }
    }
  }

  std::vector<TrainJobOutcome> results(jobs.size());
  parallel_jobs(opts.workers, jobs.size(),
                [&](std::size_t i) { results[i] = run_train_job(cfg, jobs[i], &dir); });

  CsvFile loss_csv(dir, "loss.csv", {"optimizer", "seed", "step", "loss", "tail_error"});
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const std::string label = grid
        ? jobs[i].optimizer.label + "@" + fmt(lrs[i])
        : jobs[i].optimizer.label;
    for (const StepRecord& r : results[i].trajectory) {
      loss_csv.row({label, fmt(jobs[i].seed), fmt(r.step), fmt(r.loss), fmt(r.tail_error)});
    }
  }

  CsvFile grid_csv(dir, "grid.csv",
                   {"optimizer", "seed", "lr", "steps_to_target", "final_loss",
                    "final_tail_error", "flops", "diverged"});
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const TrainJobOutcome& r = results[i];
    grid_csv.row({jobs[i].optimizer.label, fmt(jobs[i].seed), fmt(lrs[i]),
                  fmt(r.steps_to_target), fmt(r.final_loss), fmt(r.final_tail_error),
                  fmt(r.flops), r.diverged ? "1" : "0"});
  }

  // Per optimizer and seed, the best grid cell by steps-to-target.
  json best = json::object();
  for (const OptimizerConfig& opt : cfg.optimizers) {
    json per_seed = json::object();
    for (const std::uint64_t seed : cfg.seeds) {
      std::int64_t best_steps = -1;
      double best_lr = 0.0;
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (jobs[i].optimizer.label != opt.label || jobs[i].seed != seed) continue;
        const std::int64_t s = results[i].steps_to_target;
        if (s >= 0 && (best_steps < 0 || s < best_steps)) {
          best_steps = s;
          best_lr = lrs[i];
        }
      }
      per_seed[std::to_string(seed)] = {{"steps_to_target", best_steps}, {"lr", best_lr}};
    }
    best[opt.label] = per_seed;
  }

  std::uint64_t total_flops = 0;
  int diverged_jobs = 0;
  for (const TrainJobOutcome& r : results) {
    total_flops += r.flops;
    diverged_jobs += r.diverged ? 1 : 0;
  }
  return {{"jobs", jobs.size()},
          {"total_flops", total_flops},
          {"diverged_jobs", diverged_jobs},
          {"best_by_steps_to_target", best}};
}

// ---------------------------------------------------------------------------
// spectrum

void write_spectrum_rows(CsvFile& csv, std::uint64_t seed, const std::string& source,
                         const SpectrumReport& rep) {
  for (Index i = 0; i < rep.sigmas.size(); ++i) {
    csv.row({fmt(seed), source, fmt(i + 1), fmt(rep.sigmas(i)), fmt(rep.cdf(i))});
  }
}

json run_spectrum(const RunConfig& cfg, OutputDir& dir) {
  CsvFile csv(dir, "spectrum.csv", {"seed", "source", "idx", "sigma", "cdf"});
  json per_seed = json::array();

  if (cfg.workload.kind == "spiked_quadratic") {
    CsvFile supp(dir, "suppression.csv", {"seed", "idx", "full_normalized", "tail_only"});
    for (const std::uint64_t seed : cfg.seeds) {
      const std::uint64_t job_root = derive_seed(cfg.root_seed, "seed-" + std::to_string(seed));
      SpikedQuadraticConfig qc = cfg.workload.quadratic;
      qc.seed = derive_seed(job_root, "workload");
      SpikedQuadraticTask task(qc);

      AdamWConfig ac;
      for (const OptimizerConfig& o : cfg.optimizers) {
        if (o.kind == OptimizerKind::kAdamW) ac = o.adamw;
      }
      Matrix W = task.initial_weights();
      AdamWState st = make_adamw_state(W.rows(), W.cols());
      for (int step = 0; step < cfg.warmup_steps; ++step) {
        adamw_step(W, task.gradient(W), st, ac);
      }
      const Matrix G = task.gradient(W);

      const SpectrumReport g_rep = spectrum_report(G, cfg.spike_ratio);
      const SpectrumReport m_rep = spectrum_report(st.M, cfg.spike_ratio);
      const SpectrumReport v_rep = spectrum_report(st.V, cfg.spike_ratio);
      write_spectrum_rows(csv, seed, "gradient", g_rep);
      write_spectrum_rows(csv, seed, "momentum", m_rep);
      write_spectrum_rows(csv, seed, "second_moment", v_rep);

      const Index r = std::min(W.rows(), W.cols());
      const Index sc = qc.spike_count;
      const Index v_boundary = std::min<Index>(sc * sc, r - 1);
      TailSuppressionSamples samples = tail_suppression(st.M, st.V, std::max<Index>(1, sc), 1e-8);
      for (std::size_t i = 0; i < samples.full_normalized.size(); ++i) {
        supp.row({fmt(seed), fmt(static_cast<std::uint64_t>(i)),
                  fmt(samples.full_normalized[i]), fmt(samples.tail_only[i])});
      }
      per_seed.push_back({{"seed", seed},
                          {"gap_ratio_gradient", g_rep.gap_ratio},
                          {"cdf_momentum_at_spike", m_rep.cdf(m_rep.spike_count - 1)},
                          {"cdf_second_moment_at_spike", v_rep.cdf(v_rep.spike_count - 1)},
                          {"cdf_second_moment_at_spike_sq", v_rep.cdf(v_boundary - 1)},
                          {"suppression_flagged", samples.negative_flagged}});
    }
  } else if (cfg.workload.kind == "zipf_softmax") {
    CsvFile fn_csv(dir, "freqnorm.csv",
                   {"seed", "idx", "sigma_raw", "sigma_freqnorm", "rel_change"});
    for (const std::uint64_t seed : cfg.seeds) {
      const std::uint64_t job_root = derive_seed(cfg.root_seed, "seed-" + std::to_string(seed));
      ZipfTaskConfig base = cfg.workload.zipf;
      base.seed = derive_seed(job_root, "workload");
      base.freq_normalize = false;
      ZipfTaskConfig fn = base;
      fn.freq_normalize = true;

      ZipfSoftmaxTask raw_task(base);
      ZipfSoftmaxTask fn_task(fn);
      const Matrix W = raw_task.initial_weights();
      const Matrix g_raw = raw_task.next_batch(W).G;
      const Matrix g_fn = fn_task.next_batch(W).G;

      const SpectrumReport raw_rep = spectrum_report(g_raw, cfg.spike_ratio);
      const SpectrumReport fn_rep = spectrum_report(g_fn, cfg.spike_ratio);
      write_spectrum_rows(csv, seed, "raw", raw_rep);
      write_spectrum_rows(csv, seed, "freqnorm", fn_rep);

      const Index r = raw_rep.sigmas.size();
      const double sigma1 = raw_rep.sigmas(0);
      Vector rel_change(r);
      for (Index i = 0; i < r; ++i) {
        rel_change(i) = std::abs(fn_rep.sigmas(i) - raw_rep.sigmas(i)) / sigma1;
        fn_csv.row({fmt(seed), fmt(i + 1), fmt(raw_rep.sigmas(i)), fmt(fn_rep.sigmas(i)),
                    fmt(rel_change(i))});
      }
      const Index head = raw_rep.spike_count;
      const double head_mean = rel_change.head(head).mean();
      std::vector<double> tail(rel_change.data() + head, rel_change.data() + r);
      std::sort(tail.begin(), tail.end());
      const double tail_median = tail[tail.size() / 2];
      per_seed.push_back({{"seed", seed},
                          {"sigma1_raw", sigma1},
                          {"sigma1_freqnorm", fn_rep.sigmas(0)},
                          {"gap_ratio_raw", raw_rep.gap_ratio},
                          {"head_mean_rel_change", head_mean},
                          {"tail_median_rel_change", tail_median}});
    }
  } else if (cfg.workload.kind == "spiked_stream") {
    for (const std::uint64_t seed : cfg.seeds) {
      const std::uint64_t job_root = derive_seed(cfg.root_seed, "seed-" + std::to_string(seed));
      SpikedStreamConfig sc = cfg.workload.stream;
      sc.seed = derive_seed(job_root, "workload");
      SpikedGradientStream stream(sc);
      const SpectrumReport draw_rep = spectrum_report(stream.next_gradient(), cfg.spike_ratio);
      const SpectrumReport mean_rep = spectrum_report(stream.mean_gradient(), cfg.spike_ratio);
      write_spectrum_rows(csv, seed, "gradient", draw_rep);
      write_spectrum_rows(csv, seed, "mean_gradient", mean_rep);
      per_seed.push_back({{"seed", seed}, {"gap_ratio_gradient", draw_rep.gap_ratio}});
    }
  } else {
    throw ConfigError("config: workload.kind: spectrum does not support '" +
                      cfg.workload.kind + "'");
  }
  return {{"per_seed", per_seed}};
}

// ---------------------------------------------------------------------------
// relvar

json run_relvar(const RunConfig& cfg, OutputDir& dir) {
  json per_seed = json::array();
  double spearman_sum = 0.0;
  for (const std::uint64_t seed : cfg.seeds) {
    const std::uint64_t job_root = derive_seed(cfg.root_seed, "seed-" + std::to_string(seed));
    SpikedStreamConfig sc = cfg.workload.stream;
    sc.seed = derive_seed(job_root, "workload");
    SpikedGradientStream stream(sc);

    Matrix reference = Matrix::Zero(sc.m, sc.n);
    for (int i = 0; i < cfg.reference_samples; ++i) reference += stream.next_gradient();
    reference /= static_cast<double>(cfg.reference_samples);

    std::vector<Matrix> samples;
    samples.reserve(static_cast<std::size_t>(cfg.micro_samples));
    for (int i = 0; i < cfg.micro_samples; ++i) samples.push_back(stream.next_gradient());

    const RelVarReport rep = relvar(reference, samples, cfg.micro_batch_size);
    CsvFile csv(dir, "relvar_s" + std::to_string(seed) + ".csv",
                {"k", "sigma_k", "var_a_k", "relvar_k"});
    std::vector<double> ks, rvs;
    for (std::size_t i = 0; i < rep.direction.size(); ++i) {
      csv.row({fmt(rep.direction[i]), fmt(rep.sigma[i]), fmt(rep.var_a[i]),
               fmt(rep.relvar[i])});
      ks.push_back(static_cast<double>(rep.direction[i]));
      rvs.push_back(rep.relvar[i]);
    }
    const double rho = spearman_rank_correlation(ks, rvs);
    spearman_sum += rho;
    per_seed.push_back({{"seed", seed},
                        {"spearman_k_relvar", rho},
                        {"excluded_directions", rep.excluded.size()}});
  }
  return {{"per_seed", per_seed},
          {"mean_spearman", spearman_sum / static_cast<double>(cfg.seeds.size())}};
}

// ---------------------------------------------------------------------------
// align

json run_align(const RunConfig& cfg, OutputDir& dir) {
  CsvFile csv(dir, "align.csv", {"seed", "idx", "sigma", "align"});
  json per_seed = json::array();
  double diff_sum = 0.0;
  for (const std::uint64_t seed : cfg.seeds) {
    SpikedProfileConfig pc = cfg.profile;
    pc.seed = derive_seed(cfg.root_seed, "profile-" + std::to_string(seed));
    const Matrix G = spiked_profile_matrix(pc);
    const AlignmentReport rep = ns_alignment(G, cfg.ns_steps);

    const Index r = rep.align.size();
    for (Index i = 0; i < r; ++i) {
      csv.row({fmt(seed), fmt(i + 1), fmt(rep.sigmas(i)), fmt(rep.align(i))});
    }
    const Index head = std::max<Index>(
        1, static_cast<Index>(std::nearbyint(0.015 * static_cast<double>(r))));
    const Index bottom = std::max<Index>(1, r / 5);
    const double head_mean = rep.align.head(head).mean();
    const double bottom_mean = rep.align.tail(bottom).mean();
    diff_sum += head_mean - bottom_mean;
    per_seed.push_back({{"seed", seed},
                        {"head_mean_align", head_mean},
                        {"bottom20_mean_align", bottom_mean},
                        {"diff", head_mean - bottom_mean}});
  }
  return {{"per_seed", per_seed},
          {"mean_head_minus_bottom", diff_sum / static_cast<double>(cfg.seeds.size())}};
}

// ---------------------------------------------------------------------------
// continuity

json run_continuity(const RunConfig& cfg, OutputDir& dir) {
  CsvFile csv(dir, "continuity.csv",
              {"seed", "step", "similarity", "mean_canonical_correlation"});
  json per_seed = json::array();
  for (const std::uint64_t seed : cfg.seeds) {
    const std::uint64_t job_root = derive_seed(cfg.root_seed, "seed-" + std::to_string(seed));
    SpikedStreamConfig sc = cfg.workload.stream;
    sc.seed = derive_seed(job_root, "workload");
    SpikedGradientStream stream(sc);
    const Index k = std::max<Index>(1, sc.spike_count);

    Matrix prev_v = exact_svd(stream.next_gradient()).V.leftCols(k);
    double min_after_warmup = 1.0;
    for (int step = 1; step < cfg.steps; ++step) {
      const Matrix v = exact_svd(stream.next_gradient()).V.leftCols(k);
      const double sim = subspace_similarity(prev_v, v);
      const double mean_cc = mean_canonical_correlation(prev_v, v);
      csv.row({fmt(seed), fmt(step), fmt(sim), fmt(mean_cc)});
      if (step >= cfg.continuity_warmup) min_after_warmup = std::min(min_after_warmup, sim);
      prev_v = v;
    }
    per_seed.push_back({{"seed", seed}, {"min_similarity_after_warmup", min_after_warmup}});
  }
  return {{"per_seed", per_seed}};
}

// ---------------------------------------------------------------------------
// theory

json run_theory(const RunConfig& cfg, OutputDir& dir) {
  const TheoryRunConfig& tc = cfg.theory;
  CsvFile csv(dir, "theory.csv",
              {"instance", "eta_star", "bound_mid", "bound_loose", "bound_mu",
               "grid_gap", "eq2_slack", "eq3_slack", "trace_slack"});

  double eq2_min_slack = std::numeric_limits<double>::infinity();
  double eq3_min_slack = std::numeric_limits<double>::infinity();
  double trace_min_slack = std::numeric_limits<double>::infinity();
  double grid_gap_max = 0.0;
  bool grid_ok = true;

  std::vector<RandomInstance> instances;
  instances.reserve(static_cast<std::size_t>(tc.instances));
  for (int i = 0; i < tc.instances; ++i) {
    RandomModelConfig mc;
    mc.grad_rows = tc.grad_rows;
    mc.grad_cols = tc.grad_cols;
    mc.spike_rank = tc.spike_rank;
    const std::uint64_t seed = derive_seed(cfg.root_seed, "theory-" + std::to_string(i));
    mc.batch = 1 + static_cast<int>(derive_seed(seed, "batch") % 32);
    instances.push_back(random_quadratic_instance(mc, seed));
  }

  for (int i = 0; i < tc.instances; ++i) {
    const QuadraticModel& model = instances[static_cast<std::size_t>(i)].model;
    const SpikeProjector& proj = instances[static_cast<std::size_t>(i)].projector;

    const double eta_star = optimal_lr(model);
    const SpikeLrBounds bounds = spike_lr_bounds(model, proj);
    const double eq2_slack =
        std::min(bounds.bound_mid - eta_star, bounds.bound_loose - bounds.bound_mid);
    const double eq3_slack = bounds.bound_mu.has_value()
                                 ? *bounds.bound_mu - eta_star
                                 : std::numeric_limits<double>::infinity();
    const double trace_slack =
        (model.Sigma * model.H).trace() - bounds.trace_sigma_s_h;
    const GridSearchResult grid = surrogate_grid_minimum(model, tc.grid_points);
    const double grid_gap = std::abs(grid.eta_grid - eta_star);

    eq2_min_slack = std::min(eq2_min_slack, eq2_slack);
    eq3_min_slack = std::min(eq3_min_slack, eq3_slack);
    trace_min_slack = std::min(trace_min_slack, trace_slack);
    grid_gap_max = std::max(grid_gap_max, grid_gap);
    grid_ok = grid_ok && grid_gap <= grid.cell + 1e-15;

    csv.row({fmt(i), fmt(eta_star), fmt(bounds.bound_mid), fmt(bounds.bound_loose),
             fmt(bounds.bound_mu.value_or(std::numeric_limits<double>::infinity())),
             fmt(grid_gap), fmt(eq2_slack), fmt(eq3_slack), fmt(trace_slack)});
  }

  // Monte-Carlo check of E[g^T H g] on a subset of instances.
  double mc_max_abs_z = 0.0;
  {
    const int n_inst = std::min(tc.mc_instances, tc.instances);
    for (int i = 0; i < n_inst; ++i) {
      const QuadraticModel& model = instances[static_cast<std::size_t>(i)].model;
      const Index d = model.H.rows();
      Eigen::SelfAdjointEigenSolver<Matrix> eig(model.Sigma);
      const Matrix sqrt_sigma = eig.eigenvectors() *
                                eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                                eig.eigenvectors().transpose();
      NormalSampler rng(derive_seed(cfg.root_seed, "theory-mc-" + std::to_string(i)));
      const double scale = 1.0 / std::sqrt(static_cast<double>(model.B));
      double mean = 0.0, m2 = 0.0;
      Vector z(d);
      for (int s = 0; s < tc.mc_samples; ++s) {
        for (Index t = 0; t < d; ++t) z(t) = rng.next();
        const Vector g = model.gbar + scale * (sqrt_sigma * z);
        const double q = g.dot(model.H * g);
        const double delta = q - mean;
        mean += delta / static_cast<double>(s + 1);
        m2 += delta * (q - mean);
      }
      const double var = m2 / static_cast<double>(tc.mc_samples - 1);
      const double se = std::sqrt(var / static_cast<double>(tc.mc_samples));
      const double z_score = (mean - expected_quadratic_form(model)) / se;
      mc_max_abs_z = std::max(mc_max_abs_z, std::abs(z_score));
    }
  }

  // Narrative check: fixed gbar and H, covariance mass interpolated from the
  // tail complement into the spike subspace; eta* must strictly decrease.
  bool narrative_monotone = true;
  {
    RandomModelConfig mc;
    mc.grad_rows = tc.grad_rows;
    mc.grad_cols = tc.grad_cols;
    mc.spike_rank = tc.spike_rank;
    RandomInstance inst =
        random_quadratic_instance(mc, derive_seed(cfg.root_seed, "theory-narrative"));
    const Index d = inst.model.H.rows();
    const Matrix& S = inst.projector.basis;
    const Matrix pi = S * S.transpose();
    // spike directions carry extra curvature, as the spike story goes
    inst.model.H += 2.0 * pi;
    const Index k = inst.projector.rank();
    const Matrix sigma_spike = pi * static_cast<double>(d - k) / static_cast<double>(k);
    const Matrix sigma_tail = Matrix::Identity(d, d) - pi;  // equal traces d - k
    double prev = std::numeric_limits<double>::infinity();
    for (int p = 0; p < tc.narrative_points; ++p) {
      const double t = static_cast<double>(p) / static_cast<double>(tc.narrative_points - 1);
      QuadraticModel m = inst.model;
      m.Sigma = (1.0 - t) * sigma_tail + t * sigma_spike;
      m.mu_lb.reset();
      const double eta = optimal_lr(m);
      if (eta >= prev) narrative_monotone = false;
      prev = eta;
    }
  }

  json verdicts = {
      {"eq1_gridgap_max", grid_gap_max},
      {"eq1_grid_within_cell", grid_ok},
      {"eq2_min_slack", eq2_min_slack},
      {"eq3_min_slack", eq3_min_slack},
      {"trace_min_slack", trace_min_slack},
      {"mc_max_abs_z", mc_max_abs_z},
      {"narrative_monotone", narrative_monotone},
  };
  const bool pass = grid_ok && eq2_min_slack >= -1e-10 && eq3_min_slack >= -1e-10 &&
                    trace_min_slack >= -1e-10 && mc_max_abs_z <= 3.0 && narrative_monotone;
  verdicts["pass"] = pass;
  return verdicts;
}

// ---------------------------------------------------------------------------
// bench

json run_bench(const RunConfig& cfg, OutputDir& dir) {
  CsvFile csv(dir, "bench.csv", {"m", "n", "method", "T", "k", "flops", "wallclock_ms"});
  using clock = std::chrono::steady_clock;
  json rows = json::array();

  for (const auto& [m, n] : cfg.bench.sizes) {
    const Matrix G = random_gaussian(m, n, derive_seed(cfg.root_seed, "bench"));
    {
      FlopCounter flops;
      const auto t0 = clock::now();
      newton_schulz(G, cfg.bench.ns_steps, &flops);
      const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
      csv.row({fmt(m), fmt(n), "NS5", fmt(cfg.bench.ns_steps), fmt(Index{0}),
               fmt(flops.count), fmt(ms)});
      rows.push_back({{"m", m}, {"n", n}, {"method", "NS5"}, {"flops", flops.count}});
    }
    for (const double ratio : cfg.bench.rank_ratios) {
      const Index k = std::max<Index>(
          1, static_cast<Index>(std::nearbyint(ratio * static_cast<double>(std::min(m, n)))));
      for (const int T : cfg.bench.iters) {
        SubspaceCache cache;
        PowerIterConfig pc;
        pc.k = k;
        pc.iters = 1;
        pc.oversample = std::min<Index>(8, std::min(m, n) - k);
        pc.seed = derive_seed(cfg.root_seed, "bench-pi");
        power_iteration_svd(G, pc, cache);  // bootstrap, not part of the measured cost
        pc.iters = T;
        FlopCounter flops;
        const auto t0 = clock::now();
        power_iteration_svd(G, pc, cache, &flops);
        const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        csv.row({fmt(m), fmt(n), "PI_T", fmt(T), fmt(k), fmt(flops.count), fmt(ms)});
        rows.push_back(
            {{"m", m}, {"n", n}, {"method", "PI_T"}, {"T", T}, {"k", k}, {"flops", flops.count}});
      }
    }
  }
  return {{"rows", rows}};
}

// ---------------------------------------------------------------------------
// ablate

json run_ablate(const RunConfig& cfg, OutputDir& dir, const RunOptions& opts) {
  struct Cell {
    double rank_ratio;
    int power_iters;
    double lr;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const double r : cfg.ablate.rank_ratios) {
    for (const int t : cfg.ablate.power_iters) {
      for (const double lr : cfg.ablate.lrs) {
        for (const std::uint64_t seed : cfg.seeds) {
          cells.push_back({r, t, lr, seed});
        }
      }
    }
  }

  OptimizerConfig base;
  base.kind = OptimizerKind::kSpectra;
  base.label = "spectra";
  for (const OptimizerConfig& o : cfg.optimizers) {
    if (o.kind == OptimizerKind::kSpectra) base = o;
  }

  std::vector<TrainJobOutcome> results(cells.size());
  parallel_jobs(opts.workers, cells.size(), [&](std::size_t i) {
    const Cell& c = cells[i];
    TrainJobSpec spec;
    spec.optimizer = base;
    spec.optimizer.spectra.rank_ratio = c.rank_ratio;
    spec.optimizer.spectra.power_iters = c.power_iters;
    spec.optimizer.set_lr(c.lr);
    spec.seed = c.seed;
    spec.tag = sanitize_tag("ablate_r" + fmt(c.rank_ratio) + "_T" + fmt(c.power_iters) +
                            "_lr" + fmt(c.lr) + "_s" + fmt(c.seed));
    results[i] = run_train_job(cfg, spec, nullptr);
  });

  CsvFile csv(dir, "ablation.csv",
              {"rank_ratio", "power_iters", "lr", "seed", "final_loss", "final_tail_error",
               "steps_to_target", "flops", "diverged"});
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& c = cells[i];
    const TrainJobOutcome& r = results[i];
    csv.row({fmt(c.rank_ratio), fmt(c.power_iters), fmt(c.lr), fmt(c.seed),
             fmt(r.final_loss), fmt(r.final_tail_error), fmt(r.steps_to_target),
             fmt(r.flops), r.diverged ? "1" : "0"});
  }
  return {{"cells", cells.size()}};
}

}  // namespace

std::string train_job_tag(const std::string& label, std::uint64_t seed, double lr,
                          bool lr_in_tag) {
  std::string tag = label;
  if (lr_in_tag) tag += "@" + format_double(lr);
  tag += "_s" + std::to_string(seed);
  return tag;
}

RunResult run_experiment(const RunConfig& cfg, const RunOptions& opts) {
  const auto wall_start = std::chrono::steady_clock::now();
  OutputDir dir(cfg.output_dir, opts.force);

  json body;
  switch (cfg.kind) {
    case ExperimentKind::kTrain: body = run_train(cfg, dir, opts); break;
    case ExperimentKind::kSpectrum: body = run_spectrum(cfg, dir); break;
    case ExperimentKind::kRelVar: body = run_relvar(cfg, dir); break;
    case ExperimentKind::kAlign: body = run_align(cfg, dir); break;
    case ExperimentKind::kContinuity: body = run_continuity(cfg, dir); break;
    case ExperimentKind::kTheory: body = run_theory(cfg, dir); break;
    case ExperimentKind::kBench: body = run_bench(cfg, dir); break;
    case ExperimentKind::kAblate: body = run_ablate(cfg, dir, opts); break;
  }

  const double wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - wall_start)
                             .count();
  const std::string config_dump = cfg.raw.dump();
  char hash_hex[24];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(config_dump.data(), config_dump.size())));

  json summary = {{"experiment", to_string(cfg.kind)},
                  {"config", cfg.raw},
                  {"config_hash", hash_hex},
                  {"root_seed", cfg.root_seed},
                  {"results", body},
                  {"wall_clock_ms", wall_ms}};
  {
    const fs::path file = dir.path() / "summary.json";
    std::ofstream out(file);
    if (!out) throw IoError("cannot write " + file.string());
    out << summary.dump(2) << '\n';
    // summary holds wall-clock data, so it stays out of the manifest to keep
    // every manifested artifact byte-reproducible
  }
  dir.write_manifest();

  if (cfg.kind == ExperimentKind::kTheory && !body.value("pass", true)) {
    throw PropertyCheckFailure("theory: property checks failed: " + body.dump());
  }
  return {dir.path(), std::move(summary)};
}

int run_experiment_cli(const std::filesystem::path& config_path, const RunOptions& opts) {
  try {
    RunConfig cfg = load_run_config(config_path);
    if (const char* env = std::getenv("SPECTRA_LAB_SEED")) {
      try {
        cfg.root_seed = std::stoull(env);
      } catch (const std::exception&) {
        throw ConfigError("config: SPECTRA_LAB_SEED: not a nonnegative integer");
      }
    }
    const RunResult result = run_experiment(cfg, opts);
    std::cout << "ok: " << to_string(cfg.kind) << " -> " << result.output_dir.string()
              << std::endl;
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const PropertyCheckFailure& e) {
    std::cerr << "property-check failure: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  }
}

}  // namespace spectra
