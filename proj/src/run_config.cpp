#include "spectra/run_config.hpp"

#include <fstream>
#include <sstream>

namespace spectra {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw ConfigError("config: " + path + ": " + why);
}

const json* find(const json& j, const std::string& key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

std::int64_t as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<std::int64_t>();
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected a boolean");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

void get(const json& j, const std::string& key, const std::string& path, double& out) {
  if (const json* v = find(j, key)) out = as_double(*v, path + "." + key);
}
void get(const json& j, const std::string& key, const std::string& path, bool& out) {
  if (const json* v = find(j, key)) out = as_bool(*v, path + "." + key);
}
void get(const json& j, const std::string& key, const std::string& path, int& out) {
  if (const json* v = find(j, key)) out = static_cast<int>(as_int(*v, path + "." + key));
}
void get(const json& j, const std::string& key, const std::string& path, std::int64_t& out) {
  if (const json* v = find(j, key)) out = as_int(*v, path + "." + key);
}
void get(const json& j, const std::string& key, const std::string& path, std::uint64_t& out) {
  if (const json* v = find(j, key)) {
    const std::int64_t x = as_int(*v, path + "." + key);
    if (x < 0) fail(path + "." + key, "expected a nonnegative integer");
    out = static_cast<std::uint64_t>(x);
  }
}

std::vector<double> double_list(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(as_double(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

std::vector<int> int_list(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(static_cast<int>(as_int(j[i], path + "[" + std::to_string(i) + "]")));
  }
  return out;
}

void parse_stream(const json& j, const std::string& path, SpikedStreamConfig& cfg) {
  get(j, "m", path, cfg.m);
  get(j, "n", path, cfg.n);
  get(j, "spike_count", path, cfg.spike_count);
  get(j, "spike_scale", path, cfg.spike_scale);
  get(j, "tail_scale", path, cfg.tail_scale);
  get(j, "tail_sparsity", path, cfg.tail_sparsity);
  get(j, "tail_decay", path, cfg.tail_decay);
  get(j, "drift_rate", path, cfg.drift_rate);
  get(j, "seed", path, cfg.seed);
}

void parse_quadratic(const json& j, const std::string& path, SpikedQuadraticConfig& cfg) {
  get(j, "m", path, cfg.m);
  get(j, "n", path, cfg.n);
  get(j, "spike_count", path, cfg.spike_count);
  get(j, "tail_count", path, cfg.tail_count);
  get(j, "curvature_head", path, cfg.curvature_head);
  get(j, "curvature_tail", path, cfg.curvature_tail);
  get(j, "noise_spike", path, cfg.noise_spike);
  get(j, "noise_tail", path, cfg.noise_tail);
  get(j, "target_scale", path, cfg.target_scale);
  get(j, "seed", path, cfg.seed);
}

void parse_zipf(const json& j, const std::string& path, ZipfTaskConfig& cfg) {
  get(j, "vocab", path, cfg.vocab);
  get(j, "dim", path, cfg.dim);
  get(j, "zipf_exponent", path, cfg.zipf_exponent);
  get(j, "samples_per_batch", path, cfg.samples_per_batch);
  get(j, "freq_normalize", path, cfg.freq_normalize);
  get(j, "seed", path, cfg.seed);
  get(j, "common_strength", path, cfg.common_strength);
  get(j, "class_scale", path, cfg.class_scale);
  get(j, "feature_noise", path, cfg.feature_noise);
  get(j, "corpus_samples", path, cfg.corpus_samples);
}

void parse_workload(const json& j, const std::string& path, WorkloadConfig& out) {
  if (!j.is_object()) fail(path, "expected an object");
  const json* kind = find(j, "kind");
  if (kind == nullptr) fail(path + ".kind", "missing");
  out.kind = as_string(*kind, path + ".kind");
  if (out.kind == "spiked_stream") {
    parse_stream(j, path, out.stream);
  } else if (out.kind == "spiked_quadratic") {
    parse_quadratic(j, path, out.quadratic);
  } else if (out.kind == "zipf_softmax") {
    parse_zipf(j, path, out.zipf);
  } else {
    fail(path + ".kind", "unknown workload '" + out.kind +
                             "' (expected spiked_stream | spiked_quadratic | zipf_softmax)");
  }
}

OptimizerConfig parse_optimizer(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  const json* kind = find(j, "kind");
  if (kind == nullptr) fail(path + ".kind", "missing");
  OptimizerConfig out;
  const std::string name = as_string(*kind, path + ".kind");
  try {
    out.kind = optimizer_kind_from_string(name);
  } catch (const std::invalid_argument&) {
    fail(path + ".kind", "unknown optimizer '" + name + "'");
  }
  out.label = name;
  if (const json* v = find(j, "label")) out.label = as_string(*v, path + ".label");
  switch (out.kind) {
    case OptimizerKind::kSpectra: {
      get(j, "lr", path, out.spectra.lr);
      get(j, "momentum", path, out.spectra.momentum);
      get(j, "rank_ratio", path, out.spectra.rank_ratio);
      get(j, "power_iters", path, out.spectra.power_iters);
      get(j, "epsilon", path, out.spectra.epsilon);
      get(j, "rms_scale", path, out.spectra.rms_scale);
      get(j, "oversample", path, out.spectra.oversample);
      get(j, "refresh_interval", path, out.spectra.refresh_interval);
      get(j, "orthonormalize_v", path, out.spectra.orthonormalize_v);
      if (out.spectra.lr <= 0.0) fail(path + ".lr", "must be positive");
      if (out.spectra.momentum < 0.0 || out.spectra.momentum >= 1.0) {
        fail(path + ".momentum", "must lie in [0, 1)");
      }
      if (out.spectra.rank_ratio <= 0.0 || out.spectra.rank_ratio > 1.0) {
        fail(path + ".rank_ratio", "must lie in (0, 1]");
      }
      if (out.spectra.power_iters < 1) fail(path + ".power_iters", "must be >= 1");
      break;
    }
    case OptimizerKind::kAdamW: {
      get(j, "lr", path, out.adamw.lr);
      get(j, "beta1", path, out.adamw.beta1);
      get(j, "beta2", path, out.adamw.beta2);
      get(j, "epsilon", path, out.adamw.epsilon);
      get(j, "weight_decay", path, out.adamw.weight_decay);
      if (out.adamw.lr <= 0.0) fail(path + ".lr", "must be positive");
      break;
    }
    case OptimizerKind::kMuon: {
      get(j, "lr", path, out.muon.lr);
      get(j, "momentum", path, out.muon.momentum);
      get(j, "epsilon", path, out.muon.epsilon);
      get(j, "rms_scale", path, out.muon.rms_scale);
      get(j, "ns_steps", path, out.muon.ns_steps);
      get(j, "raw_scale", path, out.muon.raw_scale);
      if (out.muon.lr <= 0.0) fail(path + ".lr", "must be positive");
      break;
    }
  }
  return out;
}

}  // namespace

double OptimizerConfig::base_lr() const {
  switch (kind) {
    case OptimizerKind::kSpectra: return spectra.lr;
    case OptimizerKind::kAdamW: return adamw.lr;
    case OptimizerKind::kMuon: return muon.lr;
  }
  throw std::logic_error("unreachable");
}

void OptimizerConfig::set_lr(double lr) {
  switch (kind) {
    case OptimizerKind::kSpectra: spectra.lr = lr; return;
    case OptimizerKind::kAdamW: adamw.lr = lr; return;
    case OptimizerKind::kMuon: muon.lr = lr; return;
  }
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  if (name == "train") return ExperimentKind::kTrain;
  if (name == "spectrum") return ExperimentKind::kSpectrum;
  if (name == "relvar") return ExperimentKind::kRelVar;
  if (name == "align") return ExperimentKind::kAlign;
  if (name == "continuity") return ExperimentKind::kContinuity;
  if (name == "theory") return ExperimentKind::kTheory;
  if (name == "bench") return ExperimentKind::kBench;
  if (name == "ablate") return ExperimentKind::kAblate;
  throw ConfigError("config: experiment: unknown kind '" + name + "'");
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kTrain: return "train";
    case ExperimentKind::kSpectrum: return "spectrum";
    case ExperimentKind::kRelVar: return "relvar";
    case ExperimentKind::kAlign: return "align";
    case ExperimentKind::kContinuity: return "continuity";
    case ExperimentKind::kTheory: return "theory";
    case ExperimentKind::kBench: return "bench";
    case ExperimentKind::kAblate: return "ablate";
  }
  throw std::logic_error("unreachable experiment kind");
}

std::pair<Index, Index> parse_size(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) {
    throw ConfigError("config: size '" + text + "' must look like 256x256");
  }
  try {
    const Index m = std::stoll(text.substr(0, x));
    const Index n = std::stoll(text.substr(x + 1));
    if (m <= 0 || n <= 0) throw std::invalid_argument("");
    return {m, n};
  } catch (const std::exception&) {
    throw ConfigError("config: size '" + text + "' must look like 256x256");
  }
}

RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object() || j.empty()) {
    throw ConfigError("config: expected a non-empty JSON object");
  }
  RunConfig cfg;
  cfg.raw = j;

  const json* kind = find(j, "experiment");
  if (kind == nullptr) fail("experiment", "missing");
  cfg.kind = experiment_kind_from_string(as_string(*kind, "experiment"));

  const json* out_dir = find(j, "output_dir");
  if (out_dir == nullptr) fail("output_dir", "missing");
  cfg.output_dir = as_string(*out_dir, "output_dir");

  if (const json* v = find(j, "seeds")) {
    if (!v->is_array() || v->empty()) fail("seeds", "expected a non-empty array");
    cfg.seeds.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const std::string path = "seeds[" + std::to_string(i) + "]";
      const std::int64_t s = as_int((*v)[i], path);
      if (s < 0) fail(path, "must be nonnegative");
      cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  }
  get(j, "steps", "", cfg.steps);
  if (cfg.steps < 1) fail("steps", "must be >= 1");
  get(j, "root_seed", "", cfg.root_seed);

  if (const json* v = find(j, "workload")) {
    parse_workload(*v, "workload", cfg.workload);
  }
  if (const json* v = find(j, "optimizers")) {
    if (!v->is_array()) fail("optimizers", "expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      cfg.optimizers.push_back(
          parse_optimizer((*v)[i], "optimizers[" + std::to_string(i) + "]"));
    }
  }
  if (const json* v = find(j, "lr_grid")) {
    cfg.lr_grid = double_list(*v, "lr_grid");
    for (std::size_t i = 0; i < cfg.lr_grid.size(); ++i) {
      if (cfg.lr_grid[i] <= 0.0) {
        fail("lr_grid[" + std::to_string(i) + "]", "must be positive");
      }
    }
  }
  get(j, "target_tail_error", "", cfg.target_tail_error);
  if (const json* v = find(j, "target_losses")) {
    cfg.target_losses = double_list(*v, "target_losses");
  }
  get(j, "checkpoint_at", "", cfg.checkpoint_at);
  if (const json* v = find(j, "resume_from")) {
    cfg.resume_from = as_string(*v, "resume_from");
  }
  get(j, "save_final_state", "", cfg.save_final_state);

  get(j, "warmup_steps", "", cfg.warmup_steps);
  get(j, "spike_ratio", "", cfg.spike_ratio);
  get(j, "reference_samples", "", cfg.reference_samples);
  get(j, "micro_samples", "", cfg.micro_samples);
  get(j, "micro_batch_size", "", cfg.micro_batch_size);
  get(j, "ns_steps", "", cfg.ns_steps);
  get(j, "continuity_warmup", "", cfg.continuity_warmup);

  if (const json* v = find(j, "profile")) {
    const std::string path = "profile";
    get(*v, "n", path, cfg.profile.n);
    get(*v, "spike_count", path, cfg.profile.spike_count);
    get(*v, "spike_scale", path, cfg.profile.spike_scale);
    get(*v, "spike_spacing", path, cfg.profile.spike_spacing);
    get(*v, "tail_max", path, cfg.profile.tail_max);
    get(*v, "tail_min", path, cfg.profile.tail_min);
    get(*v, "tail_clusters", path, cfg.profile.tail_clusters);
    get(*v, "seed", path, cfg.profile.seed);
  }
  if (const json* v = find(j, "theory")) {
    const std::string path = "theory";
    get(*v, "instances", path, cfg.theory.instances);
    get(*v, "grad_rows", path, cfg.theory.grad_rows);
    get(*v, "grad_cols", path, cfg.theory.grad_cols);
    get(*v, "spike_rank", path, cfg.theory.spike_rank);
    get(*v, "batch", path, cfg.theory.batch);
    get(*v, "grid_points", path, cfg.theory.grid_points);
    get(*v, "mc_samples", path, cfg.theory.mc_samples);
    get(*v, "mc_instances", path, cfg.theory.mc_instances);
    get(*v, "narrative_points", path, cfg.theory.narrative_points);
    if (cfg.theory.instances < 1) fail("theory.instances", "must be >= 1");
  }
  if (const json* v = find(j, "bench")) {
    const std::string path = "bench";
    if (const json* sizes = find(*v, "sizes")) {
      if (!sizes->is_array() || sizes->empty()) fail("bench.sizes", "expected a non-empty array");
      for (std::size_t i = 0; i < sizes->size(); ++i) {
        cfg.bench.sizes.push_back(
            parse_size(as_string((*sizes)[i], "bench.sizes[" + std::to_string(i) + "]")));
      }
    }
    if (const json* ratios = find(*v, "rank_ratios")) {
      cfg.bench.rank_ratios = double_list(*ratios, "bench.rank_ratios");
    }
    if (const json* iters = find(*v, "iters")) {
      cfg.bench.iters = int_list(*iters, "bench.iters");
    }
    get(*v, "ns_steps", path, cfg.bench.ns_steps);
  }
  if (const json* v = find(j, "ablate")) {
    if (const json* r = find(*v, "rank_ratios")) {
      cfg.ablate.rank_ratios = double_list(*r, "ablate.rank_ratios");
    }
    if (const json* t = find(*v, "power_iters")) {
      cfg.ablate.power_iters = int_list(*t, "ablate.power_iters");
    }
    if (const json* l = find(*v, "lrs")) {
      cfg.ablate.lrs = double_list(*l, "ablate.lrs");
    }
  }

  // Cross-field requirements.
  if (cfg.kind == ExperimentKind::kTrain) {
    if (cfg.optimizers.empty()) fail("optimizers", "train needs at least one optimizer");
    if (cfg.workload.kind.empty()) fail("workload", "train needs a workload");
    if (cfg.workload.kind == "spiked_stream") {
      fail("workload.kind", "train needs a loss-bearing workload (spiked_quadratic or zipf_softmax)");
    }
  }
  if (cfg.kind == ExperimentKind::kAblate) {
    if (cfg.workload.kind != "spiked_quadratic") {
      fail("workload.kind", "ablate runs on spiked_quadratic");
    }
  }
  if ((cfg.kind == ExperimentKind::kRelVar || cfg.kind == ExperimentKind::kContinuity) &&
      cfg.workload.kind != "spiked_stream") {
    fail("workload.kind", to_string(cfg.kind) + " runs on spiked_stream");
  }
  if (cfg.kind == ExperimentKind::kSpectrum && cfg.workload.kind.empty()) {
    fail("workload", "spectrum needs a workload");
  }
  if (cfg.kind == ExperimentKind::kBench && cfg.bench.sizes.empty()) {
    fail("bench.sizes", "bench needs at least one size");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) {
    throw ConfigError("config: " + path.string() + ": malformed JSON");
  }
  return parse_run_config(j);
}

}  // namespace spectra
