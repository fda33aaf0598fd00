#pragma once

#include "spectra/optimizers.hpp"
#include "spectra/synth_workloads.hpp"
#include "spectra/theory_lab.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace spectra {

/// Bad or missing configuration; maps to process exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A theory-run property check failed; maps to process exit code 2.
class PropertyCheckFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem/serialization trouble; maps to process exit code 3.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind {
  kTrain,
  kSpectrum,
  kRelVar,
  kAlign,
  kContinuity,
  kTheory,
  kBench,
  kAblate,
};

ExperimentKind experiment_kind_from_string(const std::string& name);
std::string to_string(ExperimentKind kind);

struct WorkloadConfig {
  std::string kind;  // spiked_stream | spiked_quadratic | zipf_softmax
  SpikedStreamConfig stream;
  SpikedQuadraticConfig quadratic;
  ZipfTaskConfig zipf;
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdamW;
  std::string label;  // CSV row label, defaults to the kind name
  SpectraConfig spectra;
  AdamWConfig adamw;
  MuonConfig muon;

  double base_lr() const;
  void set_lr(double lr);
};

struct TheoryRunConfig {
  int instances = 200;
  Index grad_rows = 6;
  Index grad_cols = 8;
  Index spike_rank = 3;
  int batch = 8;
  int grid_points = 10000;
  int mc_samples = 100000;
  int mc_instances = 20;
  int narrative_points = 9;
};

struct BenchRunConfig {
  std::vector<std::pair<Index, Index>> sizes;
  std::vector<double> rank_ratios{0.015};
  std::vector<int> iters{1};
  int ns_steps = 5;
};

struct AblateRunConfig {
  std::vector<double> rank_ratios{0.015, 0.05, 0.10, 0.15};
  std::vector<int> power_iters{1, 2, 4, 8};
  std::vector<double> lrs{8e-4, 1e-3, 5e-3, 1e-2};
};

struct RunConfig {
  ExperimentKind kind = ExperimentKind::kTrain;
  std::filesystem::path output_dir;
  std::vector<std::uint64_t> seeds{1};
  int steps = 100;
  std::uint64_t root_seed = 12345;

  WorkloadConfig workload;
  std::vector<OptimizerConfig> optimizers;
  std::vector<double> lr_grid;
  double target_tail_error = 0.1;
  std::vector<double> target_losses;

  std::int64_t checkpoint_at = -1;   // save per-job checkpoints at this step
  std::filesystem::path resume_from; // directory holding per-job checkpoints
  bool save_final_state = false;

  // spectrum
  int warmup_steps = 500;
  double spike_ratio = 0.015;
  // relvar
  int reference_samples = 1024;
  int micro_samples = 256;
  Index micro_batch_size = 16;
  // align
  int ns_steps = 5;
  SpikedProfileConfig profile;
  // continuity
  int continuity_warmup = 10;

  TheoryRunConfig theory;
  BenchRunConfig bench;
  AblateRunConfig ablate;

  nlohmann::json raw;  // config echo
};

/// Parses and validates; throws ConfigError whose message lists the
/// offending field path(s).
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

std::pair<Index, Index> parse_size(const std::string& text);

}  // namespace spectra
