#pragma once

#include "spectra/checkpoint.hpp"
#include "spectra/run_config.hpp"

#include <filesystem>

namespace spectra {

struct RunOptions {
  bool force = false;   // allow writing into an existing output directory
  int workers = 1;      // bounded worker pool for independent jobs
};

struct RunResult {
  std::filesystem::path output_dir;
  nlohmann::json summary;
};

/// Executes one experiment described by the config: writes CSV artifacts, a
/// summary.json (config echo + content hash + wall clock), and a manifest
/// listing every emitted file with its checksum. Deterministic per seed:
/// identical config and seeds give byte-identical CSV output (wall-clock
/// data is confined to summary.json and the bench wallclock_ms column).
/// Throws ConfigError / PropertyCheckFailure / IoError; see exit codes.
RunResult run_experiment(const RunConfig& cfg, const RunOptions& opts = {});

/// CLI entry: loads the config (applying the SPECTRA_LAB_SEED root-seed
/// override when set), runs it, prints a one-line outcome, and maps errors
/// to exit codes 0 ok / 1 config / 2 property-check / 3 I/O.
int run_experiment_cli(const std::filesystem::path& config_path, const RunOptions& opts);

/// Job identity inside a train/ablate run; used for checkpoint file names.
std::string train_job_tag(const std::string& label, std::uint64_t seed, double lr,
                          bool lr_in_tag);

}  // namespace spectra
