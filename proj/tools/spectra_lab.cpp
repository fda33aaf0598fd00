#include "spectra/experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  CLI::App app{"spectra-lab: spike-aware optimizer experiments"};
  app.require_subcommand(1);

  // run <config> [--force] [--workers N]
  auto* run = app.add_subcommand("run", "execute an experiment config");
  std::string config_path;
  spectra::RunOptions run_opts;
  run->add_option("config", config_path, "JSON run config")->required();
  run->add_flag("--force", run_opts.force, "write into an existing output directory");
  run->add_option("--workers", run_opts.workers, "bounded worker pool size")
      ->check(CLI::PositiveNumber);

  // bench --sizes 256x256,... [--ranks ...] [--iters ...] --out DIR
  auto* bench = app.add_subcommand("bench", "FLOP/latency comparison of NS vs power iteration");
  std::vector<std::string> bench_sizes;
  std::vector<double> bench_ranks{0.015};
  std::vector<int> bench_iters{1};
  std::string bench_out = "bench_out";
  bool bench_force = false;
  std::uint64_t bench_seed = 12345;
  bench->add_option("--sizes", bench_sizes, "matrix sizes like 256x256")
      ->required()
      ->delimiter(',');
  bench->add_option("--ranks", bench_ranks, "rank ratios for power iteration")->delimiter(',');
  bench->add_option("--iters", bench_iters, "power-iteration counts")->delimiter(',');
  bench->add_option("--out", bench_out, "output directory");
  bench->add_flag("--force", bench_force, "write into an existing output directory");
  bench->add_option("--seed", bench_seed, "root seed");

  // theory [--instances N] [--out DIR]
  auto* theory = app.add_subcommand("theory", "numerical verification of the lr-bound chain");
  int theory_instances = 200;
  std::string theory_out = "theory_out";
  bool theory_force = false;
  std::uint64_t theory_seed = 12345;
  theory->add_option("--instances", theory_instances, "random model instances")
      ->check(CLI::PositiveNumber);
  theory->add_option("--out", theory_out, "output directory");
  theory->add_flag("--force", theory_force, "write into an existing output directory");
  theory->add_option("--seed", theory_seed, "root seed");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    return spectra::run_experiment_cli(config_path, run_opts);
  }

  // The direct subcommands assemble the equivalent run config.
  nlohmann::json j;
  spectra::RunOptions opts;
  if (bench->parsed()) {
    j["experiment"] = "bench";
    j["output_dir"] = bench_out;
    j["root_seed"] = bench_seed;
    j["bench"] = {{"sizes", bench_sizes}, {"rank_ratios", bench_ranks}, {"iters", bench_iters}};
    opts.force = bench_force;
  } else {
    j["experiment"] = "theory";
    j["output_dir"] = theory_out;
    j["root_seed"] = theory_seed;
    j["theory"] = {{"instances", theory_instances}};
    opts.force = theory_force;
  }
  try {
    spectra::RunConfig cfg = spectra::parse_run_config(j);
    if (const char* env = std::getenv("SPECTRA_LAB_SEED")) {
      cfg.root_seed = std::stoull(env);
    }
    const auto result = spectra::run_experiment(cfg, opts);
    std::printf("ok: %s -> %s\n", to_string(cfg.kind).c_str(),
                result.output_dir.string().c_str());
    return 0;
  } catch (const spectra::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const spectra::PropertyCheckFailure& e) {
    std::fprintf(stderr, "property-check failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
