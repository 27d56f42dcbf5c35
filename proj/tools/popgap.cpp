// Command-line front end. All real work lives in popgap::run_*; this file
// only parses arguments, applies flag-over-config precedence, and maps
// errors to exit codes (0 success, 1 usage, 2 data/runtime error).

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include "popgap/config.hpp"
#include "popgap/errors.hpp"
#include "popgap/pipeline.hpp"

namespace {

// Worker count precedence: --workers flag, then POPGAP_WORKERS, then the
// OpenMP default (all cores).
void apply_workers(int workers) {
#ifdef _OPENMP
  if (workers <= 0) {
    if (const char* env = std::getenv("POPGAP_WORKERS")) workers = std::atoi(env);
  }
  if (workers > 0) omp_set_num_threads(workers);
#else
  (void)workers;
#endif
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Population performance-gap toolkit for 3D label volumes"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir_override;
  std::uint64_t seed_override = 0;
  int workers = 0;
  app.add_option("-c,--config", config_path, "INI config file (required except for selftest)");
  app.add_option("--out-dir", out_dir_override, "override run.out_dir");
  CLI::Option* seed_opt = app.add_option("--seed", seed_override, "override run.seed");
  app.add_option("--workers", workers,
                 "worker threads (default: POPGAP_WORKERS, then all cores)");

  // Global options (-c, --seed, ...) are accepted on either side of the
  // subcommand name; unmatched subcommand arguments fall through to the app.
  CLI::App* cohort = app.add_subcommand("cohort", "build subgroup cohorts and fold plans");
  cohort->fallthrough();

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "score one model's predictions for one cohort");
  evaluate->fallthrough();
  popgap::EvaluateOptions eopt;
  evaluate->add_option("--manifest", eopt.manifest_path, "cohort manifest JSON")->required();
  evaluate->add_option("--pred-dir", eopt.predictions_dir,
                       "directory holding <subject_id>.nii[.gz] predictions");
  evaluate->add_option("--model-id", eopt.model_id,
                       "model tag for the CSV (default: prediction directory name)");
  evaluate->add_option("--out", eopt.out_csv, "output CSV path")->required();
  evaluate->add_flag("--train-volumes", eopt.volumes_only,
                     "emit training-set ground-truth volumes instead of case metrics");
  evaluate->add_flag("--append", eopt.append,
                     "append to an existing CSV instead of rewriting it");

  CLI::App* gap = app.add_subcommand("gap", "aggregate the four pairing CSVs into gap reports");
  gap->fallthrough();
  popgap::GapOptions gopt;
  gap->add_option("--g1-manifest", gopt.g1_manifest)->required();
  gap->add_option("--g2-manifest", gopt.g2_manifest)->required();
  gap->add_option("--g1-match", gopt.g1_match_csv, "g1 test set, model trained on g1")
      ->required();
  gap->add_option("--g1-cross", gopt.g1_cross_csv, "g1 test set, model trained on g2")
      ->required();
  gap->add_option("--g2-match", gopt.g2_match_csv, "g2 test set, model trained on g2")
      ->required();
  gap->add_option("--g2-cross", gopt.g2_cross_csv, "g2 test set, model trained on g1")
      ->required();
  gap->add_option("--g1-train-volumes", gopt.g1_train_volumes_csv,
                  "training-set volume CSV for the diversity proxy (both or neither)");
  gap->add_option("--g2-train-volumes", gopt.g2_train_volumes_csv);
  gap->add_option("--report-dir", gopt.out_dir, "default: <run.out_dir>/report");

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic phantom cohort");
  synth->fallthrough();
  std::string synth_out;
  synth->add_option("--out", synth_out, "dataset directory to create")->required();

  CLI::App* selftest =
      app.add_subcommand("selftest", "compare the fast metrics against brute-force oracles");
  selftest->fallthrough();
  int selftest_cases = 50;
  selftest->add_option("--cases", selftest_cases, "number of random mask pairs")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  apply_workers(workers);

  try {
    if (selftest->parsed()) {
      const std::uint64_t seed = seed_opt->count() > 0 ? seed_override : 0x5e1f7e57;
      return popgap::run_selftest(seed, selftest_cases, std::cout) == 0 ? 0 : 2;
    }

    if (config_path.empty()) {
      std::cerr << "error: this command needs --config\n";
      return 1;
    }
    popgap::RunConfig cfg = popgap::load_run_config(config_path, !synth->parsed());
    if (seed_opt->count() > 0) cfg.seed = seed_override;
    if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;

    if (cohort->parsed()) {
      popgap::run_cohort(cfg, std::cout);
    } else if (evaluate->parsed()) {
      popgap::run_evaluate(cfg, eopt, std::cout);
    } else if (gap->parsed()) {
      if (gopt.out_dir.empty()) gopt.out_dir = cfg.out_dir + "/report";
      popgap::run_gap(cfg, gopt, std::cout);
    } else if (synth->parsed()) {
      popgap::run_synth(cfg, synth_out, std::cout);
    }
  } catch (const popgap::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
