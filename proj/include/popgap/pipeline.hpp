#pragma once

#include <ostream>
#include <string>

#include "popgap/config.hpp"
#include "popgap/gap.hpp"

namespace popgap {

/// Orchestration behind the CLI subcommands. Everything here is callable
/// from tests; the CLI adds only argument parsing and exit-code mapping.

struct CohortOutputs {
  Cohort g1, g2;
  FoldPlan folds_g1, folds_g2;
  std::string g1_manifest_path, g2_manifest_path;
};

/// Builds the configured experiment's cohorts and fold plans, writes
/// <out_dir>/cohorts/g1.json and g2.json, and prints a demographic summary.
CohortOutputs run_cohort(const RunConfig& cfg, std::ostream& log);

struct EvaluateOptions {
  std::string manifest_path;
  std::string predictions_dir;  // holds <subject_id>.nii.gz (or .nii)
  std::string model_id;
  std::string out_csv;
  bool volumes_only = false;  // emit training-set gt volumes, skip predictions
  bool append = false;        // append rows to an existing CSV (multi-fold runs)
};

/// Evaluates one manifest subject list against one model's predictions and
/// writes a case-metrics CSV (or, with volumes_only, a train-volumes CSV
/// with columns subject_id,organ,gt_volume_ml). Ground-truth paths come
/// from the registry; relative paths resolve against the registry's
/// directory. Missing prediction files are all listed before the error.
void run_evaluate(const RunConfig& cfg, const EvaluateOptions& opt, std::ostream& log);

struct GapOptions {
  std::string g1_manifest, g2_manifest;
  std::string g1_match_csv, g1_cross_csv;
  std::string g2_match_csv, g2_cross_csv;
  std::string g1_train_volumes_csv, g2_train_volumes_csv;  // both or neither
  std::string out_dir;
};

/// Aggregates the four pairing CSVs into gap_table.csv, diversity_table.csv,
/// scatter.csv, and run_metadata.json under out_dir, and prints the gap
/// table. The expected fold multiplicity is the number of distinct model
/// ids per stream, cross-checked against the manifests' fold count.
ExperimentReport run_gap(const RunConfig& cfg, const GapOptions& opt, std::ostream& log);

/// Generates the synthetic cohort configured in [synth] under out_dir:
/// gt/, pred/S_g1/, pred/S_g2/, registry.csv.
void run_synth(const RunConfig& cfg, const std::string& out_dir, std::ostream& log);

/// Fast oracle sweep: random small mask pairs compared between the fast
/// metrics and the brute-force oracles, plus fixed statistics cross-checks.
/// Returns the number of failures (0 = all good).
int run_selftest(std::uint64_t seed, int n_cases, std::ostream& log);

}  // namespace popgap
