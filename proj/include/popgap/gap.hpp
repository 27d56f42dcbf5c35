#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "popgap/metrics.hpp"
#include "popgap/stats.hpp"

namespace popgap {

enum class Metric { dice, hd95 };
enum class CohortRole { g1, g2 };
enum class Direction { worse_off_distribution, better_off_distribution, neutral };
enum class TestMode { paired, welch };

const char* to_string(Metric m);
const char* to_string(CohortRole r);
const char* to_string(Direction d);
const char* to_string(TestMode m);

/// Per-subject performance of one model family on one test group, for one
/// organ and metric. values are fold-averaged per subject and aligned with
/// subject_ids; mean is their arithmetic mean.
struct PerformanceSample {
  CohortRole test_group = CohortRole::g1;
  CohortRole trained_on = CohortRole::g1;
  std::string organ;
  Metric metric = Metric::dice;
  std::vector<std::string> subject_ids;
  std::vector<double> values;
  double mean = 0.0;
};

/// (mean_cross - mean_match) / (0.5 * (mean_match + mean_cross)) * 100.
/// Equal means give exactly 0, including the all-zero case (no measured
/// difference is a zero gap). Throws DegenerateDenominatorError when the
/// denominator vanishes with unequal means, MismatchedSamplesError when the
/// samples disagree on group, organ, metric, or pairing roles.
double performance_gap(const PerformanceSample& match, const PerformanceSample& cross);

/// Sign semantics: for dice, negative means the cross-trained model is
/// worse; for hd95, positive means worse. Zero is neutral for both.
Direction interpret_direction(double delta_p_percent, Metric metric);

/// Two-sided t-test between the matched and cross samples. Paired mode
/// requires identical subject_id sequences. Throws ZeroVarianceError,
/// TooFewSamplesError, MismatchedSamplesError.
stats::TestResult significance(const PerformanceSample& match, const PerformanceSample& cross,
                               TestMode mode);

/// Sample standard deviation of training-set organ volumes, the cohort
/// diversity proxy. Throws TooFewSamplesError when n < 2.
double diversity(const std::vector<double>& volumes_ml);

/// One Table-1-shaped cell.
struct GapResult {
  CohortRole test_group = CohortRole::g1;
  std::string organ;
  Metric metric = Metric::dice;
  double delta_p_percent = 0.0;
  double p_value = 1.0;
  bool significant = false;  // p_value < 0.05
  Direction direction = Direction::neutral;
  std::size_t n_subjects = 0;   // pairs that entered the statistics
  std::size_t n_excluded = 0;   // pairs dropped because a side was undefined
  bool zero_variance = false;   // p_value is the documented display value
};

struct DiversityResult {
  CohortRole role = CohortRole::g1;
  std::string subgroup;
  std::string organ;
  double volume_std_ml = 0.0;
  std::size_t n = 0;
};

struct ScatterPoint {
  double volume_std_ml = 0.0;
  double mean_dice = 0.0;
  std::string subgroup;
};

/// One model family's per-case metrics on one test group.
struct PairingStream {
  CohortRole test_group = CohortRole::g1;
  CohortRole trained_on = CohortRole::g1;
  std::string model_id;
  std::vector<CaseMetricsRow> rows;
};

/// Everything aggregate_experiment needs to know beyond the four streams.
struct ExperimentSpec {
  std::string dataset_label;
  std::string g1_name = "g1";
  std::string g2_name = "g2";
  std::vector<std::string> g1_test_ids;
  std::vector<std::string> g2_test_ids;
  std::vector<std::string> organs;  // report row order
  int k_folds = 1;                  // expected rows per subject, organ, stream
  TestMode mode = TestMode::paired;
  std::uint64_t seed = 0;           // recorded in run metadata only
};

struct ExperimentReport {
  std::vector<GapResult> gaps;               // group-major, organ, then metric
  std::vector<DiversityResult> diversity_rows;
  std::vector<ScatterPoint> scatter;
  std::size_t excluded_pairs = 0;            // sum over cells
};

/// Aggregates the four pairing streams into Table-1-shaped gap cells plus
/// diversity and scatter rows.
///
/// Per stream, every expected (subject, organ) must appear exactly k_folds
/// times; anything missing, duplicated, or unexpected raises
/// IncompleteGridError naming the offender. A subject's metric is averaged
/// over the folds where it is defined. Subjects whose matched or cross value
/// is undefined are dropped from both sides of that cell with a count.
///
/// Display policy for guarded statistics, recorded in run metadata: zero
/// variance with equal means reports p = 1 (no effect), zero variance with
/// a nonzero mean difference reports p = 0 (constant effect), and cells
/// with fewer than 2 usable pairs report p = 1.
///
/// Train-volume maps (organ name to per-subject training-set ground-truth
/// volumes) feed the diversity and scatter outputs; pass empty maps to skip
/// those outputs.
ExperimentReport aggregate_experiment(
    const ExperimentSpec& spec, const PairingStream& g1_match, const PairingStream& g1_cross,
    const PairingStream& g2_match, const PairingStream& g2_cross,
    const std::map<std::string, std::vector<double>>& g1_train_volumes,
    const std::map<std::string, std::vector<double>>& g2_train_volumes);

/// Writes gap_table.csv, diversity_table.csv, scatter.csv, and
/// run_metadata.json into out_dir. Byte-identical for identical inputs.
void write_gap_reports(const ExperimentReport& report, const ExperimentSpec& spec,
                       const std::string& out_dir);

}  // namespace popgap
