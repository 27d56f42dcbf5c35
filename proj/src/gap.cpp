#include "popgap/gap.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "json.hpp"
#include "popgap/csv.hpp"
#include "popgap/errors.hpp"

namespace popgap {
namespace {

std::string format_p(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", p);
  return buf;
}

// Fold-averaged per-subject values of one stream: organ -> subject ->
// (dice, hd95), either side empty when undefined in every fold.
using StreamAverages =
    std::map<std::string, std::map<std::string, std::pair<std::optional<double>, std::optional<double>>>>;

StreamAverages fold_average(const PairingStream& stream,
                            const std::vector<std::string>& expected_ids,
                            const std::vector<std::string>& organs, int k_folds) {
  struct Acc {
    std::vector<double> dice, hd95;
    int rows = 0;
  };
  std::map<std::string, std::map<std::string, Acc>> acc;  // organ -> subject -> acc

  for (const CaseMetricsRow& row : stream.rows) {
    const bool organ_known = std::find(organs.begin(), organs.end(), row.organ) != organs.end();
    const bool subject_known =
        std::find(expected_ids.begin(), expected_ids.end(), row.subject_id) != expected_ids.end();
    if (!organ_known || !subject_known)
      throw IncompleteGridError("stream " + stream.model_id + ": unexpected row for subject " +
                                row.subject_id + ", organ " + row.organ);
    Acc& a = acc[row.organ][row.subject_id];
    ++a.rows;
    if (row.values.dice) a.dice.push_back(*row.values.dice);
    if (row.values.hd95_mm) a.hd95.push_back(*row.values.hd95_mm);
  }

  StreamAverages out;
  for (const std::string& organ : organs) {
    auto& by_subject = out[organ];
    for (const std::string& id : expected_ids) {
      const auto organ_it = acc.find(organ);
      const Acc* a = nullptr;
      if (organ_it != acc.end()) {
        const auto subj_it = organ_it->second.find(id);
        if (subj_it != organ_it->second.end()) a = &subj_it->second;
      }
      const int rows = a ? a->rows : 0;
      if (rows != k_folds)
        throw IncompleteGridError("stream " + stream.model_id + ": subject " + id + ", organ " +
                                  organ + " has " + std::to_string(rows) + " rows, expected " +
                                  std::to_string(k_folds));
      auto& cell = by_subject[id];
      if (!a->dice.empty()) cell.first = stats::mean(a->dice);
      if (!a->hd95.empty()) cell.second = stats::mean(a->hd95);
    }
  }
  return out;
}

struct CellInputs {
  PerformanceSample match;
  PerformanceSample cross;
  std::size_t excluded = 0;
};

CellInputs build_cell(const StreamAverages& match_avg, const StreamAverages& cross_avg,
                      const std::vector<std::string>& subjects, CohortRole group,
                      CohortRole other, const std::string& organ, Metric metric) {
  CellInputs cell;
  for (PerformanceSample* s : {&cell.match, &cell.cross}) {
    s->test_group = group;
    s->organ = organ;
    s->metric = metric;
  }
  cell.match.trained_on = group;
  cell.cross.trained_on = other;

  for (const std::string& id : subjects) {
    const auto& m = match_avg.at(organ).at(id);
    const auto& c = cross_avg.at(organ).at(id);
    const std::optional<double> vm = metric == Metric::dice ? m.first : m.second;
    const std::optional<double> vc = metric == Metric::dice ? c.first : c.second;
    if (vm && vc) {
      cell.match.subject_ids.push_back(id);
      cell.match.values.push_back(*vm);
      cell.cross.subject_ids.push_back(id);
      cell.cross.values.push_back(*vc);
    } else {
      ++cell.excluded;
    }
  }
  if (cell.match.values.empty())
    throw TooFewSamplesError("every subject excluded for test group " +
                             std::string(to_string(group)) + ", organ " + organ + ", metric " +
                             to_string(metric));
  cell.match.mean = stats::mean(cell.match.values);
  cell.cross.mean = stats::mean(cell.cross.values);
  return cell;
}

GapResult solve_cell(const CellInputs& cell, TestMode mode) {
  GapResult r;
  r.test_group = cell.match.test_group;
  r.organ = cell.match.organ;
  r.metric = cell.match.metric;
  r.n_subjects = cell.match.values.size();
  r.n_excluded = cell.excluded;
  r.delta_p_percent = performance_gap(cell.match, cell.cross);
  r.direction = interpret_direction(r.delta_p_percent, r.metric);
  try {
    r.p_value = significance(cell.match, cell.cross, mode).p_value;
  } catch (const ZeroVarianceError&) {
    // Documented display policy: no measured difference is no effect,
    // a constant nonzero difference is a certain effect.
    r.zero_variance = true;
    r.p_value = cell.match.mean == cell.cross.mean ? 1.0 : 0.0;
  } catch (const TooFewSamplesError&) {
    r.p_value = 1.0;
  }
  r.significant = r.p_value < 0.05;
  return r;
}

void append_group(std::vector<GapResult>& gaps, const ExperimentSpec& spec,
                  const PairingStream& match, const PairingStream& cross, CohortRole group,
                  CohortRole other, const std::vector<std::string>& expected_ids,
                  std::size_t& excluded_total) {
  std::vector<std::string> subjects = expected_ids;
  std::sort(subjects.begin(), subjects.end());

  const StreamAverages match_avg = fold_average(match, expected_ids, spec.organs, spec.k_folds);
  const StreamAverages cross_avg = fold_average(cross, expected_ids, spec.organs, spec.k_folds);

  for (const std::string& organ : spec.organs)
    for (Metric metric : {Metric::dice, Metric::hd95}) {
      CellInputs cell =
          build_cell(match_avg, cross_avg, subjects, group, other, organ, metric);
      excluded_total += cell.excluded;
      gaps.push_back(solve_cell(cell, spec.mode));
    }
}

// Match-stream mean dice per organ, the scatter plot's performance axis.
double matched_mean_dice(const StreamAverages& avg, const std::string& organ) {
  std::vector<double> values;
  for (const auto& [id, pair] : avg.at(organ))
    if (pair.first) values.push_back(*pair.first);
  if (values.empty())
    throw TooFewSamplesError("no defined dice values for organ " + organ);
  return stats::mean(values);
}

}  // namespace

const char* to_string(Metric m) { return m == Metric::dice ? "dice" : "hd95"; }
const char* to_string(CohortRole r) { return r == CohortRole::g1 ? "g1" : "g2"; }
const char* to_string(Direction d) {
  switch (d) {
    case Direction::worse_off_distribution: return "worse_off_distribution";
    case Direction::better_off_distribution: return "better_off_distribution";
    default: return "neutral";
  }
}
const char* to_string(TestMode m) { return m == TestMode::paired ? "paired" : "welch"; }

double performance_gap(const PerformanceSample& match, const PerformanceSample& cross) {
  if (match.test_group != cross.test_group || match.organ != cross.organ ||
      match.metric != cross.metric)
    throw MismatchedSamplesError("match and cross samples describe different cells");
  if (match.trained_on != match.test_group || cross.trained_on == cross.test_group)
    throw MismatchedSamplesError("pairing roles are swapped or duplicated");
  if (match.values.empty() || cross.values.empty())
    throw MismatchedSamplesError("performance samples must be non-empty");

  if (match.mean == cross.mean) return 0.0;
  const double denom = 0.5 * (match.mean + cross.mean);
  if (denom == 0.0)
    throw DegenerateDenominatorError("mean performances cancel: " + std::to_string(match.mean) +
                                     " and " + std::to_string(cross.mean));
  return (cross.mean - match.mean) / denom * 100.0;
}

Direction interpret_direction(double delta_p_percent, Metric metric) {
  if (delta_p_percent == 0.0) return Direction::neutral;
  const bool worse =
      metric == Metric::dice ? delta_p_percent < 0.0 : delta_p_percent > 0.0;
  return worse ? Direction::worse_off_distribution : Direction::better_off_distribution;
}

stats::TestResult significance(const PerformanceSample& match, const PerformanceSample& cross,
                               TestMode mode) {
  if (mode == TestMode::paired) {
    if (match.subject_ids != cross.subject_ids)
      throw MismatchedSamplesError("paired test requires identical subject order");
    return stats::paired_t_test(match.values, cross.values);
  }
  return stats::welch_t_test(match.values, cross.values);
}

double diversity(const std::vector<double>& volumes_ml) { return stats::sample_std(volumes_ml); }

ExperimentReport aggregate_experiment(
    const ExperimentSpec& spec, const PairingStream& g1_match, const PairingStream& g1_cross,
    const PairingStream& g2_match, const PairingStream& g2_cross,
    const std::map<std::string, std::vector<double>>& g1_train_volumes,
    const std::map<std::string, std::vector<double>>& g2_train_volumes) {
  ExperimentReport report;
  append_group(report.gaps, spec, g1_match, g1_cross, CohortRole::g1, CohortRole::g2,
               spec.g1_test_ids, report.excluded_pairs);
  append_group(report.gaps, spec, g2_match, g2_cross, CohortRole::g2, CohortRole::g1,
               spec.g2_test_ids, report.excluded_pairs);

  if (g1_train_volumes.empty() && g2_train_volumes.empty()) return report;

  struct GroupRefs {
    CohortRole role;
    const std::string* name;
    const std::map<std::string, std::vector<double>>* volumes;
    const PairingStream* match;
    const std::vector<std::string>* ids;
  };
  const GroupRefs groups[2] = {
      {CohortRole::g1, &spec.g1_name, &g1_train_volumes, &g1_match, &spec.g1_test_ids},
      {CohortRole::g2, &spec.g2_name, &g2_train_volumes, &g2_match, &spec.g2_test_ids}};

  for (const GroupRefs& g : groups) {
    const StreamAverages avg = fold_average(*g.match, *g.ids, spec.organs, spec.k_folds);
    for (const std::string& organ : spec.organs) {
      const auto it = g.volumes->find(organ);
      if (it == g.volumes->end())
        throw IncompleteGridError("no training volumes for organ " + organ + " in subgroup " +
                                  *g.name);
      DiversityResult d;
      d.role = g.role;
      d.subgroup = *g.name;
      d.organ = organ;
      d.volume_std_ml = diversity(it->second);
      d.n = it->second.size();
      report.diversity_rows.push_back(d);
      report.scatter.push_back({d.volume_std_ml, matched_mean_dice(avg, organ), *g.name});
    }
  }
  return report;
}

void write_gap_reports(const ExperimentReport& report, const ExperimentSpec& spec,
                       const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto group_name = [&spec](CohortRole r) {
    return r == CohortRole::g1 ? spec.g1_name : spec.g2_name;
  };

  {
    std::ofstream out(out_dir + "/gap_table.csv", std::ios::trunc);
    if (!out) throw IoError("cannot create gap_table.csv in " + out_dir);
    out << "dataset,organ,metric,test_group,delta_p_percent,p_value,significant,direction\n";
    for (const GapResult& g : report.gaps)
      out << csv::escape_field(spec.dataset_label) << ',' << csv::escape_field(g.organ) << ','
          << to_string(g.metric) << ',' << csv::escape_field(group_name(g.test_group)) << ','
          << csv::format_double(g.delta_p_percent, 2) << ',' << format_p(g.p_value) << ','
          << (g.significant ? "true" : "false") << ',' << to_string(g.direction) << '\n';
  }

  {
    std::ofstream out(out_dir + "/diversity_table.csv", std::ios::trunc);
    if (!out) throw IoError("cannot create diversity_table.csv in " + out_dir);
    out << "subgroup,organ,volume_std_ml,n\n";
    for (const DiversityResult& d : report.diversity_rows)
      out << csv::escape_field(d.subgroup) << ',' << csv::escape_field(d.organ) << ','
          << csv::format_double(d.volume_std_ml, 3) << ',' << d.n << '\n';
  }

  {
    std::ofstream out(out_dir + "/scatter.csv", std::ios::trunc);
    if (!out) throw IoError("cannot create scatter.csv in " + out_dir);
    out << "volume_std_ml,mean_dice,subgroup\n";
    for (const ScatterPoint& s : report.scatter)
      out << csv::format_double(s.volume_std_ml, 3) << ',' << csv::format_double(s.mean_dice, 6)
          << ',' << csv::escape_field(s.subgroup) << '\n';
  }

  nlohmann::ordered_json meta;
  meta["dataset"] = spec.dataset_label;
  meta["seed"] = spec.seed;
  meta["subgroups"] = {{"g1", spec.g1_name}, {"g2", spec.g2_name}};
  meta["k_folds"] = spec.k_folds;
  meta["t_test_mode"] = to_string(spec.mode);
  meta["delta_p_definition"] =
      "(mean_cross - mean_match) / (0.5 * (mean_match + mean_cross)) * 100";
  meta["percentile_rule"] =
      "nearest-rank ceil(0.95*n), symmetric max of the two directed percentiles";
  meta["surface_convention"] =
      "6-connectivity boundary voxels, point = voxel index * spacing, distances in mm";
  meta["std_denominator"] = "n-1";
  meta["significance_threshold"] = 0.05;
  meta["zero_variance_policy"] =
      "p=1 when the mean difference is 0, p=0 when a constant nonzero difference remains";
  meta["small_sample_policy"] = "p=1 when fewer than 2 usable pairs remain";
  meta["undefined_policy"] = "undefined metrics are dropped pairwise per cell, with counts";
  meta["excluded_pairs"] = report.excluded_pairs;

  std::ofstream out(out_dir + "/run_metadata.json", std::ios::trunc);
  if (!out) throw IoError("cannot create run_metadata.json in " + out_dir);
  out << meta.dump(2) << '\n';
}

}  // namespace popgap
