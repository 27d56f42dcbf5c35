#include "popgap/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "popgap/cohort.hpp"
#include "popgap/csv.hpp"
#include "popgap/errors.hpp"
#include "popgap/metrics.hpp"
#include "popgap/nifti.hpp"
#include "popgap/phantom.hpp"
#include "popgap/rng.hpp"
#include "popgap/stats.hpp"

namespace popgap {
namespace {

namespace fs = std::filesystem;

std::string resolve_against(const std::string& base_file, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_file).parent_path() / path).string();
}

std::map<std::string, const SubjectRecord*> index_registry(
    const std::vector<SubjectRecord>& registry) {
  std::map<std::string, const SubjectRecord*> by_id;
  for (const SubjectRecord& r : registry) by_id[r.subject_id] = &r;
  return by_id;
}

void print_cohort_summary(const Cohort& c, const std::map<std::string, const SubjectRecord*>& by_id,
                          std::ostream& log) {
  std::map<std::string, int> by_sex;
  std::map<int, int> by_decade;
  int unknown_age = 0;
  for (const std::string& id : c.members) {
    const SubjectRecord* r = by_id.at(id);
    ++by_sex[to_string(r->sex)];
    if (r->age_years) ++by_decade[*r->age_years / 10];
    else ++unknown_age;
  }
  log << c.name << " (" << to_string(c.role) << "): " << c.train_ids.size() << " train, "
      << c.test_ids.size() << " test\n";
  log << "  sex:";
  for (const auto& [sex, n] : by_sex) log << ' ' << sex << '=' << n;
  log << "\n  age:";
  for (const auto& [decade, n] : by_decade)
    log << ' ' << decade * 10 << '-' << decade * 10 + 9 << '=' << n;
  if (unknown_age > 0) log << " unknown=" << unknown_age;
  log << '\n';
}

// Registry rows for everyone in the manifest, with gt paths resolved.
struct SubjectFiles {
  std::string id;
  std::string gt_path;
};

std::vector<SubjectFiles> collect_gt_paths(const std::vector<std::string>& ids,
                                           const std::string& registry_path,
                                           const std::map<std::string, const SubjectRecord*>& by_id) {
  std::vector<SubjectFiles> files;
  std::string missing;
  for (const std::string& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end() || it->second->gt_path.empty()) {
      missing += (missing.empty() ? "" : ", ") + id;
      continue;
    }
    files.push_back({id, resolve_against(registry_path, it->second->gt_path)});
  }
  if (!missing.empty())
    throw IncompleteGridError("manifest subjects without a registry gt_path: " + missing);
  return files;
}

// Per-organ foreground counts against the dictionary, single pass.
std::map<std::string, double> organ_volumes_ml(const LabelVolume& vol,
                                               const LabelDictionary& dict) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(dict.max_label()) + 1, 0);
  for (std::uint16_t v : vol.labels) ++counts[v];
  // Same operation order as organ_volume_ml, so all volume outputs agree
  // bitwise.
  const double voxel_mm3 = vol.spacing[0] * vol.spacing[1] * vol.spacing[2];
  std::map<std::string, double> out;
  for (const auto& [label, name] : dict.entries())
    out[name] = static_cast<double>(counts[label]) * voxel_mm3 / 1000.0;
  return out;
}

PerturbationRule parse_rule(const std::string& text) {
  PerturbationRule rule;
  if (text == "none" || text.empty()) {
    rule.magnitude = 0;
    return rule;
  }
  const std::size_t colon = text.find(':');
  const std::string op = text.substr(0, colon);
  if (op == "erode") rule.op = PerturbOp::erode;
  else if (op == "dilate") rule.op = PerturbOp::dilate;
  else if (op == "translate") rule.op = PerturbOp::translate;
  else throw ConfigError("unknown perturbation \"" + text + "\"; use none, erode:N, dilate:N, translate:N");
  if (colon == std::string::npos)
    throw ConfigError("perturbation \"" + text + "\" needs a magnitude, e.g. erode:1");
  try {
    rule.magnitude = std::stoi(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad perturbation magnitude in \"" + text + "\"");
  }
  if (rule.magnitude < 0) throw ConfigError("perturbation magnitude must be non-negative");
  return rule;
}

std::map<std::string, std::vector<double>> read_train_volumes(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  const int c_id = t.column("subject_id");
  const int c_organ = t.column("organ");
  const int c_vol = t.column("gt_volume_ml");
  if (c_id < 0 || c_organ < 0 || c_vol < 0)
    throw MissingColumnError(path + ": need columns subject_id, organ, gt_volume_ml");
  std::map<std::string, std::vector<double>> by_organ;
  for (const auto& row : t.rows)
    by_organ[row[static_cast<std::size_t>(c_organ)]].push_back(
        std::stod(row[static_cast<std::size_t>(c_vol)]));
  return by_organ;
}

std::size_t distinct_models(const std::vector<CaseMetricsRow>& rows) {
  std::set<std::string> models;
  for (const CaseMetricsRow& r : rows) models.insert(r.model_id);
  return models.size();
}

// Random non-empty mask for the selftest: an ellipsoid clipped to the grid,
// optionally sprinkled with isolated voxels.
BinaryMask random_mask(Rng& rng, const Dims3& dims) {
  BinaryMask m;
  m.dims = dims;
  m.voxels.assign(static_cast<std::size_t>(voxel_count(dims)), 0);

  const double cx = rng.uniform(0.0, static_cast<double>(dims[0] - 1));
  const double cy = rng.uniform(0.0, static_cast<double>(dims[1] - 1));
  const double cz = rng.uniform(0.0, static_cast<double>(dims[2] - 1));
  const double ax = rng.uniform(2.0, 9.0);
  const double ay = rng.uniform(2.0, 9.0);
  const double az = rng.uniform(2.0, 9.0);
  std::size_t p = 0;
  for (std::int64_t k = 0; k < dims[2]; ++k)
    for (std::int64_t j = 0; j < dims[1]; ++j)
      for (std::int64_t i = 0; i < dims[0]; ++i, ++p) {
        const double dx = (static_cast<double>(i) - cx) / ax;
        const double dy = (static_cast<double>(j) - cy) / ay;
        const double dz = (static_cast<double>(k) - cz) / az;
        if (dx * dx + dy * dy + dz * dz <= 1.0) m.voxels[p] = 1;
      }

  const std::uint64_t sprinkles = rng.bounded(12);
  for (std::uint64_t s = 0; s < sprinkles; ++s)
    m.voxels[static_cast<std::size_t>(rng.bounded(static_cast<std::uint64_t>(m.voxels.size())))] = 1;

  bool any = false;
  for (std::uint8_t v : m.voxels) any = any || v != 0;
  if (!any) m.voxels[static_cast<std::size_t>(rng.bounded(static_cast<std::uint64_t>(m.voxels.size())))] = 1;
  return m;
}

}  // namespace

CohortOutputs run_cohort(const RunConfig& cfg, std::ostream& log) {
  if (cfg.registry_path.empty())
    throw ConfigError("cohort.registry is required for the cohort command");
  const std::vector<SubjectRecord> registry = load_registry(cfg.registry_path);
  std::vector<SubjectRecord> registry_b;
  auto by_id = index_registry(registry);

  std::pair<Cohort, Cohort> cohorts;
  switch (cfg.experiment) {
    case ExperimentKind::sex:
      cohorts = build_sex_subgroups(registry, cfg.train_size, cfg.test_size, cfg.seed);
      break;
    case ExperimentKind::age:
      cohorts = build_age_subgroups(registry, cfg.age_under, cfg.age_over, cfg.train_size,
                                    cfg.test_size, cfg.seed);
      break;
    case ExperimentKind::cross_dataset:
      if (cfg.registry_b_path.empty())
        throw ConfigError("cohort.registry_b is required for cross_dataset experiments");
      registry_b = load_registry(cfg.registry_b_path);
      for (const SubjectRecord& r : registry_b) {
        if (by_id.count(r.subject_id))
          throw DuplicateSubjectIdError("subject " + r.subject_id +
                                        " appears in both registries");
        by_id[r.subject_id] = &r;
      }
      cohorts = build_matched_cross_dataset(registry, registry_b, cfg.age_bin_years,
                                            cfg.train_size, cfg.test_size, cfg.seed);
      break;
    case ExperimentKind::custom:
      if (cfg.custom_g1.empty() || cfg.custom_g2.empty())
        throw ConfigError("custom experiments need cohort.custom_g1 and cohort.custom_g2");
      cohorts = build_custom_subgroups(registry, cfg.custom_g1_name,
                                       compile_predicate(cfg.custom_g1), cfg.custom_g2_name,
                                       compile_predicate(cfg.custom_g2), cfg.train_size,
                                       cfg.test_size, cfg.seed);
      break;
  }

  CohortOutputs out;
  out.g1 = std::move(cohorts.first);
  out.g2 = std::move(cohorts.second);
  // Fold seeds are derived from the run seed so the two plans differ while
  // the whole run stays a function of one number.
  out.folds_g1 = assign_folds(out.g1, cfg.folds, cfg.seed + 1);
  out.folds_g2 = assign_folds(out.g2, cfg.folds, cfg.seed + 2);

  const std::string dir = cfg.out_dir + "/cohorts";
  fs::create_directories(dir);
  out.g1_manifest_path = dir + "/g1.json";
  out.g2_manifest_path = dir + "/g2.json";
  write_cohort_manifest(out.g1, &out.folds_g1, out.g1_manifest_path);
  write_cohort_manifest(out.g2, &out.folds_g2, out.g2_manifest_path);

  print_cohort_summary(out.g1, by_id, log);
  print_cohort_summary(out.g2, by_id, log);
  log << "manifests: " << out.g1_manifest_path << ", " << out.g2_manifest_path << '\n';
  return out;
}

void run_evaluate(const RunConfig& cfg, const EvaluateOptions& opt, std::ostream& log) {
  if (cfg.registry_path.empty())
    throw ConfigError("cohort.registry is required for the evaluate command");
  if (cfg.labels.size() == 0)
    throw ConfigError("[labels] must define at least one organ");
  const std::vector<SubjectRecord> registry = load_registry(cfg.registry_path);
  const auto by_id = index_registry(registry);
  const auto [cohort, plan] = read_cohort_manifest(opt.manifest_path);

  std::vector<std::string> ids = opt.volumes_only ? cohort.train_ids : cohort.test_ids;
  std::sort(ids.begin(), ids.end());
  const std::vector<SubjectFiles> files = collect_gt_paths(ids, cfg.registry_path, by_id);

  if (opt.volumes_only) {
    std::ofstream out(opt.out_csv, std::ios::trunc);
    if (!out) throw IoError("cannot create " + opt.out_csv);
    out << "subject_id,organ,gt_volume_ml\n";
    for (const SubjectFiles& f : files) {
      std::vector<std::string> warnings;
      const LabelVolume gt = load_label_volume(f.gt_path, cfg.labels, &warnings);
      for (const std::string& w : warnings) log << "warning: " << w << '\n';
      for (const auto& [organ, ml] : organ_volumes_ml(gt, cfg.labels))
        out << csv::escape_field(f.id) << ',' << csv::escape_field(organ) << ','
            << csv::format_double(ml, 6) << '\n';
    }
    if (!out) throw IoError("failed writing " + opt.out_csv);
    log << "wrote training volumes for " << files.size() << " subjects to " << opt.out_csv
        << '\n';
    return;
  }

  if (opt.predictions_dir.empty())
    throw ConfigError("evaluate needs a predictions directory");
  const std::string model_id =
      opt.model_id.empty() ? fs::path(opt.predictions_dir).filename().string() : opt.model_id;

  // Resolve every prediction path first so all missing files are reported
  // together rather than one per run.
  std::vector<std::string> pred_paths(files.size());
  std::string missing;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string stem = opt.predictions_dir + "/" + files[i].id;
    if (fs::exists(stem + ".nii.gz")) pred_paths[i] = stem + ".nii.gz";
    else if (fs::exists(stem + ".nii")) pred_paths[i] = stem + ".nii";
    else missing += (missing.empty() ? "" : ", ") + files[i].id;
  }
  if (!missing.empty())
    throw IncompleteGridError("missing prediction files under " + opt.predictions_dir + ": " +
                              missing);

  std::vector<CaseMetrics> results(files.size());
  std::vector<std::string> problems;
  std::size_t done = 0;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(files.size()); ++i) {
    const auto& f = files[static_cast<std::size_t>(i)];
    try {
      std::vector<std::string> warnings;
      const LabelVolume gt = load_label_volume(f.gt_path, cfg.labels, &warnings);
      const LabelVolume pred =
          load_label_volume(pred_paths[static_cast<std::size_t>(i)], cfg.labels, &warnings);
      const ValidatedPair pair = validate_pair(gt, pred);
      CaseMetrics metrics = evaluate_case(pair, cfg.labels, model_id);
      metrics.subject_id = f.id;
#pragma omp critical
      {
        results[static_cast<std::size_t>(i)] = std::move(metrics);
        for (const std::string& w : warnings) log << "warning: " << w << '\n';
        ++done;
        log << "evaluated " << f.id << " (" << done << "/" << files.size() << ")\n";
      }
    } catch (const std::exception& e) {
#pragma omp critical
      problems.push_back(f.id + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::sort(problems.begin(), problems.end());
    for (const std::string& p : problems) log << "error: " << p << '\n';
    throw Error("evaluation failed for " + std::to_string(problems.size()) + " of " +
                std::to_string(files.size()) + " subjects");
  }

  std::size_t undefined = 0;
  for (const CaseMetrics& c : results)
    for (const auto& [organ, m] : c.per_organ)
      if (m.gt_empty || m.pred_empty) ++undefined;

  if (opt.append && fs::exists(opt.out_csv)) {
    std::ofstream out(opt.out_csv, std::ios::app);
    if (!out) throw IoError("cannot append to " + opt.out_csv);
    write_case_metrics_rows(results, out);
    if (!out) throw IoError("failed appending to " + opt.out_csv);
  } else {
    write_case_metrics_csv(results, opt.out_csv);
  }
  log << "wrote " << files.size() << " cases (" << undefined
      << " organ entries with empty-mask flags) to " << opt.out_csv << '\n';
}

ExperimentReport run_gap(const RunConfig& cfg, const GapOptions& opt, std::ostream& log) {
  if (cfg.labels.size() == 0)
    throw ConfigError("[labels] must define at least one organ");
  const auto [g1, plan1] = read_cohort_manifest(opt.g1_manifest);
  const auto [g2, plan2] = read_cohort_manifest(opt.g2_manifest);

  PairingStream g1_match{CohortRole::g1, CohortRole::g1, "g1_match",
                         read_case_metrics_rows(opt.g1_match_csv)};
  PairingStream g1_cross{CohortRole::g1, CohortRole::g2, "g1_cross",
                         read_case_metrics_rows(opt.g1_cross_csv)};
  PairingStream g2_match{CohortRole::g2, CohortRole::g2, "g2_match",
                         read_case_metrics_rows(opt.g2_match_csv)};
  PairingStream g2_cross{CohortRole::g2, CohortRole::g1, "g2_cross",
                         read_case_metrics_rows(opt.g2_cross_csv)};

  // Expected fold multiplicity = distinct model ids per stream, consistent
  // across streams and with the manifests' fold plans.
  const std::size_t k = distinct_models(g1_match.rows);
  for (const PairingStream* s : {&g1_cross, &g2_match, &g2_cross})
    if (distinct_models(s->rows) != k)
      throw IncompleteGridError("streams disagree on fold count: " + std::to_string(k) +
                                " vs " + std::to_string(distinct_models(s->rows)));
  for (const auto& [name, plan] : {std::pair{"g1", &plan1}, {"g2", &plan2}})
    if (plan->k > 0 && static_cast<std::size_t>(plan->k) != k)
      throw IncompleteGridError(std::string("manifest ") + name + " plans " +
                                std::to_string(plan->k) + " folds but streams carry " +
                                std::to_string(k) + " model(s)");

  ExperimentSpec spec;
  spec.dataset_label = cfg.dataset_label;
  spec.g1_name = g1.name;
  spec.g2_name = g2.name;
  spec.g1_test_ids = g1.test_ids;
  spec.g2_test_ids = g2.test_ids;
  for (const auto& [label, name] : cfg.labels.entries()) spec.organs.push_back(name);
  spec.k_folds = static_cast<int>(k);
  spec.mode = cfg.t_test;
  spec.seed = cfg.seed;

  std::map<std::string, std::vector<double>> vols1, vols2;
  if (opt.g1_train_volumes_csv.empty() != opt.g2_train_volumes_csv.empty())
    throw ConfigError("provide train-volume CSVs for both subgroups or neither");
  if (!opt.g1_train_volumes_csv.empty()) {
    vols1 = read_train_volumes(opt.g1_train_volumes_csv);
    vols2 = read_train_volumes(opt.g2_train_volumes_csv);
  }

  const ExperimentReport report =
      aggregate_experiment(spec, g1_match, g1_cross, g2_match, g2_cross, vols1, vols2);
  write_gap_reports(report, spec, opt.out_dir);

  log << "test_group organ metric delta_p% p_value significant\n";
  for (const GapResult& g : report.gaps) {
    char line[256];
    std::snprintf(line, sizeof line, "%-10s %-12s %-5s %8.2f %10.4g %s\n",
                  (g.test_group == CohortRole::g1 ? spec.g1_name : spec.g2_name).c_str(),
                  g.organ.c_str(), to_string(g.metric), g.delta_p_percent, g.p_value,
                  g.significant ? "yes" : "no");
    log << line;
  }
  log << "excluded undefined pairs: " << report.excluded_pairs << '\n';
  log << "reports in " << opt.out_dir << '\n';
  return report;
}

void run_synth(const RunConfig& cfg, const std::string& out_dir, std::ostream& log) {
  if (cfg.labels.size() == 0)
    throw ConfigError("[labels] must define at least one organ to synthesize");

  SyntheticCohortSpec spec;
  spec.dims = cfg.synth_dims;
  spec.spacing = cfg.synth_spacing;
  spec.seed = cfg.seed;
  spec.matched = parse_rule(cfg.synth_matched);
  spec.cross = parse_rule(cfg.synth_cross);

  spec.g1.name = "A";
  spec.g1.sex = Sex::female;
  spec.g1.age_min = 25;
  spec.g1.age_max = 45;
  spec.g1.n_subjects = cfg.synth_subjects;
  spec.g2.name = "B";
  spec.g2.sex = Sex::male;
  spec.g2.age_min = 75;
  spec.g2.age_max = 90;
  spec.g2.n_subjects = cfg.synth_subjects;

  // Subgroup A carries visibly larger organs with twice the spread, so the
  // diversity proxy orders the subgroups by construction.
  std::size_t index = 0;
  for (const auto& [label, name] : cfg.labels.entries()) {
    const double shrink = static_cast<double>(index);
    OrganSizeModel a;
    a.label = label;
    a.name = name;
    a.mean_semi_axes = {std::max(7.5 - shrink, 3.5), std::max(6.5 - shrink, 3.0),
                        std::max(5.5 - shrink, 2.5)};
    a.std_semi_axes = {1.6, 1.3, 1.0};
    OrganSizeModel b = a;
    for (int axis = 0; axis < 3; ++axis) {
      b.mean_semi_axes[axis] *= 0.85;
      b.std_semi_axes[axis] *= 0.5;
    }
    spec.g1.organs.push_back(a);
    spec.g2.organs.push_back(b);
    ++index;
  }

  synth_cohort(spec, out_dir);
  log << "synthesized " << spec.g1.n_subjects + spec.g2.n_subjects << " subjects, "
      << cfg.labels.size() << " organs, grids " << spec.dims[0] << "x" << spec.dims[1] << "x"
      << spec.dims[2] << " under " << out_dir << '\n';
}

int run_selftest(std::uint64_t seed, int n_cases, std::ostream& log) {
  Rng rng(seed);
  int failures = 0;

  for (int c = 0; c < n_cases; ++c) {
    const Dims3 dims{8 + static_cast<std::int64_t>(rng.bounded(25)),
                     8 + static_cast<std::int64_t>(rng.bounded(25)),
                     8 + static_cast<std::int64_t>(rng.bounded(25))};
    static constexpr double kSpacingChoices[] = {0.5, 0.75, 1.0, 1.25, 1.5, 2.0};
    const Spacing3 sp{kSpacingChoices[rng.bounded(6)], kSpacingChoices[rng.bounded(6)],
                      kSpacingChoices[rng.bounded(6)]};
    const BinaryMask a = random_mask(rng, dims);
    const BinaryMask b = random_mask(rng, dims);

    const auto fast_dice = dice(a, b);
    const double slow_dice = brute_force_dice(a, b);
    if (!fast_dice || *fast_dice != slow_dice) {
      ++failures;
      log << "selftest case " << c << ": dice mismatch\n";
      continue;
    }
    const double fast = hd95(a, b, sp);
    const double slow = brute_force_hd95(a, b, sp);
    if (std::abs(fast - slow) > 1e-9) {
      ++failures;
      log << "selftest case " << c << ": hd95 " << fast << " vs oracle " << slow << '\n';
    }
  }

  // Fixed statistics cross-checks against an external reference computation.
  const std::vector<double> pa{0.01, 0.02, 0.03, 0.00, -0.01};
  const std::vector<double> zero(5, 0.0);
  const auto paired = stats::paired_t_test(pa, zero);
  if (std::abs(paired.t - 1.414213562373095) > 1e-12 ||
      std::abs(paired.p_value - 0.23019964108049873) > 1e-9) {
    ++failures;
    log << "selftest: paired t-test drifted from reference\n";
  }
  const auto welch =
      stats::welch_t_test({0.90, 0.91, 0.92}, {0.80, 0.81, 0.82});
  if (std::abs(welch.t - 12.24744871391591) > 1e-9 ||
      std::abs(welch.p_value - 0.0002552167494419249) > 1e-9) {
    ++failures;
    log << "selftest: Welch t-test drifted from reference\n";
  }
  if (std::abs(stats::sample_std({2, 4, 4, 4, 5, 5, 7, 9}) - 2.138089935299395) > 1e-12) {
    ++failures;
    log << "selftest: sample std drifted from reference\n";
  }

  log << "selftest: " << n_cases << " oracle cases, " << failures << " failure(s)\n";
  return failures;
}

}  // namespace popgap
