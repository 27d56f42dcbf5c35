// Acceptance gate: one self-contained check per shipped guarantee. Each
// criterion prints exactly one [PASS]/[FAIL] line with a short factual
// detail; the exit code is the number of failures. Run all checks with no
// arguments or a single one with --only N.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "popgap/cohort.hpp"
#include "popgap/config.hpp"
#include "popgap/errors.hpp"
#include "popgap/gap.hpp"
#include "popgap/metrics.hpp"
#include "popgap/phantom.hpp"
#include "popgap/pipeline.hpp"
#include "popgap/rng.hpp"
#include "popgap/stats.hpp"
#include "popgap/volume.hpp"
#include "tdist_oracle.hpp"

using namespace popgap;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

fs::path scratch_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() /
                     ("popgap_acceptance_" + std::to_string(::getpid())) / tag;
  std::error_code ec;
  fs::remove_all(p, ec);
  fs::create_directories(p);
  return p;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Random blob on a small grid: a clipped ellipsoid plus a few sprinkled
// voxels, never empty.
BinaryMask random_mask(Rng& rng, const Dims3& dims) {
  BinaryMask m;
  m.dims = dims;
  m.voxels.assign(static_cast<std::size_t>(voxel_count(dims)), 0);
  const double c[3] = {rng.uniform(2.0, static_cast<double>(dims[0] - 3)),
                       rng.uniform(2.0, static_cast<double>(dims[1] - 3)),
                       rng.uniform(2.0, static_cast<double>(dims[2] - 3))};
  const double ax[3] = {rng.uniform(1.5, 6.0), rng.uniform(1.5, 6.0), rng.uniform(1.5, 6.0)};
  std::size_t p = 0;
  for (std::int64_t z = 0; z < dims[2]; ++z)
    for (std::int64_t y = 0; y < dims[1]; ++y)
      for (std::int64_t x = 0; x < dims[0]; ++x, ++p) {
        const double dx = (x - c[0]) / ax[0], dy = (y - c[1]) / ax[1], dz = (z - c[2]) / ax[2];
        if (dx * dx + dy * dy + dz * dz <= 1.0) m.voxels[p] = 1;
      }
  const std::size_t extra = rng.bounded(8);
  for (std::size_t i = 0; i < extra; ++i)
    m.voxels[rng.bounded(static_cast<std::uint64_t>(m.voxels.size()))] = 1;
  bool any = false;
  for (auto v : m.voxels)
    if (v) { any = true; break; }
  if (!any) m.voxels[m.voxels.size() / 2] = 1;
  return m;
}

// ---------------------------------------------------------------------------
// 1. Metric oracle equivalence: 200 randomized pairs on grids up to 32^3,
//    dice bitwise against set arithmetic, hd95 within 1e-9 mm of the
//    quadratic oracle, all inside 60 s.

Outcome criterion_metric_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream log;
  const int failures = run_selftest(0xACCE5501, 200, log);
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = failures == 0 && elapsed < 60.0;
  o.detail = fmt("200 randomized pairs, %d mismatches, %.2f s (budget 60 s)", failures, elapsed);
  if (failures > 0) {
    std::string first = log.str();
    if (const auto nl = first.find('\n'); nl != std::string::npos) first.resize(nl);
    o.detail += "; first: " + first;
  }
  return o;
}

// ---------------------------------------------------------------------------
// 2. Spacing covariance: scaling spacing by s scales hd95 by s and volumes
//    by s^3 while dice is unchanged. Factors 0.5 and 2 are powers of two,
//    so every rounding step commutes with the scaling and the comparison is
//    bitwise. Factor 3 hits one extra rounding at the final square root and
//    at the microliter-to-milliliter division, so those two comparisons use
//    a 2e-15 relative bound (a few ulp); dice stays bitwise for all three.

Outcome criterion_spacing_covariance() {
  const double kRel3 = 2e-15;
  Rng rng(0xACCE5502);
  const double spacing_choices[6] = {0.5, 0.75, 1.0, 1.25, 1.5, 2.0};
  const LabelDictionary dict({{1, "organ"}});
  int checked = 0;
  double worst_rel3 = 0.0;

  for (int rep = 0; rep < 20; ++rep) {
    const Dims3 dims{8 + static_cast<std::int64_t>(rng.bounded(25)),
                     8 + static_cast<std::int64_t>(rng.bounded(25)),
                     8 + static_cast<std::int64_t>(rng.bounded(25))};
    Spacing3 base;
    for (int a = 0; a < 3; ++a) base[a] = spacing_choices[rng.bounded(6)];

    LabelVolume gt, pred;
    gt.subject_id = pred.subject_id = "s";
    gt.dims = pred.dims = dims;
    gt.spacing = pred.spacing = base;
    gt.labels.assign(static_cast<std::size_t>(voxel_count(dims)), 0);
    pred.labels = gt.labels;
    const BinaryMask ma = random_mask(rng, dims);
    const BinaryMask mb = random_mask(rng, dims);
    for (std::size_t p = 0; p < ma.voxels.size(); ++p) {
      if (ma.voxels[p]) gt.labels[p] = 1;
      if (mb.voxels[p]) pred.labels[p] = 1;
    }

    const OrganMetrics ref = evaluate_case(validate_pair(gt, pred), dict, "m").per_organ.at("organ");

    for (const double s : {0.5, 2.0, 3.0}) {
      LabelVolume gs = gt, ps = pred;
      for (int a = 0; a < 3; ++a) {
        gs.spacing[a] = base[a] * s;
        ps.spacing[a] = gs.spacing[a];
      }
      const OrganMetrics got =
          evaluate_case(validate_pair(gs, ps), dict, "m").per_organ.at("organ");
      ++checked;

      if (got.dice != ref.dice)
        return {false, fmt("dice changed under factor %g on pair %d", s, rep)};

      const double cube = s * s * s;
      const auto close3 = [&](double a, double b) {
        const double scale = std::max(std::abs(a), std::abs(b));
        const double rel = scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
        worst_rel3 = std::max(worst_rel3, rel);
        return rel <= kRel3;
      };
      if (s == 3.0) {
        if (!close3(*got.hd95_mm, s * *ref.hd95_mm))
          return {false, fmt("hd95 factor 3 off by more than %g relative on pair %d", kRel3, rep)};
        if (!close3(got.gt_volume_ml, cube * ref.gt_volume_ml) ||
            !close3(got.pred_volume_ml, cube * ref.pred_volume_ml))
          return {false, fmt("volume factor 27 off by more than %g relative on pair %d", kRel3, rep)};
      } else {
        if (*got.hd95_mm != s * *ref.hd95_mm)
          return {false, fmt("hd95 not bitwise s-scaled for factor %g on pair %d", s, rep)};
        if (got.gt_volume_ml != cube * ref.gt_volume_ml ||
            got.pred_volume_ml != cube * ref.pred_volume_ml)
          return {false, fmt("volume not bitwise s^3-scaled for factor %g on pair %d", s, rep)};
      }
    }
  }
  return {true, fmt("%d scaled evaluations: factors 0.5 and 2 bitwise, factor 3 within %.2g "
                    "relative (worst %.2g, final-rounding limit of binary64); dice bitwise "
                    "throughout",
                    checked, kRel3, worst_rel3)};
}

// ---------------------------------------------------------------------------
// 3. Cross-check against the published study values: recomputing the gap
//    statistic from the published rounded per-cell mean Dice pairs must
//    reproduce the published gap's sign wherever its magnitude exceeds
//    1.5%, and the ts-sex male kidney gaps within 1.5 percentage points.

struct PublishedCell {
  const char* block;   // experiment block
  const char* organ;
  CohortRole group;    // test group within the block
  double mean_match;   // published rounded mean dice, matched training
  double mean_cross;   // published rounded mean dice, cross training
  double published_gap;  // published gap statistic, percent
};

// Rounded per-cell mean Dice (matched, cross) and the corresponding
// published gap percentages from the reference study's result tables.
const PublishedCell kPublishedCells[] = {
    {"ts_sex", "right_kidney", CohortRole::g1, 0.93, 0.96, 3.57},
    {"ts_sex", "right_kidney", CohortRole::g2, 0.95, 0.89, -5.94},
    {"ts_sex", "left_kidney", CohortRole::g1, 0.92, 0.95, 2.45},
    {"ts_sex", "left_kidney", CohortRole::g2, 0.96, 0.90, -6.17},
    {"ts_sex", "liver", CohortRole::g1, 0.96, 0.97, 1.61},
    {"ts_sex", "liver", CohortRole::g2, 0.97, 0.97, -0.67},
    {"ts_sex", "pancreas", CohortRole::g1, 0.82, 0.86, 4.15},
    {"ts_sex", "pancreas", CohortRole::g2, 0.90, 0.87, -2.79},

    {"amos_sex", "right_kidney", CohortRole::g1, 0.96, 0.96, 0.27},
    {"amos_sex", "right_kidney", CohortRole::g2, 0.96, 0.96, -0.11},
    {"amos_sex", "left_kidney", CohortRole::g1, 0.96, 0.97, 1.25},
    {"amos_sex", "left_kidney", CohortRole::g2, 0.94, 0.95, -0.42},
    {"amos_sex", "liver", CohortRole::g1, 0.97, 0.94, -2.63},
    {"amos_sex", "liver", CohortRole::g2, 0.97, 0.97, -0.23},
    {"amos_sex", "pancreas", CohortRole::g1, 0.86, 0.88, 1.40},
    {"amos_sex", "pancreas", CohortRole::g2, 0.87, 0.86, -1.64},

    {"ts_age", "right_kidney", CohortRole::g1, 0.95, 0.94, -0.38},
    {"ts_age", "right_kidney", CohortRole::g2, 0.95, 0.95, 0.19},
    {"ts_age", "left_kidney", CohortRole::g1, 0.96, 0.97, 1.65},
    {"ts_age", "left_kidney", CohortRole::g2, 0.93, 0.91, -1.67},
    {"ts_age", "liver", CohortRole::g1, 0.98, 0.97, -0.87},
    {"ts_age", "liver", CohortRole::g2, 0.97, 0.98, 0.18},
    {"ts_age", "pancreas", CohortRole::g1, 0.89, 0.90, 1.11},
    {"ts_age", "pancreas", CohortRole::g2, 0.86, 0.89, 3.10},

    {"amos_age", "right_kidney", CohortRole::g1, 0.97, 0.96, 0.48},
    {"amos_age", "right_kidney", CohortRole::g2, 0.96, 0.96, -0.23},
    {"amos_age", "left_kidney", CohortRole::g1, 0.97, 0.97, 1.04},
    {"amos_age", "left_kidney", CohortRole::g2, 0.94, 0.94, -0.25},
    {"amos_age", "liver", CohortRole::g1, 0.96, 0.97, -0.72},
    {"amos_age", "liver", CohortRole::g2, 0.96, 0.96, -0.67},
    {"amos_age", "pancreas", CohortRole::g1, 0.89, 0.89, 0.44},
    {"amos_age", "pancreas", CohortRole::g2, 0.82, 0.84, -1.99},

    {"cross_dataset", "right_kidney", CohortRole::g1, 0.96, 0.96, 0.46},
    {"cross_dataset", "right_kidney", CohortRole::g2, 0.92, 0.91, -1.12},
    {"cross_dataset", "left_kidney", CohortRole::g1, 0.96, 0.93, -3.57},
    {"cross_dataset", "left_kidney", CohortRole::g2, 0.93, 0.90, -3.90},
    {"cross_dataset", "liver", CohortRole::g1, 0.95, 0.96, 0.41},
    {"cross_dataset", "liver", CohortRole::g2, 0.98, 0.93, -4.66},
    {"cross_dataset", "pancreas", CohortRole::g1, 0.84, 0.85, 0.24},
    {"cross_dataset", "pancreas", CohortRole::g2, 0.87, 0.78, -10.7},
};

Outcome criterion_published_cross_check() {
  int qualifying = 0, sign_matches = 0;
  std::string conflicts;

  const auto one_mean_sample = [](CohortRole tg, CohortRole tr, const char* organ, double mean) {
    PerformanceSample s;
    s.test_group = tg;
    s.trained_on = tr;
    s.organ = organ;
    s.metric = Metric::dice;
    s.subject_ids = {"cell_mean"};
    s.values = {mean};
    s.mean = mean;
    return s;
  };

  double ts_male_rk = 0.0, ts_male_lk = 0.0;
  for (const PublishedCell& cell : kPublishedCells) {
    const CohortRole other = cell.group == CohortRole::g1 ? CohortRole::g2 : CohortRole::g1;
    const double gap =
        performance_gap(one_mean_sample(cell.group, cell.group, cell.organ, cell.mean_match),
                        one_mean_sample(cell.group, other, cell.organ, cell.mean_cross));

    if (std::string(cell.block) == "ts_sex" && cell.group == CohortRole::g2) {
      if (std::string(cell.organ) == "right_kidney") ts_male_rk = gap;
      if (std::string(cell.organ) == "left_kidney") ts_male_lk = gap;
    }

    if (std::abs(cell.published_gap) <= 1.5) continue;
    ++qualifying;
    const bool same_sign = (gap > 0.0) == (cell.published_gap > 0.0) && gap != 0.0;
    if (same_sign) {
      ++sign_matches;
    } else {
      conflicts += fmt("%s %s %s: published %+.2f, recomputed %+.2f; ", cell.block, cell.organ,
                       to_string(cell.group), cell.published_gap, gap);
    }
  }

  const double rk_err = std::abs(ts_male_rk - (-5.94));
  const double lk_err = std::abs(ts_male_lk - (-6.17));
  const bool kidneys_ok = rk_err <= 1.5 && lk_err <= 1.5;

  Outcome o;
  o.pass = sign_matches == qualifying && kidneys_ok;
  o.detail = fmt("%d/%d qualifying cells match sign; ts-sex male kidney gaps %+.2f/%+.2f "
                 "(published -5.94/-6.17, deviations %.2f/%.2f pp, bound 1.5)",
                 sign_matches, qualifying, ts_male_rk, ts_male_lk, rk_err, lk_err);
  if (!conflicts.empty()) {
    o.detail += "; conflicts: " + conflicts;
    if (conflicts.find("amos_age pancreas g2") != std::string::npos)
      o.detail += "for amos_age pancreas g2 the published rounded means 0.82/0.84 bound the "
                  "recomputed gap to [+1.20, +3.61], so no means consistent with the published "
                  "per-cell table can reproduce the published negative sign there";
  }
  return o;
}

// ---------------------------------------------------------------------------
// Shared synthetic pipeline for criteria 4 and 5: generate a cohort, build
// sex subgroups, evaluate the four pairing streams plus train volumes, and
// aggregate. Returns the report plus the four CSV paths.

struct SynthRun {
  ExperimentReport report;
  std::string g1_match, g1_cross, g2_match, g2_cross;
};

SynthRun run_synthetic_pipeline(const fs::path& dir, const std::string& cross_rule,
                                std::ostream& log) {
  RunConfig cfg;
  cfg.out_dir = (dir / "run").string();
  cfg.dataset_label = "synthetic";
  cfg.seed = 71;
  cfg.seed_set = true;
  cfg.labels = LabelDictionary({{1, "organ_a"}, {2, "organ_b"}});
  cfg.experiment = ExperimentKind::sex;
  cfg.registry_path = (dir / "data/registry.csv").string();
  cfg.train_size = 10;
  cfg.test_size = 10;
  cfg.synth_dims = {48, 48, 48};
  cfg.synth_spacing = {1.0, 1.25, 1.5};
  cfg.synth_subjects = 20;
  cfg.synth_matched = "none";
  cfg.synth_cross = cross_rule;

  run_synth(cfg, (dir / "data").string(), log);
  const CohortOutputs cohorts = run_cohort(cfg, log);

  SynthRun out;
  out.g1_match = (dir / "run/g1_match.csv").string();
  out.g1_cross = (dir / "run/g1_cross.csv").string();
  out.g2_match = (dir / "run/g2_match.csv").string();
  out.g2_cross = (dir / "run/g2_cross.csv").string();

  const auto eval = [&](const std::string& manifest, const char* model, const std::string& csv) {
    EvaluateOptions opt;
    opt.manifest_path = manifest;
    opt.predictions_dir = (dir / "data/pred" / model).string();
    opt.out_csv = csv;
    run_evaluate(cfg, opt, log);
  };
  eval(cohorts.g1_manifest_path, "S_g1", out.g1_match);
  eval(cohorts.g1_manifest_path, "S_g2", out.g1_cross);
  eval(cohorts.g2_manifest_path, "S_g2", out.g2_match);
  eval(cohorts.g2_manifest_path, "S_g1", out.g2_cross);

  EvaluateOptions tv1, tv2;
  tv1.manifest_path = cohorts.g1_manifest_path;
  tv1.volumes_only = true;
  tv1.out_csv = (dir / "run/g1_train_volumes.csv").string();
  run_evaluate(cfg, tv1, log);
  tv2.manifest_path = cohorts.g2_manifest_path;
  tv2.volumes_only = true;
  tv2.out_csv = (dir / "run/g2_train_volumes.csv").string();
  run_evaluate(cfg, tv2, log);

  GapOptions gap;
  gap.g1_manifest = cohorts.g1_manifest_path;
  gap.g2_manifest = cohorts.g2_manifest_path;
  gap.g1_match_csv = out.g1_match;
  gap.g1_cross_csv = out.g1_cross;
  gap.g2_match_csv = out.g2_match;
  gap.g2_cross_csv = out.g2_cross;
  gap.g1_train_volumes_csv = tv1.out_csv;
  gap.g2_train_volumes_csv = tv2.out_csv;
  gap.out_dir = (dir / "run/report").string();
  out.report = run_gap(cfg, gap, log);
  return out;
}

// Deliberately plain recomputation of the gap table from the four CSVs:
// hand-split lines, column lookup by header name, arithmetic straight from
// the definitions. Shares no code with the library.
std::map<std::string, double> straight_line_gaps(const std::string& match_csv,
                                                 const std::string& cross_csv) {
  const auto split = [](const std::string& line) {
    std::vector<std::string> f;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    f.push_back(cur);
    return f;
  };

  // organ -> (sum_dice, sum_hd95, n)
  struct Sums {
    double dice = 0.0, hd = 0.0;
    int n = 0;
  };
  const auto accumulate = [&](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::getline(in, line);
    const auto header = split(line);
    int c_organ = -1, c_dice = -1, c_hd = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == "organ") c_organ = static_cast<int>(i);
      if (header[i] == "dice") c_dice = static_cast<int>(i);
      if (header[i] == "hd95_mm") c_hd = static_cast<int>(i);
    }
    std::map<std::string, Sums> by_organ;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split(line);
      Sums& s = by_organ[f[static_cast<std::size_t>(c_organ)]];
      s.dice += std::stod(f[static_cast<std::size_t>(c_dice)]);
      s.hd += std::stod(f[static_cast<std::size_t>(c_hd)]);
      s.n += 1;
    }
    return by_organ;
  };

  const auto match = accumulate(match_csv);
  const auto cross = accumulate(cross_csv);
  std::map<std::string, double> gaps;  // "organ/metric" -> percent
  for (const auto& [organ, m] : match) {
    const Sums& c = cross.at(organ);
    const double md = m.dice / m.n, cd = c.dice / c.n;
    const double mh = m.hd / m.n, ch = c.hd / c.n;
    gaps[organ + "/dice"] = md == cd ? 0.0 : (cd - md) / (0.5 * (md + cd)) * 100.0;
    gaps[organ + "/hd95"] = mh == ch ? 0.0 : (ch - mh) / (0.5 * (mh + ch)) * 100.0;
  }
  return gaps;
}

// 4. End-to-end synthetic reproduction: eroded cross predictions must
//    produce negative dice gaps and positive hd95 gaps for every organ,
//    each significant under the paired test, and the gap values must match
//    an independent straight-line recomputation within 0.1 pp.

Outcome criterion_synthetic_end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = scratch_dir("synthetic");
  std::ostringstream log;
  const SynthRun run = run_synthetic_pipeline(dir, "erode:1", log);

  if (run.report.gaps.size() != 8)
    return {false, fmt("expected 8 gap cells, got %zu", run.report.gaps.size())};

  double worst_p = 0.0;
  for (const GapResult& g : run.report.gaps) {
    const bool direction_ok =
        g.metric == Metric::dice ? g.delta_p_percent < 0.0 : g.delta_p_percent > 0.0;
    if (!direction_ok)
      return {false, fmt("%s %s gap %+0.2f has the wrong sign", g.organ.c_str(),
                         to_string(g.metric), g.delta_p_percent)};
    worst_p = std::max(worst_p, g.p_value);
    if (!(g.p_value < 0.05) || !g.significant)
      return {false, fmt("%s %s p=%g is not significant", g.organ.c_str(), to_string(g.metric),
                         g.p_value)};
  }

  const auto g1_gaps = straight_line_gaps(run.g1_match, run.g1_cross);
  const auto g2_gaps = straight_line_gaps(run.g2_match, run.g2_cross);
  double worst_dev = 0.0;
  for (const GapResult& g : run.report.gaps) {
    const auto& table = g.test_group == CohortRole::g1 ? g1_gaps : g2_gaps;
    const double independent = table.at(g.organ + "/" + to_string(g.metric));
    worst_dev = std::max(worst_dev, std::abs(independent - g.delta_p_percent));
  }
  const double elapsed = seconds_since(t0);

  Outcome o;
  o.pass = worst_dev <= 0.1 && elapsed < 300.0;
  o.detail = fmt("8/8 cells: dice gaps negative, hd95 gaps positive, all paired p < 0.05 "
                 "(worst %.2g); straight-line recomputation deviates %.2g pp (bound 0.1); "
                 "%.1f s (budget 300 s)",
                 worst_p, worst_dev, elapsed);
  std::error_code ec;
  fs::remove_all(dir, ec);
  return o;
}

// 5. Null-effect control: with no perturbation anywhere, every gap is
//    exactly zero and nothing is significant.

Outcome criterion_null_effect() {
  const fs::path dir = scratch_dir("null");
  std::ostringstream log;
  const SynthRun run = run_synthetic_pipeline(dir, "none", log);

  for (const GapResult& g : run.report.gaps) {
    if (g.delta_p_percent != 0.0)
      return {false, fmt("%s %s gap is %+g, expected exactly 0", g.organ.c_str(),
                         to_string(g.metric), g.delta_p_percent)};
    if (g.significant)
      return {false, fmt("%s %s flagged significant on identical predictions", g.organ.c_str(),
                         to_string(g.metric))};
    if (g.direction != Direction::neutral)
      return {false, fmt("%s %s direction is not neutral", g.organ.c_str(), to_string(g.metric))};
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  return {true, fmt("%zu cells, every gap exactly 0.0, none significant", run.report.gaps.size())};
}

// ---------------------------------------------------------------------------
// 6. Statistics oracle: p-values match an independent t-distribution
//    evaluation to 1e-6 on 50 random fixtures; degenerate inputs raise
//    their dedicated errors.

Outcome criterion_statistics_oracle() {
  Rng rng(0xACCE5506);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 3 + rng.bounded(18);
    std::vector<double> a(n), b(n);
    for (std::size_t j = 0; j < n; ++j) {
      a[j] = rng.normal(0.85, 0.06);
      b[j] = rng.normal(0.82, 0.08);
    }
    const auto p = stats::paired_t_test(a, b);
    worst = std::max(worst, std::abs(p.p_value - tref::t_two_sided_p(p.t, p.df)));
    const auto w = stats::welch_t_test(a, b);
    worst = std::max(worst, std::abs(w.p_value - tref::t_two_sided_p(w.t, w.df)));
    if (worst > 1e-6) return {false, fmt("p-value deviates %.2g from reference on fixture %d", worst, i)};
  }

  try {
    stats::paired_t_test({1.0, 2.0, 3.0}, {0.5, 1.5, 2.5});
    return {false, "constant paired difference did not raise the zero-variance error"};
  } catch (const ZeroVarianceError&) {
  }
  try {
    stats::welch_t_test({2.0, 2.0}, {5.0, 5.0});
    return {false, "two zero-variance samples did not raise the zero-variance error"};
  } catch (const ZeroVarianceError&) {
  }
  try {
    stats::paired_t_test({1.0}, {2.0});
    return {false, "n=1 paired input did not raise the small-sample error"};
  } catch (const TooFewSamplesError&) {
  }
  try {
    stats::welch_t_test({1.0}, {1.0, 2.0});
    return {false, "n=1 Welch input did not raise the small-sample error"};
  } catch (const TooFewSamplesError&) {
  }
  return {true, fmt("100 p-values within %.2g of the independent reference (bound 1e-6); all "
                    "four guards raised their errors",
                    worst)};
}

// ---------------------------------------------------------------------------
// 7. Cohort invariants over 1000 randomized registries: sampling without
//    replacement, equal train sizes, strict age-boundary exclusion, exactly
//    equal matched stratum histograms, and byte-identical manifests.

Outcome criterion_cohort_invariants() {
  const fs::path dir = scratch_dir("cohorts");
  Rng rng(0xACCE5507);

  const auto record = [](std::string id, Sex sex, std::optional<int> age, std::string dataset) {
    SubjectRecord r;
    r.subject_id = std::move(id);
    r.sex = sex;
    r.age_years = age;
    r.dataset = std::move(dataset);
    return r;
  };
  const auto check_no_replacement = [](const Cohort& c, int train, int test) -> const char* {
    if (c.train_ids.size() != static_cast<std::size_t>(train)) return "train size off";
    if (c.test_ids.size() != static_cast<std::size_t>(test)) return "test size off";
    std::set<std::string> seen(c.members.begin(), c.members.end());
    if (seen.size() != c.members.size()) return "duplicate member";
    if (c.members.size() != static_cast<std::size_t>(train + test)) return "member count off";
    return nullptr;
  };
  const auto manifest_bytes = [&dir](const Cohort& c, const char* name) {
    const std::string path = (dir / name).string();
    write_cohort_manifest(c, nullptr, path);
    return slurp(path);
  };

  for (int iter = 0; iter < 1000; ++iter) {
    const int train = 3 + iter % 4;
    const int test = 2 + (iter / 4) % 3;
    const std::uint64_t seed = 50000 + static_cast<std::uint64_t>(iter);

    // Age experiment fixture: pools sized to fit, plus subjects at exactly
    // the boundary ages, inside the excluded band, and with unknown age.
    std::vector<SubjectRecord> reg;
    const int n_young = train + test + static_cast<int>(rng.bounded(4));
    const int n_old = train + test + static_cast<int>(rng.bounded(4));
    for (int i = 0; i < n_young; ++i)
      reg.push_back(record(fmt("y%03d", i), i % 2 ? Sex::female : Sex::male,
                           20 + static_cast<int>(rng.bounded(30)), "ds"));
    for (int i = 0; i < n_old; ++i)
      reg.push_back(record(fmt("o%03d", i), i % 2 ? Sex::female : Sex::male,
                           71 + static_cast<int>(rng.bounded(25)), "ds"));
    reg.push_back(record("boundary50_a", Sex::female, 50, "ds"));
    reg.push_back(record("boundary50_b", Sex::male, 50, "ds"));
    reg.push_back(record("boundary70_a", Sex::female, 70, "ds"));
    reg.push_back(record("boundary70_b", Sex::male, 70, "ds"));
    reg.push_back(record("midband", Sex::female, 55 + static_cast<int>(rng.bounded(10)), "ds"));
    reg.push_back(record("ageless", Sex::male, std::nullopt, "ds"));

    const auto [g1, g2] = build_age_subgroups(reg, 50, 70, train, test, seed);
    for (const Cohort* c : {&g1, &g2})
      if (const char* err = check_no_replacement(*c, train, test))
        return {false, fmt("iteration %d: %s", iter, err)};
    if (g1.train_ids.size() != g2.train_ids.size())
      return {false, fmt("iteration %d: unequal train sizes", iter)};
    for (const Cohort* c : {&g1, &g2})
      for (const std::string& id : c->members) {
        if (id.rfind("boundary", 0) == 0 || id == "midband" || id == "ageless")
          return {false, fmt("iteration %d: excluded subject %s was drawn", iter, id.c_str())};
        if (c == &g1 && id[0] != 'y') return {false, fmt("iteration %d: %s in the young cohort",
                                                         iter, id.c_str())};
        if (c == &g2 && id[0] != 'o') return {false, fmt("iteration %d: %s in the old cohort",
                                                         iter, id.c_str())};
      }

    // Determinism: an identical rebuild must serialize byte-identically.
    const auto [h1, h2] = build_age_subgroups(reg, 50, 70, train, test, seed);
    if (manifest_bytes(g1, "m_a.json") != manifest_bytes(h1, "m_b.json") ||
        manifest_bytes(g2, "m_c.json") != manifest_bytes(h2, "m_d.json"))
      return {false, fmt("iteration %d: manifests differ across identical rebuilds", iter)};

    // Matched cross-dataset fixture: identical stratum capacities on both
    // sides, drawn counts must then match exactly per stratum.
    std::vector<SubjectRecord> ra, rb;
    int serial = 0;
    for (const Sex sex : {Sex::female, Sex::male})
      for (const int decade : {30, 40, 50}) {
        const int capacity = 5 + static_cast<int>(rng.bounded(4));
        for (int i = 0; i < capacity; ++i) {
          const int age = decade + static_cast<int>(rng.bounded(10));
          ra.push_back(record(fmt("a%04d", serial), sex, age, "dsA"));
          rb.push_back(record(fmt("b%04d", serial), sex, age, "dsB"));
          ++serial;
        }
      }
    const auto [m1, m2] = build_matched_cross_dataset(ra, rb, 10, train, test, seed);
    for (const Cohort* c : {&m1, &m2})
      if (const char* err = check_no_replacement(*c, train, test))
        return {false, fmt("iteration %d (matched): %s", iter, err)};

    const auto histogram = [](const std::vector<SubjectRecord>& r,
                              const std::vector<std::string>& ids) {
      std::map<std::pair<int, int>, int> h;
      std::map<std::string, const SubjectRecord*> by_id;
      for (const auto& rec : r) by_id[rec.subject_id] = &rec;
      for (const auto& id : ids) {
        const SubjectRecord* rec = by_id.at(id);
        h[{static_cast<int>(rec->sex), *rec->age_years / 10}]++;
      }
      return h;
    };
    if (histogram(ra, m1.members) != histogram(rb, m2.members) ||
        histogram(ra, m1.train_ids) != histogram(rb, m2.train_ids))
      return {false, fmt("iteration %d: matched stratum histograms differ", iter)};
  }

  std::error_code ec;
  fs::remove_all(dir, ec);
  return {true, "1000 randomized registries: no replacement, equal train sizes, boundary ages "
                "never drawn, matched histograms exactly equal, manifests byte-identical"};
}

// ---------------------------------------------------------------------------
// 8. Large-volume performance: a 512 x 512 x 400 case with 4 organs at
//    1.5 mm spacing finishes in under 10 s on one worker, and the
//    distance-transform hd95 beats the brute-force pairwise oracle by at
//    least 100x on that size. The oracle refuses grids this large, so its
//    time is extrapolated: a sampled sweep runs its exact inner loop
//    (integer coordinate deltas, spacing multiplies, square root per pair)
//    and the measured per-pair cost times the full directed pair count
//    gives the estimate. The oracle's final sort is ignored, which only
//    understates the speedup.

// Boundary voxels under the 6-neighborhood, the brute oracle's surface
// definition (grid border counts as background).
std::vector<Index3> boundary_voxels(const BinaryMask& m) {
  std::vector<Index3> pts;
  for (std::int64_t z = 0; z < m.dims[2]; ++z)
    for (std::int64_t y = 0; y < m.dims[1]; ++y)
      for (std::int64_t x = 0; x < m.dims[0]; ++x) {
        if (!m.at(x, y, z)) continue;
        const bool boundary =
            x == 0 || !m.at(x - 1, y, z) || x == m.dims[0] - 1 || !m.at(x + 1, y, z) ||
            y == 0 || !m.at(x, y - 1, z) || y == m.dims[1] - 1 || !m.at(x, y + 1, z) ||
            z == 0 || !m.at(x, y, z - 1) || z == m.dims[2] - 1 || !m.at(x, y, z + 1);
        if (boundary) pts.push_back({x, y, z});
      }
  return pts;
}

Outcome criterion_large_volume() {
#ifdef _OPENMP
  omp_set_num_threads(1);
#endif
  // One dominant organ plus three satellites in corners the big ellipsoid
  // does not reach. The brute-force cost grows with the squared surface
  // size while the distance transform grows with the crop volume, so the
  // dominant organ is what exercises the asymptotic gap.
  PhantomSpec spec;
  spec.dims = {512, 512, 400};
  spec.spacing = {1.5, 1.5, 1.5};
  spec.organs.push_back({1, {256, 256, 200}, {215, 215, 165}});
  spec.organs.push_back({2, {20, 20, 20}, {12, 12, 12}});
  spec.organs.push_back({3, {492, 20, 20}, {12, 12, 12}});
  spec.organs.push_back({4, {20, 492, 20}, {12, 12, 12}});
  const LabelDictionary dict(
      {{1, "organ_a"}, {2, "organ_b"}, {3, "organ_c"}, {4, "organ_d"}});

  const LabelVolume gt = generate_volume(spec, "big");
  LabelVolume pred = gt;
  for (std::uint16_t label = 1; label <= 4; ++label)
    pred = perturb(pred, PerturbOp::erode, 1, label, 77);

  const auto t0 = std::chrono::steady_clock::now();
  const CaseMetrics cm = evaluate_case(validate_pair(gt, pred), dict, "m");
  const double t_case = seconds_since(t0);

  for (const auto& [organ, m] : cm.per_organ)
    if (!m.dice || !m.hd95_mm)
      return {false, "a metric came back undefined on the large case"};

  double t_fast = 0.0;      // distance-transform hd95, all organs
  double total_pairs = 0.0; // directed pairs the oracle would evaluate
  double per_pair = 0.0;    // seconds, measured on the oracle's inner loop
  double sink = 0.0;
  for (std::uint16_t label = 1; label <= 4; ++label) {
    const BinaryMask g = mask_for_label(gt, label);
    const BinaryMask p = mask_for_label(pred, label);
    const auto h0 = std::chrono::steady_clock::now();
    sink += hd95(g, p, spec.spacing);
    t_fast += seconds_since(h0);

    const std::vector<Index3> sg = boundary_voxels(g);
    const std::vector<Index3> sp = boundary_voxels(p);
    total_pairs += 2.0 * static_cast<double>(sg.size()) * static_cast<double>(sp.size());
    if (label != 1) continue;  // one organ's per-pair cost is representative

    const std::size_t ka = std::min<std::size_t>(sg.size(), 8000);
    const std::size_t kb = std::min<std::size_t>(sp.size(), 8000);
    std::vector<Index3> from(ka), to(kb);
    for (std::size_t i = 0; i < ka; ++i) from[i] = sg[i * (sg.size() / ka)];
    for (std::size_t j = 0; j < kb; ++j) to[j] = sp[j * (sp.size() / kb)];
    const auto s0 = std::chrono::steady_clock::now();
    for (const Index3& a : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Index3& b : to) {
        const double dx = static_cast<double>(a[0] - b[0]) * spec.spacing[0];
        const double dy = static_cast<double>(a[1] - b[1]) * spec.spacing[1];
        const double dz = static_cast<double>(a[2] - b[2]) * spec.spacing[2];
        const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (d < best) best = d;
      }
      sink += best;
    }
    per_pair = seconds_since(s0) / (static_cast<double>(ka) * static_cast<double>(kb));
  }
  const double brute_estimate = per_pair * total_pairs;
  const double speedup = brute_estimate / t_fast;

  Outcome o;
  o.pass = t_case < 10.0 && speedup >= 100.0 && sink > 0.0;
  o.detail = fmt("512x512x400, 4 organs, 1 worker: evaluate_case %.2f s (budget 10 s); "
                 "hd95 fast path %.2f s vs extrapolated brute force %.0f s over %.2g "
                 "directed pairs, speedup %.0fx (floor 100x)",
                 t_case, t_fast, brute_estimate, total_pairs, speedup);
  return o;
}

// ---------------------------------------------------------------------------
// 9. Digitized sphere volumes within 2% of the analytic value, reported in
//    mL, including an anisotropic grid.

Outcome criterion_volume_accuracy() {
  double worst = 0.0;
  for (int r = 8; r <= 16; ++r) {
    PhantomSpec spec;
    spec.dims = {2 * r + 7, 2 * r + 7, 2 * r + 7};
    spec.spacing = {1.0, 1.0, 1.0};
    const double c = static_cast<double>(r) + 3.0;
    spec.organs.push_back({1, {c, c, c}, {double(r), double(r), double(r)}});
    const LabelVolume v = generate_volume(spec, "sphere");
    const double measured = organ_volume_ml(mask_for_label(v, 1), spec.spacing);
    const double analytic = 4.0 / 3.0 * M_PI * std::pow(double(r), 3.0) / 1000.0;
    const double rel = std::abs(measured - analytic) / analytic;
    worst = std::max(worst, rel);
    if (rel > 0.02)
      return {false, fmt("radius %d: measured %.3f mL vs analytic %.3f mL (%.2f%% off)", r,
                         measured, analytic, rel * 100.0)};
  }

  // Same physical sphere on an anisotropic grid: 12 mm radius at
  // 1.25 x 1.0 x 0.8 mm spacing.
  PhantomSpec an;
  an.spacing = {1.25, 1.0, 0.8};
  an.dims = {32, 40, 48};
  an.organs.push_back({1, {15.5, 19.5, 23.5}, {12.0 / 1.25, 12.0, 12.0 / 0.8}});
  const LabelVolume v = generate_volume(an, "sphere_aniso");
  const double measured = organ_volume_ml(mask_for_label(v, 1), an.spacing);
  const double analytic = 4.0 / 3.0 * M_PI * std::pow(12.0, 3.0) / 1000.0;
  const double rel = std::abs(measured - analytic) / analytic;
  worst = std::max(worst, rel);
  if (rel > 0.02)
    return {false, fmt("anisotropic sphere: measured %.3f mL vs analytic %.3f mL (%.2f%% off)",
                       measured, analytic, rel * 100.0)};

  return {true, fmt("radii 8..16 plus one anisotropic grid, worst deviation %.2f%% (bound 2%%)",
                    worst * 100.0)};
}

struct Criterion {
  int number;
  const char* name;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "metric oracle equivalence", criterion_metric_oracles},
    {2, "spacing covariance", criterion_spacing_covariance},
    {3, "published gap cross-check", criterion_published_cross_check},
    {4, "synthetic end-to-end reproduction", criterion_synthetic_end_to_end},
    {5, "null effect control", criterion_null_effect},
    {6, "statistics oracle", criterion_statistics_oracle},
    {7, "cohort invariants", criterion_cohort_invariants},
    {8, "large-volume performance", criterion_large_volume},
    {9, "digitized volume accuracy", criterion_volume_accuracy},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[i + 1]);
      ++i;
    } else {
      std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
      return 64;
    }
  }

  int failures = 0;
  for (const Criterion& c : kCriteria) {
    if (only != 0 && c.number != only) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("unexpected exception: ") + e.what();
    }
    std::printf("[%s] criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.number, c.name,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures;
}
