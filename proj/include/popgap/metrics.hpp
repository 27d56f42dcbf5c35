#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "popgap/volume.hpp"

namespace popgap {

/// Per-organ measurements for one ground-truth/prediction pair.
/// dice is undefined iff both masks are empty; hd95_mm is undefined iff
/// either mask is empty. Volumes are always defined (empty mask = 0 mL).
struct OrganMetrics {
  std::optional<double> dice;
  std::optional<double> hd95_mm;
  double gt_volume_ml = 0.0;
  double pred_volume_ml = 0.0;
  bool gt_empty = false;
  bool pred_empty = false;
};

/// All per-organ measurements for one subject under one model.
/// per_organ is keyed by organ name; map order gives the deterministic
/// row order used in reports.
struct CaseMetrics {
  std::string subject_id;
  std::string model_id;
  std::map<std::string, OrganMetrics> per_organ;
};

/// One flattened report row, the unit the gap aggregation consumes.
struct CaseMetricsRow {
  std::string subject_id;
  std::string model_id;
  std::string organ;
  OrganMetrics values;
};

/// 2*|gt & pred| / (|gt| + |pred|). Empty optional iff both masks are empty.
/// Exactly one empty mask yields 0. Masks must share a grid.
std::optional<double> dice(const BinaryMask& gt, const BinaryMask& pred);

/// A boundary voxel's center in mm (voxel index times spacing).
struct SurfacePoint {
  double x = 0.0, y = 0.0, z = 0.0;
};

/// Centers of all foreground voxels with at least one 6-connected face
/// neighbor that is background or outside the grid. Throws EmptyMaskError
/// on an empty mask; never returns an empty set otherwise.
std::vector<SurfacePoint> extract_surface(const BinaryMask& mask, const Spacing3& spacing);

/// 95th-percentile symmetric surface distance in mm: the larger of the two
/// directed nearest-rank (ceil(0.95*n)) percentiles of surface-to-surface
/// nearest distances, Euclidean in mm. Throws EmptyMaskError if either mask
/// is empty. Fast path; agrees with the brute-force oracle to 1e-9 mm.
double hd95(const BinaryMask& gt, const BinaryMask& pred, const Spacing3& spacing);

/// Foreground voxel count times voxel volume, in mL. Empty mask = 0.
double organ_volume_ml(const BinaryMask& mask, const Spacing3& spacing);

/// Dice, HD95, and both volumes for every organ in dict, in one pass over
/// the pair plus one cropped distance-transform round per organ. Undefined
/// metrics are flagged, never thrown. Deterministic for fixed inputs and
/// independent of worker count.
CaseMetrics evaluate_case(const ValidatedPair& pair, const LabelDictionary& dict,
                          const std::string& model_id);

/// CSV with header subject_id,model_id,organ,dice,hd95_mm,gt_volume_ml,
/// pred_volume_ml,flags. Undefined metrics are empty fields; flags is a
/// semicolon-joined subset of {gt_empty, pred_empty}. Rows appear in input
/// order, organs in map order within each case.
void write_case_metrics_csv(const std::vector<CaseMetrics>& cases, const std::string& path);

/// The data rows of write_case_metrics_csv without the header, for appending
/// further folds to an existing file.
void write_case_metrics_rows(const std::vector<CaseMetrics>& cases, std::ostream& out);

/// Parses a file written by write_case_metrics_csv back into flat rows.
/// Throws MissingColumnError if a required header column is absent.
std::vector<CaseMetricsRow> read_case_metrics_rows(const std::string& path);

}  // namespace popgap
