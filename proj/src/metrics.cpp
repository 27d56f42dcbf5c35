#include "popgap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "popgap/csv.hpp"
#include "popgap/distance_transform.hpp"
#include "popgap/errors.hpp"

namespace popgap {
namespace {

// Nearest-rank index (0-based) of the 95th percentile of n samples.
// 19n/20 is ceil(0.95*n) in exact arithmetic; the integer form avoids the
// inexact literal 0.95.
std::size_t q95_rank_index(std::size_t n) { return (19 * n + 19) / 20 - 1; }

struct MaskStats {
  std::int64_t count = 0;
  Box3 box;
};

MaskStats stats_of(const std::vector<std::uint8_t>& voxels, const Dims3& dims) {
  MaskStats st;
  std::size_t idx = 0;
  for (std::int64_t k = 0; k < dims[2]; ++k)
    for (std::int64_t j = 0; j < dims[1]; ++j)
      for (std::int64_t i = 0; i < dims[0]; ++i, ++idx)
        if (voxels[idx]) {
          ++st.count;
          st.box.extend(i, j, k);
        }
  return st;
}

// Marks foreground voxels with a background or out-of-grid 6-neighbor and
// records their linear indices. Out-of-grid counts as background, so
// foreground touching the grid edge is surface.
void surface_of(const std::vector<std::uint8_t>& m, const Dims3& d,
                std::vector<std::uint8_t>& surf, std::vector<std::size_t>& idx) {
  const std::int64_t nx = d[0], ny = d[1], nz = d[2];
  surf.assign(m.size(), 0);
  idx.clear();
  std::size_t p = 0;
  for (std::int64_t k = 0; k < nz; ++k)
    for (std::int64_t j = 0; j < ny; ++j)
      for (std::int64_t i = 0; i < nx; ++i, ++p) {
        if (!m[p]) continue;
        const bool boundary =
            i == 0 || !m[p - 1] || i == nx - 1 || !m[p + 1] ||
            j == 0 || !m[p - nx] || j == ny - 1 || !m[p + nx] ||
            k == 0 || !m[p - nx * ny] || k == nz - 1 || !m[p + nx * ny];
        if (boundary) {
          surf[p] = 1;
          idx.push_back(p);
        }
      }
}

// Squared directed 95th percentile: distances from every index in `query`
// sampled out of the opposing surface's distance field.
double directed_q95_sq(const std::vector<double>& field, const std::vector<std::size_t>& query) {
  std::vector<double> d2(query.size());
  for (std::size_t i = 0; i < query.size(); ++i) d2[i] = field[query[i]];
  const std::size_t r = q95_rank_index(d2.size());
  std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(r), d2.end());
  return d2[r];
}

// HD95 over two non-empty masks already restricted to a working grid.
double hd95_core(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b,
                 const Dims3& dims, const Spacing3& spacing) {
  std::vector<std::uint8_t> surf_a, surf_b;
  std::vector<std::size_t> idx_a, idx_b;
  surface_of(a, dims, surf_a, idx_a);
  surface_of(b, dims, surf_b, idx_b);

  const std::vector<double> field_b = squared_distance_field(surf_b, dims, spacing);
  const double q_ab = directed_q95_sq(field_b, idx_a);
  const std::vector<double> field_a = squared_distance_field(surf_a, dims, spacing);
  const double q_ba = directed_q95_sq(field_a, idx_b);

  return std::sqrt(q_ab > q_ba ? q_ab : q_ba);
}

// Copies the crop window of `src` into a dense sub-grid, keeping voxels the
// predicate accepts.
template <typename T, typename Pred>
std::vector<std::uint8_t> crop_where(const std::vector<T>& src, const Dims3& dims,
                                     const Box3& crop, Pred keep) {
  const Dims3 cd = crop.extent();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(voxel_count(cd)));
  std::size_t q = 0;
  for (std::int64_t k = crop.lo[2]; k <= crop.hi[2]; ++k)
    for (std::int64_t j = crop.lo[1]; j <= crop.hi[1]; ++j) {
      const std::size_t base = linear_index(dims, crop.lo[0], j, k);
      for (std::int64_t i = 0; i < cd[0]; ++i, ++q)
        out[q] = keep(src[base + static_cast<std::size_t>(i)]) ? 1 : 0;
    }
  return out;
}

// The union bounding box of both masks padded by one voxel (clamped to the
// grid) contains every foreground voxel with a full interior margin wherever
// the grid itself does, so surface classification and all surface-to-surface
// distances inside the crop equal their full-grid values.
Box3 working_crop(const Box3& box_a, const Box3& box_b, const Dims3& dims) {
  Box3 crop = box_a;
  crop.merge(box_b);
  return crop.padded(1, dims);
}

std::string flags_field(const OrganMetrics& m) {
  if (m.gt_empty && m.pred_empty) return "gt_empty;pred_empty";
  if (m.gt_empty) return "gt_empty";
  if (m.pred_empty) return "pred_empty";
  return "";
}

std::optional<double> parse_optional(const std::string& field) {
  if (field.empty()) return std::nullopt;
  return std::stod(field);
}

}  // namespace

std::optional<double> dice(const BinaryMask& gt, const BinaryMask& pred) {
  std::int64_t cg = 0, cp = 0, ci = 0;
  const std::size_t n = gt.voxels.size();
  for (std::size_t i = 0; i < n; ++i) {
    const bool g = gt.voxels[i] != 0;
    const bool p = pred.voxels[i] != 0;
    cg += g;
    cp += p;
    ci += g && p;
  }
  if (cg == 0 && cp == 0) return std::nullopt;
  return static_cast<double>(2 * ci) / static_cast<double>(cg + cp);
}

std::vector<SurfacePoint> extract_surface(const BinaryMask& mask, const Spacing3& spacing) {
  std::vector<std::uint8_t> surf;
  std::vector<std::size_t> idx;
  surface_of(mask.voxels, mask.dims, surf, idx);
  if (idx.empty()) throw EmptyMaskError("cannot extract the surface of an empty mask");

  std::vector<SurfacePoint> points;
  points.reserve(idx.size());
  const std::int64_t nx = mask.dims[0], ny = mask.dims[1];
  for (std::size_t p : idx) {
    const std::int64_t i = static_cast<std::int64_t>(p) % nx;
    const std::int64_t j = (static_cast<std::int64_t>(p) / nx) % ny;
    const std::int64_t k = static_cast<std::int64_t>(p) / (nx * ny);
    points.push_back({static_cast<double>(i) * spacing[0], static_cast<double>(j) * spacing[1],
                      static_cast<double>(k) * spacing[2]});
  }
  return points;
}

double hd95(const BinaryMask& gt, const BinaryMask& pred, const Spacing3& spacing) {
  const MaskStats sg = stats_of(gt.voxels, gt.dims);
  const MaskStats sp = stats_of(pred.voxels, pred.dims);
  if (sg.count == 0 || sp.count == 0)
    throw EmptyMaskError("hd95 requires two non-empty masks");

  const Box3 crop = working_crop(sg.box, sp.box, gt.dims);
  const auto fg = [](std::uint8_t v) { return v != 0; };
  const auto a = crop_where(gt.voxels, gt.dims, crop, fg);
  const auto b = crop_where(pred.voxels, pred.dims, crop, fg);
  return hd95_core(a, b, crop.extent(), spacing);
}

double organ_volume_ml(const BinaryMask& mask, const Spacing3& spacing) {
  std::int64_t count = 0;
  for (std::uint8_t v : mask.voxels) count += v != 0;
  return static_cast<double>(count) * (spacing[0] * spacing[1] * spacing[2]) / 1000.0;
}

CaseMetrics evaluate_case(const ValidatedPair& pair, const LabelDictionary& dict,
                          const std::string& model_id) {
  const LabelVolume& gt = *pair.gt;
  const LabelVolume& pred = *pair.pred;
  const Dims3 dims = gt.dims;

  // Slot table: organ labels in dictionary order. One joint pass collects
  // per-organ counts, intersections, and union bounding boxes for both
  // volumes; everything later works on per-organ crops.
  std::vector<std::uint16_t> slot_label;
  std::vector<std::int32_t> remap(static_cast<std::size_t>(dict.max_label()) + 1, -1);
  for (const auto& [label, name] : dict.entries()) {
    remap[label] = static_cast<std::int32_t>(slot_label.size());
    slot_label.push_back(label);
  }
  const std::size_t n_slots = slot_label.size();

  std::vector<std::int64_t> gt_count(n_slots, 0), pred_count(n_slots, 0), inter(n_slots, 0);
  std::vector<Box3> box(n_slots);

  const std::int64_t nx = dims[0], ny = dims[1], nz = dims[2];
#pragma omp parallel
  {
    std::vector<std::int64_t> t_gt(n_slots, 0), t_pred(n_slots, 0), t_inter(n_slots, 0);
    std::vector<Box3> t_box(n_slots);
#pragma omp for schedule(static)
    for (std::int64_t k = 0; k < nz; ++k) {
      std::size_t p = static_cast<std::size_t>(k * ny * nx);
      for (std::int64_t j = 0; j < ny; ++j)
        for (std::int64_t i = 0; i < nx; ++i, ++p) {
          const std::uint16_t g = gt.labels[p];
          const std::uint16_t q = pred.labels[p];
          if (g) {
            const std::int32_t s = remap[g];
            if (s >= 0) {
              ++t_gt[static_cast<std::size_t>(s)];
              t_box[static_cast<std::size_t>(s)].extend(i, j, k);
              if (g == q) ++t_inter[static_cast<std::size_t>(s)];
            }
          }
          if (q) {
            const std::int32_t s = remap[q];
            if (s >= 0) {
              ++t_pred[static_cast<std::size_t>(s)];
              t_box[static_cast<std::size_t>(s)].extend(i, j, k);
            }
          }
        }
    }
    // Count sums and box unions are order-independent, so the merged totals
    // do not depend on thread schedule.
#pragma omp critical
    for (std::size_t s = 0; s < n_slots; ++s) {
      gt_count[s] += t_gt[s];
      pred_count[s] += t_pred[s];
      inter[s] += t_inter[s];
      box[s].merge(t_box[s]);
    }
  }

  CaseMetrics result;
  result.subject_id = gt.subject_id;
  result.model_id = model_id;

  // Same operation order as organ_volume_ml (multiply, then divide), so the
  // two entry points agree bitwise on every volume.
  const double voxel_mm3 = gt.spacing[0] * gt.spacing[1] * gt.spacing[2];
  for (std::size_t s = 0; s < n_slots; ++s) {
    const std::uint16_t label = slot_label[s];
    OrganMetrics m;
    m.gt_empty = gt_count[s] == 0;
    m.pred_empty = pred_count[s] == 0;
    m.gt_volume_ml = static_cast<double>(gt_count[s]) * voxel_mm3 / 1000.0;
    m.pred_volume_ml = static_cast<double>(pred_count[s]) * voxel_mm3 / 1000.0;
    if (!(m.gt_empty && m.pred_empty))
      m.dice = static_cast<double>(2 * inter[s]) /
               static_cast<double>(gt_count[s] + pred_count[s]);
    if (!m.gt_empty && !m.pred_empty) {
      const Box3 crop = box[s].padded(1, dims);
      const auto is_label = [label](std::uint16_t v) { return v == label; };
      const auto a = crop_where(gt.labels, dims, crop, is_label);
      const auto b = crop_where(pred.labels, dims, crop, is_label);
      m.hd95_mm = hd95_core(a, b, crop.extent(), gt.spacing);
    }
    result.per_organ[dict.name(label)] = m;
  }
  return result;
}

void write_case_metrics_rows(const std::vector<CaseMetrics>& cases, std::ostream& out) {
  for (const CaseMetrics& c : cases)
    for (const auto& [organ, m] : c.per_organ) {
      out << csv::escape_field(c.subject_id) << ',' << csv::escape_field(c.model_id) << ','
          << csv::escape_field(organ) << ',';
      if (m.dice) out << csv::format_double(*m.dice, 6);
      out << ',';
      if (m.hd95_mm) out << csv::format_double(*m.hd95_mm, 6);
      out << ',' << csv::format_double(m.gt_volume_ml, 6) << ','
          << csv::format_double(m.pred_volume_ml, 6) << ',' << flags_field(m) << '\n';
    }
}

void write_case_metrics_csv(const std::vector<CaseMetrics>& cases, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create file: " + path);
  out << "subject_id,model_id,organ,dice,hd95_mm,gt_volume_ml,pred_volume_ml,flags\n";
  write_case_metrics_rows(cases, out);
  if (!out) throw IoError("failed writing " + path);
}

std::vector<CaseMetricsRow> read_case_metrics_rows(const std::string& path) {
  const csv::Table table = csv::read_file(path);
  const char* required[] = {"subject_id", "model_id", "organ",         "dice",
                            "hd95_mm",    "gt_volume_ml", "pred_volume_ml", "flags"};
  int col[8];
  for (int c = 0; c < 8; ++c) {
    col[c] = table.column(required[c]);
    if (col[c] < 0)
      throw MissingColumnError(path + ": missing column " + required[c]);
  }

  std::vector<CaseMetricsRow> rows;
  rows.reserve(table.rows.size());
  for (const auto& r : table.rows) {
    CaseMetricsRow row;
    row.subject_id = r[static_cast<std::size_t>(col[0])];
    row.model_id = r[static_cast<std::size_t>(col[1])];
    row.organ = r[static_cast<std::size_t>(col[2])];
    row.values.dice = parse_optional(r[static_cast<std::size_t>(col[3])]);
    row.values.hd95_mm = parse_optional(r[static_cast<std::size_t>(col[4])]);
    row.values.gt_volume_ml = std::stod(r[static_cast<std::size_t>(col[5])]);
    row.values.pred_volume_ml = std::stod(r[static_cast<std::size_t>(col[6])]);
    const std::string& flags = r[static_cast<std::size_t>(col[7])];
    row.values.gt_empty = flags.find("gt_empty") != std::string::npos;
    row.values.pred_empty = flags.find("pred_empty") != std::string::npos;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace popgap
