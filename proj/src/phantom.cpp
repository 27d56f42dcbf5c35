#include "popgap/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "popgap/csv.hpp"
#include "popgap/errors.hpp"
#include "popgap/nifti.hpp"
#include "popgap/rng.hpp"

namespace popgap {
namespace {

constexpr int kFaceOffsets[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                    {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};

void check_organ_fits(const EllipsoidOrgan& o, const Dims3& dims) {
  if (o.label == 0) throw Error("phantom organ label 0 is reserved for background");
  for (int a = 0; a < 3; ++a) {
    if (!(o.semi_axes_vox[a] > 0.0))
      throw Error("phantom semi-axes must be positive");
    if (o.center_vox[a] - o.semi_axes_vox[a] < 0.0 ||
        o.center_vox[a] + o.semi_axes_vox[a] > static_cast<double>(dims[a] - 1))
      throw OutOfBoundsError("ellipsoid with label " + std::to_string(o.label) +
                             " does not fit inside the grid on axis " + std::to_string(a));
  }
}

// Paints one ellipsoid over its bounding box. Caller orders organs by
// ascending label so overlaps resolve to the higher label.
void paint(LabelVolume& vol, const EllipsoidOrgan& o) {
  std::int64_t lo[3], hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = static_cast<std::int64_t>(std::ceil(o.center_vox[a] - o.semi_axes_vox[a]));
    hi[a] = static_cast<std::int64_t>(std::floor(o.center_vox[a] + o.semi_axes_vox[a]));
  }
  for (std::int64_t k = lo[2]; k <= hi[2]; ++k)
    for (std::int64_t j = lo[1]; j <= hi[1]; ++j)
      for (std::int64_t i = lo[0]; i <= hi[0]; ++i) {
        const double dx = (static_cast<double>(i) - o.center_vox[0]) / o.semi_axes_vox[0];
        const double dy = (static_cast<double>(j) - o.center_vox[1]) / o.semi_axes_vox[1];
        const double dz = (static_cast<double>(k) - o.center_vox[2]) / o.semi_axes_vox[2];
        if (dx * dx + dy * dy + dz * dz <= 1.0)
          vol.labels[linear_index(vol.dims, i, j, k)] = o.label;
      }
}

std::vector<std::size_t> voxels_of_label(const LabelVolume& vol, std::uint16_t label) {
  std::vector<std::size_t> idx;
  for (std::size_t p = 0; p < vol.labels.size(); ++p)
    if (vol.labels[p] == label) idx.push_back(p);
  return idx;
}

void dilate_once(LabelVolume& vol, std::uint16_t label) {
  const Dims3& d = vol.dims;
  std::vector<std::size_t> grow;
  std::size_t p = 0;
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i, ++p) {
        if (vol.labels[p] != 0) continue;  // never overwrite another organ
        for (const auto& o : kFaceOffsets) {
          const std::int64_t x = i + o[0], y = j + o[1], z = k + o[2];
          if (in_bounds(d, x, y, z) && vol.labels[linear_index(d, x, y, z)] == label) {
            grow.push_back(p);
            break;
          }
        }
      }
  for (std::size_t q : grow) vol.labels[q] = label;
}

void erode_once(LabelVolume& vol, std::uint16_t label) {
  const Dims3& d = vol.dims;
  std::vector<std::size_t> shrink;
  std::size_t p = 0;
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i, ++p) {
        if (vol.labels[p] != label) continue;
        for (const auto& o : kFaceOffsets) {
          const std::int64_t x = i + o[0], y = j + o[1], z = k + o[2];
          if (!in_bounds(d, x, y, z) || vol.labels[linear_index(d, x, y, z)] != label) {
            shrink.push_back(p);
            break;
          }
        }
      }
  for (std::size_t q : shrink) vol.labels[q] = 0;
}

void translate_label(LabelVolume& vol, std::uint16_t label, const Index3& offset) {
  const Dims3& d = vol.dims;
  const std::vector<std::size_t> src = voxels_of_label(vol, label);
  std::vector<std::size_t> dst(src.size());
  for (std::size_t n = 0; n < src.size(); ++n) {
    const std::int64_t p = static_cast<std::int64_t>(src[n]);
    const std::int64_t i = p % d[0] + offset[0];
    const std::int64_t j = (p / d[0]) % d[1] + offset[1];
    const std::int64_t k = p / (d[0] * d[1]) + offset[2];
    if (!in_bounds(d, i, j, k))
      throw OutOfBoundsError("translating label " + std::to_string(label) +
                             " moves it outside the grid");
    dst[n] = linear_index(d, i, j, k);
    const std::uint16_t occupant = vol.labels[dst[n]];
    if (occupant != 0 && occupant != label)
      throw Error("translating label " + std::to_string(label) + " collides with label " +
                  std::to_string(occupant));
  }
  for (std::size_t q : src) vol.labels[q] = 0;
  for (std::size_t q : dst) vol.labels[q] = label;
}

}  // namespace

LabelVolume generate_volume(const PhantomSpec& spec, const std::string& subject_id) {
  for (int a = 0; a < 3; ++a)
    if (spec.dims[a] < 1 || !(spec.spacing[a] > 0.0))
      throw Error("phantom grid needs positive dims and spacing");

  std::vector<EllipsoidOrgan> organs = spec.organs;
  std::sort(organs.begin(), organs.end(),
            [](const EllipsoidOrgan& a, const EllipsoidOrgan& b) { return a.label < b.label; });
  for (std::size_t i = 0; i < organs.size(); ++i) {
    check_organ_fits(organs[i], spec.dims);
    if (i > 0 && organs[i].label == organs[i - 1].label)
      throw Error("duplicate phantom label " + std::to_string(organs[i].label));
  }

  LabelVolume vol;
  vol.subject_id = subject_id;
  vol.dims = spec.dims;
  vol.spacing = spec.spacing;
  vol.labels.assign(static_cast<std::size_t>(voxel_count(spec.dims)), 0);
  for (const EllipsoidOrgan& o : organs) paint(vol, o);
  return vol;
}

LabelVolume perturb(const LabelVolume& vol, PerturbOp op, int magnitude, std::uint16_t label,
                    std::uint64_t seed, const std::optional<Index3>& offset) {
  if (magnitude < 0) throw Error("perturbation magnitude must be non-negative");
  LabelVolume out = vol;
  if (magnitude == 0) return out;

  switch (op) {
    case PerturbOp::dilate:
      for (int m = 0; m < magnitude; ++m) dilate_once(out, label);
      break;
    case PerturbOp::erode:
      for (int m = 0; m < magnitude; ++m) erode_once(out, label);
      break;
    case PerturbOp::translate: {
      Index3 off{0, 0, 0};
      if (offset) {
        off = *offset;
      } else {
        Rng rng(seed);
        const int axis = static_cast<int>(rng.bounded(3));
        off[axis] = rng.bounded(2) == 0 ? magnitude : -magnitude;
      }
      translate_label(out, label, off);
      break;
    }
  }
  return out;
}

void synth_cohort(const SyntheticCohortSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir + "/gt", ec);
  fs::create_directories(out_dir + "/pred/S_g1", ec);
  fs::create_directories(out_dir + "/pred/S_g2", ec);
  if (ec) throw IoError("cannot create output directories under " + out_dir);

  const std::size_t n_organs =
      std::max(spec.g1.organs.size(), spec.g2.organs.size());
  if (n_organs == 0) throw Error("synthetic cohort needs at least one organ model");
  if (spec.g1.organs.size() != spec.g2.organs.size())
    throw Error("both subgroups must model the same organ set");

  // Placement plan: one slab of the x extent per organ, shrunk by a safety
  // margin so dilation or translation can never collide across organs or
  // leave the grid.
  const int margin = 2 + std::max(spec.matched.magnitude, spec.cross.magnitude);
  const std::int64_t slab = spec.dims[0] / static_cast<std::int64_t>(n_organs);
  if (slab < 2 * margin + 4)
    throw Error("grid too small for " + std::to_string(n_organs) + " organs with margin " +
                std::to_string(margin));

  Rng rng(spec.seed);
  std::ofstream registry(out_dir + "/registry.csv", std::ios::trunc);
  if (!registry) throw IoError("cannot create registry.csv in " + out_dir);
  registry << "subject_id,sex,age,dataset,site,scanner,gt_path,pred_path\n";

  for (const SubgroupModel* group : {&spec.g1, &spec.g2}) {
    for (int s = 0; s < group->n_subjects; ++s) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_s%03d", group->name.c_str(), s);
      const int age =
          group->age_min +
          static_cast<int>(rng.bounded(static_cast<std::uint64_t>(group->age_max - group->age_min + 1)));

      PhantomSpec ph;
      ph.dims = spec.dims;
      ph.spacing = spec.spacing;
      for (std::size_t o = 0; o < group->organs.size(); ++o) {
        const OrganSizeModel& model = group->organs[o];
        EllipsoidOrgan organ;
        organ.label = model.label;
        const std::int64_t slab_lo = static_cast<std::int64_t>(o) * slab;
        organ.center_vox = {static_cast<double>(slab_lo) + static_cast<double>(slab) / 2.0,
                            static_cast<double>(spec.dims[1]) / 2.0,
                            static_cast<double>(spec.dims[2]) / 2.0};
        const double max_semi[3] = {
            static_cast<double>(slab) / 2.0 - margin,
            static_cast<double>(spec.dims[1]) / 2.0 - margin,
            static_cast<double>(spec.dims[2]) / 2.0 - margin};
        for (int a = 0; a < 3; ++a) {
          const double drawn = rng.normal(model.mean_semi_axes[a], model.std_semi_axes[a]);
          organ.semi_axes_vox[a] = std::clamp(drawn, 1.5, max_semi[a]);
        }
        ph.organs.push_back(organ);
      }

      const LabelVolume gt = generate_volume(ph, id);
      write_label_volume(gt, out_dir + "/gt/" + id + ".nii.gz");

      for (const char* model_name : {"S_g1", "S_g2"}) {
        const bool matched = (group == &spec.g1) == (std::string(model_name) == "S_g1");
        const PerturbationRule& rule = matched ? spec.matched : spec.cross;
        LabelVolume pred = gt;
        for (const OrganSizeModel& organ : group->organs) {
          // Fresh sub-seed per perturbation keeps translate directions
          // independent while the whole cohort stays a pure function of
          // SyntheticCohortSpec::seed.
          pred = perturb(pred, rule.op, rule.magnitude, organ.label, rng.next_u64());
        }
        write_label_volume(pred, out_dir + "/pred/" + model_name + "/" + id + ".nii.gz");
      }

      registry << id << ',' << to_string(group->sex) << ',' << age << ','
               << csv::escape_field(group->name) << ",synth,synth,"
               << "gt/" << id << ".nii.gz,\n";
    }
  }
  if (!registry) throw IoError("failed writing registry.csv in " + out_dir);
}

}  // namespace popgap
