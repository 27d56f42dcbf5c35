#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "popgap/cohort.hpp"
#include "popgap/volume.hpp"

namespace popgap {

/// One synthetic organ: voxels whose centers satisfy
/// sum(((x_a - center[a]) / semi_axes[a])^2) <= 1 are labeled.
struct EllipsoidOrgan {
  std::uint16_t label = 1;
  std::array<double, 3> center_vox{0, 0, 0};
  std::array<double, 3> semi_axes_vox{1, 1, 1};
};

struct PhantomSpec {
  Dims3 dims{1, 1, 1};
  Spacing3 spacing{1.0, 1.0, 1.0};
  std::vector<EllipsoidOrgan> organs;
};

/// Rasterizes a PhantomSpec deterministically. Overlapping ellipsoids resolve
/// to the higher label. Throws OutOfBoundsError when an ellipsoid does not
/// fit inside the grid and Error on duplicate labels.
LabelVolume generate_volume(const PhantomSpec& spec, const std::string& subject_id);

enum class PerturbOp { dilate, erode, translate };

/// Morphological dilation/erosion with the 6-connected structuring element
/// applied `magnitude` times, or a rigid translation by `magnitude` voxels.
/// Only voxels of `label` change: dilation claims background voxels only,
/// erosion clears label voxels with a non-label face neighbor (the grid
/// border counts as background). Translation uses `offset` when given,
/// otherwise a seeded random axis and sign; it throws OutOfBoundsError when
/// the organ would leave the grid and Error when it would land on another
/// label.
LabelVolume perturb(const LabelVolume& vol, PerturbOp op, int magnitude, std::uint16_t label,
                    std::uint64_t seed, const std::optional<Index3>& offset = std::nullopt);

/// Definitional test oracles. Independent of the metrics module: own surface
/// scan, per-pair square roots, full sort for the percentile. Restricted to
/// grids of at most 64^3 voxels because the distance step is quadratic in
/// surface size. Throw EmptyMaskError exactly like their fast counterparts.
double brute_force_dice(const BinaryMask& gt, const BinaryMask& pred);
double brute_force_hd95(const BinaryMask& gt, const BinaryMask& pred, const Spacing3& spacing);

/// Size distribution of one organ within one subgroup: per-axis mean and
/// standard deviation of ellipsoid semi-axes, in voxels.
struct OrganSizeModel {
  std::uint16_t label = 1;
  std::string name;
  std::array<double, 3> mean_semi_axes{6, 6, 6};
  std::array<double, 3> std_semi_axes{1, 1, 1};
};

struct SubgroupModel {
  std::string name;          // registry dataset tag and file prefix
  Sex sex = Sex::female;
  int age_min = 25, age_max = 45;
  int n_subjects = 20;
  std::vector<OrganSizeModel> organs;
};

/// How a pseudo-segmenter degrades ground truth. magnitude 0 is identity.
struct PerturbationRule {
  PerturbOp op = PerturbOp::erode;
  int magnitude = 0;
};

struct SyntheticCohortSpec {
  Dims3 dims{48, 48, 48};
  Spacing3 spacing{1.0, 1.0, 1.0};
  std::uint64_t seed = 0;
  SubgroupModel g1, g2;
  PerturbationRule matched;  // model trained on the subject's own subgroup
  PerturbationRule cross;    // model trained on the other subgroup
};

/// Writes gt/<id>.nii.gz, pred/S_g1/<id>.nii.gz, pred/S_g2/<id>.nii.gz for
/// every subject of both subgroups, plus registry.csv (gt_path relative to
/// out_dir). Model S_gX applies `matched` to subjects of subgroup X and
/// `cross` to the others. Byte-identical output for identical spec + seed.
void synth_cohort(const SyntheticCohortSpec& spec, const std::string& out_dir);

}  // namespace popgap
