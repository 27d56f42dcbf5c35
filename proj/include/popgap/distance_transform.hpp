#pragma once

#include <cstdint>
#include <vector>

#include "popgap/geometry.hpp"

namespace popgap {

/// Squared distances this large mark voxels with no seed on their grid.
/// Real anatomical distances are bounded by the grid extent in mm, so any
/// value at or above this sentinel means "unreachable".
inline constexpr double kUnreachableSquaredMm = 1e39;

/// Computes, for every voxel, the squared Euclidean distance in mm^2 to the
/// nearest seed voxel (seeds[i] != 0), with per-axis spacing honored.
///
/// Separable three-pass algorithm: an exact two-sweep along the fastest axis
/// followed by a lower-envelope parabola pass along each remaining axis.
/// Output is deterministic and independent of thread count; each line's
/// result depends only on that line's input.
///
/// A grid without any seed yields the sentinel everywhere at or above
/// kUnreachableSquaredMm.
std::vector<double> squared_distance_field(const std::vector<std::uint8_t>& seeds,
                                           const Dims3& dims, const Spacing3& spacing);

}  // namespace popgap
