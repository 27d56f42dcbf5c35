#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "popgap/errors.hpp"
#include "popgap/phantom.hpp"

// Definitional metric oracles. Deliberately shares no code with the metrics
// module: surfaces come from an explicit neighbor walk over at(), distances
// take a square root per pair, and the percentile sorts the whole sample.

namespace popgap {
namespace {

constexpr std::int64_t kMaxOracleVoxels = 64 * 64 * 64;

void check_oracle_size(const Dims3& dims) {
  if (voxel_count(dims) > kMaxOracleVoxels)
    throw Error("brute-force oracle is limited to grids of at most 64^3 voxels");
}

std::vector<Index3> oracle_surface(const BinaryMask& m) {
  static constexpr std::array<std::array<int, 3>, 6> kFaces{
      {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
  std::vector<Index3> pts;
  for (std::int64_t z = 0; z < m.dims[2]; ++z)
    for (std::int64_t y = 0; y < m.dims[1]; ++y)
      for (std::int64_t x = 0; x < m.dims[0]; ++x) {
        if (!m.at(x, y, z)) continue;
        bool boundary = false;
        for (const auto& f : kFaces) {
          const std::int64_t nx = x + f[0], ny = y + f[1], nz = z + f[2];
          if (!in_bounds(m.dims, nx, ny, nz) || !m.at(nx, ny, nz)) {
            boundary = true;
            break;
          }
        }
        if (boundary) pts.push_back({x, y, z});
      }
  return pts;
}

// Nearest-rank 95th percentile of the directed nearest-neighbor distances
// from every point of `from` to the point set `to`. 19n/20 is the exact
// binary form of 0.95*n; the literal 0.95 would round upward at multiples
// of twenty.
double directed_q95(const std::vector<Index3>& from, const std::vector<Index3>& to,
                    const Spacing3& sp) {
  std::vector<double> nearest;
  nearest.reserve(from.size());
  for (const Index3& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Index3& b : to) {
      const double dx = static_cast<double>(a[0] - b[0]) * sp[0];
      const double dy = static_cast<double>(a[1] - b[1]) * sp[1];
      const double dz = static_cast<double>(a[2] - b[2]) * sp[2];
      const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (d < best) best = d;
    }
    nearest.push_back(best);
  }
  std::sort(nearest.begin(), nearest.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil(19.0 * static_cast<double>(nearest.size()) / 20.0));
  return nearest[rank - 1];
}

}  // namespace

double brute_force_dice(const BinaryMask& gt, const BinaryMask& pred) {
  check_oracle_size(gt.dims);
  std::int64_t a = 0, b = 0, both = 0;
  for (std::int64_t z = 0; z < gt.dims[2]; ++z)
    for (std::int64_t y = 0; y < gt.dims[1]; ++y)
      for (std::int64_t x = 0; x < gt.dims[0]; ++x) {
        const bool g = gt.at(x, y, z);
        const bool p = pred.at(x, y, z);
        if (g) ++a;
        if (p) ++b;
        if (g && p) ++both;
      }
  if (a == 0 && b == 0)
    throw EmptyMaskError("dice of two empty masks is undefined");
  return static_cast<double>(2 * both) / static_cast<double>(a + b);
}

double brute_force_hd95(const BinaryMask& gt, const BinaryMask& pred, const Spacing3& spacing) {
  check_oracle_size(gt.dims);
  const std::vector<Index3> sa = oracle_surface(gt);
  const std::vector<Index3> sb = oracle_surface(pred);
  if (sa.empty() || sb.empty())
    throw EmptyMaskError("hd95 oracle requires two non-empty masks");
  const double fwd = directed_q95(sa, sb, spacing);
  const double bwd = directed_q95(sb, sa, spacing);
  return fwd > bwd ? fwd : bwd;
}

}  // namespace popgap
