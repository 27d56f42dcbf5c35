#ifndef POPGAP_GEOMETRY_HPP
#define POPGAP_GEOMETRY_HPP

#include <array>
#include <cstddef>
#include <cstdint>

namespace popgap {

using Dims3 = std::array<std::int64_t, 3>;     // voxels per axis
using Spacing3 = std::array<double, 3>;        // mm per voxel
using Index3 = std::array<std::int64_t, 3>;

inline std::int64_t voxel_count(const Dims3& d) { return d[0] * d[1] * d[2]; }

// Linear index with x fastest (i + nx*(j + ny*k)), the stored order.
inline std::size_t linear_index(const Dims3& d, std::int64_t x, std::int64_t y, std::int64_t z) {
  return static_cast<std::size_t>(x + d[0] * (y + d[1] * z));
}

inline bool in_bounds(const Dims3& d, std::int64_t x, std::int64_t y, std::int64_t z) {
  return x >= 0 && y >= 0 && z >= 0 && x < d[0] && y < d[1] && z < d[2];
}

// Axis-aligned voxel-index box, inclusive bounds. Empty until extended.
struct Box3 {
  Index3 lo{0, 0, 0};
  Index3 hi{-1, -1, -1};

  bool empty() const { return hi[0] < lo[0] || hi[1] < lo[1] || hi[2] < lo[2]; }

  void extend(std::int64_t x, std::int64_t y, std::int64_t z) {
    if (empty()) {
      lo = {x, y, z};
      hi = {x, y, z};
      return;
    }
    if (x < lo[0]) lo[0] = x;
    if (y < lo[1]) lo[1] = y;
    if (z < lo[2]) lo[2] = z;
    if (x > hi[0]) hi[0] = x;
    if (y > hi[1]) hi[1] = y;
    if (z > hi[2]) hi[2] = z;
  }

  void merge(const Box3& other) {
    if (other.empty()) return;
    extend(other.lo[0], other.lo[1], other.lo[2]);
    extend(other.hi[0], other.hi[1], other.hi[2]);
  }

  // Grow by `pad` voxels per side, clamped to the grid.
  Box3 padded(std::int64_t pad, const Dims3& dims) const {
    Box3 b = *this;
    if (b.empty()) return b;
    for (int a = 0; a < 3; ++a) {
      b.lo[a] = b.lo[a] - pad < 0 ? 0 : b.lo[a] - pad;
      b.hi[a] = b.hi[a] + pad >= dims[a] ? dims[a] - 1 : b.hi[a] + pad;
    }
    return b;
  }

  Dims3 extent() const {
    if (empty()) return {0, 0, 0};
    return {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
  }
};

}  // namespace popgap

#endif
