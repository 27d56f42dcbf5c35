#include "popgap/distance_transform.hpp"

#include <cstddef>
#include <limits>

namespace popgap {
namespace {

// Finite stand-in for infinity in the sweep pass. Large enough that no
// in-grid distance can reach it, small enough that envelope arithmetic on
// its square stays finite.
constexpr double kFarMm = 1e20;

// Interval sentinels must dominate every parabola crossing; crossings
// involving a far seed reach magnitudes near kFarMm^2 / spacing^2, so only
// true infinities are safe. They enter comparisons, never arithmetic.
constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower-envelope pass over one line of squared distances. f holds the line's
// current squared values, w2 the squared spacing along this axis. v/z are
// scratch: v[r] is the abscissa of the r-th envelope parabola, z[r] the left
// edge of the interval where it is minimal. Writes the relaxed values to d.
void envelope_line(const double* f, int n, double w2, double* d, int* v, double* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s;
    for (;;) {
      const int p = v[k];
      s = ((f[q] + w2 * q * q) - (f[p] + w2 * p * p)) / (2.0 * w2 * (q - p));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = f[v[k]] + w2 * dq * dq;
  }
}

}  // namespace

std::vector<double> squared_distance_field(const std::vector<std::uint8_t>& seeds,
                                           const Dims3& dims, const Spacing3& spacing) {
  const int nx = dims[0], ny = dims[1], nz = dims[2];
  const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(nx) * ny;
  std::vector<double> dist(static_cast<std::size_t>(voxel_count(dims)));

  // Pass 1, along x: exact 1D distance in mm by a forward and a backward
  // sweep, then squared. Lines are contiguous in memory.
  const double sx = spacing[0];
  const std::ptrdiff_t n_lines_x = static_cast<std::ptrdiff_t>(ny) * nz;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t line = 0; line < n_lines_x; ++line) {
    const std::uint8_t* s = seeds.data() + line * nx;
    double* out = dist.data() + line * nx;
    double d = kFarMm;
    for (int i = 0; i < nx; ++i) {
      d = s[i] ? 0.0 : d + sx;
      out[i] = d;
    }
    d = kFarMm;
    for (int i = nx - 1; i >= 0; --i) {
      d = s[i] ? 0.0 : d + sx;
      if (d < out[i]) out[i] = d;
      out[i] *= out[i];
    }
  }

  // Passes 2 and 3, along y then z: parabola envelope over the squared
  // values accumulated so far. Lines are strided; each is copied into a
  // thread-local buffer, relaxed, and written back to its own slots.
  const int max_len = ny > nz ? ny : nz;
  for (int axis = 1; axis < 3; ++axis) {
    const int len = dims[axis];
    if (len <= 1) continue;
    const double w2 = spacing[axis] * spacing[axis];
    const std::ptrdiff_t stride = axis == 1 ? nx : plane;
    const std::ptrdiff_t n_lines =
        axis == 1 ? static_cast<std::ptrdiff_t>(nx) * nz : plane;
#pragma omp parallel
    {
      std::vector<double> f(static_cast<std::size_t>(max_len));
      std::vector<double> d(static_cast<std::size_t>(max_len));
      std::vector<int> v(static_cast<std::size_t>(max_len));
      std::vector<double> z(static_cast<std::size_t>(max_len) + 1);
#pragma omp for schedule(static)
      for (std::ptrdiff_t line = 0; line < n_lines; ++line) {
        // Axis y: line enumerates (i, k) pairs. Axis z: (i, j) pairs.
        const std::ptrdiff_t i = line % nx;
        const std::ptrdiff_t other = line / nx;
        const std::ptrdiff_t base = axis == 1 ? i + plane * other : i + nx * other;
        double* cell = dist.data() + base;
        for (int q = 0; q < len; ++q) f[static_cast<std::size_t>(q)] = cell[q * stride];
        envelope_line(f.data(), len, w2, d.data(), v.data(), z.data());
        for (int q = 0; q < len; ++q) cell[q * stride] = d[static_cast<std::size_t>(q)];
      }
    }
  }

  return dist;
}

}  // namespace popgap
