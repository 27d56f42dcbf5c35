// Benchmark: the production metric kernels (separable distance transform,
// OpenMP across lines and organs) against the serial brute-force reference
// that the tests use as an oracle. The reference is quadratic in surface
// size, so it is only run up to 64^3 grids; above that the fast path is
// timed on its own.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "popgap/metrics.hpp"
#include "popgap/phantom.hpp"
#include "popgap/volume.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point start) {
  return std::chrono::duration<double>(clock_type::now() - start).count();
}

popgap::BinaryMask ellipsoid_mask(const popgap::Dims3& dims, double scale, double shift) {
  popgap::PhantomSpec spec;
  spec.dims = dims;
  spec.organs.push_back({1,
                         {dims[0] / 2.0 + shift, dims[1] / 2.0, dims[2] / 2.0},
                         {dims[0] * scale, dims[1] * scale * 0.8, dims[2] * scale * 0.6}});
  const popgap::LabelVolume vol = popgap::generate_volume(spec, "bench");
  return popgap::mask_for_label(vol, 1);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (built without OpenMP)\n");
#endif
  const popgap::Spacing3 spacing{1.0, 1.25, 1.5};

  std::printf("\n%-10s %14s %14s %10s\n", "grid", "fast hd95 [s]", "brute hd95 [s]", "speedup");
  for (const std::int64_t n : {32, 48, 64}) {
    const popgap::Dims3 dims{n, n, n};
    const popgap::BinaryMask gt = ellipsoid_mask(dims, 0.30, 0.0);
    const popgap::BinaryMask pred = ellipsoid_mask(dims, 0.27, 2.0);

    auto t0 = clock_type::now();
    const double fast = popgap::hd95(gt, pred, spacing);
    const double fast_s = seconds_since(t0);

    t0 = clock_type::now();
    const double slow = popgap::brute_force_hd95(gt, pred, spacing);
    const double slow_s = seconds_since(t0);

    std::printf("%-10s %14.4f %14.4f %9.1fx   (values %.6f / %.6f)\n",
                (std::to_string(n) + "^3").c_str(), fast_s, slow_s,
                fast_s > 0 ? slow_s / fast_s : 0.0, fast, slow);
  }

  std::printf("\nfull-case evaluation, fast path only:\n");
  for (const std::int64_t n : {128, 192, 256}) {
    const popgap::Dims3 dims{n, n, n};
    popgap::PhantomSpec spec;
    spec.dims = dims;
    spec.organs.push_back({1, {n * 0.35, n * 0.5, n * 0.5}, {n * 0.18, n * 0.15, n * 0.12}});
    spec.organs.push_back({2, {n * 0.72, n * 0.5, n * 0.5}, {n * 0.12, n * 0.10, n * 0.16}});
    const popgap::LabelVolume gt = popgap::generate_volume(spec, "bench");
    const popgap::LabelVolume pred = popgap::perturb(gt, popgap::PerturbOp::erode, 1, 1, 7);
    const popgap::LabelDictionary dict({{1, "organ_a"}, {2, "organ_b"}});
    const popgap::ValidatedPair pair = popgap::validate_pair(gt, pred);

    const auto t0 = clock_type::now();
    const popgap::CaseMetrics m = popgap::evaluate_case(pair, dict, "bench");
    std::printf("  %4lld^3, 2 organs: %.3f s (organ_a hd95 %.4f mm)\n",
                static_cast<long long>(n), seconds_since(t0),
                m.per_organ.at("organ_a").hd95_mm.value_or(-1.0));
  }
  return 0;
}
