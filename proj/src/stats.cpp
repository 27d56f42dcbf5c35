#include "popgap/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstddef>

#include "popgap/errors.hpp"

namespace popgap::stats {
namespace {

double two_sided_p(double t, double df) {
  const boost::math::students_t_distribution<double> dist(df);
  return 2.0 * boost::math::cdf(dist, -std::abs(t));
}

double sample_variance(const std::vector<double>& v) {
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2)
    throw TooFewSamplesError("sample standard deviation needs at least 2 values, got " +
                             std::to_string(v.size()));
  return std::sqrt(sample_variance(v));
}

TestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw MismatchedSamplesError("paired test needs aligned samples: " +
                                 std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  const std::size_t n = a.size();
  if (n < 2)
    throw TooFewSamplesError("paired test needs at least 2 pairs, got " + std::to_string(n));

  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  const double md = mean(diff);
  const double var = sample_variance(diff);
  if (var <= 0.0)
    throw ZeroVarianceError("paired differences have zero variance (all equal to " +
                            std::to_string(md) + ")");

  TestResult r;
  r.t = md / std::sqrt(var / static_cast<double>(n));
  r.df = static_cast<double>(n - 1);
  r.p_value = two_sided_p(r.t, r.df);
  return r;
}

TestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw TooFewSamplesError("Welch test needs at least 2 values per side, got " +
                             std::to_string(a.size()) + " and " + std::to_string(b.size()));
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = sample_variance(a);
  const double vb = sample_variance(b);
  if (va <= 0.0 && vb <= 0.0)
    throw ZeroVarianceError("both samples have zero variance");

  const double se2 = va / na + vb / nb;
  TestResult r;
  r.t = (mean(a) - mean(b)) / std::sqrt(se2);
  r.df = se2 * se2 /
         (va * va / (na * na * (na - 1.0)) + vb * vb / (nb * nb * (nb - 1.0)));
  r.p_value = two_sided_p(r.t, r.df);
  return r;
}

}  // namespace popgap::stats
