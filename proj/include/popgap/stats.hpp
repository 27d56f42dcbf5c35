#pragma once

#include <vector>

namespace popgap::stats {

struct TestResult {
  double t = 0.0;        // test statistic
  double df = 0.0;       // degrees of freedom
  double p_value = 1.0;  // two-sided
};

double mean(const std::vector<double>& v);

/// Sample standard deviation with the n-1 denominator.
/// Throws TooFewSamplesError when n < 2.
double sample_std(const std::vector<double>& v);

/// Two-sided paired t-test on aligned samples. Throws MismatchedSamplesError
/// on unequal lengths, TooFewSamplesError when n < 2, ZeroVarianceError when
/// every pairwise difference is identical.
TestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Two-sided Welch t-test (unequal variances, Welch-Satterthwaite degrees of
/// freedom). Throws TooFewSamplesError when either side has n < 2,
/// ZeroVarianceError when both sides have zero variance.
TestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace popgap::stats
