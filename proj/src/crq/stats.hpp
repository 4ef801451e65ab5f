#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace crq::stats {

// Regularized lower/upper incomplete gamma functions P(a,x), Q(a,x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Survival function of the chi-square distribution with k dof.
double chi2_sf(double x, double k);

// Quantile of the chi-square distribution (bisection on the CDF).
double chi2_quantile(double p, double k);

double normal_cdf(double x);

// Central Poisson confidence interval on a count (Garwood construction).
// Returns {lo, hi} such that P(N >= n | lo) = alpha/2 and
// P(N <= n | hi) = alpha/2.  lo = 0 when n = 0.
std::pair<double, double> garwood_interval(std::uint64_t n, double alpha = 0.3173);

// Pearson chi-square statistic and p-value for observed vs expected counts.
// Bins with expected < min_expected are pooled into their neighbor.
struct Chi2Result {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};
Chi2Result chi2_test(std::span<const double> observed,
                     std::span<const double> expected,
                     double min_expected = 5.0,
                     int constraints = 0);

// Kolmogorov-Smirnov distance of sorted samples against cdf values at those
// samples (caller evaluates the analytic CDF).
double ks_distance(std::span<const double> sorted_cdf_values);

double mean(std::span<const double> xs);
double variance(std::span<const double> xs);  // sample variance (n-1)
double correlation(std::span<const double> xs, std::span<const double> ys);

}  // namespace crq::stats
