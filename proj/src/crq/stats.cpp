#include "crq/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace crq::stats {

namespace {

// Series expansion for P(a,x), valid for x < a+1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a,x), valid for x >= a+1 (modified Lentz).
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::domain_error("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::domain_error("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double chi2_sf(double x, double k) { return gamma_q(0.5 * k, 0.5 * x); }

double chi2_quantile(double p, double k) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) throw std::domain_error("chi2_quantile: p must be < 1");
  double lo = 0.0, hi = k + 10.0;
  while (gamma_p(0.5 * k, 0.5 * hi) < p) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (gamma_p(0.5 * k, 0.5 * mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::pair<double, double> garwood_interval(std::uint64_t n, double alpha) {
  const double nn = static_cast<double>(n);
  const double lo = (n == 0) ? 0.0 : 0.5 * chi2_quantile(alpha / 2.0, 2.0 * nn);
  const double hi = 0.5 * chi2_quantile(1.0 - alpha / 2.0, 2.0 * (nn + 1.0));
  return {lo, hi};
}

Chi2Result chi2_test(std::span<const double> observed,
                     std::span<const double> expected,
                     double min_expected, int constraints) {
  if (observed.size() != expected.size())
    throw std::invalid_argument("chi2_test: size mismatch");
  // pool low-expectation bins left to right
  std::vector<double> obs, exp;
  double po = 0.0, pe = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    po += observed[i];
    pe += expected[i];
    if (pe >= min_expected) {
      obs.push_back(po);
      exp.push_back(pe);
      po = pe = 0.0;
    }
  }
  if (pe > 0.0 && !exp.empty()) {
    obs.back() += po;
    exp.back() += pe;
  }
  Chi2Result r;
  if (exp.size() < 2) return r;
  for (std::size_t i = 0; i < exp.size(); ++i) {
    const double d = obs[i] - exp[i];
    r.statistic += d * d / exp[i];
  }
  r.dof = static_cast<double>(exp.size()) - 1.0 - constraints;
  if (r.dof < 1.0) r.dof = 1.0;
  r.p_value = chi2_sf(r.statistic, r.dof);
  return r;
}

double ks_distance(std::span<const double> sorted_cdf_values) {
  const double n = static_cast<double>(sorted_cdf_values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted_cdf_values.size(); ++i) {
    const double f = sorted_cdf_values[i];
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

double mean(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

double correlation(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("correlation: bad inputs");
  const double mx = mean(xs), my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace crq::stats
