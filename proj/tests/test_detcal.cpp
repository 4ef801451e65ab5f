#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "crq/detcal.hpp"
#include "crq/rng.hpp"
#include "crq/stats.hpp"
#include "oracles.hpp"

using namespace crq;
using detcal::GridPdf;
using detcal::ResponseParams;

namespace {

GridPdf gaussian_like_pdf(double center, double width, double top, int n = 2048) {
  GridPdf pdf;
  pdf.step = top / n;
  pdf.density.assign(static_cast<std::size_t>(n), 0.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = (i + 0.5) * pdf.step;
    pdf.density[static_cast<std::size_t>(i)] =
        std::exp(-0.5 * (e - center) * (e - center) / (width * width));
    total += pdf.density[static_cast<std::size_t>(i)] * pdf.step;
  }
  for (auto& d : pdf.density) d /= total;
  return pdf;
}

GridPdf line_pdf(double e0, double top, int n = 2048) {
  GridPdf pdf;
  pdf.step = top / n;
  pdf.density.assign(static_cast<std::size_t>(n), 0.0);
  const auto i = static_cast<std::size_t>(e0 / pdf.step);
  pdf.density[i] = 1.0 / pdf.step;
  return pdf;
}

std::pair<double, double> moments(const GridPdf& pdf) {
  double m = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < pdf.density.size(); ++i) {
    const double x = (static_cast<double>(i) + 0.5) * pdf.step;
    m += x * pdf.density[i] * pdf.step;
    m2 += x * x * pdf.density[i] * pdf.step;
  }
  return {m, m2 - m * m};
}

}  // namespace

TEST_CASE("b = 0 is a pure rescale") {
  const auto pdf = gaussian_like_pdf(4.0, 0.8, 10.0);
  ResponseParams rp{"A", 14.971, 0.0, 0.0, 1e9};
  const auto amp = detcal::amplitude_pdf(pdf, rp);
  CHECK(amp.step == doctest::Approx(pdf.step * 14.971));
  for (std::size_t i = 0; i < pdf.density.size(); i += 97)
    CHECK(amp.density[i] == doctest::Approx(pdf.density[i] / 14.971));
  CHECK(amp.total() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("monoenergetic line broadens to the configured resolution") {
  const auto line = line_pdf(5.0, 15.0);
  ResponseParams rp{"A", 10.0, 0.10, 0.0, 1e9};
  const auto amp = detcal::amplitude_pdf(line, rp);
  const auto [mean, var] = moments(amp);
  // sigma(E0) = b * E0 at the reference energy, so sigma/mu = b
  CHECK(mean == doctest::Approx(50.0).epsilon(2e-3));
  CHECK(std::sqrt(var) / mean == doctest::Approx(0.10).epsilon(0.02));
  CHECK(amp.total() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("smeared peak position is invariant against a high-resolution oracle") {
  const auto pdf = gaussian_like_pdf(4.0, 0.35, 12.0);
  const double b = 0.063;
  const auto smeared = detcal::smear_pdf(pdf, b);
  CHECK(smeared.total() == doctest::Approx(1.0).epsilon(1e-6));

  // oracle: dense numerical convolution with the truncated-renormalized kernel
  const int n = 4096;
  const double top = 12.0, step = top / n;
  std::vector<double> oracle(n, 0.0);
  for (int j = 0; j < n; ++j) {
    const double e = (j + 0.5) * step;
    // piecewise-constant density over the source grid
    const auto src = static_cast<std::size_t>(e / pdf.step);
    const double mass = pdf.density[std::min(src, pdf.density.size() - 1)] * step;
    if (mass <= 0.0) continue;
    const double sigma = detcal::resolution_sigma_mev(b, e);
    const double norm = crq::stats::normal_cdf(e / sigma);
    for (int i = 0; i < n; ++i) {
      const double es = (i + 0.5) * step;
      oracle[static_cast<std::size_t>(i)] +=
          mass / norm * std::exp(-0.5 * (es - e) * (es - e) / (sigma * sigma)) /
          (sigma * std::sqrt(2.0 * std::acos(-1.0)));
    }
  }
  auto argmax = [&](const std::vector<double>& d, double st) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d[i] > d[best]) best = i;
    return (static_cast<double>(best) + 0.5) * st;
  };
  const double peak_model = argmax(smeared.density, smeared.step);
  const double peak_oracle = argmax(oracle, step);
  CHECK(peak_model == doctest::Approx(peak_oracle).epsilon(0.005));
  CHECK(peak_model == doctest::Approx(4.0).epsilon(0.005));
}

TEST_CASE("smearing strictly increases variance") {
  const auto pdf = gaussian_like_pdf(5.0, 0.6, 15.0);
  double prev = moments(pdf).second;
  for (double b : {0.03, 0.08, 0.15}) {
    const double var = moments(detcal::smear_pdf(pdf, b)).second;
    CHECK(var > prev);
    prev = var;
  }
}

TEST_CASE("expected counts integrate the amplitude pdf") {
  const auto pdf = gaussian_like_pdf(4.0, 0.8, 10.0);
  ResponseParams rp{"A", 12.0, 0.05, 0.0, 1e9};
  const auto amp = detcal::amplitude_pdf(pdf, rp);
  std::vector<double> edges;
  for (int i = 0; i <= 100; ++i) edges.push_back(120.0 * i / 100.0);

  const auto zero = detcal::expected_counts(amp, 3.0, 0.0, edges);
  for (double c : zero) CHECK(c == 0.0);

  const double rate = 3.7, duration = 1000.0;
  const auto counts = detcal::expected_counts(amp, rate, duration, edges);
  double total = 0.0;
  for (double c : counts) total += c;
  CHECK(total == doctest::Approx(rate * duration).epsilon(1e-6));
}

TEST_CASE("expected counts match direct pulse counting") {
  const auto pdf = gaussian_like_pdf(4.0, 0.5, 10.0);
  ResponseParams rp{"A", 12.0, 0.08, 0.0, 1e9};
  const auto amp = detcal::amplitude_pdf(pdf, rp);
  const double rate = 2.5, duration = 4000.0;
  std::vector<double> edges{30.0, 40.0, 50.0, 60.0, 70.0};
  const auto expected = detcal::expected_counts(amp, rate, duration, edges);

  // direct Monte Carlo: sample energies from the pdf, smear, scale, histogram
  Rng rng(7, RngDomain::Tests, 0);
  const auto n = static_cast<std::uint64_t>(rng.poisson(rate * duration));
  std::vector<double> observed(edges.size() - 1, 0.0);
  // inverse-CDF sampling of the binned pdf
  std::vector<double> cdf(pdf.density.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pdf.density.size(); ++i) {
    acc += pdf.density[i] * pdf.step;
    cdf[i] = acc;
  }
  for (std::uint64_t k = 0; k < n; ++k) {
    const double u = rng.uniform() * acc;
    std::size_t i = 0;
    while (i + 1 < cdf.size() && cdf[i] < u) ++i;
    const double e = (static_cast<double>(i) + rng.uniform()) * pdf.step;
    const double sigma = detcal::resolution_sigma_mev(rp.b_resolution, e);
    double es;
    do {
      es = e + sigma * rng.normal();
    } while (es < 0.0);
    const double v = rp.a_adc_per_mev * es;
    for (std::size_t b = 0; b + 1 < edges.size(); ++b)
      if (v >= edges[b] && v < edges[b + 1]) observed[b] += 1.0;
  }
  for (std::size_t b = 0; b < observed.size(); ++b) {
    const double sigma = std::sqrt(std::max(1.0, expected[b]));
    CHECK(std::fabs(observed[b] - expected[b]) < 4.0 * sigma);
  }
}

TEST_CASE("poisson deviance") {
  CHECK(detcal::poisson_deviance({10.0, 3.0}, {10.0, 3.0}) == doctest::Approx(0.0));
  // frozen direct arithmetic: 10 - 12 + 12 ln 12 - 12 ln 10
  CHECK(detcal::poisson_deviance({10.0}, {12.0}) ==
        doctest::Approx(0.18785868152745522).epsilon(1e-12));
  CHECK(detcal::poisson_deviance({2.0}, {0.0}) == doctest::Approx(2.0));
  CHECK(std::isinf(detcal::poisson_deviance({0.0}, {3.0})));
  // nonnegative in general
  Rng rng(8, RngDomain::Tests, 0);
  for (int t = 0; t < 100; ++t) {
    const double e = 0.5 + 20.0 * rng.uniform();
    const double o = static_cast<double>(rng.poisson(e));
    CHECK(detcal::poisson_deviance({e}, {o}) >= 0.0);
  }
}

TEST_CASE("twice the deviance of fluctuated data behaves like chi-square") {
  Rng rng(9, RngDomain::Tests, 0);
  const int n_bins = 40, trials = 1000;
  std::vector<double> expected(n_bins);
  for (int b = 0; b < n_bins; ++b) expected[static_cast<std::size_t>(b)] = 40.0 + 3.0 * b;
  double mean_stat = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> observed(n_bins);
    for (int b = 0; b < n_bins; ++b)
      observed[static_cast<std::size_t>(b)] =
          static_cast<double>(rng.poisson(expected[static_cast<std::size_t>(b)]));
    mean_stat += 2.0 * detcal::poisson_deviance(expected, observed);
  }
  mean_stat /= trials;
  CHECK(mean_stat == doctest::Approx(double(n_bins)).epsilon(0.10));
}

TEST_CASE("single-detector fit recovers its generating parameters") {
  // deposit spectrum with a muon-peak-like mode
  const auto pdf = gaussian_like_pdf(4.0, 0.9, 14.0);
  const double a_true = 14.971, b_true = 0.063;
  const double eff_true = 0.96, flux_true = 0.0133;
  const double sigma_cm2 = 270.0, duration = 6.0 * 3600.0;

  ResponseParams truth{"A", a_true, b_true, 50.0, 450.0};
  const auto amp = detcal::amplitude_pdf(pdf, truth);
  std::vector<double> edges;
  const int nb = 120;
  for (int i = 0; i <= nb; ++i)
    edges.push_back(truth.v_lo_adc + (truth.v_hi_adc - truth.v_lo_adc) * i / nb);
  const double rate = eff_true * sigma_cm2 * flux_true;
  auto expected = detcal::expected_counts(amp, rate, duration, edges);
  Rng rng(10, RngDomain::Tests, 0);
  detcal::FitSpectrum sp;
  sp.det = 0;
  sp.fold = 1;
  sp.sigma_cm2 = sigma_cm2;
  sp.deposit = pdf;
  sp.observed.edges_adc = edges;
  sp.observed.counts.resize(expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i)
    sp.observed.counts[i] = static_cast<double>(rng.poisson(expected[i]));

  SUBCASE("init at truth stays put") {
    detcal::FitConfig fc;
    fc.duration_s = duration;
    fc.init_eff = eff_true;
    fc.init_flux = flux_true;
    fc.max_evals = 3000;
    const auto fit = detcal::fit_response({sp}, {truth}, fc);
    CHECK(fit.params[0].a_adc_per_mev == doctest::Approx(a_true).epsilon(0.002));
    // cost at the optimum should sit near the chi-square floor
    CHECK(2.0 * fit.cost < 2.0 * nb);
  }

  SUBCASE("perturbed init converges to the same basin") {
    detcal::FitConfig fc;
    fc.duration_s = duration;
    fc.init_eff = 0.9;
    fc.init_flux = 0.012;
    fc.max_evals = 5000;
    ResponseParams init = truth;
    init.a_adc_per_mev = a_true * 1.3;
    init.b_resolution = 0.03;
    const auto fit = detcal::fit_response({sp}, {init}, fc);
    CHECK(fit.params[0].a_adc_per_mev == doctest::Approx(a_true).epsilon(0.01));
    CHECK(fit.params[0].b_resolution == doctest::Approx(b_true).epsilon(0.3));
  }
}
