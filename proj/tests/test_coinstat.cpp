#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "crq/coinstat.hpp"
#include "crq/rng.hpp"
#include "crq/stats.hpp"

using namespace crq;
using coin::CycleStamp;
using coin::RateEstimate;

namespace {
constexpr double kDt = 15.274e-6;
constexpr double kHours = 3600.0;
}  // namespace

TEST_CASE("window config validation") {
  coin::WindowConfig w;
  CHECK_NOTHROW(w.validate());
  w.coincidence_window_cycles = 4;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}

TEST_CASE("rate from counts: closed form and errors") {
  CHECK(coin::rate_from_counts(0, 1000, kDt).value == 0.0);
  // the paper-scale qubit event count: 9,460 over 266.531 h -> 1/101.4 s
  const std::uint64_t n_cycles = 62'820'000'000ull;
  const auto r = coin::rate_from_counts(9460, n_cycles, 266.531 * kHours / double(n_cycles));
  CHECK(1.0 / r.value == doctest::Approx(101.43).epsilon(0.001));
  // saturation
  CHECK_THROWS_AS(coin::rate_from_counts(10, 10, 1.0), std::domain_error);
  CHECK_THROWS_AS(coin::rate_from_counts(11, 10, 1.0), std::invalid_argument);
}

TEST_CASE("rate estimator is unbiased over repeated Poisson draws") {
  Rng rng(21, RngDomain::Tests, 0);
  const double r_true = 1.0 / 101.0;
  const double window = kDt;
  const std::uint64_t n_windows = 40'000'000;
  const double t = double(n_windows) * window;
  const int trials = 10000;
  double sum = 0.0;
  for (int i = 0; i < trials; ++i) {
    const auto n = rng.poisson(r_true * t);
    sum += coin::rate_from_counts(n, n_windows, window).value;
  }
  const double mean = sum / trials;
  const double sigma_mean = std::sqrt(r_true / t / trials);
  CHECK(std::fabs(mean - r_true) < 3.0 * sigma_mean);
}

TEST_CASE("nearest delays: exact cases and the tie rule") {
  std::vector<CycleStamp> events{{0, 100}, {0, 200}, {1, 50}, {2, 10}};
  std::vector<CycleStamp> pulses{{0, 100}, {0, 198}, {0, 202}, {1, 65}};
  const auto d = coin::nearest_delays(events, pulses, kDt);
  REQUIRE(d.delays.size() == 4);
  CHECK(*d.delays[0].delta_cycles == 0);    // same cycle
  CHECK(*d.delays[1].delta_cycles == -2);   // equidistant: earlier pulse wins
  CHECK(*d.delays[2].delta_cycles == 15);
  CHECK_FALSE(d.delays[3].delta_cycles);    // entry without pulses: marker
  CHECK(d.coincidences(3) == 1);
  CHECK(d.coincidences(5) == 2);
}

TEST_CASE("nearest-delay distribution matches the folded exponential") {
  // uniform random pulses: |dt| to the nearest of a Poisson stream is
  // exponential with rate 2 r_S
  Rng rng(22, RngDomain::Tests, 0);
  const std::uint64_t n_cycles = 40'000'000;
  const double r_s = 15.0;  // per second
  const double p_cycle = r_s * kDt;
  std::vector<CycleStamp> pulses;
  const auto n_pulses = rng.poisson(p_cycle * double(n_cycles));
  for (std::uint64_t i = 0; i < n_pulses; ++i)
    pulses.push_back({0, static_cast<std::uint64_t>(rng.uniform() * double(n_cycles))});
  std::sort(pulses.begin(), pulses.end(),
            [](const CycleStamp& a, const CycleStamp& b) { return a.cycle < b.cycle; });
  std::vector<CycleStamp> events;
  for (int i = 0; i < 3000; ++i)
    events.push_back({0, 1000 + static_cast<std::uint64_t>(
                                    rng.uniform() * double(n_cycles - 2000))});
  const auto d = coin::nearest_delays(events, pulses, kDt);
  // oracle: direct simulation of the nearest-neighbor delay of a Poisson
  // process, summarized by its analytic mean 1/(2 r_S)
  double mean_abs = 0.0;
  int n_def = 0;
  for (const auto& ia : d.delays) {
    if (!ia.delta_cycles) continue;
    mean_abs += std::fabs(double(*ia.delta_cycles)) * kDt;
    ++n_def;
  }
  mean_abs /= n_def;
  const double expected = 1.0 / (2.0 * r_s);
  CHECK(mean_abs == doctest::Approx(expected).epsilon(0.06));
}

TEST_CASE("accidental rate reproduces the tabulated value") {
  RateEstimate r_q{1.0 / 101.43, 0, 0}, r_qs{1.0 / 4322.0, 0, 0}, r_s{1.0 / 66.616e-3, 0, 0};
  const double dt = 45.821e-6;
  const auto acc = coin::accidental_rate(r_q, r_qs, r_s, dt);
  CHECK(1.0 / acc.value / kHours == doctest::Approx(41.9).epsilon(0.01));
  // r_S = 0 -> no accidentals
  CHECK(coin::accidental_rate(r_q, r_qs, {0, 0, 0}, dt).value == 0.0);
  // inconsistent inputs
  CHECK_THROWS_AS(coin::accidental_rate(r_qs, r_q, r_s, dt), std::domain_error);
}

TEST_CASE("accidentals of independent streams match the prediction") {
  Rng rng(23, RngDomain::Tests, 0);
  const std::uint64_t n_cycles = 200'000'000;  // ~51 simulated minutes
  const double r_q_true = 1.0 / 2.1, r_s_true = 25.0;
  std::vector<CycleStamp> events, pulses;
  {
    const auto n = rng.poisson(r_q_true * kDt * double(n_cycles));
    for (std::uint64_t i = 0; i < n; ++i)
      events.push_back({0, static_cast<std::uint64_t>(rng.uniform() * double(n_cycles))});
    const auto m = rng.poisson(r_s_true * kDt * double(n_cycles));
    for (std::uint64_t i = 0; i < m; ++i)
      pulses.push_back({0, static_cast<std::uint64_t>(rng.uniform() * double(n_cycles))});
    std::sort(pulses.begin(), pulses.end(),
              [](const CycleStamp& a, const CycleStamp& b) { return a.cycle < b.cycle; });
  }
  const auto d = coin::nearest_delays(events, pulses, kDt);
  const double t = double(n_cycles) * kDt;
  const auto n_qs = d.coincidences(3);
  const auto r_q = coin::rate_from_counts(events.size(), n_cycles, kDt);
  const auto r_s = coin::rate_from_counts(pulses.size(), n_cycles, kDt);
  const auto r_qs = coin::rate_from_counts(n_qs, n_cycles / 3, 3 * kDt);
  const auto acc = coin::accidental_rate(r_q, r_qs, r_s, 3 * kDt);
  const double expected_counts = acc.value * t;
  CHECK(std::fabs(double(n_qs) - expected_counts) < 3.0 * std::sqrt(expected_counts));
}

TEST_CASE("background histogram: symmetry, decay, integral identity") {
  const double r_q = 1.0 / 101.0, r_qs_mu = 1.0 / 4450.0, r_s = 15.0;
  const double bin = 200 * kDt, t = 100 * kHours;
  std::vector<double> centers;
  for (int b = -40; b <= 40; ++b)
    if (b != 0) centers.push_back(b * bin);
  const auto h = coin::background_histogram(r_q, r_qs_mu, r_s, bin, centers, t);
  // symmetric in the delay
  for (std::size_t i = 0; i < centers.size() / 2; ++i)
    CHECK(h[i] == doctest::Approx(h[h.size() - 1 - i]).epsilon(1e-12));
  // two-sided exponential decay: the analytic ratio between bins holds and
  // far delays vanish
  const double ratio = h.front() / h[centers.size() / 2];
  CHECK(ratio ==
        doctest::Approx(std::exp(-2.0 * r_s * (std::fabs(centers.front()) -
                                               std::fabs(centers[centers.size() / 2]))))
            .epsilon(1e-9));
  CHECK(coin::background_histogram(r_q, r_qs_mu, r_s, bin, {3.0}, t)[0] <
        1e-30 * h[centers.size() / 2]);
  // sum over all bins plus the window accounts for every qubit event:
  // total background mass is (r_q - r_qs_mu) * T
  double far_sum = 0.0;
  std::vector<double> full_centers;
  for (int b = -4000; b <= 4000; ++b)
    if (b != 0) full_centers.push_back(b * bin);
  for (double v :
       coin::background_histogram(r_q, r_qs_mu, r_s, bin, full_centers, t))
    far_sum += v;
  const double central =
      (r_q - r_qs_mu) * (1.0 - std::exp(-r_s * bin)) * t;  // |dt| < bin/2 mass
  CHECK(far_sum + central == doctest::Approx((r_q - r_qs_mu) * t).epsilon(1e-6));
}

TEST_CASE("ledger decomposition reproduces the tabulated rate model") {
  coin::LedgerCounts counts;
  counts.n_q = 9460;
  counts.n_qs = 222;
  counts.cycle_duration_s = 15.274e-6;
  counts.n_cycles = static_cast<std::uint64_t>(266.531 * kHours / counts.cycle_duration_s);
  counts.window_cycles = 3;
  // the collective detector rate enters through its cycle count
  counts.n_s_cycles = static_cast<std::uint64_t>(
      std::llround((1.0 / 66.616e-3) * 266.531 * kHours));

  coin::CoverageInputs cov;
  cov.sigma_q_cm2 = 0.131;
  cov.sigma_qs_cm2 = 0.0189;
  cov.eps_window = 0.94;
  cov.eps_s = 0.987;

  const auto led = coin::decompose_rates(counts, cov);
  CHECK(1.0 / led.r_q.value == doctest::Approx(101.43).epsilon(0.005));
  CHECK(1.0 / led.r_qs.value / 60.0 == doctest::Approx(72.0).epsilon(0.01));
  CHECK(1.0 / led.r_qs_acc.value / kHours == doctest::Approx(41.9).epsilon(0.02));
  CHECK(1.0 / led.r_qs_mu.value / 60.0 == doctest::Approx(74.0).epsilon(0.02));
  CHECK(led.coverage == doctest::Approx(0.133).epsilon(0.01));
  CHECK(1.0 / led.r_q_mu.value == doctest::Approx(592.0).epsilon(0.03));
  CHECK(led.cosmic_fraction == doctest::Approx(0.171).epsilon(0.02));
  // identities hold exactly by construction
  CHECK(led.r_qs.value ==
        doctest::Approx(led.r_qs_acc.value + led.r_qs_mu.value).epsilon(1e-12));
  CHECK(led.r_q.value ==
        doctest::Approx(led.r_q_mu.value + led.r_q_other.value).epsilon(1e-12));
  // accidental-free limit: r_qs_mu = r_qs
  coin::LedgerCounts quiet = counts;
  quiet.n_s_cycles = 0;
  const auto led2 = coin::decompose_rates(quiet, cov);
  CHECK(led2.r_qs_mu.value == doctest::Approx(led2.r_qs.value).epsilon(1e-12));
  // zero coverage is undefined
  coin::CoverageInputs bad = cov;
  bad.sigma_qs_cm2 = 0.0;
  CHECK_THROWS_AS(coin::decompose_rates(counts, bad), std::domain_error);
}

TEST_CASE("snr table flags a maximum and rejects even windows") {
  coin::InterArrivalSet d;
  d.cycle_duration_s = kDt;
  Rng rng(24, RngDomain::Tests, 0);
  // synthetic inter-arrival population: jitter ~ N(0, 0.8 cycles) plus flat tails
  for (int i = 0; i < 2000; ++i) {
    const double j = 0.8 * rng.normal();
    d.delays.push_back({static_cast<std::int64_t>(std::llround(j))});
  }
  for (int i = 0; i < 200; ++i)
    d.delays.push_back({static_cast<std::int64_t>(rng.uniform(-3000.0, 3000.0))});
  coin::LedgerCounts base;
  base.n_q = d.delays.size();
  base.n_s_cycles = 3000000;
  base.n_cycles = 20'000'000'000ull;
  base.cycle_duration_s = kDt;
  const auto rows = coin::snr_vs_window(d, base, {1, 3, 5, 7, 9});
  int argmax_count = 0;
  for (const auto& r : rows) argmax_count += r.argmax ? 1 : 0;
  CHECK(argmax_count == 1);
  CHECK_THROWS_AS(coin::snr_vs_window(d, base, {2}), std::invalid_argument);
}

TEST_CASE("flux and efficiency estimator closes on a synthetic rate table") {
  // two-stack toy geometry expressed directly as exclusive counts
  geom::CrossSectionSet xs;
  xs.n_labels = 3;
  xs.total_thrown = 1'000'000;
  xs.tangent_area_cm2 = 40000.0;
  const LabelSet A = LabelSet::single(0), B = LabelSet::single(1), C = LabelSet::single(2);
  auto put = [&](LabelSet s, double count) { xs.exclusive_counts[s] = count; };
  put(A, 4000.0);
  put(B, 3000.0);
  put(C, 3500.0);
  put(A.unite(B), 2500.0);
  put(B.unite(C), 2000.0);
  put(A.unite(C), 500.0);
  put(A.unite(B).unite(C), 1500.0);
  double nonempty = 0.0;
  for (auto& [s, c] : xs.exclusive_counts) nonempty += c;
  put(LabelSet(), double(xs.total_thrown) - nonempty);
  for (const auto& [s, c] : xs.exclusive_counts) {
    if (s.empty()) continue;
    for (std::uint16_t sub = s.bits(); sub; sub = (sub - 1) & s.bits())
      xs.inclusive_counts[LabelSet(sub)] += c;
  }

  const double eps_true = 0.96, flux_true = 0.0133;
  std::vector<int> labels{0, 1, 2};
  std::vector<double> r_d(3), r_ds(3);
  std::vector<double> eff(3, eps_true);
  for (int l : labels) {
    const double sigma_d = xs.sigma_inclusive(LabelSet::single(l));
    r_d[static_cast<std::size_t>(l)] = eps_true * sigma_d * flux_true;
    r_ds[static_cast<std::size_t>(l)] =
        geom::any_coincidence_rate(l, xs, eff, flux_true);
  }
  const auto est = coin::estimate_flux_and_efficiency(r_d, r_ds, xs, labels);
  CHECK(est.efficiency == doctest::Approx(eps_true).epsilon(0.01));
  CHECK(est.flux == doctest::Approx(flux_true).epsilon(0.01));

  // no signal
  std::vector<double> zeros(3, 0.0);
  CHECK_THROWS_AS(coin::estimate_flux_and_efficiency(zeros, zeros, xs, labels),
                  std::domain_error);
}

TEST_CASE("coincidence counting is invariant under global time translation") {
  Rng rng(25, RngDomain::Tests, 0);
  std::vector<CycleStamp> events, pulses;
  for (int i = 0; i < 500; ++i) {
    events.push_back({0, 5000 + static_cast<std::uint64_t>(rng.uniform() * 1000000.0)});
    pulses.push_back({0, 5000 + static_cast<std::uint64_t>(rng.uniform() * 1000000.0)});
  }
  std::sort(pulses.begin(), pulses.end(),
            [](const CycleStamp& a, const CycleStamp& b) { return a.cycle < b.cycle; });
  const auto base = coin::nearest_delays(events, pulses, kDt).coincidences(3);
  const std::uint64_t shift = 1234;
  for (auto& e : events) e.cycle += shift;
  for (auto& p : pulses) p.cycle += shift;
  const auto shifted = coin::nearest_delays(events, pulses, kDt).coincidences(3);
  CHECK(base == shifted);
}
