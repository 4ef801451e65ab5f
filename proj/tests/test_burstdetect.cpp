#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "crq/burstdetect.hpp"
#include "crq/rng.hpp"
#include "oracles.hpp"

using namespace crq;
using det::DetectConfig;
using det::FilterTemplate;
using sim::ShotMatrix;

namespace {

constexpr double kDt = 15.274e-6;

std::vector<std::uint16_t> burst_series(std::size_t n, std::size_t onset, double amp,
                                        double tau_s, double baseline = 0.0) {
  std::vector<std::uint16_t> counts(n, 0);
  for (std::size_t c = 0; c < n; ++c) {
    double v = baseline;
    if (c >= onset) v += amp * std::exp(-double(c - onset) * kDt / tau_s);
    counts[c] = static_cast<std::uint16_t>(std::lround(v));
  }
  return counts;
}

}  // namespace

TEST_CASE("template geometry and zero-mean offset") {
  const auto tpl = det::make_template(kDt);
  CHECK(tpl.values.size() == 1648);
  double sum = 0.0;
  for (double v : tpl.values) sum += v;
  CHECK(std::fabs(sum) < 1e-9);
  // flat first half
  for (int j = 1; j < tpl.flat_half; ++j)
    CHECK(tpl.values[static_cast<std::size_t>(j)] == tpl.values[0]);
  // strictly decreasing second half
  for (int j = tpl.flat_half + 1; j < tpl.length; ++j)
    CHECK(tpl.values[static_cast<std::size_t>(j)] < tpl.values[static_cast<std::size_t>(j - 1)]);
}

TEST_CASE("relaxation series: degenerate streams") {
  sim::TimebaseConfig tb;
  tb.cycles_per_entry = 1000;
  ShotMatrix all_ground(0, 1000, 3, 0);
  for (int q = 0; q < 3; ++q)
    for (std::uint64_t c = 0; c < 1000; ++c) all_ground.set_ground(q, c);
  auto counts = det::relaxation_series(all_ground);
  CHECK(counts[0] == 0);  // no preparation information in the first cycle
  for (std::uint64_t c = 1; c < 1000; ++c) CHECK(counts[c] == 3);

  ShotMatrix all_excited(0, 1000, 3, 0);  // all zeros
  counts = det::relaxation_series(all_excited);
  for (auto v : counts) CHECK(v == 0);
}

TEST_CASE("relaxation series matches an independent recount") {
  Rng rng(5, RngDomain::Tests, 0);
  const std::uint64_t n = 50000;
  const int nq = 10;
  ShotMatrix shots(0, n, nq, 0);
  std::vector<std::vector<bool>> mirror(nq, std::vector<bool>(n, false));
  for (int q = 0; q < nq; ++q)
    for (std::uint64_t c = 0; c < n; ++c)
      if (rng.uniform() < 0.3) {
        shots.set_ground(q, c);
        mirror[static_cast<std::size_t>(q)][c] = true;
      }
  const auto counts = det::relaxation_series(shots);
  for (std::uint64_t c = 0; c < n; ++c) {
    int expect = 0;
    if (c > 0)
      for (int q = 0; q < nq; ++q)
        expect += mirror[static_cast<std::size_t>(q)][c] &&
                  mirror[static_cast<std::size_t>(q)][c - 1];
    CHECK(counts[c] == expect);
  }
}

TEST_CASE("structured correlator equals the direct-convolution oracle") {
  Rng rng(6, RngDomain::Tests, 0);
  const auto tpl = det::make_template(kDt, 200, 100, 1e-3);
  std::vector<std::uint16_t> counts(5000);
  std::vector<double> as_double(5000);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    counts[i] = static_cast<std::uint16_t>(rng.uniform() * 8.0);
    as_double[i] = counts[i];
  }
  const auto fast = det::cross_correlate(counts, tpl);
  const auto direct = det::cross_correlate_direct(counts, tpl);
  const auto oracle = oracles::direct_xcorr(as_double, tpl.values, tpl.flat_half);
  double scale = 1.0;
  for (double v : oracle) scale = std::max(scale, std::fabs(v));
  for (std::size_t i = 0; i < counts.size(); ++i) {
    CHECK(std::fabs(direct[i] - oracle[i]) < 1e-9 * scale);
    CHECK(std::fabs(fast[i] - oracle[i]) < 1e-9 * scale);
  }
}

TEST_CASE("zero response to a constant series") {
  const auto tpl = det::make_template(kDt);
  for (std::uint16_t level : {1, 7}) {
    std::vector<std::uint16_t> counts(20000, level);
    const auto x = det::cross_correlate(counts, tpl);
    for (double v : x) CHECK(std::fabs(v) < 1e-6);
  }
}

TEST_CASE("detection: empty, translation covariance, separation, monotonicity") {
  const auto tpl = det::make_template(kDt);
  DetectConfig cfg;

  std::vector<std::uint16_t> zeros(100000, 0);
  auto cat = det::detect_events(zeros, tpl, cfg);
  CHECK(cat.events.empty());
  CHECK_FALSE(cat.entry_too_short);

  // entry shorter than the template: warning status
  std::vector<std::uint16_t> tiny(100, 0);
  auto short_cat = det::detect_events(tiny, tpl, cfg);
  CHECK(short_cat.entry_too_short);

  // a synthetic 10-qubit burst lands within 3 cycles of the injected onset
  auto counts = burst_series(60000, 30000, 10.0, 5e-3);
  cat = det::detect_events(counts, tpl, cfg);
  REQUIRE(cat.events.size() == 1);
  CHECK(std::llabs(std::int64_t(cat.events[0].onset_cycle) - 30000) <= 3);

  // translation covariance: shifting the series shifts the onset exactly
  const int shift = 1234;
  auto shifted = burst_series(60000, 30000 + shift, 10.0, 5e-3);
  auto cat2 = det::detect_events(shifted, tpl, cfg);
  REQUIRE(cat2.events.size() == 1);
  CHECK(cat2.events[0].onset_cycle == cat.events[0].onset_cycle + shift);

  // two bursts 8 ms apart merge under the separation rule
  auto twin = burst_series(60000, 30000, 10.0, 5e-3);
  const auto second = burst_series(60000, 30000 + 524, 10.0, 5e-3);  // ~8 ms
  for (std::size_t i = 0; i < twin.size(); ++i)
    twin[i] = static_cast<std::uint16_t>(twin[i] + second[i]);
  auto cat3 = det::detect_events(twin, tpl, cfg);
  CHECK(cat3.events.size() == 1);

  // scaling the burst up never decreases the peak
  double prev_peak = 0.0;
  for (double amp : {2.0, 4.0, 8.0}) {
    auto c = burst_series(60000, 30000, amp, 5e-3);
    auto k = det::detect_events(c, tpl, cfg);
    REQUIRE(k.events.size() >= 1);
    CHECK(k.events[0].peak >= prev_peak);
    prev_peak = k.events[0].peak;
  }
}

TEST_CASE("decay probability and its undefined marker") {
  ShotMatrix shots(0, 100, 1, 0);
  // ground at cycles 10..19 -> preparations at 11..20
  for (std::uint64_t c = 10; c < 20; ++c) shots.set_ground(0, c);
  auto p = det::decay_probability(shots, 11, 20, 0);
  CHECK(p.defined());
  CHECK(p.n_prep == 9);
  CHECK(p.n_decay == 9);
  CHECK(p.p == doctest::Approx(1.0));
  // window with no preparations: marker, not zero
  auto u = det::decay_probability(shots, 50, 90, 0);
  CHECK_FALSE(u.defined());
  CHECK(std::isnan(u.p));
  // n_decay = 0 -> p = 0
  ShotMatrix alt(0, 100, 1, 0);
  for (std::uint64_t c = 0; c < 100; c += 2) alt.set_ground(0, c);
  auto z = det::decay_probability(alt, 1, 99, 0);
  CHECK(z.defined());
  CHECK(z.p == doctest::Approx(0.0));
}

TEST_CASE("decay probability against a binomial sampling oracle") {
  Rng rng(7, RngDomain::Tests, 0);
  const double p_true = 0.23;
  const std::uint64_t n = 200000;
  ShotMatrix shots(0, n, 1, 0);
  // explicit two-state chain with ground-after-excited probability 0.8
  bool ground = true;
  std::uint64_t n_prep_oracle = 0, n_decay_oracle = 0;
  for (std::uint64_t c = 0; c < n; ++c) {
    const bool was_ground = ground;
    ground = rng.uniform() < (ground ? p_true : 0.8);
    if (ground) shots.set_ground(0, c);
    if (c > 0 && was_ground) {
      ++n_prep_oracle;
      if (ground) ++n_decay_oracle;
    }
  }
  const auto est = det::decay_probability(shots, 1, n, 0);
  CHECK(est.n_prep == n_prep_oracle);
  CHECK(est.n_decay == n_decay_oracle);
  const double sigma = std::sqrt(p_true * (1 - p_true) / double(est.n_prep));
  CHECK(std::fabs(est.p - p_true) < 3.0 * sigma);
}

TEST_CASE("delta gamma inverts the decay-rate relation") {
  CHECK(det::delta_gamma(0.3, 0.3, 3e-6) == doctest::Approx(0.0));
  // forward-compute p from the exponential model at T1 = 50 us and 1 us
  const double dt = 3e-6;
  const double p_pre = 1.0 - std::exp(-dt / 50e-6);
  const double p_t = 1.0 - std::exp(-dt / 1e-6);
  const double dg = det::delta_gamma(p_t, p_pre, dt);
  CHECK(dg == doctest::Approx(1e6 - 2e4).epsilon(1e-9));
  // the A-free form cancels any common fidelity factor
  const double a = 0.93;
  const double dg_a = det::delta_gamma(1.0 - a * std::exp(-dt * 1e6),
                                       1.0 - a * std::exp(-dt * 2e4), dt);
  CHECK(dg_a == doctest::Approx(1e6 - 2e4).epsilon(1e-9));
  // saturation marker
  CHECK(std::isinf(det::delta_gamma(1.0, 0.05, dt)));
  CHECK(std::isnan(det::delta_gamma(std::nan(""), 0.05, dt)));
  // participation threshold at 1/(5 us)
  det::DynamicsConfig cfg;
  CHECK(cfg.participation_threshold == doctest::Approx(2e5));
}

TEST_CASE("recovery fit: noiseless and noisy") {
  const double bin = 40 * kDt;
  {
    std::vector<double> series;
    for (int i = 0; i < 30; ++i)
      series.push_back(7e5 * std::exp(-((i + 0.5) * bin) / 6e-3));
    const auto fit = det::fit_recovery(series, bin);
    REQUIRE(fit.ok);
    CHECK(fit.tau_s == doctest::Approx(6e-3).epsilon(0.02));
  }
  {
    // binomially noisy fast-recovery series, repeated trials stay within 25%
    Rng rng(8, RngDomain::Tests, 0);
    int ok_within = 0;
    const int trials = 40;
    for (int t = 0; t < trials; ++t) {
      std::vector<double> series;
      for (int i = 0; i < 30; ++i) {
        const double truth = 8e5 * std::exp(-((i + 0.5) * bin) / 0.7e-3);
        // emulate estimate noise from ~500 averaged events
        series.push_back(truth + 6e3 * rng.normal());
      }
      const auto fit = det::fit_recovery(series, bin);
      if (fit.ok && std::fabs(fit.tau_s - 0.7e-3) < 0.25 * 0.7e-3) ++ok_within;
    }
    CHECK(ok_within >= 36);  // 90% of trials inside the 25% band
  }
  {
    // insufficient positive bins: no-fit marker
    std::vector<double> flat(10, -1.0);
    const auto fit = det::fit_recovery(flat, bin);
    CHECK_FALSE(fit.ok);
  }
}

TEST_CASE("slow and fast recovery classes separate by more than 3x") {
  const double bin = 40 * kDt;
  Rng rng(9, RngDomain::Tests, 0);
  auto fit_class = [&](double tau) {
    std::vector<double> series;
    for (int i = 0; i < 40; ++i) {
      const double truth = 6e5 * std::exp(-((i + 0.5) * bin) / tau);
      series.push_back(truth + 4e3 * rng.normal());
    }
    return det::fit_recovery(series, bin).tau_s;
  };
  const double slow = fit_class(6e-3);
  const double fast = fit_class(0.7e-3);
  CHECK(slow / fast > 3.0);
}

TEST_CASE("dynamics: pre-trigger window ends 29 ms before onset") {
  // ground bits only inside [onset-3779, onset-1899): the baseline window
  // must see them, and a window shifted to the gap must not
  const std::uint32_t onset = 20000;
  const det::DynamicsConfig cfg;  // 1880 cycles ending 1899 cycles before onset
  sim::ShotMatrix shots(0, 40000, 1, 0);
  const std::uint64_t lo = onset - cfg.pre_trigger_gap_cycles - cfg.pre_trigger_cycles;
  const std::uint64_t hi = onset - cfg.pre_trigger_gap_cycles;
  for (std::uint64_t c = lo; c < hi; ++c) shots.set_ground(0, c);

  std::vector<sim::QubitParams> qubits(1);
  const auto dyn = det::extract_dynamics(shots, onset, qubits, cfg);
  REQUIRE(dyn.pre_window_ok);
  // all-ground inside the window: p_pre = 1 with n_prep = window - 1
  CHECK(dyn.p_pre[0] == doctest::Approx(1.0));

  // an event too close to the entry start cannot evaluate a baseline
  const auto edge = det::extract_dynamics(shots, 2000, qubits, cfg);
  CHECK_FALSE(edge.pre_window_ok);
}

TEST_CASE("participation histogram arithmetic") {
  const auto empty = det::participation_histogram({}, {}, 10, 0.133);
  for (double v : empty.total) CHECK(v == 0.0);

  // 10 tagged events in one bin with coverage 0.133 -> cosmic estimate 75.2
  std::vector<int> mult(10, 9);
  std::vector<bool> tag(10, true);
  const auto h = det::participation_histogram(mult, tag, 10, 0.133);
  CHECK(h.total[9] == doctest::Approx(10.0));
  CHECK(h.cosmic[9] == doctest::Approx(10.0 / 0.133).epsilon(1e-12));
  CHECK(h.other[9] == doctest::Approx(10.0 - 10.0 / 0.133).epsilon(1e-12));
}
