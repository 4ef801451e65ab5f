#include "crq/coinstat.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crq/numerics.hpp"
#include "crq/stats.hpp"

namespace crq::coin {

void WindowConfig::validate() const {
  if (coincidence_window_cycles <= 0 || coincidence_window_cycles % 2 == 0)
    throw std::invalid_argument("WindowConfig: window must be an odd cycle count");
}

RateEstimate rate_from_counts(std::uint64_t n, std::uint64_t n_windows, double window_s) {
  if (n > n_windows) throw std::invalid_argument("rate_from_counts: n > N");
  if (window_s <= 0.0) throw std::invalid_argument("rate_from_counts: window <= 0");
  if (n == n_windows && n > 0)
    throw std::domain_error("rate_from_counts: saturated (n = N)");
  RateEstimate r;
  const double frac = static_cast<double>(n) / static_cast<double>(n_windows);
  r.value = n == 0 ? 0.0 : -std::log1p(-frac) / window_s;
  const auto [lo, hi] = stats::garwood_interval(n);
  const double t = static_cast<double>(n_windows) * window_s;
  r.err_lo = r.value - (lo / t);
  r.err_hi = (hi / t) - r.value;
  return r;
}

std::uint64_t InterArrivalSet::coincidences(int window_cycles) const {
  const std::int64_t half = (window_cycles - 1) / 2;
  std::uint64_t n = 0;
  for (const auto& d : delays)
    if (d.delta_cycles && std::llabs(*d.delta_cycles) <= half) ++n;
  return n;
}

InterArrivalSet nearest_delays(const std::vector<CycleStamp>& events,
                               const std::vector<CycleStamp>& pulses,
                               double cycle_duration_s) {
  InterArrivalSet out;
  out.cycle_duration_s = cycle_duration_s;
  out.delays.reserve(events.size());

  // group pulse cycles by entry (pulses sorted by (entry, cycle))
  for (const auto& ev : events) {
    // binary search the pulse range of this entry
    const auto lo = std::lower_bound(
        pulses.begin(), pulses.end(), ev.entry,
        [](const CycleStamp& p, std::uint64_t e) { return p.entry < e; });
    const auto hi = std::upper_bound(
        pulses.begin(), pulses.end(), ev.entry,
        [](std::uint64_t e, const CycleStamp& p) { return e < p.entry; });
    InterArrival ia;
    if (lo != hi) {
      const auto it = std::lower_bound(
          lo, hi, ev.cycle,
          [](const CycleStamp& p, std::uint64_t c) { return p.cycle < c; });
      std::int64_t best = 0;
      bool have = false;
      auto consider = [&](std::int64_t delta) {
        if (!have || std::llabs(delta) < std::llabs(best) ||
            (std::llabs(delta) == std::llabs(best) && delta < best)) {
          best = delta;
          have = true;
        }
      };
      if (it != hi)
        consider(static_cast<std::int64_t>(it->cycle) - static_cast<std::int64_t>(ev.cycle));
      if (it != lo) {
        const auto prev = std::prev(it);
        consider(static_cast<std::int64_t>(prev->cycle) - static_cast<std::int64_t>(ev.cycle));
      }
      ia.delta_cycles = best;
    }
    out.delays.push_back(ia);
  }
  return out;
}

RateEstimate accidental_rate(const RateEstimate& r_q, const RateEstimate& r_qs,
                             const RateEstimate& r_s, double window_s) {
  if (r_qs.value > r_q.value)
    throw std::domain_error("accidental_rate: r_QS exceeds r_Q");
  const double expm = std::expm1(r_s.value * window_s);
  RateEstimate out;
  out.value = (r_q.value - r_qs.value) * expm;
  // first-order propagation; r_S enters through the exponential factor
  const double d_ds = (r_q.value - r_qs.value) * window_s * std::exp(r_s.value * window_s);
  auto prop = [&](double eq, double eqs, double es) {
    return std::sqrt(expm * expm * (eq * eq + eqs * eqs) + d_ds * d_ds * es * es);
  };
  out.err_lo = prop(r_q.err_lo, r_qs.err_hi, r_s.err_lo);
  out.err_hi = prop(r_q.err_hi, r_qs.err_lo, r_s.err_hi);
  return out;
}

std::vector<double> background_histogram(double r_q, double r_qs_mu, double r_s,
                                         double bin_width_s,
                                         const std::vector<double>& bin_centers_s,
                                         double duration_s) {
  std::vector<double> out;
  out.reserve(bin_centers_s.size());
  const double scale = (r_q - r_qs_mu) * duration_s * std::sinh(r_s * bin_width_s);
  for (double t : bin_centers_s)
    out.push_back(scale * std::exp(-2.0 * r_s * std::fabs(t)));
  return out;
}

double CoverageInputs::coverage_err() const {
  const double c = coverage();
  const double rel2 = sigma_q_rel_err * sigma_q_rel_err +
                      sigma_qs_rel_err * sigma_qs_rel_err +
                      (eps_window > 0 ? (eps_window_err / eps_window) * (eps_window_err / eps_window) : 0.0) +
                      (eps_s > 0 ? (eps_s_err / eps_s) * (eps_s_err / eps_s) : 0.0);
  return c * std::sqrt(rel2);
}

RateLedger decompose_rates(const LedgerCounts& counts, const CoverageInputs& cov) {
  const double c = cov.coverage();
  if (c <= 0.0) throw std::domain_error("decompose_rates: zero coverage");
  RateLedger led;
  led.n_q = counts.n_q;
  led.n_s = counts.n_s_cycles;
  led.n_qs = counts.n_qs;
  led.duration_s = static_cast<double>(counts.n_cycles) * counts.cycle_duration_s;
  led.coverage = c;
  led.coverage_err = cov.coverage_err();

  led.r_q = rate_from_counts(counts.n_q, counts.n_cycles, counts.cycle_duration_s);
  led.r_s = rate_from_counts(counts.n_s_cycles, counts.n_cycles, counts.cycle_duration_s);
  const std::uint64_t n_qs_windows =
      counts.n_cycles / static_cast<std::uint64_t>(counts.window_cycles);
  const double window_s = counts.cycle_duration_s * counts.window_cycles;
  led.r_qs = rate_from_counts(counts.n_qs, n_qs_windows, window_s);

  led.r_qs_acc = accidental_rate(led.r_q, led.r_qs, led.r_s, window_s);
  led.r_qs_mu.value = led.r_qs.value - led.r_qs_acc.value;
  led.r_qs_mu.err_lo = std::sqrt(led.r_qs.err_lo * led.r_qs.err_lo +
                                 led.r_qs_acc.err_hi * led.r_qs_acc.err_hi);
  led.r_qs_mu.err_hi = std::sqrt(led.r_qs.err_hi * led.r_qs.err_hi +
                                 led.r_qs_acc.err_lo * led.r_qs_acc.err_lo);

  led.r_q_mu.value = led.r_qs_mu.value / c;
  const double cov_rel = led.coverage_err / c;
  led.r_q_mu.err_lo = led.r_q_mu.value *
                      std::sqrt(std::pow(led.r_qs_mu.err_lo / std::max(1e-300, led.r_qs_mu.value), 2) +
                                cov_rel * cov_rel);
  led.r_q_mu.err_hi = led.r_q_mu.value *
                      std::sqrt(std::pow(led.r_qs_mu.err_hi / std::max(1e-300, led.r_qs_mu.value), 2) +
                                cov_rel * cov_rel);

  led.r_q_other.value = led.r_q.value - led.r_q_mu.value;
  led.r_q_other.err_lo = std::sqrt(led.r_q.err_lo * led.r_q.err_lo +
                                   led.r_q_mu.err_hi * led.r_q_mu.err_hi);
  led.r_q_other.err_hi = std::sqrt(led.r_q.err_hi * led.r_q.err_hi +
                                   led.r_q_mu.err_lo * led.r_q_mu.err_lo);

  led.cosmic_fraction = led.r_q_mu.value / led.r_q.value;
  const double rq_rel = 0.5 * (led.r_q.err_lo + led.r_q.err_hi) / led.r_q.value;
  const double rmu_rel = led.r_q_mu.value > 0.0
                             ? 0.5 * (led.r_q_mu.err_lo + led.r_q_mu.err_hi) / led.r_q_mu.value
                             : 0.0;
  led.cosmic_fraction_err =
      led.cosmic_fraction * std::sqrt(rq_rel * rq_rel + rmu_rel * rmu_rel);
  return led;
}

std::vector<SnrRow> snr_vs_window(const InterArrivalSet& delays,
                                  const LedgerCounts& base_counts,
                                  const std::vector<int>& window_grid) {
  std::vector<SnrRow> rows;
  const double t = static_cast<double>(base_counts.n_cycles) * base_counts.cycle_duration_s;
  const double r_q = static_cast<double>(base_counts.n_q) / t;
  const double r_s = static_cast<double>(base_counts.n_s_cycles) / t;
  for (int w : window_grid) {
    if (w <= 0 || w % 2 == 0)
      throw std::invalid_argument("snr_vs_window: windows must be odd");
    SnrRow row;
    row.window_cycles = w;
    row.n_qs = delays.coincidences(w);
    const double window_s = base_counts.cycle_duration_s * w;
    const double r_qs = static_cast<double>(row.n_qs) / t;
    row.n_acc = std::max(0.0, (r_q - r_qs) * std::expm1(r_s * window_s) * t);
    row.snr = row.n_acc > 0.0 ? static_cast<double>(row.n_qs) / std::sqrt(row.n_acc) : 0.0;
    rows.push_back(row);
  }
  auto best = std::max_element(rows.begin(), rows.end(),
                               [](const SnrRow& a, const SnrRow& b) { return a.snr < b.snr; });
  if (best != rows.end()) best->argmax = true;
  return rows;
}

FluxEfficiencyEstimate estimate_flux_and_efficiency(
    const std::vector<double>& r_d, const std::vector<double>& r_ds,
    const geom::CrossSectionSet& xs, const std::vector<int>& detector_labels) {
  const std::size_t nd = detector_labels.size();
  if (r_d.size() != nd || r_ds.size() != nd || nd < 2)
    throw std::invalid_argument("estimate_flux_and_efficiency: need >= 2 detectors");
  bool any_signal = false;
  for (std::size_t i = 0; i < nd; ++i)
    if (r_d[i] > 0.0 && r_ds[i] > 0.0) any_signal = true;
  if (!any_signal)
    throw std::domain_error("estimate_flux_and_efficiency: no signal in rates");

  std::vector<double> cov_obs(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    if (r_d[i] <= 0.0) throw std::domain_error("estimate_flux_and_efficiency: zero detector rate");
    cov_obs[i] = r_ds[i] / r_d[i];
  }
  const double mean_obs = stats::mean(cov_obs);

  const int max_label = 1 + *std::max_element(detector_labels.begin(), detector_labels.end());
  auto model_coverage = [&](double eps, std::size_t i) {
    std::vector<double> eff(static_cast<std::size_t>(std::max(max_label, xs.n_labels)), eps);
    return geom::coverage_of(detector_labels[i], xs, eff, 1.0);
  };
  // check the geometry provides coverage at all
  double probe = 0.0;
  for (std::size_t i = 0; i < nd; ++i) probe += model_coverage(1.0, i);
  if (probe <= 0.0)
    throw std::domain_error("estimate_flux_and_efficiency: degenerate geometry (no coverage)");

  auto miss = [&](double eps) {
    double m = 0.0;
    for (std::size_t i = 0; i < nd; ++i) m += model_coverage(eps, i);
    m /= static_cast<double>(nd);
    return (m - mean_obs) * (m - mean_obs);
  };
  const double eps = num::minimize_scalar(miss, 1e-3, 1.0, 1e-8);

  FluxEfficiencyEstimate out;
  out.efficiency = eps;
  out.coverage_observed = cov_obs;
  out.coverage_model.resize(nd);
  std::vector<double> eff(static_cast<std::size_t>(std::max(max_label, xs.n_labels)), eps);
  std::vector<double> phi_d(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    out.coverage_model[i] = model_coverage(eps, i);
    const double denom = eps * geom::sigma_coincidence_eff(detector_labels[i], xs, eff);
    phi_d[i] = denom > 0.0 ? r_ds[i] / denom : 0.0;
  }
  out.flux = stats::mean(phi_d);
  out.flux_err = std::sqrt(stats::variance(phi_d) / static_cast<double>(nd));
  // efficiency spread mapped through the mean coverage sensitivity
  const double dc = 1e-3;
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < nd; ++i) {
    m0 += model_coverage(eps, i);
    m1 += model_coverage(std::min(1.0, eps + dc), i);
  }
  const double slope = (m1 - m0) / (static_cast<double>(nd) * dc);
  const double cov_sd = std::sqrt(stats::variance(cov_obs) / static_cast<double>(nd));
  out.efficiency_err = slope > 0.0 ? cov_sd / slope : 0.0;
  return out;
}

}  // namespace crq::coin
