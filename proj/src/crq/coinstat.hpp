#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "crq/geometry.hpp"

namespace crq::coin {

struct WindowConfig {
  int coincidence_window_cycles = 3;  // odd, centered
  double cycle_duration_s = 15.274e-6;

  double window_s() const {
    return coincidence_window_cycles * cycle_duration_s;
  }
  void validate() const;
};

struct RateEstimate {
  double value = 0.0;   // 1/s
  double err_lo = 0.0;  // absolute, downward
  double err_hi = 0.0;  // absolute, upward
};

// r = -ln(1 - n/N) / window with Garwood count errors propagated.
RateEstimate rate_from_counts(std::uint64_t n, std::uint64_t n_windows, double window_s);

// A global cycle coordinate: entry index plus cycle within the entry.
struct CycleStamp {
  std::uint64_t entry = 0;
  std::uint64_t cycle = 0;
};

// Signed inter-arrival delay in cycles; empty when the entry has no pulses.
struct InterArrival {
  std::optional<std::int64_t> delta_cycles;
};

struct InterArrivalSet {
  std::vector<InterArrival> delays;  // one per event
  double cycle_duration_s = 0.0;

  std::uint64_t coincidences(int window_cycles) const;
};

// Per event, the delay to the nearest-in-time pulse within the same entry;
// equidistant pulses resolve toward the earlier one.  Pulse cycles must be
// sorted per entry.
InterArrivalSet nearest_delays(const std::vector<CycleStamp>& events,
                               const std::vector<CycleStamp>& pulses,
                               double cycle_duration_s);

// Accidental-coincidence rate (r_Q - r_QS)(exp(r_S dt) - 1) with first-order
// error propagation.
RateEstimate accidental_rate(const RateEstimate& r_q, const RateEstimate& r_qs,
                             const RateEstimate& r_s, double window_s);

// Expected background counts per inter-arrival bin:
//   (r_Q - r_QS_mu) * exp(-2 r_S |dt|) * sinh(r_S * bin) * T
std::vector<double> background_histogram(double r_q, double r_qs_mu, double r_s,
                                         double bin_width_s,
                                         const std::vector<double>& bin_centers_s,
                                         double duration_s);

struct RateLedger {
  std::uint64_t n_q = 0, n_s = 0, n_qs = 0;
  double duration_s = 0.0;
  RateEstimate r_q, r_s, r_qs;
  RateEstimate r_qs_acc, r_qs_mu, r_q_mu, r_q_other;
  double coverage = 0.0, coverage_err = 0.0;
  double cosmic_fraction = 0.0, cosmic_fraction_err = 0.0;
  double flux = 0.0, flux_err = 0.0;
};

struct CoverageInputs {
  double sigma_q_cm2 = 0.0;
  double sigma_qs_cm2 = 0.0;
  double eps_window = 0.94;  // coincidence-identification efficiency
  double eps_s = 0.987;      // collective detector efficiency
  double sigma_q_rel_err = 0.0;
  double sigma_qs_rel_err = 0.0;
  double eps_window_err = 0.0;
  double eps_s_err = 0.0;

  double coverage() const { return eps_window * eps_s * sigma_qs_cm2 / sigma_q_cm2; }
  double coverage_err() const;
};

struct LedgerCounts {
  std::uint64_t n_q = 0;        // qubit events
  std::uint64_t n_s_cycles = 0; // cycles with at least one accepted pulse
  std::uint64_t n_qs = 0;       // coincidences within the window
  std::uint64_t n_cycles = 0;   // live cycles observed
  double cycle_duration_s = 0.0;
  int window_cycles = 3;
};

RateLedger decompose_rates(const LedgerCounts& counts, const CoverageInputs& cov);

struct SnrRow {
  int window_cycles = 0;
  std::uint64_t n_qs = 0;
  double n_acc = 0.0;
  double snr = 0.0;
  bool argmax = false;
};

std::vector<SnrRow> snr_vs_window(const InterArrivalSet& delays,
                                  const LedgerCounts& base_counts,
                                  const std::vector<int>& window_grid);

struct FluxEfficiencyEstimate {
  double efficiency = 0.0;
  double efficiency_err = 0.0;
  double flux = 0.0;
  double flux_err = 0.0;
  std::vector<double> coverage_observed;  // per detector
  std::vector<double> coverage_model;
};

// Shared-efficiency fit of observed coverages r_dS / r_d against the
// exclusive-cross-section model, then flux from the mean of the six
// any-coincidence rates.
FluxEfficiencyEstimate estimate_flux_and_efficiency(
    const std::vector<double>& r_d, const std::vector<double>& r_ds,
    const geom::CrossSectionSet& xs, const std::vector<int>& detector_labels);

}  // namespace crq::coin
