#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "crq/streamsim.hpp"

namespace crq::det {

// Cross-correlation template: a zero-mean one-sided exponential.  The first
// `flat_half` samples are flat (local-baseline subtraction); the tail decays
// with `decay_tau`.
struct FilterTemplate {
  int length = 1648;
  int flat_half = 824;
  double decay_tau_s = 5e-3;
  double cycle_duration_s = 15.274e-6;
  std::vector<double> values;  // zero-mean

  double mean_offset = 0.0;  // subtracted constant
};

FilterTemplate make_template(double cycle_duration_s, int length = 1648,
                             int flat_half = 824, double decay_tau_s = 5e-3);

// counts[c] = number of qubits with a conditioned decay at cycle c.
std::vector<std::uint16_t> relaxation_series(const sim::ShotMatrix& shots);

// Generic discrete cross-correlation; X[i] is the filter response for an
// onset at cycle i, defined for i in [flat_half, n - (length - flat_half)].
// O(n * length); used as the oracle and for short series.
std::vector<double> cross_correlate_direct(const std::vector<std::uint16_t>& counts,
                                           const FilterTemplate& tpl);

// O(n) evaluation using running sums for the flat part and a damped
// recurrence for the exponential tail; matches the direct form to roundoff.
std::vector<double> cross_correlate(const std::vector<std::uint16_t>& counts,
                                    const FilterTemplate& tpl);

struct Event {
  std::uint64_t entry = 0;
  std::uint32_t onset_cycle = 0;
  std::int64_t time_ns = 0;
  double peak = 0.0;
};

struct EventCatalog {
  std::vector<Event> events;      // peaks above the accept threshold
  std::vector<Event> candidates;  // peaks above the candidate threshold
  double candidate_threshold = 50.0;
  double accept_threshold = 105.0;
  std::uint32_t min_separation_cycles = 0;
  bool entry_too_short = false;
};

struct DetectConfig {
  double candidate_threshold = 50.0;
  double accept_threshold = 105.0;
  double min_separation_s = 12.5e-3;
};

EventCatalog detect_events(const std::vector<std::uint16_t>& counts,
                           const FilterTemplate& tpl, const DetectConfig& cfg,
                           std::uint64_t entry = 0, std::int64_t entry_start_ns = 0);

// Decay probability over a cycle window; n_prep = 0 yields the undefined
// marker (NaN) rather than zero.
struct DecayProbability {
  double p = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t n_prep = 0;
  std::uint64_t n_decay = 0;
  bool defined() const { return n_prep > 0; }
};
DecayProbability decay_probability(const sim::ShotMatrix& shots, std::uint64_t lo,
                                   std::uint64_t hi, int qubit);

// A-free decay-rate change from Eq.-style probabilities; p_t = 1 saturates to
// +infinity.  NaN inputs propagate.
double delta_gamma(double p_t, double p_pre, double delta_eff_s);

struct RecoveryFit {
  double tau_s = std::numeric_limits<double>::quiet_NaN();
  double amplitude = 0.0;
  double residual = 0.0;
  bool ok = false;
};
// Least-squares exponential fit over post-onset bins (bin centers).
RecoveryFit fit_recovery(const std::vector<double>& dgamma_series, double bin_duration_s,
                         int min_bins = 5);

struct DynamicsConfig {
  std::uint64_t pre_trigger_cycles = 1880;
  std::uint64_t pre_trigger_gap_cycles = 1899;  // window ends this far before onset
  std::uint32_t bin_cycles = 40;
  int post_bins = 40;
  double participation_threshold = 2.0e5;  // 1/s, = 1/(5 us)
};

struct EventDynamics {
  std::vector<double> p_pre;                        // per qubit (NaN undefined)
  std::vector<std::vector<double>> dgamma_t;        // per qubit, post-onset bins
  std::vector<double> dgamma_init;                  // first post-onset bin
  std::vector<double> tau_s;                        // fitted recovery (NaN = no fit)
  std::vector<bool> participation;
  bool pre_window_ok = true;  // false when the baseline window crosses the entry edge
};

EventDynamics extract_dynamics(const sim::ShotMatrix& shots, std::uint32_t onset_cycle,
                               const std::vector<sim::QubitParams>& qubits,
                               const DynamicsConfig& cfg);

struct ParticipationHistogram {
  std::vector<double> total;   // per multiplicity 0..n_qubits
  std::vector<double> cosmic;  // tagged counts scaled by 1/coverage
  std::vector<double> other;   // total - cosmic
};

ParticipationHistogram participation_histogram(const std::vector<int>& multiplicities,
                                               const std::vector<bool>& coincidence_tag,
                                               int n_qubits, double coverage);

}  // namespace crq::det
