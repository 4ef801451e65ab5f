#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crq/detcal.hpp"
#include "crq/rng.hpp"

namespace crq::sim {

struct TimebaseConfig {
  double cycle_duration_s = 15.274e-6;
  std::uint64_t cycles_per_entry = 1'000'000;
  double inter_entry_gap_s = 12.0;
  std::uint64_t ref_pulse_period = 100;  // cycles between reference pulses
  double wait_time_s = 10.2e-6;          // post-readout wait inside a cycle
  double clock_skew = 0.0;               // fractional detector-clock drift

  double entry_live_s() const {
    return cycle_duration_s * static_cast<double>(cycles_per_entry);
  }
  std::int64_t entry_start_ns(std::uint64_t entry) const;
  void validate() const;
};

struct QubitParams {
  std::string label;
  double baseline_gamma = 2.0e4;    // 1/s
  double recovery_tau_s = 6.0e-3;
  double effective_delay_s = 3.0e-6;
  double fidelity_a = 1.0;
};

enum class BurstSource : std::uint8_t { Cosmic = 0, Other = 1 };

struct BurstTruth {
  std::uint64_t entry = 0;
  std::uint32_t onset_cycle = 0;
  std::int64_t onset_time_ns = 0;
  BurstSource source = BurstSource::Other;
  std::vector<double> dgamma;   // per qubit initial decay-rate change, 1/s
  std::int64_t linked_muon = -1;  // chip-deposit row for cosmic bursts
};

// Per-event severity model: a fraction of events raise every qubit, the rest
// touch qubits independently.  Initial decay-rate changes are log-uniform.
struct PopulationModel {
  double full_fraction = 0.45;
  double dgamma_full_lo = 1.2e6, dgamma_full_hi = 3.0e6;        // 1/s
  double dgamma_partial_lo = 1.2e5, dgamma_partial_hi = 2.5e6;  // 1/s
  std::vector<double> partial_participation;  // per qubit

  double marginal_participation(std::size_t q) const {
    return full_fraction + (1.0 - full_fraction) * partial_participation[q];
  }
};

struct TruthConfig {
  PopulationModel cosmic;
  PopulationModel other;
  double r_other_per_s = 0.0;
};

// Single-shot readout bits for one entry, one plane per qubit (1 = ground).
class ShotMatrix {
 public:
  ShotMatrix() = default;
  ShotMatrix(std::uint64_t entry, std::uint64_t n_cycles, int n_qubits,
             std::int64_t start_ns);

  bool ground(int qubit, std::uint64_t cycle) const {
    const auto& w = words_[static_cast<std::size_t>(qubit)];
    return (w[cycle >> 6] >> (cycle & 63)) & 1ull;
  }
  void set_ground(int qubit, std::uint64_t cycle) {
    words_[static_cast<std::size_t>(qubit)][cycle >> 6] |= 1ull << (cycle & 63);
  }

  // conditioned decay at cycle c: ground(c) and ground(c-1)
  bool decay(int qubit, std::uint64_t cycle) const {
    return cycle > 0 && ground(qubit, cycle) && ground(qubit, cycle - 1);
  }
  // decay and preparation counts over [lo, hi)
  void count_window(int qubit, std::uint64_t lo, std::uint64_t hi,
                    std::uint64_t& n_prep, std::uint64_t& n_decay) const;

  std::uint64_t entry() const { return entry_; }
  std::uint64_t n_cycles() const { return n_cycles_; }
  int n_qubits() const { return n_qubits_; }
  std::int64_t start_ns() const { return start_ns_; }
  const std::vector<std::uint64_t>& plane(int qubit) const {
    return words_[static_cast<std::size_t>(qubit)];
  }
  std::vector<std::uint64_t>& plane(int qubit) {
    return words_[static_cast<std::size_t>(qubit)];
  }

 private:
  std::uint64_t entry_ = 0;
  std::uint64_t n_cycles_ = 0;
  int n_qubits_ = 0;
  std::int64_t start_ns_ = 0;
  std::vector<std::vector<std::uint64_t>> words_;
};

struct PulseRecord {
  int detector = 0;
  std::int64_t timestamp_ns = 0;  // on the 4 ns digitizer grid
  double amplitude_adc = 0.0;
};

// A deposition pattern available to the stream generators: which volumes got
// how much energy from one transported muon.
struct DepositPattern {
  std::vector<std::pair<int, double>> deposits;  // (label index, MeV)
};

// Poisson burst truth for a range of entries.  Cosmic bursts arrive at
// sigma_q * flux over live time and link to a chip-deposit row; other bursts
// arrive at r_other with no detector linkage.
std::vector<BurstTruth> simulate_truth(double sigma_q_cm2, double flux_per_s_cm2,
                                       const TruthConfig& truth,
                                       const TimebaseConfig& tb,
                                       std::uint64_t entry_begin, std::uint64_t entry_end,
                                       std::size_t n_qubits, std::size_t n_chip_rows,
                                       std::uint64_t seed);

// Readout bit stream for one entry given the bursts that fall inside it.
ShotMatrix render_shots(const std::vector<BurstTruth>& bursts_in_entry,
                        const std::vector<QubitParams>& qubits,
                        const TimebaseConfig& tb, std::uint64_t entry,
                        std::uint64_t seed);

// Detector pulses for a list of cycle-tagged deposit patterns.
std::vector<PulseRecord> render_pulses(
    const std::vector<std::pair<std::uint32_t, const DepositPattern*>>& arrivals,
    const std::vector<detcal::ResponseParams>& responses,
    const std::vector<double>& efficiencies, const TimebaseConfig& tb,
    std::uint64_t entry, Rng& rng);

// Reference pulse timestamps for one entry (cycles_per_entry / period pulses).
std::vector<std::int64_t> emit_reference_pulses(const TimebaseConfig& tb,
                                                std::uint64_t entry);

std::int64_t snap_to_adc_grid(double t_ns);

// Pulse timestamp for a deposit in a given cycle, through the (possibly
// skewed) detector clock.
std::int64_t pulse_timestamp_ns(const TimebaseConfig& tb, std::uint64_t entry,
                                std::uint32_t cycle, double offset_in_cycle);

}  // namespace crq::sim
