#include "crq/streamsim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crq::sim {

std::int64_t TimebaseConfig::entry_start_ns(std::uint64_t entry) const {
  const double period_ns = (entry_live_s() + inter_entry_gap_s) * 1e9;
  return static_cast<std::int64_t>(std::llround(period_ns * static_cast<double>(entry)));
}

void TimebaseConfig::validate() const {
  if (cycle_duration_s <= 0.0) throw std::invalid_argument("timebase: cycle_duration <= 0");
  if (ref_pulse_period == 0 || cycles_per_entry % ref_pulse_period != 0)
    throw std::invalid_argument(
        "timebase: cycles_per_entry must be divisible by ref_pulse_period");
}

ShotMatrix::ShotMatrix(std::uint64_t entry, std::uint64_t n_cycles, int n_qubits,
                       std::int64_t start_ns)
    : entry_(entry), n_cycles_(n_cycles), n_qubits_(n_qubits), start_ns_(start_ns) {
  const std::size_t words = static_cast<std::size_t>((n_cycles + 63) / 64);
  words_.assign(static_cast<std::size_t>(n_qubits), std::vector<std::uint64_t>(words, 0));
}

void ShotMatrix::count_window(int qubit, std::uint64_t lo, std::uint64_t hi,
                              std::uint64_t& n_prep, std::uint64_t& n_decay) const {
  n_prep = n_decay = 0;
  if (hi > n_cycles_) hi = n_cycles_;
  if (lo >= hi) return;
  for (std::uint64_t c = std::max<std::uint64_t>(lo, 1); c < hi; ++c) {
    if (!ground(qubit, c - 1)) continue;  // unconditioned cycle
    ++n_prep;
    if (ground(qubit, c)) ++n_decay;
  }
}

namespace {

void draw_dgamma(const PopulationModel& pop, std::size_t n_qubits, Rng& rng,
                 std::vector<double>& out) {
  out.assign(n_qubits, 0.0);
  const bool full = rng.uniform() < pop.full_fraction;
  for (std::size_t q = 0; q < n_qubits; ++q) {
    double lo, hi;
    if (full) {
      lo = pop.dgamma_full_lo;
      hi = pop.dgamma_full_hi;
    } else {
      const double pq = q < pop.partial_participation.size()
                            ? pop.partial_participation[q]
                            : 0.5;
      if (rng.uniform() >= pq) continue;
      lo = pop.dgamma_partial_lo;
      hi = pop.dgamma_partial_hi;
    }
    out[q] = lo * std::exp(rng.uniform() * std::log(hi / lo));
  }
}

}  // namespace

std::vector<BurstTruth> simulate_truth(double sigma_q_cm2, double flux_per_s_cm2,
                                       const TruthConfig& truth,
                                       const TimebaseConfig& tb,
                                       std::uint64_t entry_begin, std::uint64_t entry_end,
                                       std::size_t n_qubits, std::size_t n_chip_rows,
                                       std::uint64_t seed) {
  if (sigma_q_cm2 < 0.0 || flux_per_s_cm2 < 0.0 || truth.r_other_per_s < 0.0)
    throw std::invalid_argument("simulate_truth: negative rate inputs");
  const double r_cosmic = sigma_q_cm2 * flux_per_s_cm2;
  const double live = tb.entry_live_s();
  std::vector<BurstTruth> out;
  for (std::uint64_t e = entry_begin; e < entry_end; ++e) {
    Rng rng(seed, RngDomain::TruthEvents, e);
    const std::uint64_t n_cosmic =
        (r_cosmic > 0.0 && n_chip_rows > 0) ? rng.poisson(r_cosmic * live) : 0;
    const std::uint64_t n_other =
        truth.r_other_per_s > 0.0 ? rng.poisson(truth.r_other_per_s * live) : 0;
    for (std::uint64_t k = 0; k < n_cosmic + n_other; ++k) {
      BurstTruth b;
      b.entry = e;
      b.onset_cycle = static_cast<std::uint32_t>(
          std::min<std::uint64_t>(tb.cycles_per_entry - 1,
                                  static_cast<std::uint64_t>(rng.uniform() *
                                                             static_cast<double>(tb.cycles_per_entry))));
      b.onset_time_ns = tb.entry_start_ns(e) +
                        static_cast<std::int64_t>(std::llround(
                            (static_cast<double>(b.onset_cycle) + 0.5) *
                            tb.cycle_duration_s * 1e9));
      if (k < n_cosmic) {
        b.source = BurstSource::Cosmic;
        b.linked_muon = static_cast<std::int64_t>(rng.uniform() *
                                                  static_cast<double>(n_chip_rows));
        if (b.linked_muon >= static_cast<std::int64_t>(n_chip_rows))
          b.linked_muon = static_cast<std::int64_t>(n_chip_rows) - 1;
        draw_dgamma(truth.cosmic, n_qubits, rng, b.dgamma);
      } else {
        b.source = BurstSource::Other;
        draw_dgamma(truth.other, n_qubits, rng, b.dgamma);
      }
      out.push_back(std::move(b));
    }
  }
  std::sort(out.begin(), out.end(), [](const BurstTruth& a, const BurstTruth& b) {
    return a.onset_time_ns < b.onset_time_ns;
  });
  return out;
}

ShotMatrix render_shots(const std::vector<BurstTruth>& bursts_in_entry,
                        const std::vector<QubitParams>& qubits,
                        const TimebaseConfig& tb, std::uint64_t entry,
                        std::uint64_t seed) {
  const std::uint64_t n = tb.cycles_per_entry;
  const double dtc = tb.cycle_duration_s;
  ShotMatrix shots(entry, n, static_cast<int>(qubits.size()), tb.entry_start_ns(entry));

  for (std::size_t q = 0; q < qubits.size(); ++q) {
    const auto& qp = qubits[q];
    Rng rng(seed, RngDomain::Shots, entry * 1024 + q);
    auto& plane = shots.plane(static_cast<int>(q));

    // quiet-mode transition probabilities
    const double p_quiet = 1.0 - qp.fidelity_a * std::exp(-qp.baseline_gamma * qp.effective_delay_s);
    const double w_quiet = 1.0 - std::exp(-qp.baseline_gamma * tb.wait_time_s);
    // after an excited readout the state is uncertain through the wait; the
    // next readout is ground unless the qubit survived the wait and the delay
    const double pe_quiet = 1.0 - w_quiet * (1.0 - p_quiet);
    const std::uint64_t thr_g = Rng::bernoulli_threshold(p_quiet);
    const std::uint64_t thr_e = Rng::bernoulli_threshold(pe_quiet);

    // burst-active cycle spans for this qubit
    struct Span {
      std::uint64_t lo, hi;
    };
    std::vector<Span> spans;
    for (const auto& b : bursts_in_entry) {
      if (q >= b.dgamma.size() || b.dgamma[q] <= 0.0) continue;
      const double cut = qp.recovery_tau_s *
                         std::log(b.dgamma[q] / (1e-3 * qp.baseline_gamma) + 1.0);
      const auto span_cycles = static_cast<std::uint64_t>(cut / dtc) + 1;
      spans.push_back({b.onset_cycle, std::min(n, b.onset_cycle + span_cycles)});
    }
    std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) {
      return a.lo < b.lo;
    });

    // stationary initial state
    const double pi_g = pe_quiet / (1.0 - p_quiet + pe_quiet);
    bool state_ground = rng.uniform() < pi_g;

    std::uint64_t c = 0;
    std::size_t si = 0;
    while (c < n) {
      // next boundary where burst activity starts
      while (si < spans.size() && spans[si].hi <= c) ++si;
      const bool active = si < spans.size() && spans[si].lo <= c;
      std::uint64_t stop = n;
      if (si < spans.size()) stop = active ? spans[si].hi : spans[si].lo;
      if (!active) {
        // tight quiet loop
        for (; c < stop; ++c) {
          const bool ground = rng.next_u64() < (state_ground ? thr_g : thr_e);
          plane[c >> 6] |= static_cast<std::uint64_t>(ground) << (c & 63);
          state_ground = ground;
        }
      } else {
        for (; c < stop; ++c) {
          double gamma = qp.baseline_gamma;
          for (const auto& b : bursts_in_entry) {
            if (q >= b.dgamma.size() || b.dgamma[q] <= 0.0) continue;
            if (c < b.onset_cycle) continue;
            const double t = static_cast<double>(c - b.onset_cycle) * dtc;
            gamma += b.dgamma[q] * std::exp(-t / qp.recovery_tau_s);
          }
          const double p = 1.0 - qp.fidelity_a * std::exp(-gamma * qp.effective_delay_s);
          const double w = 1.0 - std::exp(-gamma * tb.wait_time_s);
          const double prob = state_ground ? p : 1.0 - w * (1.0 - p);
          const bool ground = rng.uniform() < prob;
          plane[c >> 6] |= static_cast<std::uint64_t>(ground) << (c & 63);
          state_ground = ground;
        }
      }
    }
  }
  return shots;
}

std::int64_t snap_to_adc_grid(double t_ns) {
  return 4 * static_cast<std::int64_t>(std::llround(t_ns / 4.0));
}

std::int64_t pulse_timestamp_ns(const TimebaseConfig& tb, std::uint64_t entry,
                                std::uint32_t cycle, double offset_in_cycle) {
  const double local_ns = (static_cast<double>(cycle) + offset_in_cycle) *
                          tb.cycle_duration_s * 1e9 * (1.0 + tb.clock_skew);
  return snap_to_adc_grid(static_cast<double>(tb.entry_start_ns(entry)) + local_ns);
}

std::vector<PulseRecord> render_pulses(
    const std::vector<std::pair<std::uint32_t, const DepositPattern*>>& arrivals,
    const std::vector<detcal::ResponseParams>& responses,
    const std::vector<double>& efficiencies, const TimebaseConfig& tb,
    std::uint64_t entry, Rng& rng) {
  std::vector<PulseRecord> out;
  for (const auto& [cycle, pattern] : arrivals) {
    for (const auto& [det, e_mev] : pattern->deposits) {
      if (rng.uniform() >= efficiencies[static_cast<std::size_t>(det)]) continue;
      const auto& rp = responses[static_cast<std::size_t>(det)];
      const double sigma = detcal::resolution_sigma_mev(rp.b_resolution, e_mev);
      const double e_s = std::max(0.0, e_mev + sigma * rng.normal());
      PulseRecord p;
      p.detector = det;
      p.amplitude_adc = rp.a_adc_per_mev * e_s;
      p.timestamp_ns = pulse_timestamp_ns(tb, entry, cycle, 0.5);
      out.push_back(p);
    }
  }
  std::sort(out.begin(), out.end(), [](const PulseRecord& a, const PulseRecord& b) {
    return a.timestamp_ns < b.timestamp_ns;
  });
  return out;
}

std::vector<std::int64_t> emit_reference_pulses(const TimebaseConfig& tb,
                                                std::uint64_t entry) {
  const std::uint64_t count = tb.cycles_per_entry / tb.ref_pulse_period;
  std::vector<std::int64_t> out;
  out.reserve(count);
  const double base = static_cast<double>(tb.entry_start_ns(entry));
  for (std::uint64_t k = 1; k <= count; ++k) {
    const double local_ns = static_cast<double>(k * tb.ref_pulse_period) *
                            tb.cycle_duration_s * 1e9 * (1.0 + tb.clock_skew);
    out.push_back(snap_to_adc_grid(base + local_ns));
  }
  return out;
}

}  // namespace crq::sim
