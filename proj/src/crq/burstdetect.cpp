#include "crq/burstdetect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crq::det {

FilterTemplate make_template(double cycle_duration_s, int length, int flat_half,
                             double decay_tau_s) {
  if (length <= flat_half || flat_half <= 0)
    throw std::invalid_argument("make_template: bad geometry");
  FilterTemplate tpl;
  tpl.length = length;
  tpl.flat_half = flat_half;
  tpl.decay_tau_s = decay_tau_s;
  tpl.cycle_duration_s = cycle_duration_s;
  tpl.values.assign(static_cast<std::size_t>(length), 0.0);
  const double rho = std::exp(-cycle_duration_s / decay_tau_s);
  double v = 1.0;
  for (int j = flat_half; j < length; ++j) {
    tpl.values[static_cast<std::size_t>(j)] = v;
    v *= rho;
  }
  double sum = 0.0;
  for (double x : tpl.values) sum += x;
  tpl.mean_offset = sum / static_cast<double>(length);
  for (double& x : tpl.values) x -= tpl.mean_offset;
  return tpl;
}

std::vector<std::uint16_t> relaxation_series(const sim::ShotMatrix& shots) {
  const std::uint64_t n = shots.n_cycles();
  std::vector<std::uint16_t> counts(n, 0);
  const std::size_t n_words = (n + 63) / 64;
  for (int q = 0; q < shots.n_qubits(); ++q) {
    const auto& plane = shots.plane(q);
    std::uint64_t carry = 0;  // bit 63 of the previous word
    for (std::size_t w = 0; w < n_words; ++w) {
      const std::uint64_t g = plane[w];
      std::uint64_t d = g & ((g << 1) | carry);  // ground(c) & ground(c-1)
      carry = g >> 63;
      while (d) {
        const int b = __builtin_ctzll(d);
        const std::uint64_t c = (static_cast<std::uint64_t>(w) << 6) + static_cast<unsigned>(b);
        if (c < n) ++counts[c];
        d &= d - 1;
      }
    }
  }
  if (!counts.empty()) counts[0] = 0;  // cycle 0 has no preparation info
  return counts;
}

std::vector<double> cross_correlate_direct(const std::vector<std::uint16_t>& counts,
                                           const FilterTemplate& tpl) {
  const std::int64_t n = static_cast<std::int64_t>(counts.size());
  const std::int64_t len = tpl.length, flat = tpl.flat_half;
  std::vector<double> x(counts.size(), 0.0);
  for (std::int64_t i = flat; i + (len - flat) <= n; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < len; ++j)
      s += tpl.values[static_cast<std::size_t>(j)] *
           static_cast<double>(counts[static_cast<std::size_t>(i - flat + j)]);
    x[static_cast<std::size_t>(i)] = s;
  }
  return x;
}

std::vector<double> cross_correlate(const std::vector<std::uint16_t>& counts,
                                    const FilterTemplate& tpl) {
  const std::int64_t n = static_cast<std::int64_t>(counts.size());
  const std::int64_t len = tpl.length, flat = tpl.flat_half;
  const std::int64_t tail = len - flat;
  std::vector<double> x(counts.size(), 0.0);
  if (n < len) return x;

  // X[i] = G[i] - m * S[i] with
  //   G[i] = sum_k rho^k counts[i+k]           (k < tail)
  //   S[i] = sum_j counts[i-flat+j]            (j < len)
  // computed right-to-left:  G[i] = counts[i] + rho G[i+1] - rho^tail counts[i+tail]
  const double rho = std::exp(-tpl.cycle_duration_s / tpl.decay_tau_s);
  const double rho_tail = std::pow(rho, static_cast<double>(tail));
  const double m = tpl.mean_offset;

  const std::int64_t i_max = n - tail;  // inclusive upper onset index
  std::vector<double> g(static_cast<std::size_t>(i_max) + 1, 0.0);
  {
    double acc = 0.0;
    for (std::int64_t k = tail - 1; k >= 0; --k)
      acc = static_cast<double>(counts[static_cast<std::size_t>(i_max + k)]) + rho * acc;
    g[static_cast<std::size_t>(i_max)] = acc;
    for (std::int64_t i = i_max - 1; i >= flat; --i)
      g[static_cast<std::size_t>(i)] =
          static_cast<double>(counts[static_cast<std::size_t>(i)]) +
          rho * g[static_cast<std::size_t>(i + 1)] -
          rho_tail * static_cast<double>(counts[static_cast<std::size_t>(i + tail)]);
  }
  // integer moving window sum over [i-flat, i+tail)
  std::uint64_t s = 0;
  for (std::int64_t j = 0; j < len; ++j) s += counts[static_cast<std::size_t>(j)];
  for (std::int64_t i = flat; i <= i_max; ++i) {
    x[static_cast<std::size_t>(i)] = g[static_cast<std::size_t>(i)] - m * static_cast<double>(s);
    if (i < i_max) {
      s += counts[static_cast<std::size_t>(i + tail)];
      s -= counts[static_cast<std::size_t>(i - flat)];
    }
  }
  return x;
}

EventCatalog detect_events(const std::vector<std::uint16_t>& counts,
                           const FilterTemplate& tpl, const DetectConfig& cfg,
                           std::uint64_t entry, std::int64_t entry_start_ns) {
  EventCatalog cat;
  cat.candidate_threshold = cfg.candidate_threshold;
  cat.accept_threshold = cfg.accept_threshold;
  cat.min_separation_cycles = static_cast<std::uint32_t>(
      std::ceil(cfg.min_separation_s / tpl.cycle_duration_s));
  if (static_cast<std::int64_t>(counts.size()) < tpl.length) {
    cat.entry_too_short = true;
    return cat;
  }
  const std::vector<double> x = cross_correlate(counts, tpl);

  // strict local maxima above the candidate threshold
  struct Peak {
    std::uint32_t idx;
    double value;
  };
  std::vector<Peak> peaks;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if (x[i] < cfg.candidate_threshold) continue;
    if (x[i] > x[i - 1] && x[i] > x[i + 1])
      peaks.push_back({static_cast<std::uint32_t>(i), x[i]});
  }
  // enforce minimum separation, keeping the taller peak
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    return a.value > b.value;
  });
  std::vector<Peak> kept;
  for (const auto& p : peaks) {
    bool ok = true;
    for (const auto& k : kept) {
      const std::uint32_t d = p.idx > k.idx ? p.idx - k.idx : k.idx - p.idx;
      if (d < cat.min_separation_cycles) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(p);
  }
  std::sort(kept.begin(), kept.end(), [](const Peak& a, const Peak& b) {
    return a.idx < b.idx;
  });
  for (const auto& p : kept) {
    Event ev;
    ev.entry = entry;
    ev.onset_cycle = p.idx;
    ev.time_ns = entry_start_ns + static_cast<std::int64_t>(std::llround(
                                      (static_cast<double>(p.idx) + 0.5) *
                                      tpl.cycle_duration_s * 1e9));
    ev.peak = p.value;
    cat.candidates.push_back(ev);
    if (p.value >= cfg.accept_threshold) cat.events.push_back(ev);
  }
  return cat;
}

DecayProbability decay_probability(const sim::ShotMatrix& shots, std::uint64_t lo,
                                   std::uint64_t hi, int qubit) {
  DecayProbability out;
  shots.count_window(qubit, lo, hi, out.n_prep, out.n_decay);
  if (out.n_prep > 0)
    out.p = static_cast<double>(out.n_decay) / static_cast<double>(out.n_prep);
  return out;
}

double delta_gamma(double p_t, double p_pre, double delta_eff_s) {
  if (std::isnan(p_t) || std::isnan(p_pre)) return std::numeric_limits<double>::quiet_NaN();
  if (p_t >= 1.0) return std::numeric_limits<double>::infinity();
  return std::log((1.0 - p_pre) / (1.0 - p_t)) / delta_eff_s;
}

RecoveryFit fit_recovery(const std::vector<double>& dgamma_series, double bin_duration_s,
                         int min_bins) {
  RecoveryFit fit;
  std::vector<double> t, y;
  for (std::size_t i = 0; i < dgamma_series.size(); ++i) {
    const double v = dgamma_series[i];
    if (std::isnan(v) || std::isinf(v)) continue;
    if (v <= 0.0) continue;
    t.push_back((static_cast<double>(i) + 0.5) * bin_duration_s);
    y.push_back(v);
  }
  if (static_cast<int>(t.size()) < min_bins) return fit;

  auto sse = [&](double log_tau) {
    const double tau = std::exp(log_tau);
    double se = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double e = std::exp(-t[i] / tau);
      se += e * e;
      sy += y[i] * e;
    }
    const double amp = se > 0.0 ? sy / se : 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double r = y[i] - amp * std::exp(-t[i] / tau);
      s += r * r;
    }
    return s;
  };
  const double lo = std::log(0.05 * bin_duration_s);
  const double hi = std::log(200.0 * bin_duration_s);
  const double log_tau = num::minimize_scalar(sse, lo, hi, 1e-10);
  fit.tau_s = std::exp(log_tau);
  double se = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double e = std::exp(-t[i] / fit.tau_s);
    se += e * e;
    sy += y[i] * e;
  }
  fit.amplitude = sy / se;
  fit.residual = sse(log_tau);
  fit.ok = true;
  return fit;
}

EventDynamics extract_dynamics(const sim::ShotMatrix& shots, std::uint32_t onset_cycle,
                               const std::vector<sim::QubitParams>& qubits,
                               const DynamicsConfig& cfg) {
  EventDynamics dyn;
  const int nq = shots.n_qubits();
  dyn.p_pre.assign(static_cast<std::size_t>(nq), std::numeric_limits<double>::quiet_NaN());
  dyn.dgamma_t.resize(static_cast<std::size_t>(nq));
  dyn.dgamma_init.assign(static_cast<std::size_t>(nq), std::numeric_limits<double>::quiet_NaN());
  dyn.tau_s.assign(static_cast<std::size_t>(nq), std::numeric_limits<double>::quiet_NaN());
  dyn.participation.assign(static_cast<std::size_t>(nq), false);

  const std::uint64_t pre_span = cfg.pre_trigger_gap_cycles + cfg.pre_trigger_cycles;
  if (onset_cycle < pre_span) {
    dyn.pre_window_ok = false;  // baseline window would cross the entry edge
    return dyn;
  }
  const std::uint64_t pre_lo = onset_cycle - pre_span;
  const std::uint64_t pre_hi = onset_cycle - cfg.pre_trigger_gap_cycles;

  for (int q = 0; q < nq; ++q) {
    const auto pre = decay_probability(shots, pre_lo, pre_hi, q);
    if (!pre.defined()) continue;
    dyn.p_pre[static_cast<std::size_t>(q)] = pre.p;
    const double delta_eff = qubits[static_cast<std::size_t>(q)].effective_delay_s;

    auto& series = dyn.dgamma_t[static_cast<std::size_t>(q)];
    series.assign(static_cast<std::size_t>(cfg.post_bins),
                  std::numeric_limits<double>::quiet_NaN());
    for (int b = 0; b < cfg.post_bins; ++b) {
      const std::uint64_t lo = onset_cycle + static_cast<std::uint64_t>(b) * cfg.bin_cycles;
      const std::uint64_t hi = lo + cfg.bin_cycles;
      if (hi > shots.n_cycles()) break;  // partial final bin dropped
      const auto pt = decay_probability(shots, lo, hi, q);
      if (!pt.defined()) continue;
      series[static_cast<std::size_t>(b)] = delta_gamma(pt.p, pre.p, delta_eff);
    }
    if (!series.empty()) dyn.dgamma_init[static_cast<std::size_t>(q)] = series[0];
    const double dgi = dyn.dgamma_init[static_cast<std::size_t>(q)];
    dyn.participation[static_cast<std::size_t>(q)] =
        !std::isnan(dgi) && dgi >= cfg.participation_threshold;
  }
  return dyn;
}

ParticipationHistogram participation_histogram(const std::vector<int>& multiplicities,
                                               const std::vector<bool>& coincidence_tag,
                                               int n_qubits, double coverage) {
  if (multiplicities.size() != coincidence_tag.size())
    throw std::invalid_argument("participation_histogram: size mismatch");
  ParticipationHistogram h;
  h.total.assign(static_cast<std::size_t>(n_qubits) + 1, 0.0);
  h.cosmic.assign(static_cast<std::size_t>(n_qubits) + 1, 0.0);
  h.other.assign(static_cast<std::size_t>(n_qubits) + 1, 0.0);
  for (std::size_t i = 0; i < multiplicities.size(); ++i) {
    const int m = std::clamp(multiplicities[i], 0, n_qubits);
    h.total[static_cast<std::size_t>(m)] += 1.0;
    if (coincidence_tag[i]) h.cosmic[static_cast<std::size_t>(m)] += 1.0 / coverage;
  }
  for (std::size_t m = 0; m < h.total.size(); ++m) h.other[m] = h.total[m] - h.cosmic[m];
  return h;
}

}  // namespace crq::det
