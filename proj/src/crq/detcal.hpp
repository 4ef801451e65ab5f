#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "crq/labels.hpp"
#include "crq/numerics.hpp"

namespace crq::detcal {

// Pulse-amplitude response: V_adc = a * E_s with Gaussian resolution
// sigma(E) = b * sqrt(E0 * E) around the deposited energy.
struct ResponseParams {
  std::string label;
  double a_adc_per_mev = 1.0;
  double b_resolution = 0.0;  // fractional, at the reference energy
  double v_lo_adc = 0.0;
  double v_hi_adc = 1e18;
};

inline constexpr double kReferenceEnergyMev = 5.0;

inline double resolution_sigma_mev(double b, double e_mev) {
  return b * std::sqrt(kReferenceEnergyMev * e_mev);
}

// Density sampled on a uniform grid starting at zero.
struct GridPdf {
  double step = 0.0;
  std::vector<double> density;  // at x = (i + 0.5) * step

  double total() const {
    double s = 0.0;
    for (double d : density) s += d;
    return s * step;
  }
  // integral of the density over [lo, hi]
  double integral(double lo, double hi) const;
};

struct SpectrumHistogram {
  std::string detector;
  std::string combination;
  std::vector<double> edges_adc;  // strictly increasing
  std::vector<double> counts;     // edges.size() - 1 entries
};

// Build a deposit PDF on the standard convolution grid (2048 points spanning
// [0, 1.5 * max_e]) from raw per-muon deposit energies.
GridPdf deposit_pdf(const std::vector<double>& energies_mev, int grid_points = 2048);

// Smeared, voltage-referred energy density P(E_s); b = 0 is the identity.
// The Gaussian kernel is truncated below zero and renormalized per source
// energy so no probability leaks to negative amplitudes.
GridPdf smear_pdf(const GridPdf& deposit, double b);

// Amplitude density P(V_adc) = P(E_s = V/a) / a on the rescaled grid.
GridPdf amplitude_pdf(const GridPdf& deposit, const ResponseParams& params);

// Expected counts per amplitude bin for a process with rate `rate_per_s`
// observed for `duration_s`.
std::vector<double> expected_counts(const GridPdf& amp_pdf, double rate_per_s,
                                    double duration_s,
                                    const std::vector<double>& edges_adc);

// Poisson deviance -log L = sum E - O + O log O - O log E.  Returns +inf when
// some expected value is 0 with a non-zero observation.
double poisson_deviance(const std::vector<double>& expected,
                        const std::vector<double>& observed);

// One coincidence spectrum to fit: the deposit PDF of detector `det` among
// muons tagged with combination `combo`, the combination's unconstrained
// cross-section, and the observed histogram.
struct FitSpectrum {
  int det = 0;            // registry index of the spectated detector
  double sigma_cm2 = 0.0; // inclusive cross-section of the combination
  int fold = 1;           // number of detectors in the combination
  GridPdf deposit;        // P(E) for this (combination, detector)
  SpectrumHistogram observed;
};

struct FitConfig {
  double duration_s = 0.0;
  double init_eff = 0.9;
  double init_flux = 0.012;
  int max_evals = 6000;
  bool estimate_errors = true;
};

struct FitResult {
  std::vector<ResponseParams> params;  // fitted a, b per detector
  std::vector<double> a_err, b_err;
  double efficiency = 0.0;  // shared nuisance
  double flux = 0.0;        // nuisance
  double cost = 0.0;
  int evals = 0;
  bool converged = false;
};

// Simultaneous Poisson-deviance fit of {a_k, b_k} plus shared-efficiency and
// flux nuisance parameters over the supplied spectra.
FitResult fit_response(const std::vector<FitSpectrum>& spectra,
                       const std::vector<ResponseParams>& init,
                       const FitConfig& cfg);

}  // namespace crq::detcal
