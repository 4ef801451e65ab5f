#include "crq/detcal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace crq::detcal {

double GridPdf::integral(double lo, double hi) const {
  if (step <= 0.0 || density.empty() || hi <= lo) return 0.0;
  // density is piecewise constant on cells [i*step, (i+1)*step)
  double sum = 0.0;
  const double top = step * static_cast<double>(density.size());
  lo = std::max(lo, 0.0);
  hi = std::min(hi, top);
  if (hi <= lo) return 0.0;
  const std::size_t i0 = static_cast<std::size_t>(lo / step);
  const std::size_t i1 = std::min(density.size() - 1, static_cast<std::size_t>(hi / step));
  for (std::size_t i = i0; i <= i1; ++i) {
    const double a = std::max(lo, step * static_cast<double>(i));
    const double b = std::min(hi, step * static_cast<double>(i + 1));
    if (b > a) sum += density[i] * (b - a);
  }
  return sum;
}

GridPdf deposit_pdf(const std::vector<double>& energies_mev, int grid_points) {
  if (energies_mev.empty()) throw std::invalid_argument("deposit_pdf: no energies");
  double max_e = 0.0;
  for (double e : energies_mev) max_e = std::max(max_e, e);
  GridPdf pdf;
  pdf.step = 1.5 * max_e / static_cast<double>(grid_points);
  pdf.density.assign(static_cast<std::size_t>(grid_points), 0.0);
  const double w = 1.0 / (static_cast<double>(energies_mev.size()) * pdf.step);
  for (double e : energies_mev) {
    auto i = static_cast<std::size_t>(e / pdf.step);
    if (i >= pdf.density.size()) i = pdf.density.size() - 1;
    pdf.density[i] += w;
  }
  return pdf;
}

GridPdf smear_pdf(const GridPdf& deposit, double b) {
  if (b < 0.0) throw std::invalid_argument("smear_pdf: b must be >= 0");
  if (b == 0.0) return deposit;  // no-smear limit: pure identity
  GridPdf out;
  out.step = deposit.step;
  out.density.assign(deposit.density.size(), 0.0);
  const double step = deposit.step;
  const auto n = static_cast<long>(deposit.density.size());
  for (long j = 0; j < n; ++j) {
    const double mass = deposit.density[static_cast<std::size_t>(j)] * step;
    if (mass <= 0.0) continue;
    const double e = (static_cast<double>(j) + 0.5) * step;
    const double sigma = resolution_sigma_mev(b, e);
    if (sigma < 0.75 * step) {
      // kernel narrower than the grid: keep the mass in place
      out.density[static_cast<std::size_t>(j)] += mass / step;
      continue;
    }
    const long reach = std::min<long>(2 * n, static_cast<long>(8.0 * sigma / step) + 1);
    // Gaussian weights via the incremental-square recurrence:
    //   w_{k+1} = w_k * r_k,  r_{k+1} = r_k * rr  with q = step^2 / (2 sigma^2)
    const double q = step * step / (2.0 * sigma * sigma);
    const double rr = std::exp(-2.0 * q);
    // weight sum over virtual indices i = j + k with i >= 0 (truncation at
    // E_s < 0, renormalized per source energy)
    double norm = 1.0;
    double wk = 1.0, rk = std::exp(-q);
    for (long k = 1; k <= reach; ++k) {
      wk *= rk;
      rk *= rr;
      if (j + k >= 0) norm += wk;  // always true; kept for symmetry
      if (j - k >= 0) norm += wk;
      if (wk < 1e-14) break;
    }
    const double scale = mass / (norm * step);
    out.density[static_cast<std::size_t>(j)] += scale;
    wk = 1.0;
    rk = std::exp(-q);
    for (long k = 1; k <= reach; ++k) {
      wk *= rk;
      rk *= rr;
      const double d = wk * scale;
      if (j + k < n) out.density[static_cast<std::size_t>(j + k)] += d;
      if (j - k >= 0) out.density[static_cast<std::size_t>(j - k)] += d;
      if (wk < 1e-14) break;
    }
  }
  return out;
}

GridPdf amplitude_pdf(const GridPdf& deposit, const ResponseParams& params) {
  if (params.a_adc_per_mev <= 0.0)
    throw std::invalid_argument("amplitude_pdf: a must be positive");
  GridPdf smeared = smear_pdf(deposit, params.b_resolution);
  GridPdf out;
  out.step = smeared.step * params.a_adc_per_mev;
  out.density.resize(smeared.density.size());
  for (std::size_t i = 0; i < smeared.density.size(); ++i)
    out.density[i] = smeared.density[i] / params.a_adc_per_mev;
  return out;
}

std::vector<double> expected_counts(const GridPdf& amp_pdf, double rate_per_s,
                                    double duration_s,
                                    const std::vector<double>& edges_adc) {
  if (edges_adc.size() < 2) throw std::invalid_argument("expected_counts: need edges");
  std::vector<double> out(edges_adc.size() - 1, 0.0);
  const double scale = rate_per_s * duration_s;
  for (std::size_t i = 0; i + 1 < edges_adc.size(); ++i)
    out[i] = scale * amp_pdf.integral(edges_adc[i], edges_adc[i + 1]);
  return out;
}

double poisson_deviance(const std::vector<double>& expected,
                        const std::vector<double>& observed) {
  if (expected.size() != observed.size())
    throw std::invalid_argument("poisson_deviance: size mismatch");
  double cost = 0.0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const double e = expected[i], o = observed[i];
    if (o < 0.0) throw std::invalid_argument("poisson_deviance: negative observation");
    if (o == 0.0) {
      cost += e;
      continue;
    }
    if (e <= 0.0) return std::numeric_limits<double>::infinity();
    cost += e - o + o * std::log(o) - o * std::log(e);
  }
  return cost;
}

namespace {

struct ParamMap {
  std::vector<int> dets;  // distinct detector indices, slot order
  int slot(int det) const {
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (dets[i] == det) return static_cast<int>(i);
    return -1;
  }
  std::size_t n() const { return dets.size(); }
};

double objective(const std::vector<FitSpectrum>& spectra, const ParamMap& pm,
                 double duration_s, std::span<const double> x) {
  const std::size_t nd = pm.n();
  const double eff = x[2 * nd];
  const double flux = x[2 * nd + 1];
  if (eff <= 0.0 || eff > 1.0 || flux <= 0.0) return 1e18;
  for (std::size_t k = 0; k < nd; ++k)
    if (x[k] <= 0.0 || x[nd + k] < 0.0) return 1e18;

  // smear once per detector, reuse across its combinations
  double cost = 0.0;
  for (std::size_t s = 0; s < spectra.size(); ++s) {
    const auto& sp = spectra[s];
    const int slot = pm.slot(sp.det);
    ResponseParams rp;
    rp.a_adc_per_mev = x[static_cast<std::size_t>(slot)];
    rp.b_resolution = x[nd + static_cast<std::size_t>(slot)];
    const GridPdf amp = amplitude_pdf(sp.deposit, rp);
    const double rate = std::pow(eff, sp.fold) * sp.sigma_cm2 * flux;
    const auto exp_counts = expected_counts(amp, rate, duration_s, sp.observed.edges_adc);
    cost += poisson_deviance(exp_counts, sp.observed.counts);
    if (!std::isfinite(cost)) return 1e18;
  }
  return cost;
}

}  // namespace

FitResult fit_response(const std::vector<FitSpectrum>& spectra,
                       const std::vector<ResponseParams>& init,
                       const FitConfig& cfg) {
  if (spectra.empty()) throw std::invalid_argument("fit_response: no spectra");
  ParamMap pm;
  for (const auto& sp : spectra)
    if (pm.slot(sp.det) < 0) pm.dets.push_back(sp.det);
  const std::size_t nd = pm.n();
  if (init.size() < nd) throw std::invalid_argument("fit_response: init params missing");

  std::vector<double> x0(2 * nd + 2), step(2 * nd + 2);
  for (std::size_t k = 0; k < nd; ++k) {
    x0[k] = init[k].a_adc_per_mev;
    x0[nd + k] = init[k].b_resolution;
    step[k] = 0.05 * x0[k];
    step[nd + k] = std::max(0.015, 0.3 * x0[nd + k]);
  }
  x0[2 * nd] = cfg.init_eff;
  x0[2 * nd + 1] = cfg.init_flux;
  step[2 * nd] = 0.03;
  step[2 * nd + 1] = 0.1 * cfg.init_flux;

  auto f = [&](std::span<const double> x) {
    return objective(spectra, pm, cfg.duration_s, x);
  };

  num::NelderMeadOptions opts;
  opts.max_evals = cfg.max_evals / 2;
  auto r1 = num::nelder_mead(f, x0, step, opts);
  // restart with a tighter simplex around the first optimum
  std::vector<double> step2(step.size());
  for (std::size_t i = 0; i < step.size(); ++i) step2[i] = 0.1 * step[i];
  auto r2 = num::nelder_mead(f, r1.x, step2, opts);

  FitResult out;
  out.cost = r2.f;
  out.evals = r1.evals + r2.evals;
  out.converged = r2.converged || r1.converged;
  out.efficiency = r2.x[2 * nd];
  out.flux = r2.x[2 * nd + 1];
  out.params.resize(nd);
  for (std::size_t k = 0; k < nd; ++k) {
    out.params[k].label = init[k].label;
    out.params[k].a_adc_per_mev = r2.x[k];
    out.params[k].b_resolution = r2.x[nd + k];
    out.params[k].v_lo_adc = init[k].v_lo_adc;
    out.params[k].v_hi_adc = init[k].v_hi_adc;
  }

  if (cfg.estimate_errors) {
    // local quadratic approximation of the cost (already -log L)
    const int n = static_cast<int>(r2.x.size());
    std::vector<double> scale(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      scale[static_cast<std::size_t>(i)] =
          std::max(1e-6, 1e-3 * std::fabs(r2.x[static_cast<std::size_t>(i)]));
    auto h = num::hessian(f, r2.x, scale);
    out.a_err.assign(nd, 0.0);
    out.b_err.assign(nd, 0.0);
    // invert via repeated solves (columns of the identity)
    for (std::size_t k = 0; k < 2 * nd; ++k) {
      std::vector<double> a = h;
      std::vector<double> e(static_cast<std::size_t>(n), 0.0);
      e[k] = 1.0;
      if (!num::solve_linear(a, e, n)) break;
      const double var = e[k];
      if (var > 0.0) {
        if (k < nd)
          out.a_err[k] = std::sqrt(var);
        else
          out.b_err[k - nd] = std::sqrt(var);
      }
    }
  }
  return out;
}

}  // namespace crq::detcal
