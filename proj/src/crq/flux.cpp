#include "crq/flux.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace crq::flux {

namespace {

double energy_shape(const FluxModel& m, double e) {
  return std::pow(e, -m.spectral_index) *
         (1.0 / (1.0 + m.branch1_scale * e) +
          m.branch2_weight / (1.0 + m.branch2_scale * e));
}

}  // namespace

double differential_intensity(const FluxModel& model, double theta_rad,
                              double energy_gev) {
  if (theta_rad < 0.0 || theta_rad > std::numbers::pi / 2.0)
    throw std::domain_error("differential_intensity: theta outside [0, pi/2]");
  if (energy_gev < model.e_min_gev || energy_gev > model.e_max_gev)
    throw std::domain_error("differential_intensity: energy outside model range");
  const double c = std::cos(theta_rad);
  return model.scale_c_mu * energy_shape(model, energy_gev) * c * c;
}

EnergySampler::EnergySampler(const FluxModel& model, int knots) {
  if (knots < 2) throw std::invalid_argument("EnergySampler: knots < 2");
  // CDF by trapezoid on a log-spaced grid, then inverted onto uniform-u knots.
  const int grid_n = 16384;
  const double llo = std::log(model.e_min_gev), lhi = std::log(model.e_max_gev);
  std::vector<double> e(grid_n), cum(grid_n, 0.0);
  for (int i = 0; i < grid_n; ++i)
    e[i] = std::exp(llo + (lhi - llo) * i / (grid_n - 1));
  double prev = energy_shape(model, e[0]);
  for (int i = 1; i < grid_n; ++i) {
    const double cur = energy_shape(model, e[i]);
    cum[i] = cum[i - 1] + 0.5 * (prev + cur) * (e[i] - e[i - 1]);
    prev = cur;
  }
  const double total = cum.back();
  std::vector<double> u(knots), q(knots);
  int j = 1;
  for (int k = 0; k < knots; ++k) {
    const double target = total * k / (knots - 1);
    while (j < grid_n - 1 && cum[j] < target) ++j;
    const double c0 = cum[j - 1], c1 = cum[j];
    const double t = (c1 > c0) ? (target - c0) / (c1 - c0) : 0.0;
    u[k] = static_cast<double>(k) / (knots - 1);
    q[k] = e[j - 1] + t * (e[j] - e[j - 1]);
  }
  q.front() = model.e_min_gev;
  q.back() = model.e_max_gev;
  // guard against duplicate u from degenerate grids
  for (int k = 1; k < knots; ++k)
    if (q[k] <= q[k - 1]) q[k] = std::nextafter(q[k - 1], 1e308);
  inverse_cdf_ = num::MonotoneCubic(std::move(u), std::move(q));
}

Direction sample_direction(Rng& rng) {
  // CDF of the zenith law is 1 - cos^3(theta)
  const double u = rng.uniform();
  Direction d;
  d.theta = std::acos(std::cbrt(1.0 - u));
  d.phi = 2.0 * std::numbers::pi * rng.uniform();
  return d;
}

MuonThrower::MuonThrower(const SamplerConfig& cfg, const FluxModel& model)
    : cfg_(cfg), energy_(model) {
  if (cfg.hemisphere_radius_cm <= 0.0 || cfg.tangent_side_cm <= 0.0)
    throw std::invalid_argument("MuonThrower: nonpositive geometry");
}

MuonSample MuonThrower::throw_muon(Rng& rng) const {
  const Direction dir = sample_direction(rng);
  const double st = std::sin(dir.theta), ct = std::cos(dir.theta);
  const double sp = std::sin(dir.phi), cp = std::cos(dir.phi);
  const Vec3 radial{st * cp, st * sp, ct};
  // tangent-plane basis: azimuthal and polar unit vectors
  const Vec3 e_phi{-sp, cp, 0.0};
  const Vec3 e_theta{ct * cp, ct * sp, -st};
  const double half = 0.5 * cfg_.tangent_side_cm;
  const double a = rng.uniform(-half, half);
  const double b = rng.uniform(-half, half);

  MuonSample m;
  m.origin_cm = cfg_.hemisphere_origin + cfg_.hemisphere_radius_cm * radial +
                a * e_phi + b * e_theta;
  m.direction = -1.0 * radial;  // thrown along the inward tangent normal
  m.energy_gev = energy_.sample(rng);
  return m;
}

MuonSample MuonThrower::throw_muon(std::uint64_t index) const {
  Rng rng(cfg_.rng_seed, RngDomain::MuonSampling, index);
  return throw_muon(rng);
}

std::vector<MuonSample> MuonThrower::sample_batch(std::uint64_t count) const {
  std::vector<MuonSample> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) out.push_back(throw_muon(i));
  return out;
}

}  // namespace crq::flux
