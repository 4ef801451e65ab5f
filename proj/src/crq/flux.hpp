#pragma once

#include <cstdint>
#include <vector>

#include "crq/numerics.hpp"
#include "crq/rng.hpp"
#include "crq/vec3.hpp"

namespace crq::flux {

// Zenith-dependent muon intensity: a broken power law in energy with a
// cos^2(theta) angular factor.  The normalization scale is carried along but
// is absorbed into the total flux when rates are formed, so the sampler only
// ever uses the shape.
struct FluxModel {
  double scale_c_mu = 1.0;
  double e_min_gev = 10.0;
  double e_max_gev = 1000.0;
  double spectral_index = 2.7;
  double branch1_scale = 1.1 / 115.0;  // per GeV
  double branch2_weight = 0.054;
  double branch2_scale = 1.1 / 850.0;  // per GeV
};

struct SamplerConfig {
  Vec3 hemisphere_origin{0.0, 0.0, 0.0};
  double hemisphere_radius_cm = 1500.0;
  double tangent_side_cm = 200.0;
  std::uint64_t sample_count = 1'000'000;
  std::uint64_t rng_seed = 1;
};

struct MuonSample {
  Vec3 origin_cm;
  Vec3 direction;  // unit, downward-going
  double energy_gev = 0.0;
};

// Differential intensity per GeV per steradian (up to scale_c_mu).
// Throws std::domain_error outside theta in [0, pi/2] or the energy range.
double differential_intensity(const FluxModel& model, double theta_rad,
                              double energy_gev);

// Inverse-CDF table for the energy spectrum; deterministic given the model.
class EnergySampler {
 public:
  explicit EnergySampler(const FluxModel& model, int knots = 1024);
  double sample(Rng& rng) const { return inverse_cdf_(rng.uniform()); }
  double quantile(double u) const { return inverse_cdf_(u); }

 private:
  num::MonotoneCubic inverse_cdf_;
};

// theta from the cos^2(theta)·sin(theta) zenith law, phi uniform.
struct Direction {
  double theta = 0.0;
  double phi = 0.0;
};
Direction sample_direction(Rng& rng);

class MuonThrower {
 public:
  MuonThrower(const SamplerConfig& cfg, const FluxModel& model);

  // Sample index -> muon; independent of evaluation order.
  MuonSample throw_muon(std::uint64_t index) const;
  MuonSample throw_muon(Rng& rng) const;

  std::vector<MuonSample> sample_batch(std::uint64_t count) const;

  const SamplerConfig& config() const { return cfg_; }
  // Area of the throwing square; fixed for all samples, so
  // cross-sections follow as (hits / count) * area.
  double tangent_area_cm2() const { return cfg_.tangent_side_cm * cfg_.tangent_side_cm; }

 private:
  SamplerConfig cfg_;
  EnergySampler energy_;
};

}  // namespace crq::flux
