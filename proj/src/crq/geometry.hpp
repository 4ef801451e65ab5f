#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crq/flux.hpp"
#include "crq/labels.hpp"
#include "crq/rng.hpp"
#include "crq/vec3.hpp"

namespace crq::geom {

// Axis-aligned rectangular prism in the world frame.
struct Prism {
  std::string label;
  Vec3 center_cm;
  Vec3 half_extents_cm;
  // Energy loss per path length; negative means "use the scene default".
  double de_dx_mev_per_cm = -1.0;
};

struct DepositionModel {
  double de_dx_mev_per_cm = 2.0;     // plastic scintillator default
  double fractional_smear = 0.0;     // applied at transport; detcal owns resolution
  double secondary_boost = 1.0;      // emulates secondary-particle contributions
};

class Scene {
 public:
  Scene() = default;
  Scene(std::vector<Prism> prisms, DepositionModel model);

  const std::vector<Prism>& prisms() const { return prisms_; }
  const DepositionModel& model() const { return model_; }
  const LabelRegistry& labels() const { return labels_; }
  double de_dx(int idx) const;
  // Farthest corner distance of the listed volumes from a point.
  double max_extent_from(const Vec3& origin, LabelSet which) const;
  LabelSet all_labels() const;

 private:
  std::vector<Prism> prisms_;
  DepositionModel model_;
  LabelRegistry labels_;
};

// Chord length of the ray inside the prism (slab method); 0 on a miss.
double ray_path_length(const Vec3& origin, const Vec3& direction, const Prism& prism);

// Per-label deposited energy for one muon.  Labels without a deposit are
// absent from the result.
std::map<int, double> deposit(const flux::MuonSample& muon, const Scene& scene, Rng& rng);

// One row per muon that deposited anywhere.
class DepositionTable {
 public:
  DepositionTable() = default;
  DepositionTable(int n_labels, std::uint64_t total_thrown, double tangent_area_cm2)
      : n_labels_(n_labels), total_thrown_(total_thrown), tangent_area_(tangent_area_cm2) {}

  void add_row(std::uint64_t muon_index, const std::map<int, double>& energies);
  std::size_t rows() const { return hits_.size(); }
  std::uint64_t muon_index(std::size_t row) const { return index_[row]; }
  LabelSet hit_set(std::size_t row) const { return hits_[row]; }
  double energy(std::size_t row, int label) const {
    return energy_[row * static_cast<std::size_t>(n_labels_) + static_cast<std::size_t>(label)];
  }
  int n_labels() const { return n_labels_; }
  std::uint64_t total_thrown() const { return total_thrown_; }
  double tangent_area_cm2() const { return tangent_area_; }
  void set_total_thrown(std::uint64_t n) { total_thrown_ = n; }

 private:
  int n_labels_ = 0;
  std::uint64_t total_thrown_ = 0;
  double tangent_area_ = 0.0;
  std::vector<std::uint64_t> index_;
  std::vector<LabelSet> hits_;
  std::vector<float> energy_;  // rows x n_labels, MeV
};

// Acceptance window in deposited energy; (0, inf) accepts any deposit.
struct EnergyWindow {
  double lo_mev = 0.0;
  double hi_mev = std::numeric_limits<double>::infinity();
};

// Exclusive counts partition the thrown area; inclusive counts are their
// superset sums.  Counts are kept so identities stay exact.
struct CrossSectionSet {
  int n_labels = 0;
  std::uint64_t total_thrown = 0;
  double tangent_area_cm2 = 0.0;
  double secondary_boost = 1.0;
  std::map<LabelSet, double> exclusive_counts;  // includes the empty set
  std::map<LabelSet, double> inclusive_counts;  // all non-empty combinations seen

  double sigma_exclusive(LabelSet a) const;
  double sigma_inclusive(LabelSet a) const;
  double count_to_sigma(double count) const {
    return count * tangent_area_cm2 / static_cast<double>(total_thrown);
  }
};

// Transport a batch; `unbiased` lists the volumes whose rates the tangent
// square must cover per the side-length rule (defaults to every volume).
// Violations raise std::invalid_argument.
DepositionTable run_transport(const flux::MuonThrower& thrower, std::uint64_t count,
                              const Scene& scene,
                              std::optional<LabelSet> unbiased = std::nullopt,
                              int threads = 1);

DepositionTable run_transport(const std::vector<flux::MuonSample>& samples,
                              const Scene& scene, double tangent_area_cm2,
                              std::uint64_t rng_seed = 0, int threads = 1);

CrossSectionSet cross_sections(const DepositionTable& table, const Scene& scene,
                               const std::map<int, EnergyWindow>& acceptance);

// Coverage of `target` provided by all other volumes:
//   C = eps_dt / sigma_target * sum_{a ∋ target, |a|>=2} (1 - prod(1-eps_k)) sigma*_a
double coverage_of(int target, const CrossSectionSet& xs,
                   const std::vector<double>& efficiencies, double window_eff);

// Rate of (two or more)-fold coincidences of `target` with anything else.
double any_coincidence_rate(int target, const CrossSectionSet& xs,
                            const std::vector<double>& efficiencies,
                            double flux_per_s_cm2);

// sum_{a ∋ target, |a|>=2} sigma*_a, and the efficiency-weighted variant.
double sigma_coincidence(int target, const CrossSectionSet& xs);
double sigma_coincidence_eff(int target, const CrossSectionSet& xs,
                             const std::vector<double>& efficiencies);

}  // namespace crq::geom
