#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "crq/burstdetect.hpp"
#include "crq/coinstat.hpp"
#include "crq/detcal.hpp"
#include "crq/geometry.hpp"
#include "crq/streamsim.hpp"

namespace crq::pipe {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DependencyError : std::runtime_error {
  DependencyError(const std::string& stage, const std::string& artifact)
      : std::runtime_error("stage '" + stage + "' requires missing artifact: " + artifact) {}
};
struct FitFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SamplingBlock {
  Vec3 hemisphere_origin_cm{0, 0, 0};
  double hemisphere_radius_cm = 1500.0;
  double tangent_side_cm = 200.0;
  std::uint64_t count = 200'000;
  std::string unbiased;  // labels whose rates must be unbiased, e.g. "ABCDEF"
};

struct DetectionConfig {
  int template_length = 1648;
  int template_flat = 824;
  double template_tau_s = 5e-3;
  double candidate_threshold = 50.0;
  double accept_threshold = 105.0;
  double min_separation_s = 12.5e-3;
  det::DynamicsConfig dynamics;
};

struct CalibrationConfig {
  double duration_h = 2.0;
  int bins = 120;
  std::vector<std::string> combinations{"BC", "CD", "AD", "BCD", "AE", "EF", "AF", "AEF"};
  int max_evals = 6000;
};

struct RunConfig {
  std::uint64_t seed = 20230607;
  sim::TimebaseConfig timebase;
  flux::FluxModel flux_model;
  double flux_total = 0.0133;  // 1/s/cm^2
  geom::DepositionModel deposition;
  std::vector<geom::Prism> prisms;
  SamplingBlock detector_focus;
  SamplingBlock chip_focus;
  std::vector<detcal::ResponseParams> responses;   // per detector label
  std::vector<double> det_efficiencies;            // per detector label
  std::vector<sim::QubitParams> qubits;
  DetectionConfig detection;
  coin::WindowConfig window;
  double eps_window = 0.94;  // coincidence-identification efficiency
  sim::TruthConfig truth;
  std::uint64_t n_entries = 40;
  CalibrationConfig calibration;
  std::string chip_label = "Q";

  static RunConfig defaults();
  static RunConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
  std::uint64_t config_hash() const;
  void validate() const;

  geom::Scene make_scene() const;
  int chip_index(const geom::Scene& scene) const;
  std::map<int, geom::EnergyWindow> detector_windows(const geom::Scene& scene) const;
  std::map<int, geom::EnergyWindow> chip_windows(const geom::Scene& scene) const;
  std::vector<double> efficiencies_by_label(const geom::Scene& scene) const;
  std::vector<detcal::ResponseParams> responses_by_label(const geom::Scene& scene) const;
  det::FilterTemplate make_template() const;
};

// --- reference-pulse synchronization -------------------------------------

// Piecewise-linear map from detector timestamps to measurement-cycle
// coordinates, knots at the reference pulses.
class SyncMap {
 public:
  // Builds from one entry's group of reference pulses; std::nullopt when the
  // group size is wrong (entry excluded).
  static std::optional<SyncMap> build(const std::vector<std::int64_t>& ref_ts,
                                      const sim::TimebaseConfig& tb,
                                      std::uint64_t entry);

  // Continuous cycle coordinate; cycle index = floor(value).
  double cycle_at(std::int64_t t_ns) const;
  bool covers(std::int64_t t_ns) const;
  std::uint64_t entry() const { return entry_; }

 private:
  std::uint64_t entry_ = 0;
  double period_cycles_ = 0.0;
  std::vector<std::int64_t> t_;
  std::vector<double> c_;
};

// Groups a run's reference pulses into entries (split on gaps) and builds the
// per-entry maps; entries with missing/extra pulses are excluded.
struct SyncSet {
  std::map<std::uint64_t, SyncMap> entries;
  std::vector<std::uint64_t> excluded;
};
SyncSet build_sync(const std::vector<std::int64_t>& ref_ts, const sim::TimebaseConfig& tb);

struct TaggedPulse {
  std::uint64_t entry = 0;
  std::uint32_t cycle = 0;
  int detector = 0;
  double amplitude_adc = 0.0;
};

struct DropTally {
  std::uint64_t outside_entry = 0;
  std::uint64_t out_of_window = 0;
  std::uint64_t accepted = 0;
};

std::vector<TaggedPulse> assign_pulses(const std::vector<sim::PulseRecord>& pulses,
                                       const SyncSet& sync,
                                       const std::vector<detcal::ResponseParams>& responses,
                                       const sim::TimebaseConfig& tb, DropTally* tally);

// --- synthetic experiment ------------------------------------------------

// Per-entry generator for the full synthetic experiment: burst truth, qubit
// shot planes, detector pulses (cosmic-linked plus background), and reference
// pulses.  Entries are independent given (config, entry index).
class EntryGenerator {
 public:
  EntryGenerator(const RunConfig& cfg, const geom::Scene& scene,
                 const geom::DepositionTable& chip_table,
                 const geom::DepositionTable& detector_table);

  struct Entry {
    std::vector<sim::BurstTruth> truth;
    sim::ShotMatrix shots;
    std::vector<sim::PulseRecord> pulses;
    std::vector<std::int64_t> ref_pulses;
  };
  Entry generate(std::uint64_t entry) const;

  double sigma_q_cm2() const { return sigma_q_; }
  double background_rate_per_s() const { return background_rate_; }
  std::size_t chip_rows() const { return chip_patterns_.size(); }
  const sim::DepositPattern& chip_pattern(std::size_t i) const { return chip_patterns_[i]; }

 private:
  const RunConfig& cfg_;
  std::vector<sim::QubitParams> qubits_;
  std::vector<detcal::ResponseParams> responses_;
  std::vector<double> efficiencies_;
  std::vector<sim::DepositPattern> chip_patterns_;
  std::vector<sim::DepositPattern> background_patterns_;
  double sigma_q_ = 0.0;
  double background_rate_ = 0.0;
};

// --- stage orchestration ---------------------------------------------------

enum class Stage {
  Sample,
  Transport,
  Xsection,
  Simulate,
  Detect,
  Coincide,
  Calibrate,
  Report,
};

const char* stage_name(Stage s);
std::optional<Stage> parse_stage(const std::string& name);

struct PipelineOptions {
  std::filesystem::path out_dir = "out";
  int threads = 1;
};

// Executes the requested stages in dependency order; missing upstream
// artifacts raise DependencyError.
void run_pipeline(const RunConfig& cfg, const std::set<Stage>& stages,
                  const PipelineOptions& opts);

}  // namespace crq::pipe
