#include "crq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "crq/io.hpp"
#include "crq/stats.hpp"

namespace crq::pipe {

using nlohmann::json;

// --- defaults ---------------------------------------------------------------

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.prisms = {
      {"A", {-13.07, 6.59, -43.77}, {25.5, 3.6, 1.0}, -1.0},
      {"B", {-13.07, -0.61, -44.06}, {25.5, 3.6, 1.0}, -1.0},
      {"C", {-8.57, -0.61, -48.88}, {30.0, 3.5, 3.5}, -1.0},
      {"D", {-8.57, -0.61, -56.51}, {30.0, 3.5, 3.5}, -1.0},
      {"E", {-5.67, 5.75, -49.51}, {50.0, 2.86, 3.0}, -1.0},
      {"F", {-5.67, 5.75, -57.01}, {50.0, 2.86, 3.0}, -1.0},
      {"Q", {0.0, 0.0, 0.0}, {0.0175, 0.25, 0.25}, 1.9},
  };
  cfg.responses = {
      {"A", 14.971, 0.063, 50.0, 450.0},  {"B", 12.219, 0.015, 35.0, 400.0},
      {"C", 14.219, 0.016, 170.0, 550.0}, {"D", 14.832, 0.113, 170.0, 550.0},
      {"E", 17.465, 0.118, 170.0, 400.0}, {"F", 21.700, 0.084, 200.0, 400.0},
  };
  cfg.det_efficiencies.assign(6, 0.96);

  const double t1_us[10] = {53, 49, 42, 16, 40, 43, 57, 55, 69, 47};
  const double tau_ms[10] = {5.9, 6.6, 0.8, 6.5, 6.0, 0.8, 0.7, 6.5, 0.7, 0.8};
  for (int i = 0; i < 10; ++i) {
    sim::QubitParams q;
    q.label = "Q" + std::to_string(i + 1);
    q.baseline_gamma = 1e6 / t1_us[i];
    q.recovery_tau_s = tau_ms[i] * 1e-3;
    cfg.qubits.push_back(q);
  }

  cfg.detector_focus.hemisphere_origin_cm = {0.0, 0.0, -50.0};
  cfg.detector_focus.tangent_side_cm = 200.0;
  cfg.detector_focus.count = 200'000;
  cfg.detector_focus.unbiased = "ABCDEF";
  cfg.chip_focus.hemisphere_origin_cm = {0.0, 0.0, 0.0};
  cfg.chip_focus.tangent_side_cm = 4.0;
  cfg.chip_focus.count = 500'000;
  cfg.chip_focus.unbiased = "Q";

  auto& cosmic = cfg.truth.cosmic;
  cosmic.full_fraction = 0.45;
  cosmic.dgamma_full_lo = 1.2e6;
  cosmic.dgamma_full_hi = 3.0e6;
  cosmic.dgamma_partial_lo = 1.2e5;
  cosmic.dgamma_partial_hi = 2.5e6;
  cosmic.partial_participation.resize(10);
  for (int i = 0; i < 10; ++i)
    cosmic.partial_participation[static_cast<std::size_t>(i)] = 0.05 + 0.35 * i / 9.0;
  auto& other = cfg.truth.other;
  other.full_fraction = 0.08;
  other.dgamma_full_lo = 1.2e6;
  other.dgamma_full_hi = 3.0e6;
  other.dgamma_partial_lo = 1.2e5;
  other.dgamma_partial_hi = 2.5e6;
  other.partial_participation.resize(10);
  for (int i = 0; i < 10; ++i)
    other.partial_participation[static_cast<std::size_t>(i)] = 0.42 + 0.22 * i / 9.0;
  cfg.truth.r_other_per_s = 0.009;
  return cfg;
}

// --- json -------------------------------------------------------------------

namespace {

json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
Vec3 vec3_from_json(const json& j) { return {j.at(0), j.at(1), j.at(2)}; }

json pop_to_json(const sim::PopulationModel& p) {
  return json{{"full_fraction", p.full_fraction},
              {"dgamma_full_lo_per_s", p.dgamma_full_lo},
              {"dgamma_full_hi_per_s", p.dgamma_full_hi},
              {"dgamma_partial_lo_per_s", p.dgamma_partial_lo},
              {"dgamma_partial_hi_per_s", p.dgamma_partial_hi},
              {"partial_participation", p.partial_participation}};
}

void pop_from_json(const json& j, sim::PopulationModel& p) {
  p.full_fraction = j.value("full_fraction", p.full_fraction);
  p.dgamma_full_lo = j.value("dgamma_full_lo_per_s", p.dgamma_full_lo);
  p.dgamma_full_hi = j.value("dgamma_full_hi_per_s", p.dgamma_full_hi);
  p.dgamma_partial_lo = j.value("dgamma_partial_lo_per_s", p.dgamma_partial_lo);
  p.dgamma_partial_hi = j.value("dgamma_partial_hi_per_s", p.dgamma_partial_hi);
  if (j.contains("partial_participation"))
    p.partial_participation = j.at("partial_participation").get<std::vector<double>>();
}

json block_to_json(const SamplingBlock& b) {
  return json{{"hemisphere_origin_cm", vec3_to_json(b.hemisphere_origin_cm)},
              {"hemisphere_radius_cm", b.hemisphere_radius_cm},
              {"tangent_side_cm", b.tangent_side_cm},
              {"count", b.count},
              {"unbiased", b.unbiased}};
}

void block_from_json(const json& j, SamplingBlock& b) {
  if (j.contains("hemisphere_origin_cm"))
    b.hemisphere_origin_cm = vec3_from_json(j.at("hemisphere_origin_cm"));
  b.hemisphere_radius_cm = j.value("hemisphere_radius_cm", b.hemisphere_radius_cm);
  b.tangent_side_cm = j.value("tangent_side_cm", b.tangent_side_cm);
  b.count = j.value("count", b.count);
  b.unbiased = j.value("unbiased", b.unbiased);
}

}  // namespace

std::string RunConfig::to_json_text() const {
  json j;
  j["seed"] = seed;
  j["timebase"] = {{"cycle_duration_s", timebase.cycle_duration_s},
                   {"cycles_per_entry", timebase.cycles_per_entry},
                   {"inter_entry_gap_s", timebase.inter_entry_gap_s},
                   {"ref_pulse_period", timebase.ref_pulse_period},
                   {"wait_time_s", timebase.wait_time_s},
                   {"clock_skew", timebase.clock_skew}};
  j["flux_model"] = {{"e_min_gev", flux_model.e_min_gev},
                     {"e_max_gev", flux_model.e_max_gev},
                     {"spectral_index", flux_model.spectral_index},
                     {"branch1_scale_per_gev", flux_model.branch1_scale},
                     {"branch2_weight", flux_model.branch2_weight},
                     {"branch2_scale_per_gev", flux_model.branch2_scale}};
  j["flux_total_per_s_cm2"] = flux_total;
  j["deposition"] = {{"de_dx_mev_per_cm", deposition.de_dx_mev_per_cm},
                     {"fractional_smear", deposition.fractional_smear},
                     {"secondary_boost", deposition.secondary_boost}};
  j["prisms"] = json::array();
  for (const auto& p : prisms)
    j["prisms"].push_back({{"label", p.label},
                           {"center_cm", vec3_to_json(p.center_cm)},
                           {"half_extents_cm", vec3_to_json(p.half_extents_cm)},
                           {"de_dx_mev_per_cm", p.de_dx_mev_per_cm}});
  j["sampling"] = {{"detector_focus", block_to_json(detector_focus)},
                   {"chip_focus", block_to_json(chip_focus)}};
  j["detectors"] = json::array();
  for (std::size_t i = 0; i < responses.size(); ++i)
    j["detectors"].push_back({{"label", responses[i].label},
                              {"a_adc_per_mev", responses[i].a_adc_per_mev},
                              {"b_resolution", responses[i].b_resolution},
                              {"v_lo_adc", responses[i].v_lo_adc},
                              {"v_hi_adc", responses[i].v_hi_adc},
                              {"efficiency", det_efficiencies[i]}});
  j["qubits"] = json::array();
  for (const auto& q : qubits)
    j["qubits"].push_back({{"label", q.label},
                           {"baseline_gamma_per_s", q.baseline_gamma},
                           {"recovery_tau_s", q.recovery_tau_s},
                           {"effective_delay_s", q.effective_delay_s},
                           {"fidelity_a", q.fidelity_a}});
  j["detection"] = {{"template_length", detection.template_length},
                    {"template_flat", detection.template_flat},
                    {"template_tau_s", detection.template_tau_s},
                    {"candidate_threshold", detection.candidate_threshold},
                    {"accept_threshold", detection.accept_threshold},
                    {"min_separation_s", detection.min_separation_s},
                    {"pre_trigger_cycles", detection.dynamics.pre_trigger_cycles},
                    {"pre_trigger_gap_cycles", detection.dynamics.pre_trigger_gap_cycles},
                    {"bin_cycles", detection.dynamics.bin_cycles},
                    {"post_bins", detection.dynamics.post_bins},
                    {"participation_threshold_per_s", detection.dynamics.participation_threshold}};
  j["coincidence"] = {{"window_cycles", window.coincidence_window_cycles},
                      {"eps_window", eps_window}};
  j["truth"] = {{"r_other_per_s", truth.r_other_per_s},
                {"cosmic", pop_to_json(truth.cosmic)},
                {"other", pop_to_json(truth.other)}};
  j["simulate"] = {{"n_entries", n_entries}};
  j["calibration"] = {{"duration_h", calibration.duration_h},
                      {"bins", calibration.bins},
                      {"combinations", calibration.combinations},
                      {"max_evals", calibration.max_evals}};
  j["chip_label"] = chip_label;
  return j.dump(2);
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  RunConfig cfg = defaults();
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  try {
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("timebase")) {
      const auto& t = j.at("timebase");
      cfg.timebase.cycle_duration_s = t.value("cycle_duration_s", cfg.timebase.cycle_duration_s);
      cfg.timebase.cycles_per_entry = t.value("cycles_per_entry", cfg.timebase.cycles_per_entry);
      cfg.timebase.inter_entry_gap_s = t.value("inter_entry_gap_s", cfg.timebase.inter_entry_gap_s);
      cfg.timebase.ref_pulse_period = t.value("ref_pulse_period", cfg.timebase.ref_pulse_period);
      cfg.timebase.wait_time_s = t.value("wait_time_s", cfg.timebase.wait_time_s);
      cfg.timebase.clock_skew = t.value("clock_skew", cfg.timebase.clock_skew);
    }
    if (j.contains("flux_model")) {
      const auto& f = j.at("flux_model");
      cfg.flux_model.e_min_gev = f.value("e_min_gev", cfg.flux_model.e_min_gev);
      cfg.flux_model.e_max_gev = f.value("e_max_gev", cfg.flux_model.e_max_gev);
      cfg.flux_model.spectral_index = f.value("spectral_index", cfg.flux_model.spectral_index);
      cfg.flux_model.branch1_scale = f.value("branch1_scale_per_gev", cfg.flux_model.branch1_scale);
      cfg.flux_model.branch2_weight = f.value("branch2_weight", cfg.flux_model.branch2_weight);
      cfg.flux_model.branch2_scale = f.value("branch2_scale_per_gev", cfg.flux_model.branch2_scale);
    }
    cfg.flux_total = j.value("flux_total_per_s_cm2", cfg.flux_total);
    if (j.contains("deposition")) {
      const auto& d = j.at("deposition");
      cfg.deposition.de_dx_mev_per_cm = d.value("de_dx_mev_per_cm", cfg.deposition.de_dx_mev_per_cm);
      cfg.deposition.fractional_smear = d.value("fractional_smear", cfg.deposition.fractional_smear);
      cfg.deposition.secondary_boost = d.value("secondary_boost", cfg.deposition.secondary_boost);
    }
    if (j.contains("prisms")) {
      cfg.prisms.clear();
      for (const auto& p : j.at("prisms")) {
        geom::Prism prism;
        prism.label = p.at("label").get<std::string>();
        prism.center_cm = vec3_from_json(p.at("center_cm"));
        prism.half_extents_cm = vec3_from_json(p.at("half_extents_cm"));
        prism.de_dx_mev_per_cm = p.value("de_dx_mev_per_cm", -1.0);
        cfg.prisms.push_back(prism);
      }
    }
    if (j.contains("sampling")) {
      if (j.at("sampling").contains("detector_focus"))
        block_from_json(j.at("sampling").at("detector_focus"), cfg.detector_focus);
      if (j.at("sampling").contains("chip_focus"))
        block_from_json(j.at("sampling").at("chip_focus"), cfg.chip_focus);
    }
    if (j.contains("detectors")) {
      cfg.responses.clear();
      cfg.det_efficiencies.clear();
      for (const auto& d : j.at("detectors")) {
        detcal::ResponseParams rp;
        rp.label = d.at("label").get<std::string>();
        rp.a_adc_per_mev = d.at("a_adc_per_mev").get<double>();
        rp.b_resolution = d.at("b_resolution").get<double>();
        rp.v_lo_adc = d.at("v_lo_adc").get<double>();
        rp.v_hi_adc = d.at("v_hi_adc").get<double>();
        cfg.responses.push_back(rp);
        cfg.det_efficiencies.push_back(d.value("efficiency", 0.96));
      }
    }
    if (j.contains("qubits")) {
      cfg.qubits.clear();
      for (const auto& q : j.at("qubits")) {
        sim::QubitParams qp;
        qp.label = q.at("label").get<std::string>();
        qp.baseline_gamma = q.at("baseline_gamma_per_s").get<double>();
        qp.recovery_tau_s = q.at("recovery_tau_s").get<double>();
        qp.effective_delay_s = q.value("effective_delay_s", 3e-6);
        qp.fidelity_a = q.value("fidelity_a", 1.0);
        cfg.qubits.push_back(qp);
      }
    }
    if (j.contains("detection")) {
      const auto& d = j.at("detection");
      cfg.detection.template_length = d.value("template_length", cfg.detection.template_length);
      cfg.detection.template_flat = d.value("template_flat", cfg.detection.template_flat);
      cfg.detection.template_tau_s = d.value("template_tau_s", cfg.detection.template_tau_s);
      cfg.detection.candidate_threshold = d.value("candidate_threshold", cfg.detection.candidate_threshold);
      cfg.detection.accept_threshold = d.value("accept_threshold", cfg.detection.accept_threshold);
      cfg.detection.min_separation_s = d.value("min_separation_s", cfg.detection.min_separation_s);
      cfg.detection.dynamics.pre_trigger_cycles =
          d.value("pre_trigger_cycles", cfg.detection.dynamics.pre_trigger_cycles);
      cfg.detection.dynamics.pre_trigger_gap_cycles =
          d.value("pre_trigger_gap_cycles", cfg.detection.dynamics.pre_trigger_gap_cycles);
      cfg.detection.dynamics.bin_cycles = d.value("bin_cycles", cfg.detection.dynamics.bin_cycles);
      cfg.detection.dynamics.post_bins = d.value("post_bins", cfg.detection.dynamics.post_bins);
      cfg.detection.dynamics.participation_threshold =
          d.value("participation_threshold_per_s", cfg.detection.dynamics.participation_threshold);
    }
    if (j.contains("coincidence")) {
      cfg.window.coincidence_window_cycles =
          j.at("coincidence").value("window_cycles", cfg.window.coincidence_window_cycles);
      cfg.eps_window = j.at("coincidence").value("eps_window", cfg.eps_window);
    }
    if (j.contains("truth")) {
      const auto& t = j.at("truth");
      cfg.truth.r_other_per_s = t.value("r_other_per_s", cfg.truth.r_other_per_s);
      if (t.contains("cosmic")) pop_from_json(t.at("cosmic"), cfg.truth.cosmic);
      if (t.contains("other")) pop_from_json(t.at("other"), cfg.truth.other);
    }
    if (j.contains("simulate"))
      cfg.n_entries = j.at("simulate").value("n_entries", cfg.n_entries);
    if (j.contains("calibration")) {
      const auto& c = j.at("calibration");
      cfg.calibration.duration_h = c.value("duration_h", cfg.calibration.duration_h);
      cfg.calibration.bins = c.value("bins", cfg.calibration.bins);
      if (c.contains("combinations"))
        cfg.calibration.combinations = c.at("combinations").get<std::vector<std::string>>();
      cfg.calibration.max_evals = c.value("max_evals", cfg.calibration.max_evals);
    }
    cfg.chip_label = j.value("chip_label", cfg.chip_label);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::uint64_t RunConfig::config_hash() const { return io::fnv1a64(to_json_text()); }

void RunConfig::validate() const {
  try {
    timebase.validate();
    window.validate();
    const geom::Scene scene = make_scene();
    if (chip_index(scene) < 0) throw ConfigError("chip label not present in scene");
    for (const auto& rp : responses) {
      if (scene.labels().find(rp.label) < 0)
        throw ConfigError("response for unknown label " + rp.label);
      if (rp.a_adc_per_mev <= 0.0 || rp.b_resolution < 0.0 || rp.v_lo_adc >= rp.v_hi_adc)
        throw ConfigError("invalid response parameters for " + rp.label);
    }
    if (responses.size() != det_efficiencies.size())
      throw ConfigError("efficiency table size mismatch");
    if (qubits.empty()) throw ConfigError("no qubits configured");
    for (const auto& q : qubits)
      if (q.baseline_gamma <= 0.0 || q.recovery_tau_s <= 0.0 || q.fidelity_a <= 0.0 ||
          q.fidelity_a > 1.0)
        throw ConfigError("invalid qubit parameters for " + q.label);
    if (detection.template_flat <= 0 ||
        detection.template_length <= detection.template_flat)
      throw ConfigError("invalid template geometry");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

geom::Scene RunConfig::make_scene() const { return geom::Scene(prisms, deposition); }

int RunConfig::chip_index(const geom::Scene& scene) const {
  return scene.labels().find(chip_label);
}

std::map<int, geom::EnergyWindow> RunConfig::detector_windows(const geom::Scene& scene) const {
  std::map<int, geom::EnergyWindow> w;
  for (const auto& rp : responses) {
    const int idx = scene.labels().require(rp.label);
    w[idx] = {rp.v_lo_adc / rp.a_adc_per_mev, rp.v_hi_adc / rp.a_adc_per_mev};
  }
  return w;
}

std::map<int, geom::EnergyWindow> RunConfig::chip_windows(const geom::Scene& scene) const {
  auto w = detector_windows(scene);
  w[scene.labels().require(chip_label)] = {0.0, std::numeric_limits<double>::infinity()};
  return w;
}

std::vector<double> RunConfig::efficiencies_by_label(const geom::Scene& scene) const {
  std::vector<double> eff(static_cast<std::size_t>(scene.labels().size()), 0.0);
  for (std::size_t i = 0; i < responses.size(); ++i)
    eff[static_cast<std::size_t>(scene.labels().require(responses[i].label))] =
        det_efficiencies[i];
  return eff;
}

std::vector<detcal::ResponseParams> RunConfig::responses_by_label(const geom::Scene& scene) const {
  std::vector<detcal::ResponseParams> out(static_cast<std::size_t>(scene.labels().size()));
  for (const auto& rp : responses)
    out[static_cast<std::size_t>(scene.labels().require(rp.label))] = rp;
  return out;
}

det::FilterTemplate RunConfig::make_template() const {
  return det::make_template(timebase.cycle_duration_s, detection.template_length,
                            detection.template_flat, detection.template_tau_s);
}

// --- synchronization ---------------------------------------------------------

std::optional<SyncMap> SyncMap::build(const std::vector<std::int64_t>& ref_ts,
                                      const sim::TimebaseConfig& tb,
                                      std::uint64_t entry) {
  const std::uint64_t expected = tb.cycles_per_entry / tb.ref_pulse_period;
  if (ref_ts.size() != expected) return std::nullopt;
  for (std::size_t i = 1; i < ref_ts.size(); ++i)
    if (ref_ts[i] <= ref_ts[i - 1]) return std::nullopt;
  SyncMap m;
  m.entry_ = entry;
  m.period_cycles_ = static_cast<double>(tb.ref_pulse_period);
  m.t_ = ref_ts;
  m.c_.resize(ref_ts.size());
  for (std::size_t i = 0; i < ref_ts.size(); ++i)
    m.c_[i] = static_cast<double>((i + 1) * tb.ref_pulse_period);
  return m;
}

double SyncMap::cycle_at(std::int64_t t_ns) const {
  const auto it = std::upper_bound(t_.begin(), t_.end(), t_ns);
  std::size_t i1 = static_cast<std::size_t>(it - t_.begin());
  if (i1 == 0) i1 = 1;                       // extrapolate across the leading cycles
  if (i1 >= t_.size()) i1 = t_.size() - 1;   // and just beyond the last knot
  const std::size_t i0 = i1 - 1;
  const double slope = (c_[i1] - c_[i0]) / static_cast<double>(t_[i1] - t_[i0]);
  return c_[i0] + slope * static_cast<double>(t_ns - t_[i0]);
}

bool SyncMap::covers(std::int64_t t_ns) const {
  const double c = cycle_at(t_ns);
  return c >= 0.0 && c < c_.back();
}

SyncSet build_sync(const std::vector<std::int64_t>& ref_ts, const sim::TimebaseConfig& tb) {
  SyncSet out;
  if (ref_ts.empty()) return out;
  const double period_ns = static_cast<double>(tb.ref_pulse_period) *
                           tb.cycle_duration_s * 1e9;
  const auto split_gap = static_cast<std::int64_t>(10.0 * period_ns);
  const double entry_period_ns = (tb.entry_live_s() + tb.inter_entry_gap_s) * 1e9;

  std::vector<std::int64_t> group;
  auto flush = [&]() {
    if (group.empty()) return;
    const auto entry = static_cast<std::uint64_t>(
        std::floor(static_cast<double>(group.front()) / entry_period_ns));
    auto m = SyncMap::build(group, tb, entry);
    if (m)
      out.entries.emplace(entry, std::move(*m));
    else
      out.excluded.push_back(entry);
    group.clear();
  };
  for (std::size_t i = 0; i < ref_ts.size(); ++i) {
    if (!group.empty() && ref_ts[i] - group.back() > split_gap) flush();
    group.push_back(ref_ts[i]);
  }
  flush();
  return out;
}

std::vector<TaggedPulse> assign_pulses(const std::vector<sim::PulseRecord>& pulses,
                                       const SyncSet& sync,
                                       const std::vector<detcal::ResponseParams>& responses,
                                       const sim::TimebaseConfig& tb, DropTally* tally) {
  DropTally local;
  std::vector<TaggedPulse> out;
  const double entry_period_ns = (tb.entry_live_s() + tb.inter_entry_gap_s) * 1e9;
  for (const auto& p : pulses) {
    const auto entry = static_cast<std::uint64_t>(
        std::floor(static_cast<double>(p.timestamp_ns) / entry_period_ns));
    const auto it = sync.entries.find(entry);
    if (it == sync.entries.end() || !it->second.covers(p.timestamp_ns)) {
      ++local.outside_entry;
      continue;
    }
    const auto& rp = responses[static_cast<std::size_t>(p.detector)];
    if (p.amplitude_adc < rp.v_lo_adc || p.amplitude_adc > rp.v_hi_adc) {
      ++local.out_of_window;
      continue;
    }
    TaggedPulse t;
    t.entry = entry;
    t.cycle = static_cast<std::uint32_t>(it->second.cycle_at(p.timestamp_ns));
    t.detector = p.detector;
    t.amplitude_adc = p.amplitude_adc;
    out.push_back(t);
    ++local.accepted;
  }
  std::sort(out.begin(), out.end(), [](const TaggedPulse& a, const TaggedPulse& b) {
    return a.entry != b.entry ? a.entry < b.entry : a.cycle < b.cycle;
  });
  if (tally) *tally = local;
  return out;
}

// --- synthetic experiment -----------------------------------------------------

EntryGenerator::EntryGenerator(const RunConfig& cfg, const geom::Scene& scene,
                               const geom::DepositionTable& chip_table,
                               const geom::DepositionTable& detector_table)
    : cfg_(cfg),
      qubits_(cfg.qubits),
      responses_(cfg.responses_by_label(scene)),
      efficiencies_(cfg.efficiencies_by_label(scene)) {
  const int chip = cfg.chip_index(scene);
  std::uint64_t chip_hits = 0;
  for (std::size_t r = 0; r < chip_table.rows(); ++r) {
    if (!chip_table.hit_set(r).contains(chip)) continue;
    ++chip_hits;
    sim::DepositPattern pat;
    for (int l = 0; l < chip_table.n_labels(); ++l) {
      if (l == chip || !chip_table.hit_set(r).contains(l)) continue;
      pat.deposits.emplace_back(l, chip_table.energy(r, l));
    }
    chip_patterns_.push_back(std::move(pat));
  }
  sigma_q_ = static_cast<double>(chip_hits) * chip_table.tangent_area_cm2() /
             static_cast<double>(chip_table.total_thrown());

  std::uint64_t bg_rows = 0;
  for (std::size_t r = 0; r < detector_table.rows(); ++r) {
    if (detector_table.hit_set(r).contains(chip)) continue;
    sim::DepositPattern pat;
    for (int l = 0; l < detector_table.n_labels(); ++l) {
      if (l == chip || !detector_table.hit_set(r).contains(l)) continue;
      pat.deposits.emplace_back(l, detector_table.energy(r, l));
    }
    if (pat.deposits.empty()) continue;
    ++bg_rows;
    background_patterns_.push_back(std::move(pat));
  }
  background_rate_ = static_cast<double>(bg_rows) * detector_table.tangent_area_cm2() /
                     static_cast<double>(detector_table.total_thrown()) * cfg.flux_total;
}

EntryGenerator::Entry EntryGenerator::generate(std::uint64_t entry) const {
  Entry out;
  out.truth = sim::simulate_truth(sigma_q_, cfg_.flux_total, cfg_.truth, cfg_.timebase,
                                  entry, entry + 1, qubits_.size(), chip_patterns_.size(),
                                  cfg_.seed);
  out.shots = sim::render_shots(out.truth, qubits_, cfg_.timebase, entry, cfg_.seed);

  Rng rng(cfg_.seed, RngDomain::Pulses, entry);
  std::vector<std::pair<std::uint32_t, const sim::DepositPattern*>> arrivals;
  for (const auto& b : out.truth) {
    if (b.source != sim::BurstSource::Cosmic || b.linked_muon < 0) continue;
    arrivals.emplace_back(b.onset_cycle,
                          &chip_patterns_[static_cast<std::size_t>(b.linked_muon)]);
  }
  if (!background_patterns_.empty() && background_rate_ > 0.0) {
    const std::uint64_t n_bg = rng.poisson(background_rate_ * cfg_.timebase.entry_live_s());
    for (std::uint64_t i = 0; i < n_bg; ++i) {
      const auto cycle = static_cast<std::uint32_t>(std::min<std::uint64_t>(
          cfg_.timebase.cycles_per_entry - 1,
          static_cast<std::uint64_t>(rng.uniform() *
                                     static_cast<double>(cfg_.timebase.cycles_per_entry))));
      const auto pick = static_cast<std::size_t>(rng.uniform() *
                                                 static_cast<double>(background_patterns_.size()));
      arrivals.emplace_back(cycle,
                            &background_patterns_[std::min(pick, background_patterns_.size() - 1)]);
    }
  }
  std::stable_sort(arrivals.begin(), arrivals.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  out.pulses = sim::render_pulses(arrivals, responses_, efficiencies_, cfg_.timebase,
                                  entry, rng);
  out.ref_pulses = sim::emit_reference_pulses(cfg_.timebase, entry);
  return out;
}

// --- stages ---------------------------------------------------------------------

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Sample: return "sample";
    case Stage::Transport: return "transport";
    case Stage::Xsection: return "xsection";
    case Stage::Simulate: return "simulate";
    case Stage::Detect: return "detect";
    case Stage::Coincide: return "coincide";
    case Stage::Calibrate: return "calibrate";
    case Stage::Report: return "report";
  }
  return "?";
}

std::optional<Stage> parse_stage(const std::string& name) {
  for (Stage s : {Stage::Sample, Stage::Transport, Stage::Xsection, Stage::Simulate,
                  Stage::Detect, Stage::Coincide, Stage::Calibrate, Stage::Report})
    if (name == stage_name(s)) return s;
  if (name == "sample-muons") return Stage::Sample;
  return std::nullopt;
}

namespace {

namespace fs = std::filesystem;

struct Paths {
  fs::path out;
  fs::path muons_det() const { return out / "muons_det.bin"; }
  fs::path muons_chip() const { return out / "muons_chip.bin"; }
  fs::path depo_det() const { return out / "depositions_det.bin"; }
  fs::path depo_chip() const { return out / "depositions_chip.bin"; }
  fs::path xs_det() const { return out / "xsections_det.txt"; }
  fs::path xs_chip() const { return out / "xsections_chip.txt"; }
  fs::path truth() const { return out / "truth.csv"; }
  fs::path shots() const { return out / "shots.bin"; }
  fs::path pulses() const { return out / "pulses.csv"; }
  fs::path refs() const { return out / "ref_pulses.csv"; }
  fs::path events() const { return out / "events.csv"; }
  fs::path dynamics() const { return out / "dynamics.csv"; }
  fs::path ledger() const { return out / "ledger.txt"; }
  fs::path hist_fine() const { return out / "interarrival_fine.csv"; }
  fs::path hist_coarse() const { return out / "interarrival_coarse.csv"; }
  fs::path snr() const { return out / "snr_window.csv"; }
  fs::path participation() const { return out / "participation.csv"; }
  fs::path detcal_fit() const { return out / "detcal_fit.txt"; }
  fs::path report() const { return out / "report.txt"; }
};

void require_artifact(const fs::path& p, Stage stage) {
  if (!fs::exists(p)) throw DependencyError(stage_name(stage), p.string());
}

flux::SamplerConfig sampler_config(const SamplingBlock& b, std::uint64_t seed) {
  flux::SamplerConfig sc;
  sc.hemisphere_origin = b.hemisphere_origin_cm;
  sc.hemisphere_radius_cm = b.hemisphere_radius_cm;
  sc.tangent_side_cm = b.tangent_side_cm;
  sc.sample_count = b.count;
  sc.rng_seed = seed;
  return sc;
}

void check_side_rule(const geom::Scene& scene, const SamplingBlock& block) {
  LabelSet unbiased = block.unbiased.empty() ? scene.all_labels()
                                             : scene.labels().parse(block.unbiased);
  const double d = scene.max_extent_from(block.hemisphere_origin_cm, unbiased);
  if (block.tangent_side_cm <= 2.0 * d)
    throw ConfigError("tangent side " + std::to_string(block.tangent_side_cm) +
                      " violates the side-length rule for unbiased volumes (need > " +
                      std::to_string(2.0 * d) + ")");
}

void stage_sample(const RunConfig& cfg, const Paths& paths) {
  const geom::Scene scene = cfg.make_scene();
  const io::FileMeta meta{cfg.seed, cfg.config_hash()};
  check_side_rule(scene, cfg.detector_focus);
  check_side_rule(scene, cfg.chip_focus);
  {
    flux::MuonThrower thrower(sampler_config(cfg.detector_focus, cfg.seed), cfg.flux_model);
    io::write_muons(paths.muons_det(), meta, cfg.detector_focus.tangent_side_cm,
                    thrower.sample_batch(cfg.detector_focus.count));
  }
  {
    flux::MuonThrower thrower(sampler_config(cfg.chip_focus, cfg.seed + 0x517cc1b7ull),
                              cfg.flux_model);
    io::write_muons(paths.muons_chip(), meta, cfg.chip_focus.tangent_side_cm,
                    thrower.sample_batch(cfg.chip_focus.count));
  }
}

void stage_transport(const RunConfig& cfg, const Paths& paths, int threads) {
  require_artifact(paths.muons_det(), Stage::Transport);
  require_artifact(paths.muons_chip(), Stage::Transport);
  const geom::Scene scene = cfg.make_scene();
  const io::FileMeta meta{cfg.seed, cfg.config_hash()};
  {
    double side = 0.0;
    const auto muons = io::read_muons(paths.muons_det(), &side);
    const auto table = geom::run_transport(muons, scene, side * side, cfg.seed, threads);
    io::write_depositions(paths.depo_det(), meta, table, scene.labels());
  }
  {
    double side = 0.0;
    const auto muons = io::read_muons(paths.muons_chip(), &side);
    const auto table =
        geom::run_transport(muons, scene, side * side, cfg.seed + 1, threads);
    io::write_depositions(paths.depo_chip(), meta, table, scene.labels());
  }
}

void stage_xsection(const RunConfig& cfg, const Paths& paths) {
  require_artifact(paths.depo_det(), Stage::Xsection);
  require_artifact(paths.depo_chip(), Stage::Xsection);
  const geom::Scene scene = cfg.make_scene();
  const io::FileMeta meta{cfg.seed, cfg.config_hash()};
  const auto det_table = io::read_depositions(paths.depo_det(), scene.labels());
  const auto chip_table = io::read_depositions(paths.depo_chip(), scene.labels());
  io::write_cross_sections(paths.xs_det(), meta,
                           geom::cross_sections(det_table, scene, cfg.detector_windows(scene)),
                           scene.labels());
  io::write_cross_sections(paths.xs_chip(), meta,
                           geom::cross_sections(chip_table, scene, cfg.chip_windows(scene)),
                           scene.labels());
}

void stage_simulate(const RunConfig& cfg, const Paths& paths) {
  require_artifact(paths.depo_det(), Stage::Simulate);
  require_artifact(paths.depo_chip(), Stage::Simulate);
  const geom::Scene scene = cfg.make_scene();
  const io::FileMeta meta{cfg.seed, cfg.config_hash()};
  const auto det_table = io::read_depositions(paths.depo_det(), scene.labels());
  const auto chip_table = io::read_depositions(paths.depo_chip(), scene.labels());
  EntryGenerator gen(cfg, scene, chip_table, det_table);

  std::vector<sim::BurstTruth> truth;
  std::vector<sim::ShotMatrix> shots;
  std::vector<sim::PulseRecord> pulses;
  std::vector<std::int64_t> refs;
  for (std::uint64_t e = 0; e < cfg.n_entries; ++e) {
    auto entry = gen.generate(e);
    truth.insert(truth.end(), entry.truth.begin(), entry.truth.end());
    pulses.insert(pulses.end(), entry.pulses.begin(), entry.pulses.end());
    refs.insert(refs.end(), entry.ref_pulses.begin(), entry.ref_pulses.end());
    shots.push_back(std::move(entry.shots));
  }
  io::write_truth(paths.truth(), meta, truth);
  io::write_shots(paths.shots(), meta, shots);
  io::write_pulses(paths.pulses(), meta, pulses, scene.labels());
  io::write_timestamps(paths.refs(), meta, refs);
}

void stage_detect(const RunConfig& cfg, const Paths& paths) {
  require_artifact(paths.shots(), Stage::Detect);
  const io::FileMeta meta{cfg.seed, cfg.config_hash()};
  const auto shots = io::read_shots(paths.shots());
  const auto tpl = cfg.make_template();
  det::DetectConfig dc;
  dc.candidate_threshold = cfg.detection.candidate_threshold;
  dc.accept_threshold = cfg.detection.accept_threshold;
  dc.min_separation_s = cfg.detection.min_separation_s;

  std::vector<det::Event> events;
  std::vector<io::DynamicsRow> dyn_rows;
  for (const auto& entry : shots) {
    const auto counts = det::relaxation_series(entry);
    const auto catalog = det::detect_events(counts, tpl, dc, entry.entry(), entry.start_ns());
    for (const auto& ev : catalog.events) {
      const std::uint64_t event_id = events.size();
      events.push_back(ev);
      const auto dyn = det::extract_dynamics(entry, ev.onset_cycle, cfg.qubits,
                                             cfg.detection.dynamics);
      if (!dyn.pre_window_ok) continue;  // baseline crosses the entry edge
      for (int q = 0; q < entry.n_qubits(); ++q) {
        io::DynamicsRow row;
        row.event_id = event_id;
        row.qubit = q;
        row.p_pre = dyn.p_pre[static_cast<std::size_t>(q)];
        row.dgamma_init = dyn.dgamma_init[static_cast<std::size_t>(q)];
        const auto fit = det::fit_recovery(dyn.dgamma_t[static_cast<std::size_t>(q)],
                                           cfg.detection.dynamics.bin_cycles *
                                               cfg.timebase.cycle_duration_s);
        row.tau_s = fit.tau_s;
        row.participation = dyn.participation[static_cast<std::size_t>(q)];
        dyn_rows.push_back(row);
      }
    }
  }
  io::write_events(paths.events(), meta, events);
  io::write_dynamics(paths.dynamics(), meta, dyn_rows);
}

struct DetectorRates {
  std::vector<double> r_d;
  std::vector<double> r_ds;
  std::uint64_t n_s_cycles = 0;
};

DetectorRates detector_rates(const std::vector<TaggedPulse>& tagged, int n_labels,
                             double live_s) {
  DetectorRates out;
  out.r_d.assign(static_cast<std::size_t>(n_labels), 0.0);
  out.r_ds.assign(static_cast<std::size_t>(n_labels), 0.0);
  std::vector<std::uint64_t> n_d(static_cast<std::size_t>(n_labels), 0);
  std::vector<std::uint64_t> n_ds(static_cast<std::size_t>(n_labels), 0);
  std::size_t i = 0;
  while (i < tagged.size()) {
    std::size_t j = i;
    LabelSet present;
    while (j < tagged.size() && tagged[j].entry == tagged[i].entry &&
           tagged[j].cycle == tagged[i].cycle) {
      present = present.with(tagged[j].detector);
      ++j;
    }
    ++out.n_s_cycles;
    for (int l = 0; l < n_labels; ++l) {
      if (!present.contains(l)) continue;
      ++n_d[static_cast<std::size_t>(l)];
      if (present.count() >= 2) ++n_ds[static_cast<std::size_t>(l)];
    }
    i = j;
  }
  for (int l = 0; l < n_labels; ++l) {
    out.r_d[static_cast<std::size_t>(l)] = static_cast<double>(n_d[static_cast<std::size_t>(l)]) / live_s;
    out.r_ds[static_cast<std::size_t>(l)] = static_cast<double>(n_ds[static_cast<std::size_t>(l)]) / live_s;
  }
  return out;
}

void stage_coincide(const RunConfig& cfg, const Paths& paths) {
  for (const auto& p : {paths.events(), paths.pulses(), paths.refs(), paths.depo_det(),
                        paths.depo_chip()})
    require_artifact(p, Stage::Coincide);
  const geom::Scene scene = cfg.make_scene();
  const io::FileMeta meta{cfg.seed, cfg.config_hash()};
  const int chip = cfg.chip_index(scene);

  const auto events = io::read_events(paths.events());
  const auto pulses = io::read_pulses(paths.pulses(), scene.labels());
  const auto refs = io::read_timestamps(paths.refs());
  const auto sync = build_sync(refs, cfg.timebase);
  DropTally tally;
  const auto tagged = assign_pulses(pulses, sync, cfg.responses_by_label(scene),
                                    cfg.timebase, &tally);

  const double live_s = static_cast<double>(cfg.n_entries) * cfg.timebase.entry_live_s();
  std::vector<coin::CycleStamp> pulse_stamps;
  pulse_stamps.reserve(tagged.size());
  for (const auto& t : tagged) pulse_stamps.push_back({t.entry, t.cycle});
  std::vector<coin::CycleStamp> event_stamps;
  event_stamps.reserve(events.size());
  for (const auto& e : events) event_stamps.push_back({e.entry, e.onset_cycle});

  const auto delays = coin::nearest_delays(event_stamps, pulse_stamps,
                                           cfg.timebase.cycle_duration_s);
  const auto rates = detector_rates(tagged, scene.labels().size(), live_s);

  // cross-sections and collective efficiency
  const auto det_table = io::read_depositions(paths.depo_det(), scene.labels());
  const auto chip_table = io::read_depositions(paths.depo_chip(), scene.labels());
  const auto xs_det = geom::cross_sections(det_table, scene, cfg.detector_windows(scene));
  const auto xs_chip = geom::cross_sections(chip_table, scene, cfg.chip_windows(scene));

  std::vector<int> det_labels;
  for (const auto& rp : cfg.responses) det_labels.push_back(scene.labels().require(rp.label));
  std::vector<double> r_d, r_ds;
  for (int l : det_labels) {
    r_d.push_back(rates.r_d[static_cast<std::size_t>(l)]);
    r_ds.push_back(rates.r_ds[static_cast<std::size_t>(l)]);
  }
  const auto fe = coin::estimate_flux_and_efficiency(r_d, r_ds, xs_det, det_labels);

  std::vector<double> eff(static_cast<std::size_t>(scene.labels().size()), fe.efficiency);
  const double sigma_q = xs_chip.sigma_inclusive(LabelSet::single(chip));
  const double sigma_qs = geom::sigma_coincidence(chip, xs_chip);
  const double sigma_qs_eff = geom::sigma_coincidence_eff(chip, xs_chip, eff);

  coin::LedgerCounts counts;
  counts.n_q = events.size();
  counts.n_s_cycles = rates.n_s_cycles;
  counts.n_qs = delays.coincidences(cfg.window.coincidence_window_cycles);
  counts.n_cycles = cfg.n_entries * cfg.timebase.cycles_per_entry;
  counts.cycle_duration_s = cfg.timebase.cycle_duration_s;
  counts.window_cycles = cfg.window.coincidence_window_cycles;

  coin::CoverageInputs cov;
  cov.sigma_q_cm2 = sigma_q;
  cov.sigma_qs_cm2 = sigma_qs;
  cov.eps_window = cfg.eps_window;
  cov.eps_s = sigma_qs > 0.0 ? sigma_qs_eff / sigma_qs : 0.0;
  const double chip_hits = sigma_q * static_cast<double>(xs_chip.total_thrown) /
                           xs_chip.tangent_area_cm2;
  const double qs_hits = sigma_qs * static_cast<double>(xs_chip.total_thrown) /
                         xs_chip.tangent_area_cm2;
  cov.sigma_q_rel_err = chip_hits > 0 ? 1.0 / std::sqrt(chip_hits) : 0.0;
  cov.sigma_qs_rel_err = qs_hits > 0 ? 1.0 / std::sqrt(qs_hits) : 0.0;
  cov.eps_window_err = 0.01;

  auto ledger = coin::decompose_rates(counts, cov);
  ledger.flux = fe.flux;
  ledger.flux_err = fe.flux_err;

  // ledger text
  io::atomic_write(paths.ledger(), [&](std::ostream& os) {
    os << "# seed=" << cfg.seed << " config_hash=" << std::hex << cfg.config_hash()
       << std::dec << "\n";
    os << std::setprecision(8);
    os << "live_time_s " << ledger.duration_s << "\n";
    os << "wall_time_s "
       << static_cast<double>(cfg.n_entries) *
              (cfg.timebase.entry_live_s() + cfg.timebase.inter_entry_gap_s)
       << "\n";
    os << "n_q " << ledger.n_q << "\n";
    os << "n_s_cycles " << ledger.n_s << "\n";
    os << "n_qs " << ledger.n_qs << "\n";
    os << "pulses_accepted " << tally.accepted << "\n";
    os << "pulses_out_of_window " << tally.out_of_window << "\n";
    os << "pulses_outside_entry " << tally.outside_entry << "\n";
    auto rate = [&](const char* k, const coin::RateEstimate& r) {
      os << k << " " << r.value << " -" << r.err_lo << " +" << r.err_hi << "\n";
    };
    rate("r_q_per_s", ledger.r_q);
    rate("r_s_per_s", ledger.r_s);
    rate("r_qs_per_s", ledger.r_qs);
    rate("r_qs_acc_per_s", ledger.r_qs_acc);
    rate("r_qs_mu_per_s", ledger.r_qs_mu);
    rate("r_q_mu_per_s", ledger.r_q_mu);
    rate("r_q_other_per_s", ledger.r_q_other);
    os << "coverage " << ledger.coverage << " +- " << ledger.coverage_err << "\n";
    os << "cosmic_fraction " << ledger.cosmic_fraction << " +- "
       << ledger.cosmic_fraction_err << "\n";
    os << "sigma_q_cm2 " << sigma_q << "\n";
    os << "sigma_qs_cm2 " << sigma_qs << "\n";
    os << "eps_s " << cov.eps_s << "\n";
    os << "eps_window " << cfg.eps_window << "\n";
    os << "efficiency_shared " << fe.efficiency << " +- " << fe.efficiency_err << "\n";
    os << "flux_per_s_cm2 " << fe.flux << " +- " << fe.flux_err << "\n";
  });

  // inter-arrival histograms (fine = window-width bins, coarse = 200 cycles)
  auto write_hist = [&](const fs::path& path, int bin_cycles, int n_bins) {
    std::vector<std::vector<double>> rows;
    const double bin_s = bin_cycles * cfg.timebase.cycle_duration_s;
    for (int b = -n_bins; b <= n_bins; ++b) {
      const double center_s = b * bin_s;
      double observed = 0.0;
      for (const auto& d : delays.delays) {
        if (!d.delta_cycles) continue;
        const double ds = static_cast<double>(*d.delta_cycles) * cfg.timebase.cycle_duration_s;
        if (ds >= center_s - bin_s / 2 && ds < center_s + bin_s / 2) observed += 1.0;
      }
      double expected_bg;
      if (b == 0) {
        expected_bg = ledger.r_qs_acc.value * ledger.duration_s;
      } else {
        expected_bg = coin::background_histogram(ledger.r_q.value, ledger.r_qs_mu.value,
                                                 ledger.r_s.value, bin_s, {center_s},
                                                 ledger.duration_s)[0];
      }
      const double expected_cosmic = b == 0 ? ledger.r_qs_mu.value * ledger.duration_s : 0.0;
      rows.push_back({center_s, observed, expected_bg, expected_cosmic});
    }
    io::write_csv(path, meta, "bin_center_s,observed,expected_background,expected_cosmic",
                  rows);
  };
  write_hist(paths.hist_fine(), cfg.window.coincidence_window_cycles, 20);
  write_hist(paths.hist_coarse(), 200, 30);

  // SNR vs window
  {
    const auto snr = coin::snr_vs_window(delays, counts, {1, 3, 5, 7, 9, 11, 15, 21});
    std::vector<std::vector<double>> rows;
    for (const auto& r : snr)
      rows.push_back({static_cast<double>(r.window_cycles), static_cast<double>(r.n_qs),
                      r.n_acc, r.snr, r.argmax ? 1.0 : 0.0});
    io::write_csv(paths.snr(), meta, "window_cycles,n_qs,n_acc,snr,argmax", rows);
  }

  // participation stacks from the dynamics file
  if (fs::exists(paths.dynamics())) {
    std::ifstream is(paths.dynamics());
    std::string line;
    std::map<std::uint64_t, int> multiplicity;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("event_id", 0) == 0) continue;
      std::stringstream ss(line);
      std::string f;
      std::getline(ss, f, ',');
      const std::uint64_t id = std::stoull(f);
      for (int skip = 0; skip < 4; ++skip) std::getline(ss, f, ',');
      std::getline(ss, f, ',');
      multiplicity[id] += (f == "1") ? 1 : 0;
    }
    const std::int64_t half = (cfg.window.coincidence_window_cycles - 1) / 2;
    std::vector<int> mult;
    std::vector<bool> tag;
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto it = multiplicity.find(i);
      if (it == multiplicity.end()) continue;
      mult.push_back(it->second);
      const auto& d = delays.delays[i];
      tag.push_back(d.delta_cycles && std::llabs(*d.delta_cycles) <= half);
    }
    const auto hist = det::participation_histogram(mult, tag,
                                                   static_cast<int>(cfg.qubits.size()),
                                                   ledger.coverage);
    std::vector<std::vector<double>> rows;
    for (std::size_t m = 0; m < hist.total.size(); ++m)
      rows.push_back({static_cast<double>(m), hist.total[m], hist.cosmic[m], hist.other[m]});
    io::write_csv(paths.participation(), meta, "multiplicity,total,cosmic,other", rows);
  }
}

void stage_calibrate(const RunConfig& cfg, const Paths& paths) {
  require_artifact(paths.depo_det(), Stage::Calibrate);
  const geom::Scene scene = cfg.make_scene();
  const io::FileMeta meta{cfg.seed, cfg.config_hash()};
  const auto det_table = io::read_depositions(paths.depo_det(), scene.labels());
  const int chip = cfg.chip_index(scene);

  // detector-only stream (run-0 style): arrivals on a cycle grid
  const double duration_s = cfg.calibration.duration_h * 3600.0;
  const auto n_cycles = static_cast<std::uint64_t>(duration_s / cfg.timebase.cycle_duration_s);
  std::vector<sim::DepositPattern> patterns;
  for (std::size_t r = 0; r < det_table.rows(); ++r) {
    sim::DepositPattern pat;
    for (int l = 0; l < det_table.n_labels(); ++l) {
      if (l == chip || !det_table.hit_set(r).contains(l)) continue;
      pat.deposits.emplace_back(l, det_table.energy(r, l));
    }
    if (!pat.deposits.empty()) patterns.push_back(std::move(pat));
  }
  if (patterns.empty()) throw FitFailure("calibrate: deposition table has no detector rows");
  const double rate = static_cast<double>(patterns.size()) * det_table.tangent_area_cm2() /
                      static_cast<double>(det_table.total_thrown()) * cfg.flux_total;

  const auto responses = cfg.responses_by_label(scene);
  const auto efficiencies = cfg.efficiencies_by_label(scene);
  Rng rng(cfg.seed, RngDomain::Pulses, 0xCA1u);
  const std::uint64_t n_arrivals = rng.poisson(rate * duration_s);

  struct CyclePulse {
    std::uint64_t cycle;
    int det;
    double amp;
  };
  std::vector<CyclePulse> stream;
  for (std::uint64_t i = 0; i < n_arrivals; ++i) {
    const auto cycle = static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(n_cycles));
    const auto pick = std::min(patterns.size() - 1,
                               static_cast<std::size_t>(rng.uniform() *
                                                        static_cast<double>(patterns.size())));
    for (const auto& [det_idx, e_mev] : patterns[pick].deposits) {
      if (rng.uniform() >= efficiencies[static_cast<std::size_t>(det_idx)]) continue;
      const auto& rp = responses[static_cast<std::size_t>(det_idx)];
      const double sigma = detcal::resolution_sigma_mev(rp.b_resolution, e_mev);
      const double amp = rp.a_adc_per_mev * std::max(0.0, e_mev + sigma * rng.normal());
      stream.push_back({cycle, det_idx, amp});
    }
  }
  std::sort(stream.begin(), stream.end(), [](const CyclePulse& a, const CyclePulse& b) {
    return a.cycle < b.cycle;
  });

  // observed spectra per inclusive combination
  std::vector<LabelSet> combos;
  for (const auto& rp : cfg.responses)
    combos.push_back(LabelSet::single(scene.labels().require(rp.label)));
  for (const auto& name : cfg.calibration.combinations)
    combos.push_back(scene.labels().parse(name));

  const auto xs_all = [&] {
    std::map<int, geom::EnergyWindow> open;
    for (const auto& rp : cfg.responses)
      open[scene.labels().require(rp.label)] = {0.0, std::numeric_limits<double>::infinity()};
    return geom::cross_sections(det_table, scene, open);
  }();

  std::vector<detcal::FitSpectrum> spectra;
  std::vector<detcal::ResponseParams> init;
  std::vector<int> slot_of_label(static_cast<std::size_t>(scene.labels().size()), -1);
  for (const auto& rp : cfg.responses) {
    const int l = scene.labels().require(rp.label);
    slot_of_label[static_cast<std::size_t>(l)] = static_cast<int>(init.size());
    init.push_back(rp);
  }

  for (const auto& combo : combos) {
    // deposit energies among rows hitting all of the combination
    for (int k = 0; k < scene.labels().size(); ++k) {
      if (!combo.contains(k)) continue;
      std::vector<double> energies;
      for (std::size_t r = 0; r < det_table.rows(); ++r)
        if (det_table.hit_set(r).contains_all(combo)) energies.push_back(det_table.energy(r, k));
      if (energies.size() < 50) continue;
      detcal::FitSpectrum sp;
      sp.det = k;
      sp.fold = combo.count();
      sp.sigma_cm2 = xs_all.sigma_inclusive(combo);
      sp.deposit = detcal::deposit_pdf(energies);
      sp.observed.detector = scene.labels().name(k);
      sp.observed.combination = scene.labels().to_string(combo);
      const auto& rp = init[static_cast<std::size_t>(slot_of_label[static_cast<std::size_t>(k)])];
      const int nb = cfg.calibration.bins;
      sp.observed.edges_adc.resize(static_cast<std::size_t>(nb) + 1);
      for (int b = 0; b <= nb; ++b)
        sp.observed.edges_adc[static_cast<std::size_t>(b)] =
            rp.v_lo_adc + (rp.v_hi_adc - rp.v_lo_adc) * b / nb;
      sp.observed.counts.assign(static_cast<std::size_t>(nb), 0.0);
      spectra.push_back(std::move(sp));
    }
  }

  // fill observed counts by scanning same-cycle groups
  std::size_t i = 0;
  while (i < stream.size()) {
    std::size_t j = i;
    LabelSet present;
    while (j < stream.size() && stream[j].cycle == stream[i].cycle) {
      present = present.with(stream[j].det);
      ++j;
    }
    for (auto& sp : spectra) {
      LabelSet combo = scene.labels().parse(sp.observed.combination);
      if (!present.contains_all(combo)) continue;
      for (std::size_t p = i; p < j; ++p) {
        if (stream[p].det != sp.det) continue;
        const auto& edges = sp.observed.edges_adc;
        if (stream[p].amp < edges.front() || stream[p].amp >= edges.back()) continue;
        const auto bin = static_cast<std::size_t>((stream[p].amp - edges.front()) /
                                                  (edges[1] - edges[0]));
        if (bin < sp.observed.counts.size()) sp.observed.counts[bin] += 1.0;
      }
    }
    i = j;
  }

  detcal::FitConfig fc;
  fc.duration_s = duration_s;
  fc.init_eff = 0.9;
  fc.init_flux = cfg.flux_total * 0.9;
  fc.max_evals = cfg.calibration.max_evals;
  const auto fit = detcal::fit_response(spectra, init, fc);
  if (!fit.converged)
    throw FitFailure("calibrate: minimizer did not converge within the evaluation budget");

  io::atomic_write(paths.detcal_fit(), [&](std::ostream& os) {
    os << "# seed=" << cfg.seed << " config_hash=" << std::hex << cfg.config_hash()
       << std::dec << "\n";
    os << "# label a_adc_per_mev a_err b_resolution b_err v_lo v_hi e_lo_mev e_hi_mev\n";
    os << std::setprecision(6);
    for (std::size_t k = 0; k < fit.params.size(); ++k) {
      const auto& p = fit.params[k];
      os << p.label << " " << p.a_adc_per_mev << " " << fit.a_err[k] << " "
         << p.b_resolution << " " << fit.b_err[k] << " " << p.v_lo_adc << " "
         << p.v_hi_adc << " " << p.v_lo_adc / p.a_adc_per_mev << " "
         << p.v_hi_adc / p.a_adc_per_mev << "\n";
    }
    os << "# nuisance efficiency " << fit.efficiency << " flux " << fit.flux << "\n";
    os << "# cost " << fit.cost << " evals " << fit.evals << "\n";
  });
}

void stage_report(const RunConfig& cfg, const Paths& paths) {
  require_artifact(paths.ledger(), Stage::Report);
  io::atomic_write(paths.report(), [&](std::ostream& os) {
    os << "synthetic cosmic-ray / qubit coincidence run\n";
    os << "config_hash " << std::hex << cfg.config_hash() << std::dec << "\n";
    os << "seed " << cfg.seed << "\n";
    os << "entries " << cfg.n_entries << "\n\n";
    std::ifstream led(paths.ledger());
    os << led.rdbuf();
    for (const auto& p :
         {paths.hist_fine(), paths.hist_coarse(), paths.snr(), paths.participation()})
      if (fs::exists(p)) os << "artifact " << p.filename().string() << "\n";
  });
}

}  // namespace

void run_pipeline(const RunConfig& cfg, const std::set<Stage>& stages,
                  const PipelineOptions& opts) {
  cfg.validate();
  Paths paths{opts.out_dir};
  std::filesystem::create_directories(opts.out_dir);
  for (Stage s : {Stage::Sample, Stage::Transport, Stage::Xsection, Stage::Simulate,
                  Stage::Detect, Stage::Coincide, Stage::Calibrate, Stage::Report}) {
    if (!stages.count(s)) continue;
    switch (s) {
      case Stage::Sample: stage_sample(cfg, paths); break;
      case Stage::Transport: stage_transport(cfg, paths, opts.threads); break;
      case Stage::Xsection: stage_xsection(cfg, paths); break;
      case Stage::Simulate: stage_simulate(cfg, paths); break;
      case Stage::Detect: stage_detect(cfg, paths); break;
      case Stage::Coincide: stage_coincide(cfg, paths); break;
      case Stage::Calibrate: stage_calibrate(cfg, paths); break;
      case Stage::Report: stage_report(cfg, paths); break;
    }
  }
}

}  // namespace crq::pipe
