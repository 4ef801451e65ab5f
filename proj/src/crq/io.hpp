#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "crq/burstdetect.hpp"
#include "crq/flux.hpp"
#include "crq/geometry.hpp"
#include "crq/streamsim.hpp"

namespace crq::io {

// FNV-1a over the canonical config dump; stamped into every artifact.
std::uint64_t fnv1a64(const std::string& s);

struct FileMeta {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

// Writes via a temp file then renames, so partial artifacts never appear.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer);

// --- muon batches: 16-byte magic/version header, then metadata and
// little-endian f64 records (origin xyz, direction xyz, energy).
void write_muons(const std::filesystem::path& path, const FileMeta& meta,
                 double tangent_side_cm, const std::vector<flux::MuonSample>& muons);
std::vector<flux::MuonSample> read_muons(const std::filesystem::path& path,
                                         double* tangent_side_cm = nullptr);

// --- deposition tables: (muon index, label, energy) records
void write_depositions(const std::filesystem::path& path, const FileMeta& meta,
                       const geom::DepositionTable& table,
                       const LabelRegistry& labels);
geom::DepositionTable read_depositions(const std::filesystem::path& path,
                                       const LabelRegistry& labels);

// --- cross-sections: two-column text table (combination, sigma cm^2)
void write_cross_sections(const std::filesystem::path& path, const FileMeta& meta,
                          const geom::CrossSectionSet& xs, const LabelRegistry& labels);

// --- shot matrices: per entry a header then packed bits row-major [cycle][qubit]
void write_shots(const std::filesystem::path& path, const FileMeta& meta,
                 const std::vector<sim::ShotMatrix>& entries);
std::vector<sim::ShotMatrix> read_shots(const std::filesystem::path& path);

// --- pulse records: text (detector label, timestamp ns, amplitude)
void write_pulses(const std::filesystem::path& path, const FileMeta& meta,
                  const std::vector<sim::PulseRecord>& pulses,
                  const LabelRegistry& labels);
std::vector<sim::PulseRecord> read_pulses(const std::filesystem::path& path,
                                          const LabelRegistry& labels);

void write_timestamps(const std::filesystem::path& path, const FileMeta& meta,
                      const std::vector<std::int64_t>& ts);
std::vector<std::int64_t> read_timestamps(const std::filesystem::path& path);

// --- burst truth: one record per burst
void write_truth(const std::filesystem::path& path, const FileMeta& meta,
                 const std::vector<sim::BurstTruth>& truth);
std::vector<sim::BurstTruth> read_truth(const std::filesystem::path& path);

// --- event catalogs
void write_events(const std::filesystem::path& path, const FileMeta& meta,
                  const std::vector<det::Event>& events);
std::vector<det::Event> read_events(const std::filesystem::path& path);

struct DynamicsRow {
  std::uint64_t event_id = 0;
  int qubit = 0;
  double p_pre = 0.0;
  double dgamma_init = 0.0;
  double tau_s = 0.0;
  bool participation = false;
};
void write_dynamics(const std::filesystem::path& path, const FileMeta& meta,
                    const std::vector<DynamicsRow>& rows);

// Generic CSV with a metadata comment header.
void write_csv(const std::filesystem::path& path, const FileMeta& meta,
               const std::string& header,
               const std::vector<std::vector<double>>& rows);

}  // namespace crq::io
