#include "crq/io.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace crq::io {

namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("io: truncated file");
  return v;
}

void put_magic(std::ostream& os, const char tag[8], std::uint32_t version) {
  os.write(tag, 8);
  put(os, version);
  put(os, std::uint32_t{0});
}

void check_magic(std::istream& is, const char tag[8]) {
  char buf[8];
  is.read(buf, 8);
  if (!is || std::memcmp(buf, tag, 8) != 0)
    throw std::runtime_error("io: bad file magic");
  (void)get<std::uint32_t>(is);
  (void)get<std::uint32_t>(is);
}

void put_meta(std::ostream& os, const FileMeta& meta) {
  put(os, meta.seed);
  put(os, meta.config_hash);
}

FileMeta get_meta(std::istream& is) {
  FileMeta m;
  m.seed = get<std::uint64_t>(is);
  m.config_hash = get<std::uint64_t>(is);
  return m;
}

std::string meta_comment(const FileMeta& meta) {
  std::ostringstream ss;
  ss << "# seed=" << meta.seed << " config_hash=" << std::hex << meta.config_hash
     << std::dec << "\n";
  return ss.str();
}

}  // namespace

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer) {
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("io: cannot open " + tmp.string());
    writer(os);
    if (!os) throw std::runtime_error("io: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_muons(const std::filesystem::path& path, const FileMeta& meta,
                 double tangent_side_cm, const std::vector<flux::MuonSample>& muons) {
  atomic_write(path, [&](std::ostream& os) {
    put_magic(os, "CRQMUON\0", 1);
    put_meta(os, meta);
    put(os, tangent_side_cm);
    put(os, static_cast<std::uint64_t>(muons.size()));
    for (const auto& m : muons) {
      put(os, m.origin_cm.x);
      put(os, m.origin_cm.y);
      put(os, m.origin_cm.z);
      put(os, m.direction.x);
      put(os, m.direction.y);
      put(os, m.direction.z);
      put(os, m.energy_gev);
    }
  });
}

std::vector<flux::MuonSample> read_muons(const std::filesystem::path& path,
                                         double* tangent_side_cm) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("io: cannot open " + path.string());
  check_magic(is, "CRQMUON\0");
  (void)get_meta(is);
  const double side = get<double>(is);
  if (tangent_side_cm) *tangent_side_cm = side;
  const auto count = get<std::uint64_t>(is);
  std::vector<flux::MuonSample> out(count);
  for (auto& m : out) {
    m.origin_cm.x = get<double>(is);
    m.origin_cm.y = get<double>(is);
    m.origin_cm.z = get<double>(is);
    m.direction.x = get<double>(is);
    m.direction.y = get<double>(is);
    m.direction.z = get<double>(is);
    m.energy_gev = get<double>(is);
  }
  return out;
}

void write_depositions(const std::filesystem::path& path, const FileMeta& meta,
                       const geom::DepositionTable& table,
                       const LabelRegistry& labels) {
  atomic_write(path, [&](std::ostream& os) {
    put_magic(os, "CRQDEPO\0", 1);
    put_meta(os, meta);
    put(os, table.total_thrown());
    put(os, table.tangent_area_cm2());
    put(os, static_cast<std::uint32_t>(table.n_labels()));
    for (int l = 0; l < table.n_labels(); ++l) {
      char name[8] = {0};
      std::strncpy(name, labels.name(l).c_str(), 7);
      os.write(name, 8);
    }
    std::uint64_t n_records = 0;
    for (std::size_t r = 0; r < table.rows(); ++r)
      n_records += static_cast<std::uint64_t>(table.hit_set(r).count());
    put(os, n_records);
    for (std::size_t r = 0; r < table.rows(); ++r) {
      for (int l = 0; l < table.n_labels(); ++l) {
        if (!table.hit_set(r).contains(l)) continue;
        put(os, table.muon_index(r));
        put(os, static_cast<std::uint32_t>(l));
        put(os, static_cast<double>(table.energy(r, l)));
      }
    }
  });
}

geom::DepositionTable read_depositions(const std::filesystem::path& path,
                                       const LabelRegistry& labels) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("io: cannot open " + path.string());
  check_magic(is, "CRQDEPO\0");
  (void)get_meta(is);
  const auto total = get<std::uint64_t>(is);
  const double area = get<double>(is);
  const auto n_labels = get<std::uint32_t>(is);
  if (static_cast<int>(n_labels) != labels.size())
    throw std::runtime_error("io: label count mismatch in " + path.string());
  for (std::uint32_t l = 0; l < n_labels; ++l) {
    char name[8];
    is.read(name, 8);
    if (labels.name(static_cast<int>(l)) != name)
      throw std::runtime_error("io: label order mismatch in " + path.string());
  }
  const auto n_records = get<std::uint64_t>(is);
  geom::DepositionTable table(static_cast<int>(n_labels), total, area);
  std::map<int, double> row;
  std::uint64_t current = 0;
  bool open = false;
  for (std::uint64_t i = 0; i < n_records; ++i) {
    const auto idx = get<std::uint64_t>(is);
    const auto label = get<std::uint32_t>(is);
    const double e = get<double>(is);
    if (open && idx != current) {
      table.add_row(current, row);
      row.clear();
    }
    current = idx;
    open = true;
    row[static_cast<int>(label)] = e;
  }
  if (open) table.add_row(current, row);
  return table;
}

void write_cross_sections(const std::filesystem::path& path, const FileMeta& meta,
                          const geom::CrossSectionSet& xs, const LabelRegistry& labels) {
  atomic_write(path, [&](std::ostream& os) {
    os << meta_comment(meta);
    os << "# total_thrown=" << xs.total_thrown
       << " tangent_area_cm2=" << xs.tangent_area_cm2 << "\n";
    os.precision(9);
    os << "# inclusive\n";
    for (const auto& [a, c] : xs.inclusive_counts)
      os << labels.to_string(a) << " " << xs.count_to_sigma(c) << "\n";
    os << "# exclusive\n";
    for (const auto& [a, c] : xs.exclusive_counts)
      os << labels.to_string(a) << " " << xs.count_to_sigma(c) << "\n";
  });
}

void write_shots(const std::filesystem::path& path, const FileMeta& meta,
                 const std::vector<sim::ShotMatrix>& entries) {
  atomic_write(path, [&](std::ostream& os) {
    put_magic(os, "CRQSHOT\0", 1);
    put_meta(os, meta);
    put(os, static_cast<std::uint64_t>(entries.size()));
    for (const auto& e : entries) {
      put(os, e.entry());
      put(os, e.n_cycles());
      put(os, static_cast<std::uint32_t>(e.n_qubits()));
      put(os, e.start_ns());
      // packed row-major [cycle][qubit]
      const std::uint64_t nbits = e.n_cycles() * static_cast<std::uint64_t>(e.n_qubits());
      std::vector<std::uint8_t> buf((nbits + 7) / 8, 0);
      std::uint64_t bit = 0;
      for (std::uint64_t c = 0; c < e.n_cycles(); ++c)
        for (int q = 0; q < e.n_qubits(); ++q, ++bit)
          if (e.ground(q, c)) buf[bit >> 3] |= static_cast<std::uint8_t>(1u << (bit & 7));
      put(os, static_cast<std::uint64_t>(buf.size()));
      os.write(reinterpret_cast<const char*>(buf.data()),
               static_cast<std::streamsize>(buf.size()));
    }
  });
}

std::vector<sim::ShotMatrix> read_shots(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("io: cannot open " + path.string());
  check_magic(is, "CRQSHOT\0");
  (void)get_meta(is);
  const auto n_entries = get<std::uint64_t>(is);
  std::vector<sim::ShotMatrix> out;
  out.reserve(n_entries);
  for (std::uint64_t i = 0; i < n_entries; ++i) {
    const auto entry = get<std::uint64_t>(is);
    const auto n_cycles = get<std::uint64_t>(is);
    const auto n_qubits = get<std::uint32_t>(is);
    const auto start_ns = get<std::int64_t>(is);
    const auto nbytes = get<std::uint64_t>(is);
    std::vector<std::uint8_t> buf(nbytes);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(nbytes));
    if (!is) throw std::runtime_error("io: truncated shots file");
    sim::ShotMatrix m(entry, n_cycles, static_cast<int>(n_qubits), start_ns);
    std::uint64_t bit = 0;
    for (std::uint64_t c = 0; c < n_cycles; ++c)
      for (std::uint32_t q = 0; q < n_qubits; ++q, ++bit)
        if ((buf[bit >> 3] >> (bit & 7)) & 1u) m.set_ground(static_cast<int>(q), c);
    out.push_back(std::move(m));
  }
  return out;
}

void write_pulses(const std::filesystem::path& path, const FileMeta& meta,
                  const std::vector<sim::PulseRecord>& pulses,
                  const LabelRegistry& labels) {
  atomic_write(path, [&](std::ostream& os) {
    os << meta_comment(meta);
    os << "detector,timestamp_ns,amplitude_adc\n";
    os.precision(9);
    for (const auto& p : pulses)
      os << labels.name(p.detector) << "," << p.timestamp_ns << "," << p.amplitude_adc
         << "\n";
  });
}

std::vector<sim::PulseRecord> read_pulses(const std::filesystem::path& path,
                                          const LabelRegistry& labels) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("io: cannot open " + path.string());
  std::vector<sim::PulseRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("detector,", 0) == 0) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    sim::PulseRecord p;
    p.detector = labels.require(line.substr(0, c1));
    p.timestamp_ns = std::stoll(line.substr(c1 + 1, c2 - c1 - 1));
    p.amplitude_adc = std::stod(line.substr(c2 + 1));
    out.push_back(p);
  }
  return out;
}

void write_timestamps(const std::filesystem::path& path, const FileMeta& meta,
                      const std::vector<std::int64_t>& ts) {
  atomic_write(path, [&](std::ostream& os) {
    os << meta_comment(meta);
    os << "timestamp_ns\n";
    for (auto t : ts) os << t << "\n";
  });
}

std::vector<std::int64_t> read_timestamps(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("io: cannot open " + path.string());
  std::vector<std::int64_t> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("timestamp", 0) == 0) continue;
    out.push_back(std::stoll(line));
  }
  return out;
}

void write_truth(const std::filesystem::path& path, const FileMeta& meta,
                 const std::vector<sim::BurstTruth>& truth) {
  atomic_write(path, [&](std::ostream& os) {
    os << meta_comment(meta);
    os << "time_ns,source,entry,onset_cycle,linked_muon,dgamma_per_s...\n";
    os.precision(9);
    for (const auto& b : truth) {
      os << b.onset_time_ns << ","
         << (b.source == sim::BurstSource::Cosmic ? "cosmic" : "other") << ","
         << b.entry << "," << b.onset_cycle << "," << b.linked_muon;
      for (double g : b.dgamma) os << "," << g;
      os << "\n";
    }
  });
}

std::vector<sim::BurstTruth> read_truth(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("io: cannot open " + path.string());
  std::vector<sim::BurstTruth> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("time_ns", 0) == 0) continue;
    std::stringstream ss(line);
    std::string field;
    sim::BurstTruth b;
    std::getline(ss, field, ',');
    b.onset_time_ns = std::stoll(field);
    std::getline(ss, field, ',');
    b.source = field == "cosmic" ? sim::BurstSource::Cosmic : sim::BurstSource::Other;
    std::getline(ss, field, ',');
    b.entry = std::stoull(field);
    std::getline(ss, field, ',');
    b.onset_cycle = static_cast<std::uint32_t>(std::stoul(field));
    std::getline(ss, field, ',');
    b.linked_muon = std::stoll(field);
    while (std::getline(ss, field, ',')) b.dgamma.push_back(std::stod(field));
    out.push_back(std::move(b));
  }
  return out;
}

void write_events(const std::filesystem::path& path, const FileMeta& meta,
                  const std::vector<det::Event>& events) {
  atomic_write(path, [&](std::ostream& os) {
    os << meta_comment(meta);
    os << "entry,onset_cycle,time_ns,peak\n";
    os.precision(9);
    for (const auto& e : events)
      os << e.entry << "," << e.onset_cycle << "," << e.time_ns << "," << e.peak << "\n";
  });
}

std::vector<det::Event> read_events(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("io: cannot open " + path.string());
  std::vector<det::Event> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("entry,", 0) == 0) continue;
    std::stringstream ss(line);
    std::string field;
    det::Event e;
    std::getline(ss, field, ',');
    e.entry = std::stoull(field);
    std::getline(ss, field, ',');
    e.onset_cycle = static_cast<std::uint32_t>(std::stoul(field));
    std::getline(ss, field, ',');
    e.time_ns = std::stoll(field);
    std::getline(ss, field, ',');
    e.peak = std::stod(field);
    out.push_back(e);
  }
  return out;
}

void write_dynamics(const std::filesystem::path& path, const FileMeta& meta,
                    const std::vector<DynamicsRow>& rows) {
  atomic_write(path, [&](std::ostream& os) {
    os << meta_comment(meta);
    os << "event_id,qubit,p_pre,dgamma_init_per_s,tau_s,participation\n";
    os.precision(9);
    for (const auto& r : rows)
      os << r.event_id << "," << r.qubit << "," << r.p_pre << "," << r.dgamma_init << ","
         << r.tau_s << "," << (r.participation ? 1 : 0) << "\n";
  });
}

void write_csv(const std::filesystem::path& path, const FileMeta& meta,
               const std::string& header,
               const std::vector<std::vector<double>>& rows) {
  atomic_write(path, [&](std::ostream& os) {
    os << meta_comment(meta);
    os << header << "\n";
    os.precision(9);
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << "\n";
    }
  });
}

}  // namespace crq::io
