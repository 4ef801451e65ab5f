#include "crq/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace crq::geom {

Scene::Scene(std::vector<Prism> prisms, DepositionModel model)
    : prisms_(std::move(prisms)), model_(model) {
  if (model_.de_dx_mev_per_cm <= 0.0)
    throw std::invalid_argument("Scene: de_dx must be positive");
  if (model_.fractional_smear < 0.0 || model_.fractional_smear >= 1.0)
    throw std::invalid_argument("Scene: fractional_smear outside [0,1)");
  if (model_.secondary_boost < 1.0)
    throw std::invalid_argument("Scene: secondary_boost must be >= 1");
  for (const auto& p : prisms_) {
    if (p.half_extents_cm.x <= 0.0 || p.half_extents_cm.y <= 0.0 ||
        p.half_extents_cm.z <= 0.0)
      throw std::invalid_argument("Prism " + p.label + ": half_extents must be positive");
    labels_.add(p.label);
  }
}

double Scene::de_dx(int idx) const {
  const double v = prisms_[static_cast<std::size_t>(idx)].de_dx_mev_per_cm;
  return v > 0.0 ? v : model_.de_dx_mev_per_cm;
}

double Scene::max_extent_from(const Vec3& origin, LabelSet which) const {
  double d = 0.0;
  for (int i = 0; i < labels_.size(); ++i) {
    if (!which.contains(i)) continue;
    const auto& p = prisms_[static_cast<std::size_t>(i)];
    const Vec3 c = p.center_cm - origin;
    const Vec3 corner{std::fabs(c.x) + p.half_extents_cm.x,
                      std::fabs(c.y) + p.half_extents_cm.y,
                      std::fabs(c.z) + p.half_extents_cm.z};
    d = std::max(d, corner.norm());
  }
  return d;
}

LabelSet Scene::all_labels() const {
  LabelSet s;
  for (int i = 0; i < labels_.size(); ++i) s = s.with(i);
  return s;
}

double ray_path_length(const Vec3& origin, const Vec3& direction, const Prism& prism) {
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  const double o[3] = {origin.x - prism.center_cm.x, origin.y - prism.center_cm.y,
                       origin.z - prism.center_cm.z};
  const double d[3] = {direction.x, direction.y, direction.z};
  const double h[3] = {prism.half_extents_cm.x, prism.half_extents_cm.y,
                       prism.half_extents_cm.z};
  for (int i = 0; i < 3; ++i) {
    if (d[i] == 0.0) {
      if (std::fabs(o[i]) > h[i]) return 0.0;
      continue;
    }
    const double inv = 1.0 / d[i];
    double t0 = (-h[i] - o[i]) * inv;
    double t1 = (h[i] - o[i]) * inv;
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin >= tmax) return 0.0;
  }
  return tmax - tmin;  // |direction| = 1, so parameter span = chord length
}

std::map<int, double> deposit(const flux::MuonSample& muon, const Scene& scene, Rng& rng) {
  std::map<int, double> out;
  const auto& prisms = scene.prisms();
  const double smear = scene.model().fractional_smear;
  for (std::size_t i = 0; i < prisms.size(); ++i) {
    const double chord = ray_path_length(muon.origin_cm, muon.direction, prisms[i]);
    if (chord <= 0.0) continue;
    double factor = 1.0;
    if (smear > 0.0) factor = std::max(0.0, 1.0 + smear * rng.normal());
    const double e = scene.de_dx(static_cast<int>(i)) * chord * factor;
    if (e > 0.0) out[static_cast<int>(i)] = e;
  }
  return out;
}

void DepositionTable::add_row(std::uint64_t muon_index, const std::map<int, double>& energies) {
  if (energies.empty()) return;
  index_.push_back(muon_index);
  LabelSet s;
  const std::size_t base = energy_.size();
  energy_.resize(base + static_cast<std::size_t>(n_labels_), 0.0f);
  for (const auto& [label, e] : energies) {
    s = s.with(label);
    energy_[base + static_cast<std::size_t>(label)] = static_cast<float>(e);
  }
  hits_.push_back(s);
}

namespace {

// Partition the index range over workers (per-index RNG streams keep the
// result independent of the worker count), then merge in index order.
template <typename MuonAt>
DepositionTable transport_indexed(MuonAt&& muon_at, std::uint64_t count,
                                  const Scene& scene, double tangent_area_cm2,
                                  std::uint64_t rng_seed, int threads) {
  const int n_workers = std::max(1, threads);
  std::vector<DepositionTable> parts(
      static_cast<std::size_t>(n_workers),
      DepositionTable(scene.labels().size(), 0, tangent_area_cm2));

  auto work = [&](int w) {
    auto& part = parts[static_cast<std::size_t>(w)];
    for (std::uint64_t i = static_cast<std::uint64_t>(w); i < count;
         i += static_cast<std::uint64_t>(n_workers)) {
      const flux::MuonSample m = muon_at(i);
      Rng rng(rng_seed, RngDomain::Transport, i);
      part.add_row(i, deposit(m, scene, rng));
    }
  };
  if (n_workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }

  DepositionTable table(scene.labels().size(), count, tangent_area_cm2);
  std::vector<std::size_t> cursor(static_cast<std::size_t>(n_workers), 0);
  for (;;) {
    int best = -1;
    std::uint64_t best_idx = ~0ull;
    for (int w = 0; w < n_workers; ++w) {
      const auto& p = parts[static_cast<std::size_t>(w)];
      if (cursor[static_cast<std::size_t>(w)] < p.rows() &&
          p.muon_index(cursor[static_cast<std::size_t>(w)]) < best_idx) {
        best = w;
        best_idx = p.muon_index(cursor[static_cast<std::size_t>(w)]);
      }
    }
    if (best < 0) break;
    const auto& p = parts[static_cast<std::size_t>(best)];
    const std::size_t r = cursor[static_cast<std::size_t>(best)]++;
    std::map<int, double> e;
    for (int l = 0; l < table.n_labels(); ++l)
      if (p.hit_set(r).contains(l)) e[l] = p.energy(r, l);
    table.add_row(p.muon_index(r), e);
  }
  return table;
}

}  // namespace

DepositionTable run_transport(const flux::MuonThrower& thrower, std::uint64_t count,
                              const Scene& scene, std::optional<LabelSet> unbiased,
                              int threads) {
  const LabelSet check = unbiased.value_or(scene.all_labels());
  const auto& cfg = thrower.config();
  const double d = scene.max_extent_from(cfg.hemisphere_origin, check);
  if (cfg.tangent_side_cm <= 2.0 * d)
    throw std::invalid_argument(
        "run_transport: tangent side must exceed twice the scene extent (" +
        std::to_string(cfg.tangent_side_cm) + " <= 2*" + std::to_string(d) + ")");
  return transport_indexed([&](std::uint64_t i) { return thrower.throw_muon(i); },
                           count, scene, thrower.tangent_area_cm2(), cfg.rng_seed,
                           threads);
}

DepositionTable run_transport(const std::vector<flux::MuonSample>& samples,
                              const Scene& scene, double tangent_area_cm2,
                              std::uint64_t rng_seed, int threads) {
  return transport_indexed([&](std::uint64_t i) { return samples[i]; },
                           samples.size(), scene, tangent_area_cm2, rng_seed, threads);
}

double CrossSectionSet::sigma_exclusive(LabelSet a) const {
  const auto it = exclusive_counts.find(a);
  return it == exclusive_counts.end() ? 0.0 : count_to_sigma(it->second);
}

double CrossSectionSet::sigma_inclusive(LabelSet a) const {
  const auto it = inclusive_counts.find(a);
  return it == inclusive_counts.end() ? 0.0 : count_to_sigma(it->second);
}

CrossSectionSet cross_sections(const DepositionTable& table, const Scene& scene,
                               const std::map<int, EnergyWindow>& acceptance) {
  const int n = table.n_labels();
  for (const auto& [label, w] : acceptance) {
    if (label < 0 || label >= n)
      throw std::invalid_argument("cross_sections: unknown label in acceptance");
    if (!(w.lo_mev < w.hi_mev))
      throw std::invalid_argument("cross_sections: window not well-ordered for " +
                                  scene.labels().name(label));
  }
  CrossSectionSet xs;
  xs.n_labels = n;
  xs.total_thrown = table.total_thrown();
  xs.tangent_area_cm2 = table.tangent_area_cm2();
  xs.secondary_boost = scene.model().secondary_boost;

  std::vector<std::uint64_t> pattern_counts(1u << n, 0);
  for (std::size_t r = 0; r < table.rows(); ++r) {
    LabelSet in_window;
    for (int l = 0; l < n; ++l) {
      if (!table.hit_set(r).contains(l)) continue;
      const auto it = acceptance.find(l);
      if (it == acceptance.end()) continue;
      const double e = table.energy(r, l);
      if (e > it->second.lo_mev && e < it->second.hi_mev) in_window = in_window.with(l);
    }
    ++pattern_counts[in_window.bits()];
  }
  std::uint64_t nonempty = 0;
  for (std::size_t p = 1; p < pattern_counts.size(); ++p) nonempty += pattern_counts[p];
  pattern_counts[0] = table.total_thrown() - nonempty;

  const double boost = scene.model().secondary_boost;
  double boosted_nonempty = 0.0;
  for (std::size_t p = 1; p < pattern_counts.size(); ++p) {
    if (pattern_counts[p] == 0) continue;
    const double c = boost * static_cast<double>(pattern_counts[p]);
    xs.exclusive_counts[LabelSet(static_cast<std::uint16_t>(p))] = c;
    boosted_nonempty += c;
  }
  // the boost moves area from the empty combination so the partition stays exact
  xs.exclusive_counts[LabelSet()] =
      static_cast<double>(table.total_thrown()) - boosted_nonempty;

  // inclusive = superset sums over observed patterns
  for (const auto& [pattern, c] : xs.exclusive_counts) {
    if (pattern.empty()) continue;
    const std::uint16_t bits = pattern.bits();
    // enumerate non-empty sub-combinations of this pattern
    for (std::uint16_t sub = bits; sub != 0; sub = static_cast<std::uint16_t>((sub - 1) & bits))
      xs.inclusive_counts[LabelSet(sub)] += c;
  }
  return xs;
}

double sigma_coincidence(int target, const CrossSectionSet& xs) {
  double count = 0.0;
  for (const auto& [a, c] : xs.exclusive_counts)
    if (a.contains(target) && a.count() >= 2) count += c;
  return xs.count_to_sigma(count);
}

double sigma_coincidence_eff(int target, const CrossSectionSet& xs,
                             const std::vector<double>& efficiencies) {
  double count = 0.0;
  for (const auto& [a, c] : xs.exclusive_counts) {
    if (!a.contains(target) || a.count() < 2) continue;
    double miss = 1.0;
    for (int k = 0; k < xs.n_labels; ++k)
      if (k != target && a.contains(k)) miss *= 1.0 - efficiencies[static_cast<std::size_t>(k)];
    count += (1.0 - miss) * c;
  }
  return xs.count_to_sigma(count);
}

double coverage_of(int target, const CrossSectionSet& xs,
                   const std::vector<double>& efficiencies, double window_eff) {
  const double sigma_target = xs.sigma_inclusive(LabelSet::single(target));
  if (sigma_target <= 0.0)
    throw std::domain_error("coverage_of: target cross-section is zero");
  return window_eff * sigma_coincidence_eff(target, xs, efficiencies) / sigma_target;
}

double any_coincidence_rate(int target, const CrossSectionSet& xs,
                            const std::vector<double>& efficiencies,
                            double flux_per_s_cm2) {
  return efficiencies[static_cast<std::size_t>(target)] *
         sigma_coincidence_eff(target, xs, efficiencies) * flux_per_s_cm2;
}

}  // namespace crq::geom
