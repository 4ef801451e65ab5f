#include "crq/ratealgebra.hpp"

#include <cmath>
#include <stdexcept>

namespace crq::ratealg {

namespace {

double poisson_pmf(double lambda, int n) {
  double p = std::exp(-lambda);
  for (int k = 1; k <= n; ++k) p *= lambda / static_cast<double>(k);
  return p;
}

void recurse(const std::vector<LabelSet>& combos, const std::vector<double>& lambdas,
             std::size_t idx, int remaining, double weight,
             std::vector<int>& counts, TermExpansion& out) {
  if (idx == combos.size()) {
    ExpansionTerm term;
    for (std::size_t i = 0; i < combos.size(); ++i) {
      if (counts[i] == 0) continue;
      term.combos.push_back(combos[i]);
      term.multiplicity.push_back(counts[i]);
      term.order += counts[i];
    }
    term.weight = weight;
    out.terms.push_back(std::move(term));
    return;
  }
  for (int n = 0; n <= remaining; ++n) {
    counts[idx] = n;
    recurse(combos, lambdas, idx + 1, remaining - n,
            weight * poisson_pmf(lambdas[idx], n), counts, out);
  }
  counts[idx] = 0;
}

// P(detected subset of every occurrence in the term is contained in `allowed`)
double prob_detected_subset_of(const ExpansionTerm& term, LabelSet allowed,
                               const std::vector<double>& eff, int n_labels) {
  double p = 1.0;
  for (std::size_t i = 0; i < term.combos.size(); ++i) {
    double per_copy = 1.0;
    for (int l = 0; l < n_labels; ++l)
      if (term.combos[i].contains(l) && !allowed.contains(l))
        per_copy *= 1.0 - eff[static_cast<std::size_t>(l)];
    p *= std::pow(per_copy, term.multiplicity[i]);
  }
  return p;
}

}  // namespace

TermExpansion expand(const std::map<LabelSet, double>& lambdas, int order) {
  if (order < 1 || order > 4)
    throw std::invalid_argument("expand: order must be in [1, 4]");
  std::vector<LabelSet> combos;
  std::vector<double> lam;
  double total = 0.0;
  for (const auto& [a, l] : lambdas) {
    if (l < 0.0) throw std::invalid_argument("expand: negative lambda");
    if (a.empty()) continue;
    combos.push_back(a);
    lam.push_back(l);
    total += l;
  }
  TermExpansion out;
  out.order_cutoff = order;
  out.lambda_total = total;
  std::vector<int> counts(combos.size(), 0);
  recurse(combos, lam, 0, order, 1.0, counts, out);
  return out;
}

double observation_probability(LabelSet target,
                               const std::map<LabelSet, double>& lambdas,
                               const std::vector<double>& efficiencies,
                               int order) {
  const TermExpansion ex = expand(lambdas, order);
  int n_labels = 0;
  for (const auto& [a, l] : lambdas)
    for (int i = 0; i < LabelSet::kMaxLabels; ++i)
      if (a.contains(i)) n_labels = std::max(n_labels, i + 1);
  if (static_cast<int>(efficiencies.size()) < n_labels)
    throw std::invalid_argument("observation_probability: efficiency table too short");

  // P(union of detected labels == target) via inclusion-exclusion over
  // subsets of the target:  P(= T) = sum_{U subseteq T} (-1)^{|T \ U|} P(subset of U)
  double total = 0.0;
  for (const auto& term : ex.terms) {
    // impossible terms: some occurrence has a label outside target that would
    // need to fail detection -- handled by the subset probability; terms whose
    // union cannot reach the target contribute zero through cancellation.
    double p_eq = 0.0;
    const std::uint16_t tbits = target.bits();
    std::uint16_t u = tbits;
    for (;;) {
      const int parity = (target.count() - LabelSet(u).count()) & 1;
      const double p_sub = prob_detected_subset_of(term, LabelSet(u), efficiencies, n_labels);
      p_eq += (parity ? -1.0 : 1.0) * p_sub;
      if (u == 0) break;
      u = static_cast<std::uint16_t>((u - 1) & tbits);
    }
    total += term.weight * p_eq;
  }
  return std::max(0.0, total);
}

std::vector<FirstOrderRow> first_order_check(const std::map<LabelSet, double>& lambdas,
                                             const std::vector<double>& efficiencies) {
  std::vector<FirstOrderRow> rows;
  for (const auto& [target, l] : lambdas) {
    if (target.empty()) continue;
    FirstOrderRow row;
    row.target = target;
    row.first_order = observation_probability(target, lambdas, efficiencies, 1);
    row.order3 = observation_probability(target, lambdas, efficiencies, 3);
    row.relative_gap = row.order3 > 0.0
                           ? std::fabs(row.order3 - row.first_order) / row.order3
                           : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace crq::ratealg
