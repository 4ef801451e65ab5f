#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "crq/labels.hpp"

namespace crq::ratealg {

// One multiset of exclusive-combination occurrences within the observation
// window: `multiplicity[i]` muons produced combination `combos[i]`.
struct ExpansionTerm {
  std::vector<LabelSet> combos;
  std::vector<int> multiplicity;
  double weight = 0.0;  // prod_a Pois(lambda_a)_{n_a}, zero-count factors included
  int order = 0;        // total multiplicity
};

struct TermExpansion {
  std::vector<ExpansionTerm> terms;
  int order_cutoff = 0;
  double lambda_total = 0.0;
};

// All multisets with total count <= order, Poisson-weighted.  Order is capped
// at 4 to keep the combinatorics bounded.
TermExpansion expand(const std::map<LabelSet, double>& lambdas, int order);

// Probability that the set of successfully-detected labels equals `target`
// exactly, with per-label efficiencies splitting each occurrence into
// detection success and failure.
double observation_probability(LabelSet target,
                               const std::map<LabelSet, double>& lambdas,
                               const std::vector<double>& efficiencies,
                               int order);

struct FirstOrderRow {
  LabelSet target;
  double first_order = 0.0;
  double order3 = 0.0;
  double relative_gap = 0.0;
};

// Compares the order-1 truncation against order-3 for every combination that
// appears in the lambda table.
std::vector<FirstOrderRow> first_order_check(const std::map<LabelSet, double>& lambdas,
                                             const std::vector<double>& efficiencies);

}  // namespace crq::ratealg
