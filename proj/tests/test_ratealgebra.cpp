#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "crq/labels.hpp"
#include "crq/ratealgebra.hpp"
#include "crq/rng.hpp"

using namespace crq;
using ratealg::expand;
using ratealg::first_order_check;
using ratealg::observation_probability;

namespace {
const LabelSet A = LabelSet::single(0);
const LabelSet B = LabelSet::single(1);
const LabelSet AB = A.unite(B);
}  // namespace

TEST_CASE("expand: single combination at order 1") {
  const double lambda = 0.3;
  const auto ex = expand({{A, lambda}}, 1);
  REQUIRE(ex.terms.size() == 2);
  double w_empty = -1.0, w_one = -1.0;
  for (const auto& t : ex.terms) {
    if (t.order == 0) w_empty = t.weight;
    if (t.order == 1) w_one = t.weight;
  }
  CHECK(w_empty == doctest::Approx(std::exp(-lambda)).epsilon(1e-12));
  CHECK(w_one == doctest::Approx(lambda * std::exp(-lambda)).epsilon(1e-12));
}

TEST_CASE("expand: weights sum to the Poisson partial sums") {
  const std::map<LabelSet, double> lambdas{{A, 0.2}, {B, 0.13}, {AB, 0.05}};
  const double lam_tot = 0.38;
  for (int order = 1; order <= 4; ++order) {
    const auto ex = expand(lambdas, order);
    double sum = 0.0;
    for (const auto& t : ex.terms) sum += t.weight;
    // total weight = P(N <= order) for N ~ Poisson(lambda_total)
    double partial = 0.0, pmf = std::exp(-lam_tot);
    for (int k = 0; k <= order; ++k) {
      partial += pmf;
      pmf *= lam_tot / (k + 1);
    }
    CHECK(sum == doctest::Approx(partial).epsilon(1e-12));
    // the truncation tail is bounded by lambda^(k+1)/(k+1)!
    double bound = 1.0;
    for (int k = 0; k <= order; ++k) bound *= lam_tot / (k + 1);
    CHECK(1.0 - sum <= bound * 1.0001);
  }
}

TEST_CASE("expand: two combinations factorize") {
  const auto ex = expand({{A, 0.2}, {B, 0.4}}, 2);
  for (const auto& t : ex.terms) {
    double w = 1.0;
    auto pois = [](double lam, int n) {
      double p = std::exp(-lam);
      for (int k = 1; k <= n; ++k) p *= lam / k;
      return p;
    };
    int na = 0, nb = 0;
    for (std::size_t i = 0; i < t.combos.size(); ++i) {
      if (t.combos[i] == A) na = t.multiplicity[i];
      if (t.combos[i] == B) nb = t.multiplicity[i];
    }
    w = pois(0.2, na) * pois(0.4, nb);
    CHECK(t.weight == doctest::Approx(w).epsilon(1e-12));
  }
  CHECK_THROWS_AS(expand({{A, 0.1}}, 5), std::invalid_argument);
  CHECK_THROWS_AS(expand({{A, -0.1}}, 2), std::invalid_argument);
}

TEST_CASE("observation probability: leading term of the worked example") {
  const std::map<LabelSet, double> lambdas{{A, 1e-3}, {B, 2e-3}, {AB, 5e-4}};
  const double lam_tot = 3.5e-3;
  const std::vector<double> eff{0.9, 0.8};
  const double p1 = observation_probability(AB, lambdas, eff, 1);
  // first order: eps_A eps_B lambda_AB e^{-lambda_total}
  CHECK(p1 == doctest::Approx(0.9 * 0.8 * 5e-4 * std::exp(-lam_tot)).epsilon(1e-9));

  // full hand enumeration of the order-2 terms that can produce exactly AB
  const double p2 = observation_probability(AB, lambdas, eff, 2);
  const double la = 1e-3, lb = 2e-3, lab = 5e-4;
  const double pa = 0.9, pb = 0.8;
  // {A, B}: both single-detector muons must be seen
  const double t_ab = la * lb * pa * pb;
  // {AB, A}: B comes only from the AB copy, A from either
  const double t_ab_a = lab * la * pb * (1.0 - (1 - pa) * (1 - pa));
  // {AB, B}: symmetric
  const double t_ab_b = lab * lb * pa * (1.0 - (1 - pb) * (1 - pb));
  // {AB x 2}: union over both copies equals AB
  const double p_union = (1.0 - (1 - pa) * (1 - pa)) * (1.0 - (1 - pb) * (1 - pb));
  const double t_abab = 0.5 * lab * lab * p_union;
  const double expected2 =
      p1 + std::exp(-lam_tot) * (t_ab + t_ab_a + t_ab_b + t_abab);
  CHECK(p2 == doctest::Approx(expected2).epsilon(1e-9));
}

TEST_CASE("all-zero efficiency leaves only the empty observation") {
  const std::map<LabelSet, double> lambdas{{A, 0.01}, {B, 0.02}};
  const std::vector<double> eff{0.0, 0.0};
  CHECK(observation_probability(A, lambdas, eff, 2) == doctest::Approx(0.0));
  CHECK(observation_probability(AB, lambdas, eff, 2) == doctest::Approx(0.0));
  // empty target absorbs all weight in the expansion
  const double p_empty = observation_probability(LabelSet(), lambdas, eff, 2);
  const auto ex = expand(lambdas, 2);
  double sum = 0.0;
  for (const auto& t : ex.terms) sum += t.weight;
  CHECK(p_empty == doctest::Approx(sum).epsilon(1e-12));
}

TEST_CASE("unit efficiency reduces to expand-then-select") {
  const std::map<LabelSet, double> lambdas{{A, 0.05}, {B, 0.02}, {AB, 0.01}};
  const std::vector<double> eff{1.0, 1.0};
  for (const LabelSet target : {A, B, AB}) {
    const auto ex = expand(lambdas, 3);
    double selected = 0.0;
    for (const auto& t : ex.terms) {
      LabelSet u;
      for (const auto& c : t.combos) u = u.unite(c);
      if (u == target) selected += t.weight;
    }
    CHECK(observation_probability(target, lambdas, eff, 3) ==
          doctest::Approx(selected).epsilon(1e-12));
  }
}

TEST_CASE("exclusive probabilities sum to one within the tail bound") {
  const std::map<LabelSet, double> lambdas{{A, 3e-3}, {B, 1e-3}, {AB, 4e-4}};
  const double lam_tot = 4.4e-3;
  const std::vector<double> eff{0.95, 0.9};
  const int order = 3;
  double total = observation_probability(LabelSet(), lambdas, eff, order);
  for (const LabelSet t : {A, B, AB}) total += observation_probability(t, lambdas, eff, order);
  double bound = 1.0;
  for (int k = 0; k <= order; ++k) bound *= lam_tot / (k + 1);
  CHECK(total <= 1.0 + 1e-12);
  CHECK(1.0 - total <= bound * 1.0001);
}

TEST_CASE("probability is monotone in the efficiency of contained labels") {
  const std::map<LabelSet, double> lambdas{{A, 2e-3}, {B, 1e-3}, {AB, 5e-4}};
  double prev = -1.0;
  for (double e : {0.2, 0.5, 0.8, 1.0}) {
    const double p = observation_probability(AB, lambdas, {e, 0.7}, 3);
    CHECK(p > prev);
    prev = p;
  }
}

TEST_CASE("first-order check: zero lambdas have zero gap, small lambdas small gap") {
  const std::vector<double> eff{0.96, 0.96};
  {
    const auto rows = first_order_check({{A, 0.0}, {B, 0.0}}, eff);
    for (const auto& r : rows) CHECK(r.relative_gap == doctest::Approx(0.0));
  }
  {
    // 1e-3-scale lambdas: relative gap below 5e-3
    const auto rows = first_order_check({{A, 1e-3}, {B, 1e-3}, {AB, 1e-3}}, eff);
    for (const auto& r : rows) {
      CHECK(r.relative_gap > 0.0);
      CHECK(r.relative_gap < 5e-3);
    }
  }
}

TEST_CASE("monte carlo agreement with thinning") {
  const std::map<LabelSet, double> lambdas{{A, 0.02}, {B, 0.015}, {AB, 0.01}};
  const std::vector<double> eff{0.9, 0.85};
  Rng rng(33, RngDomain::Tests, 0);
  const int trials = 2000000;
  std::map<std::uint16_t, std::uint64_t> counts;
  for (int t = 0; t < trials; ++t) {
    LabelSet u;
    for (const auto& [combo, lam] : lambdas) {
      const auto n = rng.poisson(lam);
      for (std::uint64_t k = 0; k < n; ++k) {
        for (int l = 0; l < 2; ++l)
          if (combo.contains(l) && rng.uniform() < eff[static_cast<std::size_t>(l)])
            u = u.with(l);
      }
    }
    ++counts[u.bits()];
  }
  for (const LabelSet target : {LabelSet(), A, B, AB}) {
    const double p = observation_probability(target, lambdas, eff, 4);
    const double observed = static_cast<double>(counts[target.bits()]) / trials;
    const double sigma = std::sqrt(p * (1.0 - p) / trials);
    CHECK(std::fabs(observed - p) < 4.0 * sigma + 1e-7);
  }
}
