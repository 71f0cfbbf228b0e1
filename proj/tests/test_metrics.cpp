#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ttm/metrics.hpp"

using namespace ttm;
using namespace ttm::metrics;

namespace {

// Independent reference: repeatedly select the best remaining item
// (highest score, earliest original index on ties) and accumulate
// precision at each positive. Quadratic, but exact.
double ap_reference(const std::vector<ScoredLabel>& pairs) {
  const std::size_t n = pairs.size();
  std::vector<bool> used(n, false);
  std::size_t positives = 0;
  for (const auto& p : pairs) positives += p.label;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 1; rank <= n; ++rank) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i)
      if (!used[i] && (best == n || pairs[i].score > pairs[best].score))
        best = i;
    used[best] = true;
    if (pairs[best].label == 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  return sum / static_cast<double>(positives);
}

}  // namespace

TEST_CASE("hand-checked case: scores .9 .8 .7 with labels 1 0 1") {
  std::vector<ScoredLabel> p{{0.9, 1}, {0.8, 0}, {0.7, 1}};
  auto ap = average_precision(p);
  REQUIRE(ap.has_value());
  // (1/1 + 2/3) / 2
  CHECK(*ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(std::abs(*ap - 0.8333) < 5e-5);
}

TEST_CASE("exhaustive agreement with the quadratic reference up to n = 8") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> tie(0, 3);  // coarse grid forces ties
  for (std::size_t n = 1; n <= 8; ++n) {
    // Every label pattern with at least one positive.
    for (unsigned bits = 1; bits < (1u << n); ++bits) {
      std::vector<ScoredLabel> p(n);
      for (std::size_t i = 0; i < n; ++i) {
        p[i].label = (bits >> i) & 1;
        p[i].score = tie(rng) * 0.25;  // ties likely
      }
      auto got = average_precision(p);
      REQUIRE(got.has_value());
      CHECK(*got == doctest::Approx(ap_reference(p)).epsilon(1e-12));
    }
  }
  // Distinct random scores too.
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<ScoredLabel> p(8);
    bool any = false;
    for (auto& s : p) {
      s.score = u(rng);
      s.label = u(rng) < 0.5;
      any = any || s.label;
    }
    if (!any) p[0].label = 1;
    CHECK(*average_precision(p) ==
          doctest::Approx(ap_reference(p)).epsilon(1e-12));
  }
}

TEST_CASE("ties keep original order (stable sort)") {
  // Equal scores: the positive listed first is ranked first.
  std::vector<ScoredLabel> a{{0.5, 1}, {0.5, 0}};
  std::vector<ScoredLabel> b{{0.5, 0}, {0.5, 1}};
  CHECK(*average_precision(a) == 1.0);
  CHECK(*average_precision(b) == 0.5);
}

TEST_CASE("degenerate and invalid inputs") {
  CHECK(!average_precision({{0.3, 0}, {0.9, 0}}).has_value());
  CHECK(!average_precision({}).has_value());
  CHECK(*average_precision({{0.1, 1}}) == 1.0);

  CHECK_THROWS_AS(average_precision({{0.5, 2}}), DataError);
  CHECK_THROWS_AS(average_precision({{0.5, -1}}), DataError);
  CHECK_THROWS_AS(
      average_precision({{std::numeric_limits<double>::quiet_NaN(), 1}}),
      DataError);
  CHECK_THROWS_AS(
      average_precision({{std::numeric_limits<double>::infinity(), 1}}),
      DataError);
}

TEST_CASE("accuracy uses the >= convention at the threshold") {
  std::vector<ScoredLabel> p{{0.5, 1}, {0.5, 0}, {0.6, 1}, {0.4, 0}};
  CHECK(top1_accuracy(p) == doctest::Approx(0.75));
  CHECK(top1_accuracy(p, 0.55) == doctest::Approx(0.75));
  CHECK(top1_accuracy(p, 0.0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(top1_accuracy({}), ContractError);
  CHECK_THROWS_AS(top1_accuracy({{0.5, 3}}), DataError);
}
