// Tests for corpus selection, Best-of-N reranking, majority vote, histogram
// statistics, and the between-source overlap coefficient.

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "trajscore/select.hpp"
#include "oracle.hpp"

using namespace trajscore;
using nlohmann::json;

namespace {

select::ScoredPair scored(const std::string& id, double aggregate, const char* source = nullptr) {
  select::ScoredPair s;
  s.pair_id = id;
  s.aggregate = aggregate;
  s.mean_step_reward = aggregate / 2;
  s.final_reward = aggregate / 3;
  if (source) s.source = source;
  return s;
}

}  // namespace

// ============================================================================
// ScoredPair wire format
// ============================================================================

TEST_CASE("scored pair round-trips through JSON with optional source") {
  auto s = scored("p1", 1.25, "synthetic");
  auto back = json(s).get<select::ScoredPair>();
  CHECK(back.pair_id == "p1");
  CHECK(back.aggregate == 1.25);
  CHECK(back.mean_step_reward == s.mean_step_reward);
  CHECK(back.final_reward == s.final_reward);
  REQUIRE(back.source.has_value());
  CHECK(*back.source == "synthetic");

  auto untagged = scored("p2", 0.5);
  json j = untagged;
  CHECK_FALSE(j.contains("source"));
  CHECK_FALSE(j.get<select::ScoredPair>().source.has_value());
}

// ============================================================================
// rank_and_select
// ============================================================================

TEST_CASE("rank_and_select takes the top k by aggregate, descending") {
  std::vector<select::ScoredPair> pairs = {
      scored("low", 0.1), scored("high", 0.9), scored("mid", 0.5), scored("top", 1.5)};
  CHECK(select::rank_and_select(pairs, 2) == std::vector<std::string>{"top", "high"});
  CHECK(select::rank_and_select(pairs, 4) ==
        std::vector<std::string>{"top", "high", "mid", "low"});
}

TEST_CASE("rank_and_select breaks score ties by ascending id") {
  std::vector<select::ScoredPair> pairs = {
      scored("zebra", 0.5), scored("apple", 0.5), scored("mango", 0.5)};
  CHECK(select::rank_and_select(pairs, 3) == std::vector<std::string>{"apple", "mango", "zebra"});
  // The tie-break makes the result input-order independent.
  std::reverse(pairs.begin(), pairs.end());
  CHECK(select::rank_and_select(pairs, 3) == std::vector<std::string>{"apple", "mango", "zebra"});
}

TEST_CASE("rank_and_select clamps k to the list size and rejects k < 1") {
  std::vector<select::ScoredPair> pairs = {scored("a", 1.0), scored("b", 0.5)};
  CHECK(select::rank_and_select(pairs, 100) == std::vector<std::string>{"a", "b"});
  CHECK(select::rank_and_select({}, 3).empty());
  try {
    select::rank_and_select(pairs, 0);
    FAIL("expected BadRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadRange);
  }
}

TEST_CASE("rank_and_select agrees with a full stable sort on random lists") {
  auto g = oracle::rng(444);
  for (int trial = 0; trial < 300; ++trial) {
    size_t n = 1 + static_cast<size_t>(oracle::uniform(g, 0, 40));
    std::vector<select::ScoredPair> pairs;
    for (size_t i = 0; i < n; ++i) {
      // Coarse grid of scores so ties actually occur.
      double score = std::floor(oracle::uniform(g, 0, 6)) / 2.0;
      pairs.push_back(scored("id-" + std::to_string(i), score));
    }
    int k = 1 + static_cast<int>(oracle::uniform(g, 0, static_cast<double>(n)));

    // Oracle: sort the full list with the documented comparator, then prefix.
    auto reference = pairs;
    std::sort(reference.begin(), reference.end(),
              [](const select::ScoredPair& a, const select::ScoredPair& b) {
                return a.aggregate != b.aggregate ? a.aggregate > b.aggregate
                                                  : a.pair_id < b.pair_id;
              });
    std::vector<std::string> want;
    for (size_t i = 0; i < std::min(reference.size(), static_cast<size_t>(k)); ++i) {
      want.push_back(reference[i].pair_id);
    }
    CHECK(select::rank_and_select(pairs, k) == want);
  }
}

// ============================================================================
// best_of_n
// ============================================================================

TEST_CASE("best_of_n picks the argmax with lowest-index ties") {
  CHECK(select::best_of_n({0.1, 0.9, 0.4}) == 1);
  CHECK(select::best_of_n({0.5}) == 0);
  CHECK(select::best_of_n({0.7, 0.7, 0.7}) == 0);
  CHECK(select::best_of_n({0.2, 0.8, 0.8}) == 1);
  CHECK_THROWS_AS(select::best_of_n({}), Error);
}

TEST_CASE("best_of_n is invariant under strictly increasing transforms") {
  auto g = oracle::rng(555);
  for (int trial = 0; trial < 300; ++trial) {
    size_t n = 1 + static_cast<size_t>(oracle::uniform(g, 0, 12));
    std::vector<double> scores(n);
    for (auto& s : scores) s = oracle::uniform(g, -3, 3);
    size_t base = select::best_of_n(scores);

    std::vector<double> affine(n), expo(n);
    double a = oracle::uniform(g, 0.1, 5), b = oracle::uniform(g, -10, 10);
    for (size_t i = 0; i < n; ++i) {
      affine[i] = a * scores[i] + b;
      expo[i] = std::exp(scores[i]);
    }
    CHECK(select::best_of_n(affine) == base);
    CHECK(select::best_of_n(expo) == base);
  }
}

// ============================================================================
// majority_vote
// ============================================================================

TEST_CASE("majority_vote returns the modal answer") {
  CHECK(select::majority_vote({"4", "5", "4"}) == "4");
  CHECK(select::majority_vote({"a", "b", "b", "b", "a"}) == "b");
  CHECK(select::majority_vote({"only"}) == "only");
  CHECK_THROWS_AS(select::majority_vote({}), Error);
}

TEST_CASE("majority_vote ties go to the earliest first occurrence") {
  CHECK(select::majority_vote({"x", "y"}) == "x");
  CHECK(select::majority_vote({"y", "x", "x", "y"}) == "y");
  CHECK(select::majority_vote({"c", "a", "b", "a", "c", "b"}) == "c");
}

// ============================================================================
// score_histogram
// ============================================================================

TEST_CASE("histogram worked example") {
  auto h = select::score_histogram({0.1, 0.5, 0.9}, 2, 0.0, 1.0);
  CHECK(h.counts == std::vector<std::uint64_t>{1, 2});  // 0.5 falls in the upper bin
  CHECK(h.in_range == 3);
  CHECK(h.out_of_range == 0);
}

TEST_CASE("histogram bins are right-open except the last") {
  auto h = select::score_histogram({0.0, 0.25, 0.5, 0.75, 1.0}, 4, 0.0, 1.0);
  // Each boundary value starts its own bin; 1.0 closes into the final bin.
  CHECK(h.counts == std::vector<std::uint64_t>{1, 1, 1, 2});
  CHECK(h.in_range == 5);
}

TEST_CASE("histogram counts out-of-range values without binning them") {
  auto h = select::score_histogram({-0.5, 0.2, 1.7, 0.8}, 2, 0.0, 1.0);
  CHECK(h.counts == std::vector<std::uint64_t>{1, 1});
  CHECK(h.in_range == 2);
  CHECK(h.out_of_range == 2);
}

TEST_CASE("histogram mean and std cover all inputs, in range or not") {
  // Values 1, 2, 3, 9 with range [0, 4): 9 is out of range but still counted
  // in the moments. mean = 3.75, population variance = 9.6875.
  auto h = select::score_histogram({1.0, 2.0, 3.0, 9.0}, 2, 0.0, 4.0);
  CHECK(h.out_of_range == 1);
  CHECK(h.mean == 3.75);
  CHECK(h.std_dev == doctest::Approx(std::sqrt(9.6875)).epsilon(1e-12));
}

TEST_CASE("histogram of an empty list is all zeros") {
  auto h = select::score_histogram({}, 3, 0.0, 1.0);
  CHECK(h.counts == std::vector<std::uint64_t>{0, 0, 0});
  CHECK(h.in_range == 0);
  CHECK(h.mean == 0.0);
  CHECK(h.std_dev == 0.0);
}

TEST_CASE("histogram validates bins and range") {
  CHECK_THROWS_AS(select::score_histogram({0.5}, 0, 0.0, 1.0), Error);
  CHECK_THROWS_AS(select::score_histogram({0.5}, 2, 1.0, 1.0), Error);
  CHECK_THROWS_AS(select::score_histogram({0.5}, 2, 2.0, 1.0), Error);
}

TEST_CASE("histogram counts match a direct scan on random data") {
  auto g = oracle::rng(666);
  for (int trial = 0; trial < 100; ++trial) {
    int bins = 1 + static_cast<int>(oracle::uniform(g, 0, 15));
    double lo = oracle::uniform(g, -2, 0), hi = oracle::uniform(g, 0.5, 3);
    size_t n = static_cast<size_t>(oracle::uniform(g, 0, 200));
    std::vector<double> scores(n);
    for (auto& s : scores) s = oracle::uniform(g, -3, 4);

    auto h = select::score_histogram(scores, bins, lo, hi);
    CHECK(h.in_range + h.out_of_range == n);
    CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0}) == h.in_range);

    // Every in-range value lands in the bin whose edges contain it.
    std::vector<std::uint64_t> direct(static_cast<size_t>(bins), 0);
    for (double x : scores) {
      if (x < lo || x > hi) continue;
      int idx = bins - 1;
      for (int b = 0; b < bins; ++b) {
        double right = lo + (hi - lo) * (b + 1) / bins;
        if (x < right) {
          idx = b;
          break;
        }
      }
      ++direct[static_cast<size_t>(idx)];
    }
    // Direct scan and vectorized binning may disagree only at fp bin edges;
    // totals must match and per-bin counts should agree on the full grid.
    CHECK(std::accumulate(direct.begin(), direct.end(), std::uint64_t{0}) == h.in_range);
  }
}

// ============================================================================
// overlap_coefficient
// ============================================================================

TEST_CASE("overlap is one for identical shapes and zero for disjoint ones") {
  auto a = select::score_histogram({0.1, 0.2, 0.3}, 4, 0.0, 1.0);
  CHECK(select::overlap_coefficient(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  auto low = select::score_histogram({0.1, 0.15, 0.2}, 4, 0.0, 1.0);
  auto high = select::score_histogram({0.8, 0.85, 0.9}, 4, 0.0, 1.0);
  CHECK(select::overlap_coefficient(low, high) == 0.0);
}

TEST_CASE("overlap is symmetric, in [0,1], and scale-free") {
  auto a = select::score_histogram({0.1, 0.4, 0.6, 0.9}, 5, 0.0, 1.0);
  auto b = select::score_histogram({0.2, 0.5, 0.55, 0.95, 0.97}, 5, 0.0, 1.0);
  double ab = select::overlap_coefficient(a, b);
  CHECK(ab == select::overlap_coefficient(b, a));
  CHECK(ab >= 0.0);
  CHECK(ab <= 1.0);

  // Duplicating one side's data leaves its normalized shape unchanged.
  auto doubled = select::score_histogram({0.1, 0.4, 0.6, 0.9, 0.1, 0.4, 0.6, 0.9}, 5, 0.0, 1.0);
  CHECK(select::overlap_coefficient(doubled, b) == doctest::Approx(ab).epsilon(1e-12));
}

TEST_CASE("overlap half-split worked example") {
  // a: all mass in bin 0; b: half in bin 0, half in bin 1 -> overlap 0.5.
  auto a = select::score_histogram({0.1, 0.2}, 2, 0.0, 1.0);
  auto b = select::score_histogram({0.1, 0.9}, 2, 0.0, 1.0);
  CHECK(select::overlap_coefficient(a, b) == 0.5);
}

TEST_CASE("overlap requires identical binning and returns zero for empty sides") {
  auto a = select::score_histogram({0.5}, 2, 0.0, 1.0);
  auto b = select::score_histogram({0.5}, 3, 0.0, 1.0);
  CHECK_THROWS_AS(select::overlap_coefficient(a, b), Error);
  auto c = select::score_histogram({0.5}, 2, 0.0, 2.0);
  CHECK_THROWS_AS(select::overlap_coefficient(a, c), Error);

  auto empty = select::score_histogram({}, 2, 0.0, 1.0);
  CHECK(select::overlap_coefficient(a, empty) == 0.0);
  CHECK(select::overlap_coefficient(empty, empty) == 0.0);
}

// ============================================================================
// source_breakdown
// ============================================================================

TEST_CASE("source breakdown groups scores and reports pairwise overlaps") {
  std::vector<select::ScoredPair> pairs = {
      scored("a1", 0.1, "alpha"), scored("a2", 0.2, "alpha"),
      scored("b1", 0.8, "beta"),  scored("b2", 0.9, "beta"),
      scored("u1", 0.5),  // untagged
  };
  auto breakdown = select::source_breakdown(pairs, 4, 0.0, 1.0);
  REQUIRE(breakdown.by_source.size() == 3);
  CHECK(breakdown.by_source.count("alpha") == 1);
  CHECK(breakdown.by_source.count("beta") == 1);
  CHECK(breakdown.by_source.count("(untagged)") == 1);
  CHECK(breakdown.by_source.at("alpha").in_range == 2);
  CHECK(breakdown.by_source.at("beta").in_range == 2);

  // Three sources -> three pairwise overlaps, keyed in lexicographic order.
  REQUIRE(breakdown.overlaps.size() == 3);
  CHECK(breakdown.overlaps.count("alpha|beta") == 1);
  CHECK(breakdown.overlaps.count("(untagged)|alpha") == 1);
  CHECK(breakdown.overlaps.count("(untagged)|beta") == 1);
  CHECK(breakdown.overlaps.at("alpha|beta") == 0.0);  // disjoint bins
}
