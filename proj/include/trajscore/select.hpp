#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajscore/core.hpp"
#include "trajscore/errors.hpp"

/**
 * Offline applications of the aggregate score: top-k corpus selection,
 * Best-of-N reranking, a majority-vote baseline, and score-distribution
 * statistics (histograms plus a between-source overlap coefficient). All
 * pure functions with deterministic tie-breaks, so curation runs reproduce.
 */
namespace trajscore::select {

using json = nlohmann::json;

// ============================================================================
// ScoredPair
// ============================================================================

/// The scoring pipeline's per-pair summary used for curation decisions.
struct ScoredPair {
  std::string pair_id;
  double aggregate = 0.0;
  double mean_step_reward = 0.0;
  double final_reward = 0.0;
  std::optional<std::string> source;
};

inline void to_json(json& j, const ScoredPair& s) {
  j = json{{"pair_id", s.pair_id},
           {"aggregate", s.aggregate},
           {"mean_step_reward", s.mean_step_reward},
           {"final_reward", s.final_reward}};
  if (s.source) j["source"] = *s.source;
}

inline void from_json(const json& j, ScoredPair& s) {
  j.at("pair_id").get_to(s.pair_id);
  j.at("aggregate").get_to(s.aggregate);
  j.at("mean_step_reward").get_to(s.mean_step_reward);
  j.at("final_reward").get_to(s.final_reward);
  s.source.reset();
  if (j.contains("source") && !j["source"].is_null()) s.source = j["source"].get<std::string>();
}

// ============================================================================
// Selection
// ============================================================================

/**
 * Ids of the k highest-aggregate pairs, descending; ties break by ascending
 * pair_id so the result depends only on the multiset of (score, id). k
 * larger than the list returns everything.
 */
inline std::vector<std::string> rank_and_select(std::vector<ScoredPair> scored, int k) {
  if (k < 1) throw Error(ErrorCode::BadRange, "k must be >= 1");
  std::sort(scored.begin(), scored.end(), [](const ScoredPair& a, const ScoredPair& b) {
    if (a.aggregate != b.aggregate) return a.aggregate > b.aggregate;
    return a.pair_id < b.pair_id;
  });
  size_t take = std::min(scored.size(), static_cast<size_t>(k));
  std::vector<std::string> ids;
  ids.reserve(take);
  for (size_t i = 0; i < take; ++i) ids.push_back(scored[i].pair_id);
  return ids;
}

/// 0-based index of the maximum score; ties go to the lowest index, so the
/// result is invariant under any strictly increasing transform of scores.
inline size_t best_of_n(const std::vector<double>& candidate_scores) {
  if (candidate_scores.empty()) throw Error(ErrorCode::BadRange, "best_of_n needs N >= 1 candidates");
  size_t best = 0;
  for (size_t i = 1; i < candidate_scores.size(); ++i) {
    if (candidate_scores[i] > candidate_scores[best]) best = i;
  }
  return best;
}

/// Modal answer; ties break toward the earliest first occurrence.
inline std::string majority_vote(const std::vector<std::string>& answers) {
  if (answers.empty()) throw Error(ErrorCode::BadRange, "majority_vote needs a non-empty list");
  std::map<std::string, size_t> counts;
  std::map<std::string, size_t> first_seen;
  for (size_t i = 0; i < answers.size(); ++i) {
    ++counts[answers[i]];
    first_seen.emplace(answers[i], i);
  }
  const std::string* winner = &answers[0];
  size_t winner_count = 0;
  for (const auto& [answer, count] : counts) {
    if (count > winner_count ||
        (count == winner_count && first_seen[answer] < first_seen[*winner])) {
      winner = &answer;
      winner_count = count;
    }
  }
  return *winner;
}

// ============================================================================
// Histograms
// ============================================================================

/**
 * Uniform-width histogram over [lo, hi]: bins are right-open except the
 * last, which is right-closed so hi itself lands in-range. mean/std_dev
 * (population) summarize every input score, in-range or not.
 */
struct Histogram {
  int bins = 1;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::uint64_t> counts;
  std::uint64_t in_range = 0;
  std::uint64_t out_of_range = 0;
  double mean = 0.0;
  double std_dev = 0.0;
};

inline Histogram score_histogram(const std::vector<double>& scores, int bins, double lo, double hi) {
  if (bins < 1) throw Error(ErrorCode::BadRange, "bins must be >= 1");
  if (!(lo < hi)) throw Error(ErrorCode::BadRange, "histogram range needs lo < hi");
  Histogram h;
  h.bins = bins;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(static_cast<size_t>(bins), 0);
  double sum = 0.0, sum_sq = 0.0;
  for (double x : scores) {
    sum += x;
    sum_sq += x * x;
    if (x < lo || x > hi) {
      ++h.out_of_range;
      continue;
    }
    auto idx = static_cast<long long>(std::floor((x - lo) / (hi - lo) * bins));
    if (idx >= bins) idx = bins - 1;  // x == hi (or fp spill): last bin is right-closed
    if (idx < 0) idx = 0;
    ++h.counts[static_cast<size_t>(idx)];
    ++h.in_range;
  }
  if (!scores.empty()) {
    h.mean = sum / static_cast<double>(scores.size());
    double var = sum_sq / static_cast<double>(scores.size()) - h.mean * h.mean;
    h.std_dev = std::sqrt(std::max(0.0, var));
  }
  return h;
}

/**
 * Histogram-intersection overlap: sum over bins of min(p_b, q_b) where p, q
 * are the two histograms' in-range counts normalized to sum 1. 1 for
 * identical shapes, 0 for disjoint supports or when either side is empty.
 * Both histograms must share bin count and range.
 */
inline double overlap_coefficient(const Histogram& a, const Histogram& b) {
  if (a.bins != b.bins || a.lo != b.lo || a.hi != b.hi) {
    throw Error(ErrorCode::BadRange, "overlap requires identically binned histograms");
  }
  if (a.in_range == 0 || b.in_range == 0) return 0.0;
  double overlap = 0.0;
  for (size_t i = 0; i < a.counts.size(); ++i) {
    double pa = static_cast<double>(a.counts[i]) / static_cast<double>(a.in_range);
    double pb = static_cast<double>(b.counts[i]) / static_cast<double>(b.in_range);
    overlap += std::min(pa, pb);
  }
  return overlap;
}

/// Per-source histograms plus pairwise overlaps, ready for the stats report.
struct SourceBreakdown {
  std::map<std::string, Histogram> by_source;
  // Keyed "<source-a>|<source-b>" with a < b lexicographically.
  std::map<std::string, double> overlaps;
};

inline SourceBreakdown source_breakdown(const std::vector<ScoredPair>& scored, int bins, double lo,
                                        double hi) {
  std::map<std::string, std::vector<double>> grouped;
  for (const auto& s : scored) grouped[s.source.value_or("(untagged)")].push_back(s.aggregate);
  SourceBreakdown out;
  for (const auto& [source, scores] : grouped) {
    out.by_source.emplace(source, score_histogram(scores, bins, lo, hi));
  }
  for (auto ia = out.by_source.begin(); ia != out.by_source.end(); ++ia) {
    for (auto ib = std::next(ia); ib != out.by_source.end(); ++ib) {
      out.overlaps.emplace(ia->first + "|" + ib->first, overlap_coefficient(ia->second, ib->second));
    }
  }
  return out;
}

}  // namespace trajscore::select
