#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "trajscore/core.hpp"
#include "trajscore/detail/hash.hpp"
#include "trajscore/errors.hpp"
#include "trajscore/providers.hpp"

/**
 * Per-step reward math: semantic alignment between trajectory and response
 * steps, judged step quality, contrastive coherence against negatives from
 * unrelated trajectories, and the softmax fusion of the three into one step
 * reward. All scalar math is pure; score_steps composes it with providers.
 */
namespace trajscore::steprewards {

using core::RewardConfig;
using core::StepScoreBreakdown;
using core::TrajectoryResponsePair;
using providers::Embedding;

// ============================================================================
// Alignment
// ============================================================================

/// Cosine similarity; symmetric; zero if either vector has zero norm.
inline double alignment_score(const Embedding& a, const Embedding& b) {
  if (a.dim != b.dim || a.values.size() != b.values.size()) {
    throw Error(ErrorCode::DimMismatch,
                "embedding dims differ: " + std::to_string(a.dim) + " vs " + std::to_string(b.dim));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ============================================================================
// Step-index mapping
// ============================================================================

/**
 * Pairs trajectory step t (1-based, of T_s) with a response step index in
 * [1, T_a]: j = max(1, ceil(t * T_a / T_s)). Monotone non-decreasing in t
 * and the identity when lengths match.
 */
inline int map_step_index(int t, int T_s, int T_a) {
  if (t < 1 || T_s < 1 || T_a < 1 || t > T_s) {
    throw Error(ErrorCode::BadRange, "map_step_index: need 1 <= t <= T_s and T_a >= 1");
  }
  long long ceil_div = (static_cast<long long>(t) * T_a + T_s - 1) / T_s;
  return static_cast<int>(std::max(1LL, ceil_div));
}

// ============================================================================
// Coherence
// ============================================================================

/// Contrastive negatives: embeddings of steps from unrelated trajectories.
struct NegativeSet {
  std::vector<Embedding> embeddings;
  std::vector<std::string> origin_ids;
};

/**
 * Contrastive coherence of cur given prev:
 *   log[ exp(sim(prev,cur)/tau) / sum_{n in negatives} exp(sim(prev,n)/tau) ]
 * evaluated in log space with max-subtraction so extreme sim/tau ratios
 * cannot overflow. The positive pair is not part of the denominator.
 */
inline double coherence_score(const Embedding& prev, const Embedding& cur,
                              const NegativeSet& negatives, double tau) {
  if (negatives.embeddings.empty()) {
    throw Error(ErrorCode::EmptyNegatives, "coherence needs at least one negative");
  }
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidConfig, "tau must be > 0");
  double pos = alignment_score(prev, cur) / tau;
  std::vector<double> scaled;
  scaled.reserve(negatives.embeddings.size());
  double max_scaled = -std::numeric_limits<double>::infinity();
  for (const auto& n : negatives.embeddings) {
    double s = alignment_score(prev, n) / tau;
    scaled.push_back(s);
    max_scaled = std::max(max_scaled, s);
  }
  double sum = 0.0;
  for (double s : scaled) sum += std::exp(s - max_scaled);
  return pos - (max_scaled + std::log(sum));
}

// ============================================================================
// Normalization and fusion
// ============================================================================

struct NormalizedComponents {
  double align_norm = 0.0;
  double quality_norm = 0.0;
  double coherence_norm = 0.0;
};

/// Ranges are reconciled to [0,1]: cosine affinely, quality as-is, the
/// unbounded coherence log-ratio through the logistic function.
inline NormalizedComponents normalize_components(double align_raw, double quality,
                                                 double coherence_raw) {
  NormalizedComponents n;
  n.align_norm = (align_raw + 1.0) / 2.0;
  n.quality_norm = quality;
  n.coherence_norm = 1.0 / (1.0 + std::exp(-coherence_raw));
  return n;
}

struct FuseResult {
  std::array<double, 3> weights{};
  double step_reward = 0.0;
};

/**
 * Softmax-weighted fusion: weights = softmax(v), reward = sum_k w_k * v_k.
 * The reward is a convex combination, so it stays inside [min(v), max(v)];
 * equal inputs give exactly (1/3, 1/3, 1/3).
 */
inline FuseResult fuse(double v0, double v1, double v2) {
  std::array<double, 3> v{v0, v1, v2};
  double m = std::max({v0, v1, v2});
  std::array<double, 3> e{};
  double sum = 0.0;
  for (int k = 0; k < 3; ++k) {
    e[k] = std::exp(v[k] - m);
    sum += e[k];
  }
  FuseResult r;
  for (int k = 0; k < 3; ++k) {
    r.weights[k] = e[k] / sum;
    r.step_reward += r.weights[k] * v[k];
  }
  return r;
}

/// Which values feed the softmax fusion: range-reconciled (default) or the
/// raw components (cosine, judge score, unbounded log-ratio) verbatim.
enum class FuseMode { Normalized, Raw };

// ============================================================================
// Negative pool
// ============================================================================

/**
 * Candidate negatives harvested from a corpus: trajectory steps keyed by
 * their origin pair. Embeddings are computed lazily through the supplied
 * embedder and memoized, so repeated sampling is free once warm. Sampling
 * is seeded and excludes the pair being scored.
 */
class NegativePool {
 public:
  explicit NegativePool(providers::Embedder& embedder) : embedder_(embedder) {}

  void add(std::string origin_id, std::string step_text) {
    entries_.push_back({std::move(origin_id), std::move(step_text), {}, false});
  }

  void add_pair(const TrajectoryResponsePair& pair) {
    for (const auto& s : pair.trajectory_steps) add(pair.id, s);
  }

  size_t size() const { return entries_.size(); }

  /// Pre-computes every embedding (one upstream call per distinct entry).
  void warm() {
    for (size_t i = 0; i < entries_.size(); ++i) embedding_at(i);
  }

  /**
   * Draws `count` negatives without replacement, uniformly (seeded, partial
   * Fisher-Yates) among entries from other pairs. Throws
   * InsufficientNegatives when fewer eligible entries exist.
   */
  NegativeSet sample(std::string_view exclude_pair_id, int count, std::uint64_t seed) const {
    if (count < 1) throw Error(ErrorCode::BadRange, "negative sample count must be >= 1");
    std::vector<size_t> eligible;
    eligible.reserve(entries_.size());
    for (size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].origin_id != exclude_pair_id) eligible.push_back(i);
    }
    if (eligible.size() < static_cast<size_t>(count)) {
      throw Error(ErrorCode::InsufficientNegatives,
                  "need " + std::to_string(count) + " negatives, pool offers " +
                      std::to_string(eligible.size()) + " outside pair '" +
                      std::string(exclude_pair_id) + "'");
    }
    std::uint64_t state = seed;
    NegativeSet set;
    set.embeddings.reserve(static_cast<size_t>(count));
    set.origin_ids.reserve(static_cast<size_t>(count));
    for (int k = 0; k < count; ++k) {
      size_t remaining = eligible.size() - static_cast<size_t>(k);
      size_t pick = static_cast<size_t>(k) + detail::splitmix64(state) % remaining;
      std::swap(eligible[static_cast<size_t>(k)], eligible[pick]);
      size_t idx = eligible[static_cast<size_t>(k)];
      set.embeddings.push_back(embedding_at(idx));
      set.origin_ids.push_back(entries_[idx].origin_id);
    }
    return set;
  }

 private:
  struct Entry {
    std::string origin_id;
    std::string text;
    Embedding embedding;
    bool embedded = false;
  };

  const Embedding& embedding_at(size_t i) const {
    std::lock_guard<std::mutex> lock(mu_);
    Entry& e = entries_[i];
    if (!e.embedded) {
      e.embedding = embedder_.embed(e.text);
      e.embedded = true;
    }
    return e.embedding;
  }

  providers::Embedder& embedder_;
  mutable std::vector<Entry> entries_;
  mutable std::mutex mu_;
};

// ============================================================================
// Composition
// ============================================================================

/// Seed for everything random about one pair; independent of corpus order.
inline std::uint64_t pair_seed(const RewardConfig& cfg, std::string_view pair_id) {
  return detail::mix64(cfg.seed, detail::fnv1a64(pair_id));
}

inline std::string join_steps(const std::vector<std::string>& steps) {
  std::string out;
  for (size_t i = 0; i < steps.size(); ++i) {
    if (i) out += "\n\n";
    out += steps[i];
  }
  return out;
}

/**
 * Scores every trajectory step of a pair: alignment against its mapped
 * response step, judged quality in context, and coherence against
 * config.num_negatives sampled from the pool (one draw per pair, reused
 * across its steps). Step 1's coherence predecessor is the problem text.
 * Deterministic given (config.seed, pair, pool contents). Issues exactly
 * T_s judge calls and at most T_s + T_a + 1 pair-local embedding calls.
 */
inline std::vector<StepScoreBreakdown> score_steps(const TrajectoryResponsePair& pair,
                                                   const providers::ProviderSet& prov,
                                                   const NegativePool& pool,
                                                   const RewardConfig& cfg,
                                                   FuseMode mode = FuseMode::Normalized) {
  core::validate_pair(pair);
  core::validate_config(cfg);
  NegativeSet negatives = pool.sample(pair.id, cfg.num_negatives, pair_seed(cfg, pair.id));

  const int T_s = static_cast<int>(pair.trajectory_steps.size());
  const int T_a = static_cast<int>(pair.response_steps.size());
  const std::string response_text = join_steps(pair.response_steps);

  Embedding problem_emb = prov.embedder->embed(pair.problem);
  std::vector<Embedding> traj_embs;
  traj_embs.reserve(static_cast<size_t>(T_s));
  for (const auto& s : pair.trajectory_steps) traj_embs.push_back(prov.embedder->embed(s));
  std::map<int, Embedding> resp_embs;  // only the mapped response steps

  std::vector<StepScoreBreakdown> out;
  out.reserve(static_cast<size_t>(T_s));
  std::vector<std::string> prior;
  for (int t = 1; t <= T_s; ++t) {
    const std::string& step = pair.trajectory_steps[static_cast<size_t>(t - 1)];
    int j = map_step_index(t, T_s, T_a);
    auto it = resp_embs.find(j);
    if (it == resp_embs.end()) {
      it = resp_embs.emplace(j, prov.embedder->embed(pair.response_steps[static_cast<size_t>(j - 1)]))
               .first;
    }

    StepScoreBreakdown b;
    b.step_index = t;
    b.aligned_response_index = j;
    b.align_raw = alignment_score(traj_embs[static_cast<size_t>(t - 1)], it->second);
    b.quality = prov.judge->rate_step(pair.problem, prior, response_text, step);
    const Embedding& prev = (t == 1) ? problem_emb : traj_embs[static_cast<size_t>(t - 2)];
    b.coherence_raw = coherence_score(prev, traj_embs[static_cast<size_t>(t - 1)], negatives, cfg.tau);

    NormalizedComponents n = normalize_components(b.align_raw, b.quality, b.coherence_raw);
    b.align_norm = n.align_norm;
    b.quality_norm = n.quality_norm;
    b.coherence_norm = n.coherence_norm;
    FuseResult f = (mode == FuseMode::Normalized)
                       ? fuse(n.align_norm, n.quality_norm, n.coherence_norm)
                       : fuse(b.align_raw, b.quality, b.coherence_raw);
    b.weights = f.weights;
    b.step_reward = f.step_reward;
    out.push_back(std::move(b));
    prior.push_back(step);
  }
  return out;
}

}  // namespace trajscore::steprewards
