#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trajscore/aggregate.hpp"
#include "trajscore/core.hpp"
#include "trajscore/errors.hpp"
#include "trajscore/ingest.hpp"
#include "trajscore/providers.hpp"
#include "trajscore/step_rewards.hpp"
#include "trajscore/trajectory_reward.hpp"

/**
 * GRPO-facing reward shaping: mixes the rule-based outcome reward with the
 * aggregate process reward, normalizes advantages within a rollout group,
 * and evaluates the clipped surrogate objective on caller-supplied token
 * statistics. The toolkit never evaluates policies itself — ratios and KL
 * values arrive precomputed from the trainer.
 */
namespace trajscore::rlshape {

using core::GroupRollout;
using core::RewardConfig;
using core::TokenStats;

// ============================================================================
// Composite reward and advantages
// ============================================================================

/// r_new = (1 - beta) * r_out + beta * r_hat; exact at beta in {0, 1}.
inline double composite_reward(double r_out, double r_hat, double beta) {
  if (beta == 0.0) return r_out;
  if (beta == 1.0) return r_hat;
  return (1.0 - beta) * r_out + beta * r_hat;
}

/**
 * Group-normalized advantages: (r - mean) / population_std. Output has mean
 * 0 and population std 1 (within fp error) and is invariant under shifting
 * all rewards by a constant or scaling them by any positive factor. Throws
 * DegenerateGroup when the population std is below 1e-12 — zero-variance
 * groups carry no learning signal and the caller must decide what to do.
 */
inline std::vector<double> group_advantages(const std::vector<double>& rewards) {
  if (rewards.size() < 2) throw Error(ErrorCode::BadRange, "advantage group needs G >= 2");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(rewards.size());
  double std_dev = std::sqrt(var);
  if (std_dev < 1e-12) {
    throw Error(ErrorCode::DegenerateGroup, "zero-variance reward group (population std < 1e-12)");
  }
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / std_dev);
  return out;
}

// ============================================================================
// Group shaping
// ============================================================================

/**
 * Shapes one GRPO group: every rollout text is parsed like a corpus record
 * (thinking block optional — without one the trajectory defaults to the
 * response's first step), scored through the full step/trajectory pipeline
 * into r_hat, mixed with its outcome reward into r_new, and the group's
 * r_new values are normalized into advantages.
 *
 * Negatives come from `pool` when given; otherwise from the other rollouts'
 * trajectory steps, with the sample size clamped to what that group-local
 * pool offers. `gold_answer`, when non-empty, overrides the self-consistency
 * fallback for rollout correctness checks.
 */
inline std::vector<GroupRollout> shape_group(std::string_view problem,
                                             const std::vector<std::string>& rollouts,
                                             const std::vector<double>& outcome_rewards,
                                             const providers::ProviderSet& prov,
                                             const RewardConfig& cfg,
                                             const steprewards::NegativePool* pool = nullptr,
                                             std::string_view gold_answer = {},
                                             const ingest::ThinkTags& tags = {}) {
  if (rollouts.size() < 2) throw Error(ErrorCode::BadRange, "group needs G >= 2 rollouts");
  if (rollouts.size() != outcome_rewards.size()) {
    throw Error(ErrorCode::LengthMismatch, "rollouts and outcome_rewards lengths differ");
  }
  core::validate_config(cfg);

  // Parse every rollout up front; parse errors abort the group as a whole.
  std::vector<core::TrajectoryResponsePair> pairs;
  pairs.reserve(rollouts.size());
  for (size_t i = 0; i < rollouts.size(); ++i) {
    ingest::RawRecord raw;
    raw.id = "rollout-" + std::to_string(i + 1);
    raw.problem = std::string(problem);
    raw.output = rollouts[i];
    if (!gold_answer.empty()) raw.gold_answer = std::string(gold_answer);
    nlohmann::json raw_json{{"problem", raw.problem}, {"output", rollouts[i]}};
    pairs.push_back(ingest::parse_record(raw, raw_json, tags));
  }

  // Group-local negative pool fallback: other rollouts' trajectory steps.
  steprewards::NegativePool local_pool(*prov.embedder);
  RewardConfig local_cfg = cfg;
  const steprewards::NegativePool* active_pool = pool;
  if (active_pool == nullptr) {
    for (const auto& p : pairs) local_pool.add_pair(p);
    size_t min_eligible = std::numeric_limits<size_t>::max();
    for (const auto& p : pairs) {
      size_t eligible = 0;
      for (const auto& q : pairs) {
        if (q.id != p.id) eligible += q.trajectory_steps.size();
      }
      min_eligible = std::min(min_eligible, eligible);
    }
    if (min_eligible == 0) {
      throw Error(ErrorCode::InsufficientNegatives, "no cross-rollout steps available as negatives");
    }
    local_cfg.num_negatives = static_cast<int>(
        std::min<size_t>(static_cast<size_t>(cfg.num_negatives), min_eligible));
    active_pool = &local_pool;
  }

  std::vector<GroupRollout> out(rollouts.size());
  std::vector<double> r_new(rollouts.size());
  for (size_t i = 0; i < rollouts.size(); ++i) {
    auto breakdowns = steprewards::score_steps(pairs[i], prov, *active_pool, local_cfg);
    std::vector<double> step_rewards;
    step_rewards.reserve(breakdowns.size());
    for (const auto& b : breakdowns) step_rewards.push_back(b.step_reward);
    double r_final = trajreward::trajectory_reward(pairs[i], prov, local_cfg).r_final;
    double r_hat = aggregate::aggregate_score(step_rewards, r_final, local_cfg.alpha,
                                              local_cfg.aggregation);
    out[i].text = rollouts[i];
    out[i].r_out = outcome_rewards[i];
    out[i].r_hat = r_hat;
    out[i].r_new = composite_reward(outcome_rewards[i], r_hat, local_cfg.beta);
    r_new[i] = out[i].r_new;
  }
  std::vector<double> advantages = group_advantages(r_new);
  for (size_t i = 0; i < out.size(); ++i) out[i].advantage = advantages[i];
  return out;
}

// ============================================================================
// GRPO objective
// ============================================================================

/// One rollout's trainer-supplied token statistics and its advantage.
struct RolloutTokens {
  std::vector<TokenStats> token_stats;
  double advantage = 0.0;
};

/**
 * Clipped surrogate objective:
 *   mean over rollouts of mean over tokens of
 *     min(ratio * A, clip(ratio, 1-eps, 1+eps) * A) - kl_coeff * kl,
 * with the KL penalty inside the per-token mean. With all ratios 1 this is
 * exactly mean advantage minus kl_coeff * mean KL; it is non-increasing in
 * kl_coeff whenever the KL estimates are non-negative.
 */
inline double grpo_objective(const std::vector<RolloutTokens>& rollouts, double clip_epsilon,
                             double kl_coeff) {
  if (rollouts.empty()) throw Error(ErrorCode::BadRange, "objective needs at least one rollout");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "clip_epsilon must be in (0,1)");
  }
  double total = 0.0;
  for (const auto& r : rollouts) {
    if (r.token_stats.empty()) throw Error(ErrorCode::EmptyTokens, "rollout has no token statistics");
    double acc = 0.0;
    for (const auto& t : r.token_stats) {
      double clipped = std::clamp(t.ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
      acc += std::min(t.ratio * r.advantage, clipped * r.advantage) - kl_coeff * t.kl;
    }
    total += acc / static_cast<double>(r.token_stats.size());
  }
  return total / static_cast<double>(rollouts.size());
}

}  // namespace trajscore::rlshape
