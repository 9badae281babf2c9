#pragma once

#include <string>
#include <vector>

#include "trajscore/aggregate.hpp"
#include "trajscore/core.hpp"
#include "trajscore/providers.hpp"
#include "trajscore/select.hpp"
#include "trajscore/step_rewards.hpp"
#include "trajscore/trajectory_reward.hpp"

/**
 * The one composition every consumer shares: step scoring, trajectory
 * reward, and aggregation for a single pair. The CLI and the HTTP service
 * both call score_pair, which is what makes their outputs bit-identical for
 * identical inputs and config.
 */
namespace trajscore::pipeline {

using core::RewardConfig;
using core::TrajectoryResponsePair;
using core::TrajectoryScore;

/// Full per-pair scoring: breakdowns, mean step reward, r_final, aggregate.
inline TrajectoryScore score_pair(const TrajectoryResponsePair& pair,
                                  const providers::ProviderSet& prov,
                                  const steprewards::NegativePool& pool, const RewardConfig& cfg,
                                  steprewards::FuseMode mode = steprewards::FuseMode::Normalized) {
  TrajectoryScore score;
  score.steps = steprewards::score_steps(pair, prov, pool, cfg, mode);
  std::vector<double> step_rewards;
  step_rewards.reserve(score.steps.size());
  for (const auto& b : score.steps) step_rewards.push_back(b.step_reward);

  double sum = 0.0;
  for (double r : step_rewards) sum += r;
  score.mean_step_reward = sum / static_cast<double>(step_rewards.size());
  score.final_reward = trajreward::trajectory_reward(pair, prov, cfg).r_final;
  score.aggregate =
      aggregate::aggregate_score(step_rewards, score.final_reward, cfg.alpha, cfg.aggregation);
  return score;
}

/// Curation summary of a scored pair.
inline select::ScoredPair to_scored_pair(const TrajectoryResponsePair& pair,
                                         const TrajectoryScore& score) {
  select::ScoredPair s;
  s.pair_id = pair.id;
  s.aggregate = score.aggregate;
  s.mean_step_reward = score.mean_step_reward;
  s.final_reward = score.final_reward;
  s.source = pair.source;
  return s;
}

}  // namespace trajscore::pipeline
