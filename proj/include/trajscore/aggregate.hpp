#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "trajscore/core.hpp"
#include "trajscore/errors.hpp"
#include "trajscore/providers.hpp"
#include "trajscore/step_rewards.hpp"
#include "trajscore/trajectory_reward.hpp"

/**
 * Combines step-level and trajectory-level rewards into the aggregate score
 * r-hat, generates reference training labels for an external reward model,
 * and evaluates the joint MSE objective those labels feed.
 */
namespace trajscore::aggregate {

using core::Aggregation;
using core::RewardConfig;
using core::TrajectoryResponsePair;
using json = nlohmann::json;

// ============================================================================
// Aggregate score
// ============================================================================

/**
 * r-hat = agg(step_rewards) + alpha * r_final where agg is the arithmetic
 * mean (default) or the plain sum. Monotone non-decreasing in every step
 * reward and, for alpha >= 0, in r_final.
 */
inline double aggregate_score(const std::vector<double>& step_rewards, double r_final, double alpha,
                              Aggregation aggregation = Aggregation::Mean) {
  if (step_rewards.empty()) throw Error(ErrorCode::EmptySteps, "aggregate needs at least one step reward");
  double acc = 0.0;
  for (double r : step_rewards) acc += r;
  if (aggregation == Aggregation::Mean) acc /= static_cast<double>(step_rewards.size());
  return acc + alpha * r_final;
}

// ============================================================================
// Reference labels
// ============================================================================

/// Training targets for one pair: per-step rewards plus the final reward.
struct ReferenceLabels {
  std::string pair_id;
  std::vector<double> step_targets;
  double final_target = 0.0;
};

inline void to_json(json& j, const ReferenceLabels& l) {
  j = json{{"pair_id", l.pair_id}, {"step_targets", l.step_targets}, {"final_target", l.final_target}};
}

inline void from_json(const json& j, ReferenceLabels& l) {
  j.at("pair_id").get_to(l.pair_id);
  j.at("step_targets").get_to(l.step_targets);
  j.at("final_target").get_to(l.final_target);
}

/// An external reward model's outputs for the same pair.
struct PredictedRewards {
  std::vector<double> step_preds;
  double final_pred = 0.0;
};

inline void to_json(json& j, const PredictedRewards& p) {
  j = json{{"step_preds", p.step_preds}, {"final_pred", p.final_pred}};
}

inline void from_json(const json& j, PredictedRewards& p) {
  j.at("step_preds").get_to(p.step_preds);
  j.at("final_pred").get_to(p.final_pred);
}

/**
 * Reference labels for one pair: step targets are the fused step rewards,
 * the final target is the template-guided trajectory reward. Deterministic
 * under a fixed config seed with mock providers.
 */
inline ReferenceLabels build_reference_labels(const TrajectoryResponsePair& pair,
                                              const providers::ProviderSet& prov,
                                              const steprewards::NegativePool& pool,
                                              const RewardConfig& cfg,
                                              steprewards::FuseMode mode = steprewards::FuseMode::Normalized) {
  ReferenceLabels labels;
  labels.pair_id = pair.id;
  for (const auto& b : steprewards::score_steps(pair, prov, pool, cfg, mode)) {
    labels.step_targets.push_back(b.step_reward);
  }
  labels.final_target = trajreward::trajectory_reward(pair, prov, cfg).r_final;
  return labels;
}

// ============================================================================
// Joint loss
// ============================================================================

/**
 * L = lambda_step * (1/T) * sum_t (step_pred_t - step_target_t)^2
 *   + lambda_final * (final_pred - final_target)^2.
 * Non-negative; zero iff the lambda-weighted residuals vanish; invariant
 * under simultaneous permutation of step preds and targets. The gradient
 * w.r.t. step_pred_t is 2 * lambda_step * (pred_t - target_t) / T.
 */
inline double joint_loss(const PredictedRewards& preds, const ReferenceLabels& targets,
                         double lambda_step, double lambda_final) {
  if (preds.step_preds.size() != targets.step_targets.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "step_preds length " + std::to_string(preds.step_preds.size()) +
                    " != step_targets length " + std::to_string(targets.step_targets.size()));
  }
  if (preds.step_preds.empty()) throw Error(ErrorCode::EmptySteps, "joint loss needs at least one step");
  double step_mse = 0.0;
  for (size_t t = 0; t < preds.step_preds.size(); ++t) {
    double d = preds.step_preds[t] - targets.step_targets[t];
    step_mse += d * d;
  }
  step_mse /= static_cast<double>(preds.step_preds.size());
  double df = preds.final_pred - targets.final_target;
  return lambda_step * step_mse + lambda_final * df * df;
}

}  // namespace trajscore::aggregate
