#pragma once

#include <optional>
#include <string>
#include <vector>

#include "trajscore/answers.hpp"
#include "trajscore/core.hpp"
#include "trajscore/errors.hpp"
#include "trajscore/providers.hpp"
#include "trajscore/step_rewards.hpp"

/**
 * Template-guided trajectory-level reward: extract the high-level reasoning
 * template from a trace, have the policy re-solve the problem N times under
 * that template, and reward the trajectory with the exact fraction of
 * correct re-solutions.
 */
namespace trajscore::trajreward {

using core::ReasoningTemplate;
using core::RewardConfig;
using core::TrajectoryResponsePair;

/// One template-guided completion and its correctness verdict.
struct RolloutOutcome {
  int sample_index = 1;  // 1-based, in [1, N]
  std::string text;
  bool correct = false;
};

struct TrajectoryRewardResult {
  double r_final = 0.0;  // exact fraction of correct rollouts
  ReasoningTemplate tmpl;
  std::vector<RolloutOutcome> outcomes;
};

/**
 * Reference answer for a pair: the explicit gold answer when present,
 * otherwise the boxed answer in the pair's own final response
 * (self-consistency fallback). Throws NoGoldAnswer when neither exists.
 */
inline std::string reference_answer(const TrajectoryResponsePair& pair) {
  if (pair.gold_answer && !pair.gold_answer->empty()) return *pair.gold_answer;
  std::string response_text = steprewards::join_steps(pair.response_steps);
  if (auto boxed = answers::last_boxed_span(response_text)) {
    if (!boxed->empty()) return *boxed;
  }
  throw Error(ErrorCode::NoGoldAnswer,
              "pair '" + pair.id + "' has no gold answer and no boxed answer in its response");
}

/**
 * r_final = (1/N) * sum_j [rollout j answers correctly], N = config.num_rollouts.
 * The template comes from the verifier over the pair's full trace
 * (trajectory then response); each rollout is generated under that template
 * and checked against reference_answer(pair). r_final * N is always the
 * integer count of correct rollouts, independent of rollout order.
 */
inline TrajectoryRewardResult trajectory_reward(const TrajectoryResponsePair& pair,
                                                const providers::ProviderSet& prov,
                                                const RewardConfig& cfg) {
  core::validate_pair(pair);
  core::validate_config(cfg);
  std::string gold = reference_answer(pair);

  std::string trace = steprewards::join_steps(pair.trajectory_steps);
  trace += "\n\n";
  trace += steprewards::join_steps(pair.response_steps);

  TrajectoryRewardResult result;
  result.tmpl = prov.verifier->extract_template(pair.problem, trace);
  result.tmpl.source_pair_id = pair.id;

  std::vector<std::string> rollouts =
      prov.generator->generate(pair.problem, result.tmpl, cfg.num_rollouts);
  if (rollouts.size() != static_cast<size_t>(cfg.num_rollouts)) {
    throw Error(ErrorCode::ProviderUnavailable,
                "generator returned " + std::to_string(rollouts.size()) + " rollouts, expected " +
                    std::to_string(cfg.num_rollouts));
  }

  int correct = 0;
  result.outcomes.reserve(rollouts.size());
  for (size_t i = 0; i < rollouts.size(); ++i) {
    RolloutOutcome o;
    o.sample_index = static_cast<int>(i) + 1;
    o.text = std::move(rollouts[i]);
    o.correct = prov.checker->is_correct(o.text, gold);
    correct += o.correct ? 1 : 0;
    result.outcomes.push_back(std::move(o));
  }
  result.r_final = static_cast<double>(correct) / static_cast<double>(cfg.num_rollouts);
  return result;
}

}  // namespace trajscore::trajreward
