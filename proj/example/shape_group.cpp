/**
 * Reward shaping for one GRPO group: parse a group of sampled rollouts,
 * blend their rule-based outcome rewards with process rewards at several
 * mixing weights, and evaluate the clipped surrogate objective on synthetic
 * token statistics. Deterministic mock providers, no network.
 */

#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "trajscore/trajscore.hpp"

namespace ts = trajscore;

int main() {
  ts::providers::MockEmbedder embedder(11);
  ts::providers::MockJudge judge(11);
  ts::providers::MockVerifier verifier;
  ts::providers::MockGenerator generator(11);
  ts::providers::ExactAnswerChecker checker;
  ts::providers::ProviderSet prov{&embedder, &judge, &verifier, &generator, &checker};

  const std::string problem = "A train covers 180 km in 2 hours. What is its speed in km/h?";
  const std::vector<std::string> rollouts = {
      "<think>Speed is distance over time.\n\nSo 180 / 2 = 90.</think>The speed is \\boxed{90}.",
      "<think>Maybe add them: 180 + 2 = 182.</think>The speed is \\boxed{182}.",
      "<think>Distance over time gives 90.\n\nCheck: 90 * 2 = 180.</think>\\boxed{90} km/h.",
      "<think>Half of 180 is 90, but halve again for safety.</think>The speed is \\boxed{45}.",
  };
  // Rule-based outcome rewards, e.g. exact-match graders in an RL loop.
  const std::vector<double> outcomes = {1.0, 0.0, 1.0, 0.0};

  ts::core::RewardConfig cfg;
  cfg.seed = 11;
  cfg.num_negatives = 2;  // negatives default to the other rollouts' steps

  // ==========================================================================
  // Composite rewards across the mixing range
  // ==========================================================================

  std::cout << std::fixed << std::setprecision(4);
  for (double beta : {0.0, 0.5, 0.8, 1.0}) {
    cfg.beta = beta;
    auto group = ts::rlshape::shape_group(problem, rollouts, outcomes, prov, cfg,
                                          /*pool=*/nullptr, /*gold_answer=*/"90");
    std::cout << "beta=" << beta << "\n";
    for (size_t i = 0; i < group.size(); ++i) {
      std::cout << "  rollout " << i + 1 << "  r_out=" << group[i].r_out
                << "  r_hat=" << group[i].r_hat << "  r_new=" << group[i].r_new
                << "  advantage=" << std::showpos << group[i].advantage << std::noshowpos << "\n";
    }
  }

  // ==========================================================================
  // Clipped surrogate objective on trainer-supplied token statistics
  // ==========================================================================

  // Token-level likelihood ratios and KL estimates come from the trainer;
  // here they are made up to show the clipping and KL-penalty mechanics.
  std::vector<ts::rlshape::RolloutTokens> tokens = {
      {{{1.00, 0.01}, {1.10, 0.02}, {0.95, 0.01}}, 1.2},
      {{{1.45, 0.08}, {0.60, 0.05}}, -0.9},
      {{{1.02, 0.00}, {1.01, 0.01}, {0.99, 0.00}}, 0.7},
      {{{0.85, 0.03}, {1.30, 0.06}}, -1.0},
  };
  for (double kl_coeff : {0.0, 0.04, 0.4}) {
    std::cout << "objective(kl_coeff=" << kl_coeff
              << ") = " << ts::rlshape::grpo_objective(tokens, cfg.clip_epsilon, kl_coeff) << "\n";
  }
  return 0;
}
