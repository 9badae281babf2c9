#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajscore/detail/hash.hpp"
#include "trajscore/errors.hpp"

/**
 * Domain types shared by every other module. All types are immutable value
 * types once constructed and safe to share across threads. The to_json /
 * from_json pairs define the canonical wire schema (snake_case field names,
 * optional fields omitted when absent) used by the CLI, the cache, and the
 * HTTP service.
 */
namespace trajscore::core {

using json = nlohmann::json;

// ============================================================================
// TrajectoryResponsePair
// ============================================================================

/**
 * A problem plus its segmented thinking trajectory and final response.
 * The full supervision target is the concatenation trajectory ++ response.
 */
struct TrajectoryResponsePair {
  std::string id;
  std::string problem;
  std::vector<std::string> trajectory_steps;
  std::vector<std::string> response_steps;
  std::optional<std::string> gold_answer;
  std::optional<std::string> source;
};

inline bool is_blank(const std::string& s) {
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

/**
 * Returns the pair unchanged if all invariants hold.
 * Throws EmptyTrajectory when either step list is empty, EmptyStep when any
 * step is blank after trimming.
 */
inline const TrajectoryResponsePair& validate_pair(const TrajectoryResponsePair& pair) {
  if (pair.trajectory_steps.empty() || pair.response_steps.empty()) {
    throw Error(ErrorCode::EmptyTrajectory,
                "pair '" + pair.id + "' needs at least one trajectory and one response step");
  }
  for (const auto& s : pair.trajectory_steps) {
    if (is_blank(s)) throw Error(ErrorCode::EmptyStep, "blank trajectory step in pair '" + pair.id + "'");
  }
  for (const auto& s : pair.response_steps) {
    if (is_blank(s)) throw Error(ErrorCode::EmptyStep, "blank response step in pair '" + pair.id + "'");
  }
  return pair;
}

inline void to_json(json& j, const TrajectoryResponsePair& p) {
  j = json{{"id", p.id},
           {"problem", p.problem},
           {"trajectory_steps", p.trajectory_steps},
           {"response_steps", p.response_steps}};
  if (p.gold_answer) j["gold_answer"] = *p.gold_answer;
  if (p.source) j["source"] = *p.source;
}

inline void from_json(const json& j, TrajectoryResponsePair& p) {
  j.at("id").get_to(p.id);
  j.at("problem").get_to(p.problem);
  j.at("trajectory_steps").get_to(p.trajectory_steps);
  j.at("response_steps").get_to(p.response_steps);
  p.gold_answer.reset();
  p.source.reset();
  if (j.contains("gold_answer") && !j["gold_answer"].is_null())
    p.gold_answer = j["gold_answer"].get<std::string>();
  if (j.contains("source") && !j["source"].is_null())
    p.source = j["source"].get<std::string>();
}

// ============================================================================
// RewardConfig
// ============================================================================

enum class Aggregation { Mean, Sum };

inline std::string aggregation_name(Aggregation a) {
  return a == Aggregation::Mean ? "mean" : "sum";
}

inline Aggregation aggregation_from_name(const std::string& s) {
  if (s == "mean") return Aggregation::Mean;
  if (s == "sum") return Aggregation::Sum;
  throw Error(ErrorCode::InvalidConfig, "aggregation must be 'mean' or 'sum', got '" + s + "'");
}

/**
 * Every tunable scalar in one place. Defaults follow the ablation winners
 * where one exists (alpha = 1.0, beta = 0.8, N = 5) and conventional values
 * elsewhere (tau = 0.07, clip_epsilon = 0.2).
 */
struct RewardConfig {
  double alpha = 1.0;          // trajectory-reward weight in the aggregate
  double beta = 0.8;           // RL mixing weight between outcome and PRM reward
  double tau = 0.07;           // contrastive temperature
  double lambda_step = 1.0;    // step-loss weight
  double lambda_final = 1.0;   // trajectory-loss weight
  int num_rollouts = 5;        // template-guided rollouts per pair
  int num_negatives = 16;      // contrastive negatives per step
  int group_size = 6;          // rollouts per GRPO group
  double clip_epsilon = 0.2;   // surrogate clip range
  double kl_coeff = 0.04;      // KL penalty weight
  Aggregation aggregation = Aggregation::Mean;
  std::uint64_t seed = 0;
};

inline void validate_config(const RewardConfig& c) {
  if (!(c.tau > 0.0)) throw Error(ErrorCode::InvalidConfig, "tau must be > 0");
  if (!(c.beta >= 0.0 && c.beta <= 1.0)) throw Error(ErrorCode::InvalidConfig, "beta must be in [0,1]");
  if (!(c.clip_epsilon > 0.0 && c.clip_epsilon < 1.0))
    throw Error(ErrorCode::InvalidConfig, "clip_epsilon must be in (0,1)");
  if (c.alpha < 0.0 || c.lambda_step < 0.0 || c.lambda_final < 0.0 || c.kl_coeff < 0.0)
    throw Error(ErrorCode::InvalidConfig, "weights must be non-negative");
  if (c.num_rollouts < 1) throw Error(ErrorCode::InvalidConfig, "num_rollouts must be >= 1");
  if (c.num_negatives < 1) throw Error(ErrorCode::InvalidConfig, "num_negatives must be >= 1");
  if (c.group_size < 2) throw Error(ErrorCode::InvalidConfig, "group_size must be >= 2");
}

inline void to_json(json& j, const RewardConfig& c) {
  j = json{{"alpha", c.alpha},
           {"beta", c.beta},
           {"tau", c.tau},
           {"lambda_step", c.lambda_step},
           {"lambda_final", c.lambda_final},
           {"num_rollouts", c.num_rollouts},
           {"num_negatives", c.num_negatives},
           {"group_size", c.group_size},
           {"clip_epsilon", c.clip_epsilon},
           {"kl_coeff", c.kl_coeff},
           {"aggregation", aggregation_name(c.aggregation)},
           {"seed", c.seed}};
}

inline void from_json(const json& j, RewardConfig& c) {
  j.at("alpha").get_to(c.alpha);
  j.at("beta").get_to(c.beta);
  j.at("tau").get_to(c.tau);
  j.at("lambda_step").get_to(c.lambda_step);
  j.at("lambda_final").get_to(c.lambda_final);
  j.at("num_rollouts").get_to(c.num_rollouts);
  j.at("num_negatives").get_to(c.num_negatives);
  j.at("group_size").get_to(c.group_size);
  j.at("clip_epsilon").get_to(c.clip_epsilon);
  j.at("kl_coeff").get_to(c.kl_coeff);
  c.aggregation = aggregation_from_name(j.at("aggregation").get<std::string>());
  j.at("seed").get_to(c.seed);
}

/// SHA-256 of the canonical config JSON; stamped on outputs for auditability.
inline std::string config_digest(const RewardConfig& c) {
  return detail::sha256_hex(json(c).dump());
}

// ============================================================================
// StepScoreBreakdown
// ============================================================================

/**
 * Per-step raw and normalized alignment/quality/coherence values, the softmax
 * fusion weights, and the fused step reward. weights is a probability simplex
 * point in (alignment, quality, coherence) order.
 */
struct StepScoreBreakdown {
  int step_index = 1;              // 1-based t
  int aligned_response_index = 1;  // 1-based index of the paired response step
  double align_raw = 0.0;          // cosine, in [-1, 1]
  double quality = 0.0;            // judge score, in [0, 1]
  double coherence_raw = 0.0;      // contrastive log-ratio, unbounded
  double align_norm = 0.0;
  double quality_norm = 0.0;
  double coherence_norm = 0.0;
  std::array<double, 3> weights{};
  double step_reward = 0.0;
};

inline void to_json(json& j, const StepScoreBreakdown& b) {
  j = json{{"step_index", b.step_index},
           {"aligned_response_index", b.aligned_response_index},
           {"align_raw", b.align_raw},
           {"quality", b.quality},
           {"coherence_raw", b.coherence_raw},
           {"align_norm", b.align_norm},
           {"quality_norm", b.quality_norm},
           {"coherence_norm", b.coherence_norm},
           {"weights", b.weights},
           {"step_reward", b.step_reward}};
}

inline void from_json(const json& j, StepScoreBreakdown& b) {
  j.at("step_index").get_to(b.step_index);
  j.at("aligned_response_index").get_to(b.aligned_response_index);
  j.at("align_raw").get_to(b.align_raw);
  j.at("quality").get_to(b.quality);
  j.at("coherence_raw").get_to(b.coherence_raw);
  j.at("align_norm").get_to(b.align_norm);
  j.at("quality_norm").get_to(b.quality_norm);
  j.at("coherence_norm").get_to(b.coherence_norm);
  j.at("weights").get_to(b.weights);
  j.at("step_reward").get_to(b.step_reward);
}

// ============================================================================
// TrajectoryScore
// ============================================================================

struct TrajectoryScore {
  std::vector<StepScoreBreakdown> steps;
  double mean_step_reward = 0.0;
  double final_reward = 0.0;  // template-guided trajectory reward
  double aggregate = 0.0;     // mean step reward + alpha * final reward
};

inline void to_json(json& j, const TrajectoryScore& s) {
  j = json{{"steps", s.steps},
           {"mean_step_reward", s.mean_step_reward},
           {"final_reward", s.final_reward},
           {"aggregate", s.aggregate}};
}

inline void from_json(const json& j, TrajectoryScore& s) {
  j.at("steps").get_to(s.steps);
  j.at("mean_step_reward").get_to(s.mean_step_reward);
  j.at("final_reward").get_to(s.final_reward);
  j.at("aggregate").get_to(s.aggregate);
}

// ============================================================================
// ReasoningTemplate
// ============================================================================

/// High-level strategy extracted from a trajectory-response trace.
struct ReasoningTemplate {
  std::string source_pair_id;
  std::vector<std::string> steps;
  std::string raw_text;  // verbatim verifier output
};

inline void to_json(json& j, const ReasoningTemplate& t) {
  j = json{{"source_pair_id", t.source_pair_id}, {"steps", t.steps}, {"raw_text", t.raw_text}};
}

inline void from_json(const json& j, ReasoningTemplate& t) {
  j.at("source_pair_id").get_to(t.source_pair_id);
  j.at("steps").get_to(t.steps);
  j.at("raw_text").get_to(t.raw_text);
}

// ============================================================================
// GroupRollout / TokenStats
// ============================================================================

/// One sampled policy output inside a GRPO group.
struct GroupRollout {
  std::string text;
  double r_out = 0.0;     // outcome reward in [0, 1]
  double r_hat = 0.0;     // aggregate PRM reward
  double r_new = 0.0;     // composite reward
  double advantage = 0.0; // group-normalized advantage
};

inline void to_json(json& j, const GroupRollout& g) {
  j = json{{"text", g.text},
           {"r_out", g.r_out},
           {"r_hat", g.r_hat},
           {"r_new", g.r_new},
           {"advantage", g.advantage}};
}

inline void from_json(const json& j, GroupRollout& g) {
  j.at("text").get_to(g.text);
  j.at("r_out").get_to(g.r_out);
  j.at("r_hat").get_to(g.r_hat);
  j.at("r_new").get_to(g.r_new);
  j.at("advantage").get_to(g.advantage);
}

/**
 * Per-token statistics supplied by the caller's trainer: the likelihood
 * ratio against the sampling policy and a KL estimate against the reference
 * policy. The toolkit never evaluates policies itself.
 */
struct TokenStats {
  double ratio = 1.0;
  double kl = 0.0;
};

inline void to_json(json& j, const TokenStats& t) {
  j = json{{"ratio", t.ratio}, {"kl", t.kl}};
}

inline void from_json(const json& j, TokenStats& t) {
  j.at("ratio").get_to(t.ratio);
  j.at("kl").get_to(t.kl);
}

}  // namespace trajscore::core
