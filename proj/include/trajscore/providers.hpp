#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "trajscore/answers.hpp"
#include "trajscore/core.hpp"
#include "trajscore/detail/hash.hpp"
#include "trajscore/errors.hpp"
#include "trajscore/ingest.hpp"
#include "trajscore/prompts.hpp"

/**
 * Interfaces for every external model the scoring pipeline touches — text
 * encoder, step judge, template verifier, guided generator, answer checker —
 * plus deterministic mock implementations for offline runs and tests. Every
 * provider counts its upstream calls so cache effectiveness is observable.
 *
 * Thread-safety contract: all provider methods may be called concurrently
 * once configuration (scripted tables, rules) is complete.
 */
namespace trajscore::providers {

using core::ReasoningTemplate;
using json = nlohmann::json;

// ============================================================================
// Embedding
// ============================================================================

/// Unit-L2-norm text embedding.
struct Embedding {
  std::vector<double> values;
  int dim = 0;
};

inline void to_json(json& j, const Embedding& e) {
  j = json{{"values", e.values}, {"dim", e.dim}};
}

inline void from_json(const json& j, Embedding& e) {
  j.at("values").get_to(e.values);
  j.at("dim").get_to(e.dim);
}

inline double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Throws ProviderUnavailable unless the vector is unit-norm within 1e-6.
inline const Embedding& validate_embedding(const Embedding& e) {
  if (e.dim <= 0 || e.values.size() != static_cast<size_t>(e.dim)) {
    throw Error(ErrorCode::ProviderUnavailable, "embedding has inconsistent dimension");
  }
  if (std::abs(l2_norm(e.values) - 1.0) >= 1e-6) {
    throw Error(ErrorCode::ProviderUnavailable, "embedding is not unit-norm");
  }
  return e;
}

// ============================================================================
// Interfaces
// ============================================================================

/// Base for all providers: a thread-safe upstream-call counter.
class Provider {
 public:
  virtual ~Provider() = default;
  std::uint64_t call_count() const { return calls_.load(std::memory_order_relaxed); }
  void reset_call_count() { calls_.store(0, std::memory_order_relaxed); }

 protected:
  void bump() const { calls_.fetch_add(1, std::memory_order_relaxed); }

 private:
  mutable std::atomic<std::uint64_t> calls_{0};
};

/// Text encoder: same text must always yield the identical unit vector.
class Embedder : public Provider {
 public:
  virtual Embedding embed(std::string_view text) = 0;
  virtual std::string model_id() const = 0;
};

/// Step judge: rates one trajectory step in [0,1] given full context.
class Judge : public Provider {
 public:
  virtual double rate_step(std::string_view problem, const std::vector<std::string>& prior_steps,
                           std::string_view response, std::string_view step) = 0;
  virtual std::string model_id() const = 0;
};

/// Verifier: compresses a full trace into a high-level reasoning template.
class Verifier : public Provider {
 public:
  virtual ReasoningTemplate extract_template(std::string_view problem,
                                             std::string_view full_output) = 0;
  virtual std::string model_id() const = 0;
};

/// Policy generator: k template-guided completions for a problem.
class Generator : public Provider {
 public:
  virtual std::vector<std::string> generate(std::string_view problem,
                                            const ReasoningTemplate& tmpl, int k) = 0;
  virtual std::string model_id() const = 0;
};

/// Answer checker: final-answer equivalence; unparseable candidate is false.
class AnswerChecker {
 public:
  virtual ~AnswerChecker() = default;
  virtual bool is_correct(std::string_view candidate, std::string_view gold_answer) const {
    return answers::is_correct(candidate, gold_answer);
  }
};

/// Everything the scoring pipeline needs, bundled for passing around.
struct ProviderSet {
  Embedder* embedder = nullptr;
  Judge* judge = nullptr;
  Verifier* verifier = nullptr;
  Generator* generator = nullptr;
  const AnswerChecker* checker = nullptr;
};

// ============================================================================
// Reply parsing (shared by mock and HTTP implementations)
// ============================================================================

/**
 * Extracts the integer from the last "Score: <0-10>" in a judge reply and
 * maps it to [0,1] by /10. Case-insensitive on the label. Throws
 * UnparseableJudgment when no in-range score is present.
 */
inline double parse_judge_reply(std::string_view reply) {
  std::optional<int> found;
  for (size_t i = 0; i + 6 <= reply.size(); ++i) {
    bool label = (std::tolower(static_cast<unsigned char>(reply[i])) == 's') &&
                 (std::tolower(static_cast<unsigned char>(reply[i + 1])) == 'c') &&
                 (std::tolower(static_cast<unsigned char>(reply[i + 2])) == 'o') &&
                 (std::tolower(static_cast<unsigned char>(reply[i + 3])) == 'r') &&
                 (std::tolower(static_cast<unsigned char>(reply[i + 4])) == 'e') &&
                 (reply[i + 5] == ':');
    if (!label) continue;
    size_t p = i + 6;
    while (p < reply.size() && (reply[p] == ' ' || reply[p] == '\t')) ++p;
    size_t start = p;
    while (p < reply.size() && std::isdigit(static_cast<unsigned char>(reply[p]))) ++p;
    if (p == start) continue;
    int value = std::stoi(std::string(reply.substr(start, p - start)));
    if (value >= 0 && value <= 10) found = value;
  }
  if (!found) {
    throw Error(ErrorCode::UnparseableJudgment,
                "judge reply lacks a 'Score: <0-10>' line: " +
                    std::string(reply.substr(0, std::min<size_t>(reply.size(), 120))));
  }
  return *found / 10.0;
}

/**
 * Splits a verifier reply into template steps. Lines starting with "<n>." /
 * "<n>)" or a bullet (-, *) begin steps; following plain lines continue the
 * current step. A reply with no marked lines falls back to one step per
 * non-empty line. Throws EmptyTemplate when nothing survives.
 */
inline std::vector<std::string> parse_template_reply(std::string_view reply) {
  std::vector<std::string> steps;
  size_t pos = 0;
  auto next_line = [&](std::string& out) -> bool {
    if (pos >= reply.size()) return false;
    size_t end = reply.find('\n', pos);
    if (end == std::string_view::npos) end = reply.size();
    out = ingest::trim(reply.substr(pos, end - pos));
    pos = end + 1;
    return true;
  };
  std::string line;
  std::vector<std::string> plain_lines;
  while (next_line(line)) {
    if (line.empty()) continue;
    plain_lines.push_back(line);
    size_t p = 0;
    while (p < line.size() && std::isdigit(static_cast<unsigned char>(line[p]))) ++p;
    bool numbered = p > 0 && p < line.size() && (line[p] == '.' || line[p] == ')');
    bool bulleted = line[0] == '-' || line[0] == '*';
    if (numbered || bulleted) {
      std::string body = ingest::trim(std::string_view(line).substr(numbered ? p + 1 : 1));
      if (!body.empty()) steps.push_back(body);
    } else if (!steps.empty()) {
      steps.back() += " ";
      steps.back() += line;
    }
  }
  if (steps.empty()) steps = std::move(plain_lines);
  if (steps.empty()) throw Error(ErrorCode::EmptyTemplate, "verifier reply contains no steps");
  return steps;
}

// ============================================================================
// Retry
// ============================================================================

/**
 * Runs fn, retrying RateLimited failures with exponential backoff (base,
 * 2*base, 4*base, ...) up to max_attempts total attempts. Every other error
 * propagates immediately; so does RateLimited once attempts are exhausted.
 */
template <typename F>
auto with_retry(F&& fn, int max_attempts = 5,
                std::chrono::milliseconds base = std::chrono::milliseconds(50)) {
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::RateLimited || attempt >= max_attempts) throw;
      auto delay = base * (1LL << (attempt - 1));
      if (delay.count() > 0) std::this_thread::sleep_for(delay);
    }
  }
}

// ============================================================================
// Mock providers
// ============================================================================

/**
 * Seeded hash embedder: the text hash seeds a splitmix64 stream expanded to
 * `dim` components and L2-normalized. Deterministic per (seed, text);
 * distinct texts land on effectively independent directions.
 */
class MockEmbedder final : public Embedder {
 public:
  explicit MockEmbedder(std::uint64_t seed = 0, int dim = 64) : seed_(seed), dim_(dim) {}

  Embedding embed(std::string_view text) override {
    if (text.empty()) throw Error(ErrorCode::InvalidArgument, "embed: text must be non-empty");
    bump();
    Embedding e;
    e.dim = dim_;
    e.values.resize(static_cast<size_t>(dim_));
    std::uint64_t state = detail::mix64(seed_, detail::fnv1a64(text));
    for (auto& v : e.values) v = detail::unit_interval_signed(detail::splitmix64(state));
    double norm = l2_norm(e.values);
    if (norm < 1e-12) {
      e.values.assign(static_cast<size_t>(dim_), 0.0);
      e.values[0] = 1.0;
    } else {
      for (auto& v : e.values) v /= norm;
    }
    return e;
  }

  std::string model_id() const override { return "mock-embedder-" + std::to_string(dim_); }

 private:
  std::uint64_t seed_;
  int dim_;
};

/**
 * Scripted judge. Resolution order: exact (problem, step) entry, then the
 * longest matching step-prefix rule, then a seeded hash of (problem, step)
 * mapped to {0,...,10}/10. Scores are the 0-10 integers of the judge scale.
 */
class MockJudge final : public Judge {
 public:
  explicit MockJudge(std::uint64_t seed = 0) : seed_(seed) {}

  void script(std::string_view problem, std::string_view step, int score) {
    exact_[key(problem, step)] = clamp_score(score);
  }
  void script_prefix(std::string_view step_prefix, int score) {
    prefix_rules_[std::string(step_prefix)] = clamp_score(score);
  }

  double rate_step(std::string_view problem, const std::vector<std::string>&,
                   std::string_view, std::string_view step) override {
    if (step.empty()) throw Error(ErrorCode::InvalidArgument, "rate_step: step must be non-empty");
    bump();
    if (auto it = exact_.find(key(problem, step)); it != exact_.end()) return it->second / 10.0;
    const int* best = nullptr;
    size_t best_len = 0;
    for (const auto& [prefix, score] : prefix_rules_) {
      if (step.substr(0, prefix.size()) == prefix && prefix.size() >= best_len) {
        best = &score;
        best_len = prefix.size();
      }
    }
    if (best) return *best / 10.0;
    std::uint64_t h = detail::mix64(detail::mix64(seed_, detail::fnv1a64(problem)), detail::fnv1a64(step));
    return static_cast<double>(h % 11) / 10.0;
  }

  std::string model_id() const override { return "mock-judge"; }

 private:
  static int clamp_score(int s) { return s < 0 ? 0 : (s > 10 ? 10 : s); }
  static std::string key(std::string_view problem, std::string_view step) {
    std::string k(problem);
    k.push_back('\x1f');
    k += step;
    return k;
  }
  std::uint64_t seed_;
  std::map<std::string, int> exact_;
  std::map<std::string, int> prefix_rules_;
};

/**
 * Scripted verifier. A scripted reply (keyed by problem) is parsed exactly
 * like a real reply; otherwise the template is derived mechanically from the
 * trace: one numbered step per segment (capped at 8), truncated to its first
 * 80 characters.
 */
class MockVerifier final : public Verifier {
 public:
  void script(std::string_view problem, std::string_view reply) {
    scripted_[std::string(problem)] = std::string(reply);
  }

  ReasoningTemplate extract_template(std::string_view problem, std::string_view full_output) override {
    if (problem.empty() || full_output.empty()) {
      throw Error(ErrorCode::InvalidArgument, "extract_template: inputs must be non-empty");
    }
    bump();
    std::string reply;
    if (auto it = scripted_.find(std::string(problem)); it != scripted_.end()) {
      reply = it->second;
    } else {
      std::vector<std::string> segments = ingest::split_steps(full_output);
      size_t count = std::min<size_t>(segments.size(), 8);
      for (size_t i = 0; i < count; ++i) {
        std::string head = segments[i].substr(0, 80);
        if (auto nl = head.find('\n'); nl != std::string::npos) head.resize(nl);
        reply += std::to_string(i + 1) + ". " + head + "\n";
      }
    }
    ReasoningTemplate tmpl;
    tmpl.steps = parse_template_reply(reply);
    tmpl.raw_text = std::move(reply);
    return tmpl;
  }

  std::string model_id() const override { return "mock-verifier"; }

 private:
  std::map<std::string, std::string> scripted_;
};

/**
 * Scripted generator. Scripted outputs (keyed by problem) are cycled by
 * sample index so any k is served; unscripted problems get deterministic
 * hash-keyed completions ending in a \boxed{<0-99>} answer.
 */
class MockGenerator final : public Generator {
 public:
  explicit MockGenerator(std::uint64_t seed = 0) : seed_(seed) {}

  void script(std::string_view problem, std::vector<std::string> outputs) {
    scripted_[std::string(problem)] = std::move(outputs);
  }

  std::vector<std::string> generate(std::string_view problem, const ReasoningTemplate& tmpl,
                                    int k) override {
    if (k < 1) throw Error(ErrorCode::BadRange, "generate: k must be >= 1");
    bump();
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(k));
    if (auto it = scripted_.find(std::string(problem)); it != scripted_.end() && !it->second.empty()) {
      for (int i = 0; i < k; ++i) out.push_back(it->second[static_cast<size_t>(i) % it->second.size()]);
      return out;
    }
    std::uint64_t problem_digest = detail::fnv1a64(problem);
    for (int i = 0; i < k; ++i) {
      std::uint64_t h = detail::mix64(detail::mix64(seed_, problem_digest), static_cast<std::uint64_t>(i));
      out.push_back("Following the " + std::to_string(tmpl.steps.size()) +
                    "-step template.\n\nThe final answer is \\boxed{" + std::to_string(h % 100) + "}.");
    }
    return out;
  }

  std::string model_id() const override { return "mock-generator"; }

 private:
  std::uint64_t seed_;
  std::map<std::string, std::vector<std::string>> scripted_;
};

/// Default checker: exact string/rational equivalence (see answers.hpp).
class ExactAnswerChecker final : public AnswerChecker {};

// ============================================================================
// Fixtures
// ============================================================================

/**
 * Applies a fixtures document to the mock providers. Format:
 * {
 *   "judge":        [{"problem": ..., "step": ..., "score": 0-10}, ...],
 *   "judge_prefix": [{"step_prefix": ..., "score": 0-10}, ...],
 *   "templates":    [{"problem": ..., "reply": ...}, ...],
 *   "generations":  [{"problem": ..., "outputs": [...]}, ...]
 * }
 * All sections optional; unscripted inputs fall back to the hash defaults.
 */
inline void apply_fixtures(const json& doc, MockJudge& judge, MockVerifier& verifier,
                           MockGenerator& generator) {
  if (!doc.is_object()) throw Error(ErrorCode::Malformed, "fixtures document must be a JSON object");
  for (const auto& e : doc.value("judge", json::array())) {
    judge.script(e.at("problem").get<std::string>(), e.at("step").get<std::string>(),
                 e.at("score").get<int>());
  }
  for (const auto& e : doc.value("judge_prefix", json::array())) {
    judge.script_prefix(e.at("step_prefix").get<std::string>(), e.at("score").get<int>());
  }
  for (const auto& e : doc.value("templates", json::array())) {
    verifier.script(e.at("problem").get<std::string>(), e.at("reply").get<std::string>());
  }
  for (const auto& e : doc.value("generations", json::array())) {
    generator.script(e.at("problem").get<std::string>(),
                     e.at("outputs").get<std::vector<std::string>>());
  }
}

}  // namespace trajscore::providers
