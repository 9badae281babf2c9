#pragma once

#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "trajscore/errors.hpp"
#include "trajscore/prompts.hpp"
#include "trajscore/providers.hpp"

/**
 * JSON-over-HTTP provider clients. Wire protocol (documented in the README):
 *
 *   POST /embed    {"model", "text"}                            -> {"values": [...], "dim": n}
 *   POST /complete {"model", "prompt", "temperature", "n", "seed"} -> {"texts": ["...", ...]}
 *
 * Upstream 429 responses surface as RateLimited and are retried with
 * exponential backoff (5 attempts); connection failures, 5xx, and
 * malformed payloads surface as ProviderUnavailable, terminal for the
 * affected call only. A shared in-flight gate bounds concurrent upstream
 * requests across all providers in the process. The bearer token, when the
 * TRAJSCORE_API_TOKEN environment variable is set, rides every request.
 */
namespace trajscore::httpproviders {

using json = nlohmann::json;

// ============================================================================
// In-flight gate
// ============================================================================

/// Counting semaphore bounding concurrent upstream requests process-wide.
class InflightGate {
 public:
  explicit InflightGate(int limit) : available_(limit) {
    if (limit < 1) throw Error(ErrorCode::InvalidConfig, "in-flight limit must be >= 1");
  }

  class Ticket {
   public:
    explicit Ticket(InflightGate& gate) : gate_(gate) { gate_.acquire(); }
    ~Ticket() { gate_.release(); }
    Ticket(const Ticket&) = delete;
    Ticket& operator=(const Ticket&) = delete;

   private:
    InflightGate& gate_;
  };

  /// Non-blocking probe used by the service's backpressure path.
  bool try_acquire() {
    std::lock_guard<std::mutex> lock(mu_);
    if (available_ == 0) return false;
    --available_;
    return true;
  }

  void acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return available_ > 0; });
    --available_;
  }

  void release() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      ++available_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int available_;
};

// ============================================================================
// Shared HTTP plumbing
// ============================================================================

struct EndpointConfig {
  std::string base_url;          // e.g. "http://127.0.0.1:9100"
  std::string model_id = "remote";
  double temperature = 0.0;
  int timeout_seconds = 60;
};

namespace detail_http {

inline std::optional<std::string> bearer_token() {
  const char* token = std::getenv("TRAJSCORE_API_TOKEN");
  if (token && *token) return std::string(token);
  return std::nullopt;
}

/// One POST with status mapping; RateLimited retries happen in the caller.
inline json post_json(const EndpointConfig& ep, const std::string& path, const json& body,
                      InflightGate* gate) {
  std::optional<InflightGate::Ticket> ticket;
  if (gate) ticket.emplace(*gate);
  httplib::Client client(ep.base_url);
  client.set_connection_timeout(ep.timeout_seconds, 0);
  client.set_read_timeout(ep.timeout_seconds, 0);
  httplib::Headers headers;
  if (auto token = bearer_token()) headers.emplace("Authorization", "Bearer " + *token);
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::ProviderUnavailable,
                "no response from " + ep.base_url + path + " (" + httplib::to_string(res.error()) + ")");
  }
  if (res->status == 429) {
    throw Error(ErrorCode::RateLimited, "upstream rate limit from " + ep.base_url + path);
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorCode::ProviderUnavailable,
                "HTTP " + std::to_string(res->status) + " from " + ep.base_url + path);
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProviderUnavailable,
                std::string("unparseable provider response: ") + e.what());
  }
}

inline json post_with_retry(const EndpointConfig& ep, const std::string& path, const json& body,
                            InflightGate* gate) {
  return providers::with_retry([&] { return post_json(ep, path, body, gate); });
}

/// Completion helper shared by judge/verifier/generator.
inline std::vector<std::string> complete(const EndpointConfig& ep, const std::string& prompt, int n,
                                         std::uint64_t seed, InflightGate* gate) {
  json body{{"model", ep.model_id},
            {"prompt", prompt},
            {"temperature", ep.temperature},
            {"n", n},
            {"seed", seed}};
  json reply = post_with_retry(ep, "/complete", body, gate);
  if (!reply.contains("texts") || !reply["texts"].is_array() ||
      reply["texts"].size() != static_cast<size_t>(n)) {
    throw Error(ErrorCode::ProviderUnavailable, "completion endpoint returned wrong shape");
  }
  return reply["texts"].get<std::vector<std::string>>();
}

}  // namespace detail_http

// ============================================================================
// Providers
// ============================================================================

class HttpEmbedder final : public providers::Embedder {
 public:
  HttpEmbedder(EndpointConfig ep, InflightGate* gate = nullptr) : ep_(std::move(ep)), gate_(gate) {}

  providers::Embedding embed(std::string_view text) override {
    if (text.empty()) throw Error(ErrorCode::InvalidArgument, "embed: text must be non-empty");
    bump();
    json body{{"model", ep_.model_id}, {"text", std::string(text)}};
    json reply = detail_http::post_with_retry(ep_, "/embed", body, gate_);
    providers::Embedding e;
    try {
      reply.get_to(e);
    } catch (const json::exception&) {
      throw Error(ErrorCode::ProviderUnavailable, "embed endpoint returned wrong shape");
    }
    providers::validate_embedding(e);
    return e;
  }

  std::string model_id() const override { return ep_.model_id; }

 private:
  EndpointConfig ep_;
  InflightGate* gate_;
};

class HttpJudge final : public providers::Judge {
 public:
  HttpJudge(EndpointConfig ep, InflightGate* gate = nullptr) : ep_(std::move(ep)), gate_(gate) {}

  double rate_step(std::string_view problem, const std::vector<std::string>& prior_steps,
                   std::string_view response, std::string_view step) override {
    if (step.empty()) throw Error(ErrorCode::InvalidArgument, "rate_step: step must be non-empty");
    bump();
    std::string prompt = prompts::judge_prompt(problem, prior_steps, response, step);
    auto texts = detail_http::complete(ep_, prompt, 1, 0, gate_);
    return providers::parse_judge_reply(texts.front());
  }

  std::string model_id() const override { return ep_.model_id; }

 private:
  EndpointConfig ep_;
  InflightGate* gate_;
};

class HttpVerifier final : public providers::Verifier {
 public:
  HttpVerifier(EndpointConfig ep, InflightGate* gate = nullptr) : ep_(std::move(ep)), gate_(gate) {}

  core::ReasoningTemplate extract_template(std::string_view problem,
                                           std::string_view full_output) override {
    if (problem.empty() || full_output.empty()) {
      throw Error(ErrorCode::InvalidArgument, "extract_template: inputs must be non-empty");
    }
    bump();
    std::string prompt = prompts::template_extraction_prompt(problem, full_output);
    auto texts = detail_http::complete(ep_, prompt, 1, 0, gate_);
    core::ReasoningTemplate tmpl;
    tmpl.steps = providers::parse_template_reply(texts.front());
    tmpl.raw_text = texts.front();
    return tmpl;
  }

  std::string model_id() const override { return ep_.model_id; }

 private:
  EndpointConfig ep_;
  InflightGate* gate_;
};

class HttpGenerator final : public providers::Generator {
 public:
  HttpGenerator(EndpointConfig ep, std::uint64_t seed, InflightGate* gate = nullptr)
      : ep_(std::move(ep)), seed_(seed), gate_(gate) {}

  std::vector<std::string> generate(std::string_view problem, const core::ReasoningTemplate& tmpl,
                                    int k) override {
    if (k < 1) throw Error(ErrorCode::BadRange, "generate: k must be >= 1");
    bump();
    std::string prompt = prompts::guided_generation_prompt(problem, tmpl.steps);
    return detail_http::complete(ep_, prompt, k, seed_, gate_);
  }

  std::string model_id() const override { return ep_.model_id; }

 private:
  EndpointConfig ep_;
  std::uint64_t seed_;
  InflightGate* gate_;
};

}  // namespace trajscore::httpproviders
