#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "trajscore/core.hpp"
#include "trajscore/errors.hpp"
#include "trajscore/http_providers.hpp"
#include "trajscore/ingest.hpp"
#include "trajscore/pipeline.hpp"
#include "trajscore/providers.hpp"
#include "trajscore/rl_shape.hpp"
#include "trajscore/step_rewards.hpp"
#include "trajscore/version.hpp"

/**
 * Synchronous HTTP scoring service for RL trainers: POST /v1/score returns
 * the aggregate process reward for one pair, POST /v1/shape normalizes a
 * whole GRPO group, GET /healthz reports liveness. Responses are computed by
 * the same pipeline functions the CLI uses, so mock-mode outputs are
 * bit-identical to in-process results. Config is immutable per process (its
 * digest rides every response in X-Config-Digest); backpressure is an
 * in-flight bound answered with 429.
 */
namespace trajscore::service {

using json = nlohmann::json;

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8750;
  int max_inflight = 64;     // concurrent requests beyond this get 429
  std::string bearer_token;  // empty disables auth; /healthz is always open
  bool probe_providers = false;
};

/// HTTP status for a domain error: invalid bodies 400, well-formed but
/// domain-unsatisfiable requests 422, provider trouble 502.
inline int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateGroup:
    case ErrorCode::InsufficientNegatives:
    case ErrorCode::NoGoldAnswer:
      return 422;
    case ErrorCode::ProviderUnavailable:
    case ErrorCode::RateLimited:
    case ErrorCode::UnparseableJudgment:
    case ErrorCode::EmptyTemplate:
      return 502;
    default:
      return 400;
  }
}

class ScoringService {
 public:
  ScoringService(providers::ProviderSet prov, const steprewards::NegativePool* pool,
                 core::RewardConfig cfg, ServiceOptions opts,
                 steprewards::FuseMode mode = steprewards::FuseMode::Normalized,
                 ingest::ThinkTags tags = {})
      : prov_(prov),
        pool_(pool),
        cfg_(std::move(cfg)),
        opts_(std::move(opts)),
        mode_(mode),
        tags_(std::move(tags)),
        digest_(core::config_digest(cfg_)),
        gate_(opts_.max_inflight) {}

  const std::string& config_digest() const { return digest_; }

  /// Registers all routes on a server owned by the caller.
  void install(httplib::Server& server) {
    server.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, /*needs_auth=*/true, [this](const httplib::Request& r) {
        return handle_score(r);
      });
    });
    server.Post("/v1/shape", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, /*needs_auth=*/true, [this](const httplib::Request& r) {
        return handle_shape(r);
      });
    });
    server.Get("/healthz", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, /*needs_auth=*/false, [this](const httplib::Request& r) {
        return handle_health(r);
      });
    });
  }

 private:
  static void reply_error(httplib::Response& res, int status, std::string_view code,
                          std::string_view message) {
    res.status = status;
    res.set_content(
        json{{"error", {{"code", std::string(code)}, {"message", std::string(message)}}}}.dump(),
        "application/json");
  }

  void handle(const httplib::Request& req, httplib::Response& res, bool needs_auth,
              const std::function<std::pair<int, json>(const httplib::Request&)>& impl) {
    res.set_header("X-Config-Digest", digest_);
    if (needs_auth && !opts_.bearer_token.empty() &&
        req.get_header_value("Authorization") != "Bearer " + opts_.bearer_token) {
      reply_error(res, 401, "unauthorized", "missing or invalid bearer token");
      return;
    }
    if (!gate_.try_acquire()) {
      reply_error(res, 429, "rate_limited", "in-flight request bound exceeded");
      return;
    }
    struct Release {
      httpproviders::InflightGate& g;
      ~Release() { g.release(); }
    } release{gate_};
    try {
      auto [status, body] = impl(req);
      res.status = status;
      res.set_content(body.dump(), "application/json");
    } catch (const json::exception& e) {
      reply_error(res, 400, "malformed", std::string("invalid JSON body: ") + e.what());
    } catch (const Error& e) {
      reply_error(res, status_for(e.code()), error_code_name(e.code()), e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, "internal", e.what());
    }
  }

  std::pair<int, json> handle_score(const httplib::Request& req) {
    json body = json::parse(req.body);
    core::TrajectoryResponsePair pair;
    if (body.contains("trajectory_steps")) {
      pair = body.get<core::TrajectoryResponsePair>();
      if (pair.id.empty()) pair.id = detail::sha256_hex(body.dump());
      core::validate_pair(pair);
    } else {
      pair = ingest::parse_record(body.get<ingest::RawRecord>(), body, tags_);
    }
    if (pool_ == nullptr) {
      throw Error(ErrorCode::InsufficientNegatives,
                  "service started without a negatives corpus; /v1/score unavailable");
    }
    return {200, json(pipeline::score_pair(pair, prov_, *pool_, cfg_, mode_))};
  }

  std::pair<int, json> handle_shape(const httplib::Request& req) {
    json body = json::parse(req.body);
    auto problem = body.at("problem").get<std::string>();
    auto rollouts = body.at("rollouts").get<std::vector<std::string>>();
    auto outcome_rewards = body.at("outcome_rewards").get<std::vector<double>>();
    std::string gold = body.value("gold_answer", std::string{});
    auto shaped =
        rlshape::shape_group(problem, rollouts, outcome_rewards, prov_, cfg_, pool_, gold, tags_);
    return {200, json(shaped)};
  }

  std::pair<int, json> handle_health(const httplib::Request&) {
    bool degraded = false;
    if (opts_.probe_providers && prov_.embedder != nullptr) {
      try {
        prov_.embedder->embed("health probe");
      } catch (const Error&) {
        degraded = true;
      }
    }
    return {200, json{{"status", "ok"},
                      {"version", kVersion},
                      {"config_digest", digest_},
                      {"degraded", degraded}}};
  }

  providers::ProviderSet prov_;
  const steprewards::NegativePool* pool_;
  core::RewardConfig cfg_;
  ServiceOptions opts_;
  steprewards::FuseMode mode_;
  ingest::ThinkTags tags_;
  std::string digest_;
  httpproviders::InflightGate gate_;
};

}  // namespace trajscore::service
