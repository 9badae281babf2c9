#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "trajscore/detail/hash.hpp"
#include "trajscore/errors.hpp"
#include "trajscore/prompts.hpp"
#include "trajscore/providers.hpp"

/**
 * Content-addressed persistent cache for provider replies, plus caching
 * adapters that wrap any Embedder/Judge/Verifier/Generator. Provider calls
 * dominate pipeline cost, so a warm cache makes a full re-score free: the
 * acceptance guarantee is zero upstream calls on the second identical run.
 *
 * Concurrency: any number of readers; writers go through temp-file + rename
 * (last write wins, never a torn read); concurrent misses on the same key
 * collapse into a single upstream call (single-flight).
 */
namespace trajscore::cache {

using json = nlohmann::json;

// ============================================================================
// Keys
// ============================================================================

/// Identity of one provider call: who was asked, which model, about what.
struct ProviderKey {
  std::string provider_id;    // "embed" | "judge" | "verify" | "generate"
  std::string model_id;
  std::string input_digest;   // SHA-256 hex of the canonicalized input
};

/// Filename-safe digest of the whole key.
inline std::string key_digest(const ProviderKey& k) {
  std::string material;
  material.reserve(k.provider_id.size() + k.model_id.size() + k.input_digest.size() + 2);
  material += k.provider_id;
  material.push_back('\x1f');
  material += k.model_id;
  material.push_back('\x1f');
  material += k.input_digest;
  return detail::sha256_hex(material);
}

// ============================================================================
// FileCache
// ============================================================================

/// One file per key under a cache directory; survives process restarts.
class FileCache {
 public:
  explicit FileCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create cache directory '" + dir_.string() + "': " + ec.message());
  }

  std::optional<std::string> get(const ProviderKey& key) const {
    std::ifstream in(path_for(key), std::ios::binary);
    if (!in) {
      misses_.fetch_add(1, std::memory_order_relaxed);
      return std::nullopt;
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!in.good() && !in.eof()) throw Error(ErrorCode::Io, "cache read failed");
    hits_.fetch_add(1, std::memory_order_relaxed);
    return bytes;
  }

  void put(const ProviderKey& key, std::string_view bytes) {
    auto target = path_for(key);
    auto tmp = dir_ / ("tmp-" + std::to_string(tmp_counter_.fetch_add(1)) + "-" +
                       std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorCode::Io, "cannot write cache temp file '" + tmp.string() + "'");
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out.good()) throw Error(ErrorCode::Io, "cache write failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);  // atomic replace: last write wins
    if (ec) {
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::Io, "cache rename failed: " + ec.message());
    }
    puts_.fetch_add(1, std::memory_order_relaxed);
  }

  std::uint64_t hits() const { return hits_.load(std::memory_order_relaxed); }
  std::uint64_t misses() const { return misses_.load(std::memory_order_relaxed); }
  std::uint64_t puts() const { return puts_.load(std::memory_order_relaxed); }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_for(const ProviderKey& key) const { return dir_ / key_digest(key); }

  std::filesystem::path dir_;
  mutable std::atomic<std::uint64_t> hits_{0};
  mutable std::atomic<std::uint64_t> misses_{0};
  std::atomic<std::uint64_t> puts_{0};
  std::atomic<std::uint64_t> tmp_counter_{0};
};

// ============================================================================
// Single-flight
// ============================================================================

/// Collapses concurrent computations of the same key into one; a failed
/// computation is forgotten so the next caller retries upstream.
class SingleFlight {
 public:
  template <typename F>
  std::string run(const std::string& key, F&& compute) {
    std::shared_ptr<std::promise<std::string>> my_promise;
    std::shared_future<std::string> fut;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = inflight_.find(key);
      if (it == inflight_.end()) {
        my_promise = std::make_shared<std::promise<std::string>>();
        fut = my_promise->get_future().share();
        inflight_.emplace(key, fut);
      } else {
        fut = it->second;
      }
    }
    if (!my_promise) return fut.get();
    try {
      std::string value = compute();
      my_promise->set_value(value);
      forget(key);
      return value;
    } catch (...) {
      my_promise->set_exception(std::current_exception());
      forget(key);
      throw;
    }
  }

 private:
  void forget(const std::string& key) {
    std::lock_guard<std::mutex> lock(mu_);
    inflight_.erase(key);
  }

  std::mutex mu_;
  std::map<std::string, std::shared_future<std::string>> inflight_;
};

// ============================================================================
// Caching adapters
// ============================================================================

namespace detail_cache {

/// Shared get-or-compute: serve from disk, else single-flight upstream.
template <typename Compute>
std::string through(FileCache& cache, SingleFlight& flight, const ProviderKey& key,
                    Compute&& compute) {
  if (auto hit = cache.get(key)) return *hit;
  return flight.run(key_digest(key), [&]() -> std::string {
    // Re-check under single-flight: a concurrent leader may have finished
    // between our miss and acquiring leadership.
    if (auto hit = cache.get(key)) return *hit;
    std::string value = compute();
    cache.put(key, value);
    return value;
  });
}

inline std::string input_digest(const json& canonical_input) {
  return detail::sha256_hex(canonical_input.dump());
}

}  // namespace detail_cache

/// Embedder wrapper: identical text never reaches upstream twice.
class CachingEmbedder final : public providers::Embedder {
 public:
  CachingEmbedder(providers::Embedder& inner, FileCache& cache) : inner_(inner), cache_(cache) {}

  providers::Embedding embed(std::string_view text) override {
    bump();
    ProviderKey key{"embed", inner_.model_id(),
                    detail_cache::input_digest(json{{"text", std::string(text)},
                                                    {"v", std::string(prompts::kPromptVersion)}})};
    std::string bytes = detail_cache::through(cache_, flight_, key, [&] {
      return json(inner_.embed(text)).dump();
    });
    return json::parse(bytes).get<providers::Embedding>();
  }

  std::string model_id() const override { return inner_.model_id(); }

 private:
  providers::Embedder& inner_;
  FileCache& cache_;
  SingleFlight flight_;
};

/// Judge wrapper; the cached value is the [0,1] score.
class CachingJudge final : public providers::Judge {
 public:
  CachingJudge(providers::Judge& inner, FileCache& cache) : inner_(inner), cache_(cache) {}

  double rate_step(std::string_view problem, const std::vector<std::string>& prior_steps,
                   std::string_view response, std::string_view step) override {
    bump();
    ProviderKey key{"judge", inner_.model_id(),
                    detail_cache::input_digest(json{{"problem", std::string(problem)},
                                                    {"prior", prior_steps},
                                                    {"response", std::string(response)},
                                                    {"step", std::string(step)},
                                                    {"v", std::string(prompts::kPromptVersion)}})};
    std::string bytes = detail_cache::through(cache_, flight_, key, [&] {
      return json(inner_.rate_step(problem, prior_steps, response, step)).dump();
    });
    return json::parse(bytes).get<double>();
  }

  std::string model_id() const override { return inner_.model_id(); }

 private:
  providers::Judge& inner_;
  FileCache& cache_;
  SingleFlight flight_;
};

/// Verifier wrapper; the cached value is the full ReasoningTemplate.
class CachingVerifier final : public providers::Verifier {
 public:
  CachingVerifier(providers::Verifier& inner, FileCache& cache) : inner_(inner), cache_(cache) {}

  core::ReasoningTemplate extract_template(std::string_view problem,
                                           std::string_view full_output) override {
    bump();
    ProviderKey key{"verify", inner_.model_id(),
                    detail_cache::input_digest(json{{"problem", std::string(problem)},
                                                    {"output", std::string(full_output)},
                                                    {"v", std::string(prompts::kPromptVersion)}})};
    std::string bytes = detail_cache::through(cache_, flight_, key, [&] {
      return json(inner_.extract_template(problem, full_output)).dump();
    });
    return json::parse(bytes).get<core::ReasoningTemplate>();
  }

  std::string model_id() const override { return inner_.model_id(); }

 private:
  providers::Verifier& inner_;
  FileCache& cache_;
  SingleFlight flight_;
};

/**
 * Generator wrapper. `salt` folds run parameters that change sampling
 * (seed, temperature) into the key so differently-configured runs never
 * share completions.
 */
class CachingGenerator final : public providers::Generator {
 public:
  CachingGenerator(providers::Generator& inner, FileCache& cache, std::string salt = {})
      : inner_(inner), cache_(cache), salt_(std::move(salt)) {}

  std::vector<std::string> generate(std::string_view problem, const core::ReasoningTemplate& tmpl,
                                    int k) override {
    bump();
    ProviderKey key{"generate", inner_.model_id(),
                    detail_cache::input_digest(json{{"problem", std::string(problem)},
                                                    {"template_steps", tmpl.steps},
                                                    {"k", k},
                                                    {"salt", salt_},
                                                    {"v", std::string(prompts::kPromptVersion)}})};
    std::string bytes = detail_cache::through(cache_, flight_, key, [&] {
      return json(inner_.generate(problem, tmpl, k)).dump();
    });
    return json::parse(bytes).get<std::vector<std::string>>();
  }

  std::string model_id() const override { return inner_.model_id(); }

 private:
  providers::Generator& inner_;
  FileCache& cache_;
  std::string salt_;
  SingleFlight flight_;
};

}  // namespace trajscore::cache
