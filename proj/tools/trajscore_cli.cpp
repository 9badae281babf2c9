/**
 * trajscore — operator CLI for the trajectory-aware process-reward toolkit.
 *
 * Subcommands:
 *   score   score a JSONL corpus; one TrajectoryScore line per input pair
 *   label   emit reference training labels (step targets + final target)
 *   select  top-k curation over scored lines, with an audit manifest
 *   bon     Best-of-N: pick the highest-aggregate candidate
 *   shape   GRPO group shaping: r_hat, composite rewards, advantages
 *   stats   score-distribution histograms per source (CSV + JSON summary)
 *   serve   HTTP scoring service
 *
 * Exit codes: 0 success, 1 usage/config, 2 I/O or data, 3 provider failure.
 */

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trajscore/trajscore.hpp"
#include "trajscore/detail/parallel.hpp"

namespace ts = trajscore;
using json = nlohmann::json;

// ============================================================================
// Shared options and provider wiring
// ============================================================================

namespace {

struct CommonOpts {
  std::string config_path;
  bool mock = false;
  std::string fixtures_path;
  std::string embed_url;
  std::string judge_url;
  std::string gen_url;
  std::string cache_dir;
  int parallel = 1;
  int max_inflight = 64;
  double judge_temperature = 0.0;
  double gen_temperature = 0.7;
  std::string think_tags = "<think>,</think>";
  bool fuse_raw = false;
  std::string metrics_path;
  std::string negatives_file;

  // RewardConfig overrides; applied only when the flag was actually given.
  ts::core::RewardConfig flags;
  CLI::Option* opt_alpha = nullptr;
  CLI::Option* opt_beta = nullptr;
  CLI::Option* opt_tau = nullptr;
  CLI::Option* opt_lambda_step = nullptr;
  CLI::Option* opt_lambda_final = nullptr;
  CLI::Option* opt_rollouts = nullptr;
  CLI::Option* opt_negatives = nullptr;
  CLI::Option* opt_group_size = nullptr;
  CLI::Option* opt_clip_eps = nullptr;
  CLI::Option* opt_kl_coeff = nullptr;
  CLI::Option* opt_agg = nullptr;
  CLI::Option* opt_seed = nullptr;
  std::string agg_name = "mean";
};

void add_common_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config file mirroring the reward-config fields");
  cmd->add_flag("--mock", o.mock, "use deterministic mock providers");
  cmd->add_option("--fixtures", o.fixtures_path, "fixtures JSON scripting the mock providers");
  cmd->add_option("--embed-url", o.embed_url, "embedding endpoint base URL");
  cmd->add_option("--judge-url", o.judge_url, "judge/verifier endpoint base URL");
  cmd->add_option("--gen-url", o.gen_url, "generator endpoint base URL");
  cmd->add_option("--cache-dir", o.cache_dir, "persistent provider cache directory");
  cmd->add_option("--parallel", o.parallel, "worker threads over pairs")->check(CLI::PositiveNumber);
  cmd->add_option("--max-inflight", o.max_inflight, "bound on concurrent upstream requests")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--judge-temperature", o.judge_temperature, "judge/verifier decoding temperature");
  cmd->add_option("--gen-temperature", o.gen_temperature, "rollout decoding temperature");
  cmd->add_option("--think-tags", o.think_tags, "thinking-block delimiters as 'open,close'");
  cmd->add_flag("--fuse-raw", o.fuse_raw, "feed raw component values to the softmax fusion");
  cmd->add_option("--metrics", o.metrics_path, "write run metrics JSON to this file");
  cmd->add_option("--negatives-file", o.negatives_file,
                  "JSONL corpus supplying contrastive negatives (default: the input corpus)");

  o.opt_alpha = cmd->add_option("--alpha", o.flags.alpha, "trajectory-reward weight in r-hat");
  o.opt_beta = cmd->add_option("--beta", o.flags.beta, "process-reward weight in the composite reward");
  o.opt_tau = cmd->add_option("--tau", o.flags.tau, "contrastive temperature");
  o.opt_lambda_step = cmd->add_option("--lambda-step", o.flags.lambda_step, "step-loss weight");
  o.opt_lambda_final = cmd->add_option("--lambda-final", o.flags.lambda_final, "final-loss weight");
  o.opt_rollouts = cmd->add_option("--rollouts", o.flags.num_rollouts, "template-guided rollouts N");
  o.opt_negatives = cmd->add_option("--negatives", o.flags.num_negatives, "contrastive negatives per step");
  o.opt_group_size = cmd->add_option("--group-size", o.flags.group_size, "GRPO group size G");
  o.opt_clip_eps = cmd->add_option("--clip-eps", o.flags.clip_epsilon, "surrogate clip epsilon");
  o.opt_kl_coeff = cmd->add_option("--kl-coeff", o.flags.kl_coeff, "KL penalty coefficient");
  o.opt_agg = cmd->add_option("--agg", o.agg_name, "step aggregation: mean|sum")
                  ->check(CLI::IsMember({"mean", "sum"}));
  o.opt_seed = cmd->add_option("--seed", o.flags.seed, "seed governing all toolkit randomness");
}

/// Defaults, then the config file, then explicit flags — later layers win.
ts::core::RewardConfig resolve_config(const CommonOpts& o) {
  ts::core::RewardConfig cfg;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw ts::Error(ts::ErrorCode::Io, "cannot open config file '" + o.config_path + "'");
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw ts::Error(ts::ErrorCode::InvalidConfig,
                      "config file is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw ts::Error(ts::ErrorCode::InvalidConfig, "config file must hold a JSON object");
    json merged = json(cfg);
    for (auto& [key, value] : doc.items()) {
      if (!merged.contains(key)) {
        throw ts::Error(ts::ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
      }
      merged[key] = value;
    }
    cfg = merged.get<ts::core::RewardConfig>();
  }
  if (o.opt_alpha && o.opt_alpha->count()) cfg.alpha = o.flags.alpha;
  if (o.opt_beta && o.opt_beta->count()) cfg.beta = o.flags.beta;
  if (o.opt_tau && o.opt_tau->count()) cfg.tau = o.flags.tau;
  if (o.opt_lambda_step && o.opt_lambda_step->count()) cfg.lambda_step = o.flags.lambda_step;
  if (o.opt_lambda_final && o.opt_lambda_final->count()) cfg.lambda_final = o.flags.lambda_final;
  if (o.opt_rollouts && o.opt_rollouts->count()) cfg.num_rollouts = o.flags.num_rollouts;
  if (o.opt_negatives && o.opt_negatives->count()) cfg.num_negatives = o.flags.num_negatives;
  if (o.opt_group_size && o.opt_group_size->count()) cfg.group_size = o.flags.group_size;
  if (o.opt_clip_eps && o.opt_clip_eps->count()) cfg.clip_epsilon = o.flags.clip_epsilon;
  if (o.opt_kl_coeff && o.opt_kl_coeff->count()) cfg.kl_coeff = o.flags.kl_coeff;
  if (o.opt_agg && o.opt_agg->count()) cfg.aggregation = ts::core::aggregation_from_name(o.agg_name);
  if (o.opt_seed && o.opt_seed->count()) cfg.seed = o.flags.seed;
  ts::core::validate_config(cfg);
  return cfg;
}

ts::ingest::ThinkTags resolve_tags(const CommonOpts& o) {
  auto comma = o.think_tags.find(',');
  if (comma == std::string::npos || comma == 0 || comma + 1 >= o.think_tags.size()) {
    throw ts::Error(ts::ErrorCode::InvalidArgument, "--think-tags needs the form 'open,close'");
  }
  return {o.think_tags.substr(0, comma), o.think_tags.substr(comma + 1)};
}

/// Owns whichever provider stack (mock or HTTP) the flags ask for, plus the
/// optional cache layer; `set` always points at the outermost layer.
struct ProviderBundle {
  std::unique_ptr<ts::providers::MockEmbedder> mock_embedder;
  std::unique_ptr<ts::providers::MockJudge> mock_judge;
  std::unique_ptr<ts::providers::MockVerifier> mock_verifier;
  std::unique_ptr<ts::providers::MockGenerator> mock_generator;

  std::unique_ptr<ts::httpproviders::InflightGate> gate;
  std::unique_ptr<ts::httpproviders::HttpEmbedder> http_embedder;
  std::unique_ptr<ts::httpproviders::HttpJudge> http_judge;
  std::unique_ptr<ts::httpproviders::HttpVerifier> http_verifier;
  std::unique_ptr<ts::httpproviders::HttpGenerator> http_generator;

  std::unique_ptr<ts::cache::FileCache> cache;
  std::unique_ptr<ts::cache::CachingEmbedder> caching_embedder;
  std::unique_ptr<ts::cache::CachingJudge> caching_judge;
  std::unique_ptr<ts::cache::CachingVerifier> caching_verifier;
  std::unique_ptr<ts::cache::CachingGenerator> caching_generator;

  ts::providers::ExactAnswerChecker checker;
  ts::providers::ProviderSet set;

  json provider_call_metrics() const {
    json m{{"embed", 0}, {"judge", 0}, {"verify", 0}, {"generate", 0}};
    auto count = [](const auto& mock_ptr, const auto& http_ptr) -> std::uint64_t {
      if (mock_ptr) return mock_ptr->call_count();
      if (http_ptr) return http_ptr->call_count();
      return 0;
    };
    m["embed"] = count(mock_embedder, http_embedder);
    m["judge"] = count(mock_judge, http_judge);
    m["verify"] = count(mock_verifier, http_verifier);
    m["generate"] = count(mock_generator, http_generator);
    return m;
  }

  json cache_metrics() const {
    if (!cache) return nullptr;
    return json{{"hits", cache->hits()}, {"misses", cache->misses()}, {"puts", cache->puts()}};
  }
};

ProviderBundle build_providers(const CommonOpts& o, const ts::core::RewardConfig& cfg) {
  ProviderBundle b;
  if (o.mock) {
    b.mock_embedder = std::make_unique<ts::providers::MockEmbedder>(cfg.seed);
    b.mock_judge = std::make_unique<ts::providers::MockJudge>(cfg.seed);
    b.mock_verifier = std::make_unique<ts::providers::MockVerifier>();
    b.mock_generator = std::make_unique<ts::providers::MockGenerator>(cfg.seed);
    if (!o.fixtures_path.empty()) {
      std::ifstream in(o.fixtures_path);
      if (!in) throw ts::Error(ts::ErrorCode::Io, "cannot open fixtures file '" + o.fixtures_path + "'");
      json doc;
      try {
        in >> doc;
      } catch (const json::exception& e) {
        throw ts::Error(ts::ErrorCode::Malformed, "fixtures file is not valid JSON: " + std::string(e.what()));
      }
      ts::providers::apply_fixtures(doc, *b.mock_judge, *b.mock_verifier, *b.mock_generator);
    }
    b.set = {b.mock_embedder.get(), b.mock_judge.get(), b.mock_verifier.get(),
             b.mock_generator.get(), &b.checker};
  } else {
    if (o.embed_url.empty() || o.judge_url.empty() || o.gen_url.empty()) {
      throw ts::Error(ts::ErrorCode::InvalidArgument,
                      "real-provider mode needs --embed-url, --judge-url, and --gen-url (or pass --mock)");
    }
    if (!o.fixtures_path.empty()) {
      throw ts::Error(ts::ErrorCode::InvalidArgument, "--fixtures requires --mock");
    }
    b.gate = std::make_unique<ts::httpproviders::InflightGate>(o.max_inflight);
    ts::httpproviders::EndpointConfig embed_ep{o.embed_url, "remote-embedder", 0.0, 60};
    ts::httpproviders::EndpointConfig judge_ep{o.judge_url, "remote-judge", o.judge_temperature, 60};
    ts::httpproviders::EndpointConfig verify_ep{o.judge_url, "remote-verifier", o.judge_temperature, 60};
    ts::httpproviders::EndpointConfig gen_ep{o.gen_url, "remote-generator", o.gen_temperature, 60};
    b.http_embedder = std::make_unique<ts::httpproviders::HttpEmbedder>(embed_ep, b.gate.get());
    b.http_judge = std::make_unique<ts::httpproviders::HttpJudge>(judge_ep, b.gate.get());
    b.http_verifier = std::make_unique<ts::httpproviders::HttpVerifier>(verify_ep, b.gate.get());
    b.http_generator = std::make_unique<ts::httpproviders::HttpGenerator>(gen_ep, cfg.seed, b.gate.get());
    b.set = {b.http_embedder.get(), b.http_judge.get(), b.http_verifier.get(),
             b.http_generator.get(), &b.checker};
  }

  if (!o.cache_dir.empty()) {
    b.cache = std::make_unique<ts::cache::FileCache>(o.cache_dir);
    std::string salt = "seed=" + std::to_string(cfg.seed) +
                       ";gen-temp=" + json(o.gen_temperature).dump();
    b.caching_embedder = std::make_unique<ts::cache::CachingEmbedder>(*b.set.embedder, *b.cache);
    b.caching_judge = std::make_unique<ts::cache::CachingJudge>(*b.set.judge, *b.cache);
    b.caching_verifier = std::make_unique<ts::cache::CachingVerifier>(*b.set.verifier, *b.cache);
    b.caching_generator =
        std::make_unique<ts::cache::CachingGenerator>(*b.set.generator, *b.cache, salt);
    b.set.embedder = b.caching_embedder.get();
    b.set.judge = b.caching_judge.get();
    b.set.verifier = b.caching_verifier.get();
    b.set.generator = b.caching_generator.get();
  }
  return b;
}

// ============================================================================
// I/O helpers
// ============================================================================

struct OutputSink {
  explicit OutputSink(const std::string& path) {
    if (!path.empty()) {
      file.open(path, std::ios::trunc);
      if (!file) throw ts::Error(ts::ErrorCode::Io, "cannot open output file '" + path + "'");
    }
  }
  std::ostream& stream() { return file.is_open() ? file : std::cout; }
  std::ofstream file;
};

std::vector<ts::core::TrajectoryResponsePair> load_pairs(const std::string& path,
                                                         const ts::ingest::ThinkTags& tags,
                                                         ts::ingest::LoadStats* stats_out) {
  std::vector<ts::core::TrajectoryResponsePair> pairs;
  auto stats = ts::ingest::load_dataset(
      path, [&](ts::core::TrajectoryResponsePair&& p) { pairs.push_back(std::move(p)); }, tags);
  for (const auto& skip : stats.skipped) {
    std::cerr << "skipped line " << skip.line_number << ": " << skip.reason << "\n";
  }
  if (stats_out) *stats_out = stats;
  return pairs;
}

void write_metrics(const CommonOpts& o, json metrics) {
  if (o.metrics_path.empty()) return;
  std::ofstream out(o.metrics_path, std::ios::trunc);
  if (!out) throw ts::Error(ts::ErrorCode::Io, "cannot open metrics file '" + o.metrics_path + "'");
  out << metrics.dump(2) << "\n";
}

/// Classifies a caught error into the documented exit-code scheme.
int exit_code_for(const ts::Error& e) {
  if (ts::is_provider_error(e.code()) || e.code() == ts::ErrorCode::UnparseableJudgment ||
      e.code() == ts::ErrorCode::EmptyTemplate) {
    return 3;
  }
  switch (e.code()) {
    case ts::ErrorCode::InvalidConfig:
    case ts::ErrorCode::InvalidArgument:
    case ts::ErrorCode::BadRange:
      return 1;
    default:
      return 2;  // I/O and data errors
  }
}

// ============================================================================
// score / label
// ============================================================================

struct ScoreArgs {
  CommonOpts common;
  std::string input_path;
  std::string output_path;
  bool skip_errors = false;
};

/// Shared driver for `score` and `label`: loads the corpus, builds the
/// negatives pool, fans out over pairs, and emits one JSON line per pair in
/// input order. `emit` maps a scored pair to its output document.
template <typename Emit>
int run_scoring_command(const ScoreArgs& args, const char* failed_noun, Emit&& emit) {
  auto cfg = resolve_config(args.common);
  auto tags = resolve_tags(args.common);
  auto bundle = build_providers(args.common, cfg);
  const std::string digest = ts::core::config_digest(cfg);
  auto fuse_mode = args.common.fuse_raw ? ts::steprewards::FuseMode::Raw
                                        : ts::steprewards::FuseMode::Normalized;

  ts::ingest::LoadStats load_stats;
  auto pairs = load_pairs(args.input_path, tags, &load_stats);

  ts::steprewards::NegativePool pool(*bundle.set.embedder);
  if (!args.common.negatives_file.empty()) {
    for (auto& p : load_pairs(args.common.negatives_file, tags, nullptr)) pool.add_pair(p);
  } else {
    for (const auto& p : pairs) pool.add_pair(p);
  }

  std::vector<std::optional<std::string>> lines(pairs.size());
  std::vector<std::optional<std::string>> failures(pairs.size());
  std::optional<ts::Error> first_error;
  std::mutex error_mu;

  ts::detail::parallel_for(pairs.size(), args.common.parallel, [&](size_t i) {
    try {
      lines[i] = emit(pairs[i], bundle.set, pool, cfg, fuse_mode, digest);
    } catch (const ts::Error& e) {
      failures[i] = e.what();
      std::lock_guard<std::mutex> lock(error_mu);
      if (!first_error) first_error = e;
    }
  });

  if (first_error && !args.skip_errors) {
    std::cerr << "error: " << first_error->what() << "\n";
    return exit_code_for(*first_error);
  }

  OutputSink sink(args.output_path);
  size_t emitted = 0;
  json failed = json::array();
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (lines[i]) {
      sink.stream() << *lines[i] << "\n";
      ++emitted;
    } else if (failures[i]) {
      std::cerr << "skipped " << failed_noun << " '" << pairs[i].id << "': " << *failures[i] << "\n";
      failed.push_back(json{{"pair_id", pairs[i].id}, {"reason", *failures[i]}});
    }
  }
  sink.stream().flush();

  json skipped = json::array();
  for (const auto& s : load_stats.skipped) {
    skipped.push_back(json{{"line", s.line_number}, {"reason", s.reason}});
  }
  write_metrics(args.common, json{{"input_lines", load_stats.lines},
                                  {"loaded_pairs", pairs.size()},
                                  {"emitted", emitted},
                                  {"skipped_lines", skipped},
                                  {"failed_pairs", failed},
                                  {"provider_calls", bundle.provider_call_metrics()},
                                  {"cache", bundle.cache_metrics()},
                                  {"config_digest", digest}});
  return 0;
}

int cmd_score(const ScoreArgs& args) {
  return run_scoring_command(args, "pair", [](const ts::core::TrajectoryResponsePair& pair,
                                              const ts::providers::ProviderSet& prov,
                                              const ts::steprewards::NegativePool& pool,
                                              const ts::core::RewardConfig& cfg,
                                              ts::steprewards::FuseMode mode,
                                              const std::string& digest) {
    auto score = ts::pipeline::score_pair(pair, prov, pool, cfg, mode);
    json line = score;
    line["pair_id"] = pair.id;
    if (pair.source) line["source"] = *pair.source;
    line["config_digest"] = digest;
    return line.dump();
  });
}

int cmd_label(const ScoreArgs& args) {
  return run_scoring_command(args, "pair", [](const ts::core::TrajectoryResponsePair& pair,
                                              const ts::providers::ProviderSet& prov,
                                              const ts::steprewards::NegativePool& pool,
                                              const ts::core::RewardConfig& cfg,
                                              ts::steprewards::FuseMode mode,
                                              const std::string& digest) {
    auto labels = ts::aggregate::build_reference_labels(pair, prov, pool, cfg, mode);
    json line = labels;
    line["config_digest"] = digest;
    return line.dump();
  });
}

// ============================================================================
// select
// ============================================================================

std::vector<ts::select::ScoredPair> load_scored(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ts::Error(ts::ErrorCode::Io, "cannot open scored file '" + path + "'");
  std::vector<ts::select::ScoredPair> scored;
  std::string line;
  size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (ts::ingest::trim(line).empty()) continue;
    try {
      scored.push_back(json::parse(line).get<ts::select::ScoredPair>());
    } catch (const json::exception& e) {
      std::cerr << "skipped line " << line_number << ": " << e.what() << "\n";
    }
  }
  return scored;
}

/// Distinct config digests present in a scored file, for the audit manifest.
std::vector<std::string> scored_config_digests(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> digests;
  std::string line;
  while (std::getline(in, line)) {
    if (ts::ingest::trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      if (j.contains("config_digest")) {
        std::string d = j["config_digest"].get<std::string>();
        if (std::find(digests.begin(), digests.end(), d) == digests.end()) digests.push_back(d);
      }
    } catch (const json::exception&) {
      // Already reported by load_scored.
    }
  }
  return digests;
}

int cmd_select(const std::string& input_path, const std::string& output_path,
               std::string manifest_path, int top_k) {
  auto scored = load_scored(input_path);
  auto ids = ts::select::rank_and_select(scored, top_k);

  std::map<std::string, const ts::select::ScoredPair*> by_id;
  for (const auto& s : scored) by_id.emplace(s.pair_id, &s);

  OutputSink sink(output_path);
  for (const auto& id : ids) sink.stream() << json(*by_id.at(id)).dump() << "\n";
  sink.stream().flush();

  if (manifest_path.empty() && !output_path.empty()) manifest_path = output_path + ".manifest.json";
  if (!manifest_path.empty()) {
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw ts::Error(ts::ErrorCode::Io, "cannot open manifest file '" + manifest_path + "'");
    out << json{{"version", ts::kVersion},
                {"command", "select"},
                {"top_k", top_k},
                {"input_pairs", scored.size()},
                {"selected", ids.size()},
                {"selected_ids", ids},
                {"config_digests", scored_config_digests(input_path)}}
               .dump(2)
        << "\n";
  }
  return 0;
}

// ============================================================================
// bon
// ============================================================================

int cmd_bon(const ScoreArgs& args) {
  auto cfg = resolve_config(args.common);
  auto tags = resolve_tags(args.common);
  auto bundle = build_providers(args.common, cfg);
  auto fuse_mode = args.common.fuse_raw ? ts::steprewards::FuseMode::Raw
                                        : ts::steprewards::FuseMode::Normalized;
  auto candidates = load_pairs(args.input_path, tags, nullptr);
  if (candidates.empty()) throw ts::Error(ts::ErrorCode::Malformed, "no valid candidates in input");

  OutputSink sink(args.output_path);
  json result{{"candidates", candidates.size()}, {"config_digest", ts::core::config_digest(cfg)}};
  if (candidates.size() == 1) {
    // Nothing to rank; scoring would also have no cross-candidate negatives.
    result["selected_index"] = 0;
    result["selected_id"] = candidates[0].id;
    result["scores"] = nullptr;
    sink.stream() << result.dump() << "\n";
    sink.stream().flush();
    return 0;
  }

  ts::steprewards::NegativePool pool(*bundle.set.embedder);
  ts::core::RewardConfig local_cfg = cfg;
  if (!args.common.negatives_file.empty()) {
    for (auto& p : load_pairs(args.common.negatives_file, tags, nullptr)) pool.add_pair(p);
  } else {
    // Candidate-local pool: clamp the sample size to what it can offer.
    size_t min_eligible = std::numeric_limits<size_t>::max();
    for (const auto& c : candidates) {
      size_t eligible = 0;
      for (const auto& other : candidates) {
        if (other.id != c.id) eligible += other.trajectory_steps.size();
      }
      min_eligible = std::min(min_eligible, eligible);
    }
    if (min_eligible == 0) {
      throw ts::Error(ts::ErrorCode::InsufficientNegatives, "candidates share one id; no negatives");
    }
    for (const auto& c : candidates) pool.add_pair(c);
    local_cfg.num_negatives =
        static_cast<int>(std::min<size_t>(static_cast<size_t>(cfg.num_negatives), min_eligible));
  }

  std::vector<double> scores(candidates.size());
  ts::detail::parallel_for(candidates.size(), args.common.parallel, [&](size_t i) {
    scores[i] =
        ts::pipeline::score_pair(candidates[i], bundle.set, pool, local_cfg, fuse_mode).aggregate;
  });
  size_t best = ts::select::best_of_n(scores);

  result["selected_index"] = best;
  result["selected_id"] = candidates[best].id;
  result["scores"] = scores;
  sink.stream() << result.dump() << "\n";
  sink.stream().flush();
  write_metrics(args.common, json{{"candidates", candidates.size()},
                                  {"selected_index", best},
                                  {"provider_calls", bundle.provider_call_metrics()},
                                  {"cache", bundle.cache_metrics()}});
  return 0;
}

// ============================================================================
// shape
// ============================================================================

int cmd_shape(const ScoreArgs& args) {
  auto cfg = resolve_config(args.common);
  auto tags = resolve_tags(args.common);
  auto bundle = build_providers(args.common, cfg);
  const std::string digest = ts::core::config_digest(cfg);

  std::unique_ptr<ts::steprewards::NegativePool> pool;
  if (!args.common.negatives_file.empty()) {
    pool = std::make_unique<ts::steprewards::NegativePool>(*bundle.set.embedder);
    for (auto& p : load_pairs(args.common.negatives_file, tags, nullptr)) pool->add_pair(p);
  }

  std::ifstream in(args.input_path);
  if (!in) throw ts::Error(ts::ErrorCode::Io, "cannot open groups file '" + args.input_path + "'");
  OutputSink sink(args.output_path);
  std::string line;
  size_t line_number = 0, emitted = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (ts::ingest::trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      auto problem = j.at("problem").get<std::string>();
      auto rollouts = j.at("rollouts").get<std::vector<std::string>>();
      auto rewards = j.at("outcome_rewards").get<std::vector<double>>();
      std::string gold = j.value("gold_answer", std::string{});
      auto shaped = ts::rlshape::shape_group(problem, rollouts, rewards, bundle.set, cfg,
                                             pool.get(), gold, tags);
      sink.stream() << json{{"problem", problem}, {"group", shaped}, {"config_digest", digest}}.dump()
                    << "\n";
      ++emitted;
    } catch (const json::exception& e) {
      if (!args.skip_errors) throw ts::Error(ts::ErrorCode::Malformed,
                                             "line " + std::to_string(line_number) + ": " + e.what());
      std::cerr << "skipped line " << line_number << ": " << e.what() << "\n";
    } catch (const ts::Error& e) {
      if (!args.skip_errors) throw;
      std::cerr << "skipped line " << line_number << ": " << e.what() << "\n";
    }
  }
  sink.stream().flush();
  write_metrics(args.common, json{{"groups", emitted},
                                  {"provider_calls", bundle.provider_call_metrics()},
                                  {"cache", bundle.cache_metrics()}});
  return 0;
}

// ============================================================================
// stats
// ============================================================================

int cmd_stats(const std::string& input_path, const std::string& output_path,
              const std::string& summary_path, int bins, const std::string& range_spec) {
  auto scored = load_scored(input_path);

  double lo = 0.0, hi = 1.0;
  if (range_spec == "auto") {
    if (scored.empty()) throw ts::Error(ts::ErrorCode::Malformed, "no scored pairs; cannot infer range");
    lo = hi = scored[0].aggregate;
    for (const auto& s : scored) {
      lo = std::min(lo, s.aggregate);
      hi = std::max(hi, s.aggregate);
    }
    if (lo == hi) hi = lo + 1.0;
  } else {
    auto colon = range_spec.find(':');
    if (colon == std::string::npos) {
      throw ts::Error(ts::ErrorCode::InvalidArgument, "--range needs 'lo:hi' or 'auto'");
    }
    try {
      lo = std::stod(range_spec.substr(0, colon));
      hi = std::stod(range_spec.substr(colon + 1));
    } catch (const std::exception&) {
      throw ts::Error(ts::ErrorCode::InvalidArgument, "--range needs numeric 'lo:hi'");
    }
  }

  auto breakdown = ts::select::source_breakdown(scored, bins, lo, hi);

  OutputSink sink(output_path);
  sink.stream() << "source,bin,lo,hi,count\n";
  for (const auto& [source, hist] : breakdown.by_source) {
    double width = (hist.hi - hist.lo) / hist.bins;
    for (int i = 0; i < hist.bins; ++i) {
      sink.stream() << source << "," << i << "," << json(hist.lo + i * width).dump() << ","
                    << json(i + 1 == hist.bins ? hist.hi : hist.lo + (i + 1) * width).dump() << ","
                    << hist.counts[static_cast<size_t>(i)] << "\n";
    }
  }
  sink.stream().flush();

  json per_source = json::object();
  for (const auto& [source, hist] : breakdown.by_source) {
    per_source[source] = json{{"in_range", hist.in_range},
                              {"out_of_range", hist.out_of_range},
                              {"mean", hist.mean},
                              {"std", hist.std_dev}};
  }
  json summary{{"bins", bins},
               {"lo", lo},
               {"hi", hi},
               {"per_source", per_source},
               {"overlaps", breakdown.overlaps}};
  if (!summary_path.empty()) {
    std::ofstream out(summary_path, std::ios::trunc);
    if (!out) throw ts::Error(ts::ErrorCode::Io, "cannot open summary file '" + summary_path + "'");
    out << summary.dump(2) << "\n";
  } else {
    std::cerr << summary.dump(2) << "\n";
  }
  return 0;
}

// ============================================================================
// serve
// ============================================================================

int cmd_serve(const ScoreArgs& args, const std::string& host, int port,
              const std::string& token_env, bool probe) {
  auto cfg = resolve_config(args.common);
  auto tags = resolve_tags(args.common);
  auto bundle = build_providers(args.common, cfg);
  auto fuse_mode = args.common.fuse_raw ? ts::steprewards::FuseMode::Raw
                                        : ts::steprewards::FuseMode::Normalized;

  std::unique_ptr<ts::steprewards::NegativePool> pool;
  if (!args.common.negatives_file.empty()) {
    pool = std::make_unique<ts::steprewards::NegativePool>(*bundle.set.embedder);
    for (auto& p : load_pairs(args.common.negatives_file, tags, nullptr)) pool->add_pair(p);
  }

  ts::service::ServiceOptions opts;
  opts.host = host;
  opts.port = port;
  opts.max_inflight = args.common.max_inflight;
  opts.probe_providers = probe;
  if (!token_env.empty()) {
    const char* token = std::getenv(token_env.c_str());
    if (!token || !*token) {
      throw ts::Error(ts::ErrorCode::InvalidConfig, "env var '" + token_env + "' is unset or empty");
    }
    opts.bearer_token = token;
  }

  ts::service::ScoringService svc(bundle.set, pool.get(), cfg, opts, fuse_mode, tags);
  httplib::Server server;
  svc.install(server);
  std::cerr << "listening on " << host << ":" << port << " (config digest " << svc.config_digest()
            << ")\n";
  if (!server.listen(host, port)) {
    throw ts::Error(ts::ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  }
  return 0;
}

}  // namespace

// ============================================================================
// main
// ============================================================================

int main(int argc, char** argv) {
  CLI::App app{"trajectory-aware process-reward toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ts::kVersion);

  ScoreArgs score_args, label_args, bon_args, shape_args, serve_args;
  std::string select_input, select_output, select_manifest;
  int select_top_k = 1;
  std::string stats_input, stats_output, stats_summary, stats_range = "auto";
  int stats_bins = 20;
  std::string serve_host = "127.0.0.1", serve_token_env;
  int serve_port = 8750;
  bool serve_probe = false;

  auto* score = app.add_subcommand("score", "score a JSONL corpus of trajectory-response pairs");
  score->add_option("--input", score_args.input_path, "JSONL corpus")->required();
  score->add_option("--output", score_args.output_path, "output JSONL (default: stdout)");
  score->add_flag("--skip-errors", score_args.skip_errors, "report failing pairs and continue");
  add_common_flags(score, score_args.common);

  auto* label = app.add_subcommand("label", "emit reference training labels for a corpus");
  label->add_option("--input", label_args.input_path, "JSONL corpus")->required();
  label->add_option("--output", label_args.output_path, "output JSONL (default: stdout)");
  label->add_flag("--skip-errors", label_args.skip_errors, "report failing pairs and continue");
  add_common_flags(label, label_args.common);

  auto* sel = app.add_subcommand("select", "top-k selection over scored lines");
  sel->add_option("--input", select_input, "scored JSONL (from `score`)")->required();
  sel->add_option("--output", select_output, "selected JSONL")->required();
  sel->add_option("--manifest", select_manifest, "manifest path (default: <output>.manifest.json)");
  sel->add_option("--top-k", select_top_k, "how many pairs to keep")->required()->check(CLI::PositiveNumber);

  auto* bon = app.add_subcommand("bon", "Best-of-N over candidate records");
  bon->add_option("--input", bon_args.input_path, "JSONL candidates (one problem)")->required();
  bon->add_option("--output", bon_args.output_path, "result JSON line (default: stdout)");
  add_common_flags(bon, bon_args.common);

  auto* shape = app.add_subcommand("shape", "GRPO group shaping (r_hat, r_new, advantages)");
  shape->add_option("--input", shape_args.input_path,
                    "JSONL groups: {problem, rollouts[], outcome_rewards[], gold_answer?}")
      ->required();
  shape->add_option("--output", shape_args.output_path, "output JSONL (default: stdout)");
  shape->add_flag("--skip-errors", shape_args.skip_errors, "report failing groups and continue");
  add_common_flags(shape, shape_args.common);

  auto* stats = app.add_subcommand("stats", "histograms and per-source overlap of scored lines");
  stats->add_option("--input", stats_input, "scored JSONL (from `score`)")->required();
  stats->add_option("--output", stats_output, "CSV output (default: stdout)");
  stats->add_option("--summary", stats_summary, "JSON summary output (default: stderr)");
  stats->add_option("--bins", stats_bins, "histogram bins")->check(CLI::PositiveNumber);
  stats->add_option("--range", stats_range, "'lo:hi' or 'auto'");

  auto* serve = app.add_subcommand("serve", "run the HTTP scoring service");
  serve->add_option("--host", serve_host, "listen host");
  serve->add_option("--port", serve_port, "listen port");
  serve->add_option("--token-env", serve_token_env, "env var holding the static bearer token");
  serve->add_flag("--probe", serve_probe, "healthz probes the embedder for the degraded flag");
  add_common_flags(serve, serve_args.common);

  try {
    app.parse(argc, argv);
    if (score->parsed()) return cmd_score(score_args);
    if (label->parsed()) return cmd_label(label_args);
    if (sel->parsed()) return cmd_select(select_input, select_output, select_manifest, select_top_k);
    if (bon->parsed()) return cmd_bon(bon_args);
    if (shape->parsed()) return cmd_shape(shape_args);
    if (stats->parsed()) return cmd_stats(stats_input, stats_output, stats_summary, stats_bins, stats_range);
    if (serve->parsed()) {
      return cmd_serve(serve_args, serve_host, serve_port, serve_token_env, serve_probe);
    }
    return 1;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ts::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
