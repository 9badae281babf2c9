#pragma once

#include <cctype>
#include <fstream>
#include <functional>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "trajscore/core.hpp"
#include "trajscore/detail/hash.hpp"
#include "trajscore/errors.hpp"

/**
 * Dataset loading and text segmentation: turns raw corpus records (either
 * pre-split trajectory/response texts or single tagged outputs) into
 * validated TrajectoryResponsePair values, streaming one JSONL record at a
 * time so 100k-line corpora never need to fit in memory.
 */
namespace trajscore::ingest {

using core::TrajectoryResponsePair;
using json = nlohmann::json;

// ============================================================================
// Step segmentation
// ============================================================================

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/**
 * Splits text into reasoning steps on runs of two or more consecutive
 * newlines, trimming each segment and dropping empty ones. Irregular
 * blank-line runs (3+, or lines of spaces between newlines) act as a single
 * delimiter. Idempotent: re-splitting the result joined by "\n\n" is a
 * no-op. Throws NoSteps when the text is entirely whitespace.
 */
inline std::vector<std::string> split_steps(std::string_view text) {
  std::vector<std::string> steps;
  size_t pos = 0;
  while (pos < text.size()) {
    // Find the next run of >= 2 newlines (ignoring other whitespace inside
    // the run, so "\n \n" also delimits).
    size_t seg_end = text.size();
    size_t next = pos;
    size_t scan = pos;
    while (scan < text.size()) {
      if (text[scan] == '\n') {
        size_t run_end = scan + 1;
        int newlines = 1;
        while (run_end < text.size() &&
               (text[run_end] == '\n' || text[run_end] == ' ' || text[run_end] == '\t' ||
                text[run_end] == '\r')) {
          if (text[run_end] == '\n') ++newlines;
          ++run_end;
        }
        if (newlines >= 2) {
          seg_end = scan;
          next = run_end;
          break;
        }
        scan = run_end;
      } else {
        ++scan;
      }
    }
    if (seg_end == text.size()) next = text.size();
    std::string seg = trim(text.substr(pos, seg_end - pos));
    if (!seg.empty()) steps.push_back(std::move(seg));
    pos = next;
  }
  if (steps.empty()) throw Error(ErrorCode::NoSteps, "text contains no non-whitespace steps");
  return steps;
}

// ============================================================================
// Raw records and think-tag parsing
// ============================================================================

/**
 * One corpus line before segmentation. Exactly one of two forms:
 * pre-split (`trajectory` + `response` texts) or single-text (`output`,
 * optionally containing a delimited thinking block).
 */
struct RawRecord {
  std::optional<std::string> id;
  std::string problem;
  std::optional<std::string> trajectory;
  std::optional<std::string> response;
  std::optional<std::string> output;
  std::optional<std::string> gold_answer;
  std::optional<std::string> source;
};

inline void from_json(const json& j, RawRecord& r) {
  auto opt = [&](const char* key) -> std::optional<std::string> {
    if (j.contains(key) && !j[key].is_null()) return j[key].get<std::string>();
    return std::nullopt;
  };
  r.id = opt("id");
  r.problem = j.at("problem").get<std::string>();
  r.trajectory = opt("trajectory");
  r.response = opt("response");
  r.output = opt("output");
  r.gold_answer = opt("gold_answer");
  r.source = opt("source");
}

/// Thinking-block delimiters; case-sensitive, first occurrence wins.
struct ThinkTags {
  std::string open = "<think>";
  std::string close = "</think>";
};

/**
 * Splits a single model output into (trajectory text, response text) on the
 * first thinking block. Without an opening tag the whole output is response
 * text and the trajectory is left empty for the caller to default. Throws
 * MalformedThinkTag when an opening tag has no closing tag after it.
 */
inline std::pair<std::string, std::string> split_tagged_output(std::string_view output,
                                                               const ThinkTags& tags = {}) {
  size_t open = output.find(tags.open);
  if (open == std::string_view::npos) return {std::string{}, std::string(output)};
  size_t body = open + tags.open.size();
  size_t close = output.find(tags.close, body);
  if (close == std::string_view::npos) {
    throw Error(ErrorCode::MalformedThinkTag,
                "opening tag '" + tags.open + "' without matching '" + tags.close + "'");
  }
  std::string trajectory(output.substr(body, close - body));
  std::string response(output.substr(0, open));
  response += output.substr(close + tags.close.size());
  return {trajectory, std::move(response)};
}

/**
 * Builds a validated pair from a raw record. Single-text records are split
 * on the thinking block; records without one get a single-step trajectory
 * equal to the response's first step, so coherence and alignment stay
 * defined downstream. A missing id becomes the SHA-256 hex digest of the
 * record's canonical JSON, which is stable across whitespace and key-order
 * differences.
 */
inline TrajectoryResponsePair parse_record(const RawRecord& raw, const json& raw_json,
                                           const ThinkTags& tags = {}) {
  bool pre_split = raw.trajectory.has_value() && raw.response.has_value();
  bool tagged = raw.output.has_value();
  if (pre_split == tagged) {
    throw Error(ErrorCode::Malformed,
                "record must carry either trajectory+response or a single output text");
  }

  TrajectoryResponsePair pair;
  pair.problem = raw.problem;
  pair.gold_answer = raw.gold_answer;
  pair.source = raw.source;
  pair.id = raw.id ? *raw.id : detail::sha256_hex(raw_json.dump());

  if (pre_split) {
    pair.trajectory_steps = split_steps(*raw.trajectory);
    pair.response_steps = split_steps(*raw.response);
  } else {
    auto [traj_text, resp_text] = split_tagged_output(*raw.output, tags);
    pair.response_steps = split_steps(resp_text);
    if (trim(traj_text).empty()) {
      pair.trajectory_steps = {pair.response_steps.front()};
    } else {
      pair.trajectory_steps = split_steps(traj_text);
    }
  }
  core::validate_pair(pair);
  return pair;
}

// ============================================================================
// JSONL streaming
// ============================================================================

/// A malformed line that was skipped rather than aborting the stream.
struct SkippedLine {
  size_t line_number = 0;  // 1-based
  std::string reason;
};

struct LoadStats {
  size_t lines = 0;
  size_t loaded = 0;
  std::vector<SkippedLine> skipped;
};

/**
 * Streams validated pairs from line-delimited JSON in file order, invoking
 * on_pair for each. Lines that fail to parse or validate are reported via
 * the returned stats instead of aborting. Records already in canonical pair
 * form (carrying a trajectory_steps array) load directly; everything else is
 * treated as a RawRecord.
 */
inline LoadStats load_dataset(std::istream& in,
                              const std::function<void(TrajectoryResponsePair&&)>& on_pair,
                              const ThinkTags& tags = {}) {
  LoadStats stats;
  std::string line;
  while (std::getline(in, line)) {
    ++stats.lines;
    if (trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      TrajectoryResponsePair pair;
      if (j.contains("trajectory_steps")) {
        pair = j.get<TrajectoryResponsePair>();
        if (pair.id.empty()) pair.id = detail::sha256_hex(j.dump());
        core::validate_pair(pair);
      } else {
        pair = parse_record(j.get<RawRecord>(), j, tags);
      }
      ++stats.loaded;
      on_pair(std::move(pair));
    } catch (const json::exception& e) {
      stats.skipped.push_back({stats.lines, std::string("json: ") + e.what()});
    } catch (const Error& e) {
      stats.skipped.push_back({stats.lines, e.what()});
    }
  }
  return stats;
}

/// File-path overload; throws Io when the file cannot be opened.
inline LoadStats load_dataset(const std::string& path,
                              const std::function<void(TrajectoryResponsePair&&)>& on_pair,
                              const ThinkTags& tags = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open dataset file '" + path + "'");
  return load_dataset(in, on_pair, tags);
}

}  // namespace trajscore::ingest
