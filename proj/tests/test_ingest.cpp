// Tests for corpus ingestion: step splitting, think-tag parsing, record
// normalization, and JSONL dataset loading.

#include "doctest.h"

#include <sstream>
#include <string>
#include <vector>

#include "trajscore/ingest.hpp"
#include "util.hpp"

using namespace trajscore;
using nlohmann::json;

namespace {

// Builds the JSON form of a record and runs it through the parser, the same
// way load_dataset does for each line.
core::TrajectoryResponsePair parse(const json& j, const ingest::ThinkTags& tags = {}) {
  return ingest::parse_record(j.get<ingest::RawRecord>(), j, tags);
}

std::vector<core::TrajectoryResponsePair> collect(std::istream& in, ingest::LoadStats* stats = nullptr) {
  std::vector<core::TrajectoryResponsePair> pairs;
  auto got = ingest::load_dataset(in, [&](core::TrajectoryResponsePair&& p) { pairs.push_back(std::move(p)); });
  if (stats) *stats = got;
  return pairs;
}

std::string record_line(const std::string& id, const std::string& problem,
                        const std::string& trajectory, const std::string& response) {
  json j{{"id", id}, {"problem", problem}, {"trajectory", trajectory}, {"response", response}};
  return j.dump();
}

}  // namespace

// ============================================================================
// split_steps
// ============================================================================

TEST_CASE("split_steps separates on blank lines") {
  CHECK(ingest::split_steps("A\n\nB\n\nC") == std::vector<std::string>{"A", "B", "C"});
}

TEST_CASE("split_steps treats runs of blank lines as one separator") {
  CHECK(ingest::split_steps("A\n\n\n\nB") == std::vector<std::string>{"A", "B"});
  CHECK(ingest::split_steps("A\n\n\nB") == std::vector<std::string>{"A", "B"});
}

TEST_CASE("split_steps tolerates horizontal whitespace inside separators") {
  CHECK(ingest::split_steps("A\n  \t\nB") == std::vector<std::string>{"A", "B"});
  CHECK(ingest::split_steps("A \n\t\r\n B ") == std::vector<std::string>{"A", "B"});
}

TEST_CASE("split_steps trims each step") {
  auto steps = ingest::split_steps("  first step  \n\n\tsecond\t");
  REQUIRE(steps.size() == 2);
  CHECK(steps[0] == "first step");
  CHECK(steps[1] == "second");
}

TEST_CASE("split_steps keeps single newlines inside a step") {
  auto steps = ingest::split_steps("line one\nline two\n\nnext step");
  REQUIRE(steps.size() == 2);
  CHECK(steps[0] == "line one\nline two");
  CHECK(steps[1] == "next step");
}

TEST_CASE("split_steps rejects whitespace-only text") {
  CHECK_THROWS_AS(ingest::split_steps(""), Error);
  CHECK_THROWS_AS(ingest::split_steps("   \n\n \t "), Error);
  try {
    ingest::split_steps(" \n \n ");
    FAIL("expected NoSteps");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoSteps);
  }
}

TEST_CASE("split_steps is idempotent under rejoining") {
  // Splitting, joining with the canonical separator, and splitting again
  // must give the same steps back.
  const std::vector<std::string> texts = {
      "A\n\nB\n\nC",
      "  spaced  \n\n\n\nout\n\nsteps\t",
      "one\nstill one\n\ntwo",
      "x",
  };
  for (const auto& text : texts) {
    auto once = ingest::split_steps(text);
    std::string joined;
    for (size_t i = 0; i < once.size(); ++i) {
      if (i > 0) joined += "\n\n";
      joined += once[i];
    }
    CHECK(ingest::split_steps(joined) == once);
  }
}

// ============================================================================
// trim
// ============================================================================

TEST_CASE("trim strips surrounding whitespace only") {
  CHECK(ingest::trim("  a b  ") == "a b");
  CHECK(ingest::trim("\t\r\n x \n") == "x");
  CHECK(ingest::trim("") == "");
  CHECK(ingest::trim(" \t ") == "");
  CHECK(ingest::trim("no-op") == "no-op");
}

// ============================================================================
// split_tagged_output
// ============================================================================

TEST_CASE("split_tagged_output extracts the tagged block") {
  auto [inner, rest] = ingest::split_tagged_output("<think>A\n\nB</think>C\n\nD");
  CHECK(inner == "A\n\nB");
  CHECK(ingest::trim(rest) == "C\n\nD");
}

TEST_CASE("split_tagged_output keeps text around the block in the response") {
  auto [inner, rest] = ingest::split_tagged_output("preamble <think>X</think> tail");
  CHECK(inner == "X");
  CHECK(rest.find("preamble") != std::string::npos);
  CHECK(rest.find("tail") != std::string::npos);
}

TEST_CASE("split_tagged_output uses the first open tag only") {
  auto [inner, rest] = ingest::split_tagged_output("<think>a<think>b</think>c");
  CHECK(inner == "a<think>b");
  CHECK(ingest::trim(rest) == "c");
}

TEST_CASE("split_tagged_output leaves untagged text as pure response") {
  auto [inner, rest] = ingest::split_tagged_output("no tags here");
  CHECK(inner.empty());
  CHECK(rest == "no tags here");
}

TEST_CASE("split_tagged_output rejects an unclosed tag") {
  try {
    ingest::split_tagged_output("<think>A");
    FAIL("expected MalformedThinkTag");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedThinkTag);
  }
}

TEST_CASE("split_tagged_output honors custom tags") {
  ingest::ThinkTags tags;
  tags.open = "[[plan]]";
  tags.close = "[[/plan]]";
  auto [inner, rest] = ingest::split_tagged_output("[[plan]]P1\n\nP2[[/plan]]ans", tags);
  CHECK(inner == "P1\n\nP2");
  CHECK(ingest::trim(rest) == "ans");
}

// ============================================================================
// parse_record
// ============================================================================

TEST_CASE("parse_record maps a pre-split record directly") {
  auto pair = parse({{"id", "r1"},
                     {"problem", "What is 2+2?"},
                     {"trajectory", "Add the numbers.\n\nCheck the sum."},
                     {"response", "The answer is \\boxed{4}."}});
  CHECK(pair.id == "r1");
  CHECK(pair.problem == "What is 2+2?");
  CHECK(pair.trajectory_steps == std::vector<std::string>{"Add the numbers.", "Check the sum."});
  CHECK(pair.response_steps == std::vector<std::string>{"The answer is \\boxed{4}."});
}

TEST_CASE("parse_record splits tagged combined output") {
  auto pair = parse({{"id", "r2"}, {"problem", "p"}, {"output", "<think>A\n\nB</think>C\n\nD"}});
  CHECK(pair.trajectory_steps == std::vector<std::string>{"A", "B"});
  CHECK(pair.response_steps == std::vector<std::string>{"C", "D"});
}

TEST_CASE("parse_record falls back to the first response step when untagged") {
  auto pair = parse({{"id", "r3"},
                     {"problem", "p"},
                     {"output", "First we reason.\n\nThen we conclude \\boxed{7}."}});
  // Without a thinking block the whole output is the response and the
  // opening step doubles as a one-step trajectory.
  CHECK(pair.response_steps ==
        std::vector<std::string>{"First we reason.", "Then we conclude \\boxed{7}."});
  CHECK(pair.trajectory_steps == std::vector<std::string>{"First we reason."});
}

TEST_CASE("parse_record rejects records with both or neither text form") {
  try {
    parse({{"problem", "p"}, {"trajectory", "t"}, {"response", "r"}, {"output", "o"}});
    FAIL("expected Malformed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Malformed);
  }
  CHECK_THROWS_AS(parse({{"problem", "p"}}), Error);
  // Half of the pre-split form is also malformed.
  CHECK_THROWS_AS(parse({{"problem", "p"}, {"trajectory", "t"}}), Error);
  CHECK_THROWS_AS(parse({{"problem", "p"}, {"response", "r"}}), Error);
}

TEST_CASE("parse_record derives a stable id when none is given") {
  json rec{{"problem", "p"}, {"trajectory", "t"}, {"response", "r"}};
  auto first = parse(rec);
  auto second = parse(rec);
  CHECK(first.id == second.id);
  CHECK(first.id.size() == 64);  // hex digest
  CHECK(first.id.find_first_not_of("0123456789abcdef") == std::string::npos);

  // Any content change must change the derived id.
  json other = rec;
  other["response"] = "r2";
  CHECK(parse(other).id != first.id);
}

TEST_CASE("parse_record preserves gold answer and source") {
  auto pair = parse({{"id", "r4"},
                     {"problem", "p"},
                     {"trajectory", "t"},
                     {"response", "r"},
                     {"gold_answer", "42"},
                     {"source", "synthetic"}});
  REQUIRE(pair.gold_answer.has_value());
  CHECK(*pair.gold_answer == "42");
  REQUIRE(pair.source.has_value());
  CHECK(*pair.source == "synthetic");
}

TEST_CASE("parse_record rejects blank step texts") {
  try {
    parse({{"problem", "p"}, {"trajectory", " \n\n "}, {"response", "r"}});
    FAIL("expected NoSteps");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoSteps);
  }
}

TEST_CASE("parse_record treats null optional fields as absent") {
  auto pair = parse({{"id", nullptr},
                     {"problem", "p"},
                     {"trajectory", "t"},
                     {"response", "r"},
                     {"gold_answer", nullptr}});
  CHECK_FALSE(pair.gold_answer.has_value());
  CHECK(pair.id.size() == 64);
}

// ============================================================================
// load_dataset
// ============================================================================

TEST_CASE("load_dataset keeps input order") {
  std::stringstream in;
  in << record_line("a", "p1", "t1", "r1") << "\n"
     << record_line("b", "p2", "t2", "r2") << "\n"
     << record_line("c", "p3", "t3", "r3") << "\n";
  ingest::LoadStats stats;
  auto pairs = collect(in, &stats);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].id == "a");
  CHECK(pairs[1].id == "b");
  CHECK(pairs[2].id == "c");
  CHECK(stats.lines == 3);
  CHECK(stats.loaded == 3);
  CHECK(stats.skipped.empty());
}

TEST_CASE("load_dataset skips malformed lines and reports them") {
  std::stringstream in;
  in << record_line("a", "p1", "t1", "r1") << "\n"
     << "{not json\n"
     << record_line("c", "p3", "t3", "r3") << "\n";
  ingest::LoadStats stats;
  auto pairs = collect(in, &stats);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].id == "a");
  CHECK(pairs[1].id == "c");
  REQUIRE(stats.skipped.size() == 1);
  CHECK(stats.skipped[0].line_number == 2);
  CHECK_FALSE(stats.skipped[0].reason.empty());
}

TEST_CASE("load_dataset skips records that fail validation") {
  std::stringstream in;
  // Both text forms present -> malformed record rather than a JSON error.
  json bad{{"problem", "p"}, {"trajectory", "t"}, {"response", "r"}, {"output", "o"}};
  in << bad.dump() << "\n" << record_line("ok", "p", "t", "r") << "\n";
  ingest::LoadStats stats;
  auto pairs = collect(in, &stats);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].id == "ok");
  REQUIRE(stats.skipped.size() == 1);
  CHECK(stats.skipped[0].line_number == 1);
  CHECK(stats.skipped[0].reason.find("malformed") != std::string::npos);
}

TEST_CASE("load_dataset ignores blank lines") {
  std::stringstream in;
  in << "\n" << record_line("a", "p", "t", "r") << "\n\n";
  auto pairs = collect(in);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].id == "a");
}

TEST_CASE("load_dataset returns empty for empty input") {
  std::stringstream in;
  ingest::LoadStats stats;
  auto pairs = collect(in, &stats);
  CHECK(pairs.empty());
  CHECK(stats.lines == 0);
  CHECK(stats.loaded == 0);
}

TEST_CASE("load_dataset accepts already-normalized pair lines") {
  core::TrajectoryResponsePair pair;
  pair.id = "pre";
  pair.problem = "p";
  pair.trajectory_steps = {"s1", "s2"};
  pair.response_steps = {"a1"};
  std::stringstream in;
  in << json(pair).dump() << "\n";
  auto pairs = collect(in);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].id == "pre");
  CHECK(pairs[0].trajectory_steps == pair.trajectory_steps);
  CHECK(pairs[0].response_steps == pair.response_steps);
}

TEST_CASE("load_dataset reads from a file path") {
  testutil::TempDir dir("ingest");
  auto path = dir.file("corpus.jsonl");
  testutil::write_file(path, record_line("f1", "p", "t", "r") + "\n");
  std::vector<core::TrajectoryResponsePair> pairs;
  ingest::load_dataset(path,
                       [&](core::TrajectoryResponsePair&& p) { pairs.push_back(std::move(p)); });
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].id == "f1");
}

TEST_CASE("load_dataset raises on a missing file") {
  try {
    ingest::load_dataset("/nonexistent/corpus.jsonl", [](core::TrajectoryResponsePair&&) {});
    FAIL("expected Io");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Io);
  }
}
