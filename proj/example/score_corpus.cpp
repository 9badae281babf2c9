/**
 * End-to-end corpus scoring with deterministic mock providers: ingest a
 * small JSONL corpus, score every pair at step and trajectory level, then
 * curate the top half and report a score histogram. Run it with no
 * arguments; everything is self-contained and reproducible.
 */

#include <iomanip>
#include <iostream>
#include <sstream>
#include <vector>

#include "trajscore/trajscore.hpp"

namespace ts = trajscore;

int main() {
  // Three records in the two accepted shapes: pre-split steps, and a raw
  // tagged transcript that ingestion splits on blank lines.
  const std::string corpus = R"({"id": "sum-1", "problem": "Compute 17 + 25.", "trajectory": "Add the units digit: 7 + 5 = 12, carry 1.\n\nAdd the tens: 1 + 2 + 1 = 4.", "response": "Units give 2 with a carry.\n\nThus \\boxed{42}.", "gold_answer": "42", "source": "arithmetic"}
{"id": "sum-2", "problem": "Compute 9 * 8.", "output": "<think>Recall the table: 9 * 8 = 72.\n\nSanity-check: 10 * 8 - 8 = 72.</think>The product is \\boxed{72}.", "gold_answer": "72", "source": "arithmetic"}
{"id": "geo-1", "problem": "A square has perimeter 36. What is its area?", "trajectory": "Each side is 36 / 4 = 9.\n\nThe area is 9 * 9 = 81.", "response": "Side 9 gives area \\boxed{81}.", "gold_answer": "81", "source": "geometry"}
)";

  std::istringstream in(corpus);
  std::vector<ts::core::TrajectoryResponsePair> pairs;
  auto stats = ts::ingest::load_dataset(
      in, [&](ts::core::TrajectoryResponsePair&& p) { pairs.push_back(std::move(p)); });
  std::cout << "loaded " << pairs.size() << " of " << stats.lines << " lines\n\n";

  // Mock providers: hash-seeded, deterministic, no network. Swap in the
  // HTTP providers from trajscore/http_providers.hpp for real endpoints.
  ts::providers::MockEmbedder embedder(7);
  ts::providers::MockJudge judge(7);
  ts::providers::MockVerifier verifier;
  ts::providers::MockGenerator generator(7);
  ts::providers::ExactAnswerChecker checker;
  ts::providers::ProviderSet prov{&embedder, &judge, &verifier, &generator, &checker};

  // Contrastive negatives come from the corpus itself: every other pair's
  // trajectory steps are candidate distractors.
  ts::steprewards::NegativePool pool(embedder);
  for (const auto& p : pairs) pool.add_pair(p);

  ts::core::RewardConfig cfg;
  cfg.seed = 7;
  cfg.num_negatives = 3;  // the corpus is tiny; default 16 needs a bigger pool

  // ==========================================================================
  // Score every pair
  // ==========================================================================

  std::vector<ts::select::ScoredPair> scored;
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& pair : pairs) {
    auto score = ts::pipeline::score_pair(pair, prov, pool, cfg);
    scored.push_back(ts::pipeline::to_scored_pair(pair, score));

    std::cout << pair.id << "  aggregate=" << score.aggregate
              << "  mean_step=" << score.mean_step_reward << "  r_final=" << score.final_reward
              << "\n";
    for (const auto& step : score.steps) {
      std::cout << "    step " << step.step_index << " -> response " << step.aligned_response_index
                << "  align=" << step.align_norm << "  quality=" << step.quality_norm
                << "  coherence=" << step.coherence_norm << "  reward=" << step.step_reward << "\n";
    }
  }

  // ==========================================================================
  // Curate and summarize
  // ==========================================================================

  auto kept = ts::select::rank_and_select(scored, 2);
  std::cout << "\ntop-2 selection:";
  for (const auto& id : kept) std::cout << " " << id;
  std::cout << "\n";

  auto breakdown = ts::select::source_breakdown(scored, 8, 0.0, 2.0);
  for (const auto& [source, hist] : breakdown.by_source) {
    std::cout << "source " << source << ": mean=" << hist.mean << " std=" << hist.std_dev << "\n";
  }
  return 0;
}
