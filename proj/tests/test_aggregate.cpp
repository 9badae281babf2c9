// Tests for the aggregate score, reference-label generation, and the joint
// step/trajectory MSE objective.

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "trajscore/aggregate.hpp"
#include "oracle.hpp"

using namespace trajscore;
using nlohmann::json;

// ============================================================================
// Aggregate score
// ============================================================================

TEST_CASE("aggregate score worked example") {
  // mean([0.5, 0.7]) + 1.0 * 0.8 = 1.4
  CHECK(aggregate::aggregate_score({0.5, 0.7}, 0.8, 1.0) == doctest::Approx(1.4).epsilon(1e-15));
}

TEST_CASE("aggregate score sum mode adds instead of averaging") {
  CHECK(aggregate::aggregate_score({0.5, 0.7}, 0.8, 1.0, core::Aggregation::Sum) ==
        doctest::Approx(2.0).epsilon(1e-15));
  CHECK(aggregate::aggregate_score({1.0, 2.0, 3.0}, 0.0, 1.0, core::Aggregation::Sum) == 6.0);
}

TEST_CASE("aggregate score with alpha zero ignores the final reward") {
  CHECK(aggregate::aggregate_score({0.2, 0.4}, 0.9, 0.0) ==
        aggregate::aggregate_score({0.2, 0.4}, 0.1, 0.0));
  CHECK(aggregate::aggregate_score({0.2, 0.4}, 123.0, 0.0) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("aggregate score rejects empty step lists") {
  try {
    aggregate::aggregate_score({}, 0.5, 1.0);
    FAIL("expected EmptySteps");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySteps);
  }
}

TEST_CASE("aggregate score is monotone in each input") {
  auto g = oracle::rng(606);
  for (int trial = 0; trial < 200; ++trial) {
    size_t T = 1 + static_cast<size_t>(oracle::uniform(g, 0, 6));
    std::vector<double> steps(T);
    for (auto& s : steps) s = oracle::uniform(g, -1, 1);
    double r_final = oracle::uniform(g, 0, 1);
    double alpha = oracle::uniform(g, 0, 2);
    auto mode = trial % 2 == 0 ? core::Aggregation::Mean : core::Aggregation::Sum;

    double base = aggregate::aggregate_score(steps, r_final, alpha, mode);
    size_t bump_at = static_cast<size_t>(oracle::uniform(g, 0, static_cast<double>(T)));
    bump_at = std::min(bump_at, T - 1);
    auto bumped = steps;
    bumped[bump_at] += 0.25;
    CHECK(aggregate::aggregate_score(bumped, r_final, alpha, mode) >= base);
    CHECK(aggregate::aggregate_score(steps, r_final + 0.25, alpha, mode) >= base);
  }
}

TEST_CASE("aggregate score matches the extended-precision oracle") {
  auto g = oracle::rng(707);
  for (int trial = 0; trial < 500; ++trial) {
    size_t T = 1 + static_cast<size_t>(oracle::uniform(g, 0, 9));
    std::vector<double> steps(T);
    for (auto& s : steps) s = oracle::uniform(g, -2, 2);
    double r_final = oracle::uniform(g, 0, 1);
    double alpha = oracle::uniform(g, 0, 3);
    bool mean_mode = trial % 2 == 0;
    double got = aggregate::aggregate_score(steps, r_final, alpha,
                                            mean_mode ? core::Aggregation::Mean : core::Aggregation::Sum);
    long double want = oracle::o_aggregate(steps, r_final, alpha, mean_mode);
    CHECK(std::abs(got - static_cast<double>(want)) < 1e-12);
  }
}

// ============================================================================
// Reference labels
// ============================================================================

namespace {

struct LabelFixture {
  providers::MockEmbedder embedder{5, 16};
  providers::MockJudge judge{5};
  providers::MockVerifier verifier;
  providers::MockGenerator generator{5};
  providers::ExactAnswerChecker checker;
  steprewards::NegativePool pool{embedder};
  core::RewardConfig cfg;
  core::TrajectoryResponsePair pair;

  LabelFixture() {
    cfg.num_negatives = 3;
    pair.id = "labeled";
    pair.problem = "What is 3*4?";
    pair.trajectory_steps = {"Multiply.", "Check by addition."};
    pair.response_steps = {"The product is \\boxed{12}."};
    for (int i = 0; i < 4; ++i) {
      core::TrajectoryResponsePair other;
      other.id = "bg-" + std::to_string(i);
      other.problem = "p";
      other.trajectory_steps = {"background step " + std::to_string(i)};
      other.response_steps = {"r"};
      pool.add_pair(other);
    }
  }

  providers::ProviderSet prov() {
    providers::ProviderSet p;
    p.embedder = &embedder;
    p.judge = &judge;
    p.verifier = &verifier;
    p.generator = &generator;
    p.checker = &checker;
    return p;
  }
};

}  // namespace

TEST_CASE("reference labels carry fused step targets and the final target") {
  LabelFixture fx;
  auto labels = aggregate::build_reference_labels(fx.pair, fx.prov(), fx.pool, fx.cfg);
  CHECK(labels.pair_id == "labeled");
  REQUIRE(labels.step_targets.size() == 2);

  auto steps = steprewards::score_steps(fx.pair, fx.prov(), fx.pool, fx.cfg);
  for (size_t t = 0; t < steps.size(); ++t) CHECK(labels.step_targets[t] == steps[t].step_reward);
  auto traj = trajreward::trajectory_reward(fx.pair, fx.prov(), fx.cfg);
  CHECK(labels.final_target == traj.r_final);
}

TEST_CASE("reference labels round-trip through JSON") {
  aggregate::ReferenceLabels labels;
  labels.pair_id = "x";
  labels.step_targets = {0.1, 0.9, 0.4};
  labels.final_target = 0.6;
  auto back = json(labels).get<aggregate::ReferenceLabels>();
  CHECK(back.pair_id == labels.pair_id);
  CHECK(back.step_targets == labels.step_targets);
  CHECK(back.final_target == labels.final_target);

  aggregate::PredictedRewards preds;
  preds.step_preds = {0.2, 0.8, 0.5};
  preds.final_pred = 0.55;
  auto preds_back = json(preds).get<aggregate::PredictedRewards>();
  CHECK(preds_back.step_preds == preds.step_preds);
  CHECK(preds_back.final_pred == preds.final_pred);
}

// ============================================================================
// Joint loss
// ============================================================================

namespace {

aggregate::PredictedRewards preds_of(std::vector<double> steps, double final_pred) {
  aggregate::PredictedRewards p;
  p.step_preds = std::move(steps);
  p.final_pred = final_pred;
  return p;
}

aggregate::ReferenceLabels labels_of(std::vector<double> steps, double final_target) {
  aggregate::ReferenceLabels l;
  l.pair_id = "l";
  l.step_targets = std::move(steps);
  l.final_target = final_target;
  return l;
}

}  // namespace

TEST_CASE("joint loss worked example") {
  // Single step: (0.5-0.7)^2 = 0.04; final residual zero.
  double loss = aggregate::joint_loss(preds_of({0.5}, 1.0), labels_of({0.7}, 1.0), 1.0, 1.0);
  CHECK(loss == doctest::Approx(0.04).epsilon(1e-15));
}

TEST_CASE("joint loss is zero exactly at a perfect fit") {
  auto labels = labels_of({0.3, 0.6, 0.9}, 0.8);
  CHECK(aggregate::joint_loss(preds_of({0.3, 0.6, 0.9}, 0.8), labels, 1.0, 1.0) == 0.0);
}

TEST_CASE("joint loss lambda weights gate each term") {
  auto labels = labels_of({0.0}, 0.0);
  auto preds = preds_of({1.0}, 2.0);
  CHECK(aggregate::joint_loss(preds, labels, 1.0, 0.0) == 1.0);   // step term only
  CHECK(aggregate::joint_loss(preds, labels, 0.0, 1.0) == 4.0);   // final term only
  CHECK(aggregate::joint_loss(preds, labels, 0.0, 0.0) == 0.0);
  CHECK(aggregate::joint_loss(preds, labels, 2.0, 3.0) == doctest::Approx(14.0).epsilon(1e-15));
}

TEST_CASE("joint loss is invariant under simultaneous permutation") {
  auto loss_a = aggregate::joint_loss(preds_of({0.1, 0.5, 0.9}, 0.3), labels_of({0.2, 0.4, 0.8}, 0.1), 1.0, 1.0);
  auto loss_b = aggregate::joint_loss(preds_of({0.9, 0.1, 0.5}, 0.3), labels_of({0.8, 0.2, 0.4}, 0.1), 1.0, 1.0);
  CHECK(loss_a == doctest::Approx(loss_b).epsilon(1e-15));
}

TEST_CASE("joint loss rejects shape mismatches and empty steps") {
  try {
    aggregate::joint_loss(preds_of({0.1, 0.2}, 0.0), labels_of({0.1}, 0.0), 1.0, 1.0);
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
  try {
    aggregate::joint_loss(preds_of({}, 0.0), labels_of({}, 0.0), 1.0, 1.0);
    FAIL("expected EmptySteps");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySteps);
  }
}

TEST_CASE("joint loss matches the extended-precision oracle") {
  auto g = oracle::rng(808);
  for (int trial = 0; trial < 500; ++trial) {
    size_t T = 1 + static_cast<size_t>(oracle::uniform(g, 0, 7));
    std::vector<double> preds(T), targets(T);
    for (size_t t = 0; t < T; ++t) {
      preds[t] = oracle::uniform(g, -1, 2);
      targets[t] = oracle::uniform(g, -1, 2);
    }
    double fp = oracle::uniform(g, 0, 1), ft = oracle::uniform(g, 0, 1);
    double ls = oracle::uniform(g, 0, 2), lf = oracle::uniform(g, 0, 2);
    double got = aggregate::joint_loss(preds_of(preds, fp), labels_of(targets, ft), ls, lf);
    long double want = oracle::o_joint_loss(preds, targets, fp, ft, ls, lf);
    CHECK(std::abs(got - static_cast<double>(want)) < 1e-12);
    CHECK(got >= 0.0);
  }
}

TEST_CASE("joint loss gradient matches central finite differences") {
  auto g = oracle::rng(909);
  for (int trial = 0; trial < 50; ++trial) {
    size_t T = 1 + static_cast<size_t>(oracle::uniform(g, 0, 5));
    std::vector<double> preds(T), targets(T);
    for (size_t t = 0; t < T; ++t) {
      preds[t] = oracle::uniform(g, -1, 1);
      targets[t] = oracle::uniform(g, -1, 1);
    }
    double fp = oracle::uniform(g, -1, 1), ft = oracle::uniform(g, -1, 1);
    double ls = oracle::uniform(g, 0.1, 2), lf = oracle::uniform(g, 0.1, 2);
    auto labels = labels_of(targets, ft);

    const double h = 1e-6;
    for (size_t t = 0; t < T; ++t) {
      auto hi = preds, lo = preds;
      hi[t] += h;
      lo[t] -= h;
      double numeric = (aggregate::joint_loss(preds_of(hi, fp), labels, ls, lf) -
                        aggregate::joint_loss(preds_of(lo, fp), labels, ls, lf)) /
                       (2 * h);
      double analytic = 2.0 * ls * (preds[t] - targets[t]) / static_cast<double>(T);
      CHECK(std::abs(numeric - analytic) < 1e-6);
    }
    double numeric_final = (aggregate::joint_loss(preds_of(preds, fp + h), labels, ls, lf) -
                            aggregate::joint_loss(preds_of(preds, fp - h), labels, ls, lf)) /
                           (2 * h);
    CHECK(std::abs(numeric_final - 2.0 * lf * (fp - ft)) < 1e-6);
  }
}
