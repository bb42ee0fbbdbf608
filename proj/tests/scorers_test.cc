// Copyright 2026 The blocksync Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "blocksync/ctc_scorer.h"
#include "blocksync/kd_loss.h"
#include "blocksync/lm_scorer.h"
#include "blocksync/table_scorer.h"
#include "checks.h"
#include "oracles.h"

namespace blocksync {
namespace {

/// One CTC-only block over the given probabilities (rows are frames).
std::unique_ptr<BlockStream> posteriors(const std::vector<std::vector<double>>& probs) {
  EncodedBlock block;
  block.index = 1;
  block.frame_end = static_cast<int>(probs.size());
  block.is_last = true;
  block.ctc_log_probs.resize(probs.size(), probs[0].size());
  for (size_t t = 0; t < probs.size(); ++t) {
    for (size_t c = 0; c < probs[t].size(); ++c) block.ctc_log_probs(t, c) = std::log(probs[t][c]);
  }
  auto stream = std::make_unique<BlockStream>();
  stream->append(std::move(block));
  return stream;
}

TEST(Scorers, InitialStateScoresZero) {
  const Vocabulary vocab = toy_vocabulary(5);
  const auto inst = checks::random_instance(1, 5, 0.2);
  const AttentionDecoderScorer att(inst.model.decoder);
  const CtcPrefixScorer ctc(5, 0, 4);
  const UniformLm lm(5);
  const TableScorer table(vocab);
  for (const Scorer* s : std::initializer_list<const Scorer*>{&att, &ctc, &lm, &table}) {
    EXPECT_EQ(s->init()->score, 0.0) << s->name();
    EXPECT_EQ(s->init()->prefix_length, 1) << s->name();
  }
  EXPECT_EQ(CtcPrefixScorer::frames_scored(ctc.init()), 0);
}

TEST(CtcPrefixScorer, SingleFrameExtension) {
  // Columns: blank, a, <eos>.
  const auto stream = posteriors({{0.4, 0.6, 0.0}});
  const CtcPrefixScorer ctc(3, 0, 2);
  const std::vector<int> prefix{2};
  const auto [score, state] = ctc.prefix_score(ctc.init(), prefix, 1, BlockView{stream.get(), 1});
  EXPECT_NEAR(score, std::log(0.6), 1e-12);
  EXPECT_EQ(CtcPrefixScorer::frames_scored(state), 1);
}

TEST(CtcPrefixScorer, UniformTwoFramesMatchNinePaths) {
  const double third = 1.0 / 3.0;
  // Columns: blank, a, b, <eos>; <eos> carries no frame mass.
  const auto stream = posteriors({{third, third, third, 0.0}, {third, third, third, 0.0}});
  const CtcPrefixScorer ctc(4, 0, 3);
  Matrix lp = stream->block(0).ctc_log_probs;
  const auto labelings = oracle::ctc_labelings(lp, 0);
  const std::vector<int> prefix{3};
  for (int c : {1, 2}) {
    const auto [score, state] = ctc.prefix_score(ctc.init(), prefix, c, BlockView{stream.get(), 1});
    EXPECT_NEAR(score, std::log(4.0 / 9.0), 1e-9);  // aa, a-, ab, -a
    EXPECT_NEAR(score, static_cast<double>(oracle::ctc_prefix_log_prob(labelings, {c})), 1e-9);
  }
}

TEST(CtcPrefixScorer, EosScoresTheCompleteLabeling) {
  const auto stream = posteriors({{0.5, 0.5, 0.0}, {0.5, 0.5, 0.0}});
  const CtcPrefixScorer ctc(3, 0, 2);
  const std::vector<int> prefix{2};
  const ScoreStep step = ctc.score_step(ctc.init(), prefix, BlockView{stream.get(), 1});
  EXPECT_NEAR(step.scores[2], std::log(0.25), 1e-12);  // only the all-blank path
  EXPECT_EQ(step.scores[0], kLogZero);
  EXPECT_THROW(ctc.extend(step, prefix, 0, BlockView{stream.get(), 1}), Error);
}

TEST(CtcPrefixScorer, RejectsUnnormalizedPosteriors) {
  const auto stream = posteriors({{0.5, 0.6, 0.0}});
  const CtcPrefixScorer ctc(3, 0, 2);
  const std::vector<int> prefix{2};
  EXPECT_THROW(ctc.score_step(ctc.init(), prefix, BlockView{stream.get(), 1}), Error);
}

TEST(CtcPrefixScorer, MatchesAlignmentEnumeration) { EXPECT_TRUE(checks::ctc_oracle(36).ok()); }
TEST(CtcPrefixScorer, ChunkedResumptionMatchesOneShot) {
  EXPECT_TRUE(checks::ctc_resumption(200).ok());
}
TEST(CtcPrefixScorer, PrefixProbabilitiesNest) { EXPECT_TRUE(checks::ctc_nesting(200).ok()); }
TEST(CtcPrefixScorer, OnlyNewColumnsAreComputed) {
  EXPECT_TRUE(checks::ctc_block_monotonicity(200).ok());
}

TEST(CtcPrefixScorer, ConcurrentScoringIsRaceFree) {
  PortableRandom rng(5);
  std::vector<std::vector<double>> probs(6, std::vector<double>(5));
  for (auto& row : probs) {
    double total = 0;
    for (double& p : row) total += (p = rng.uniform(0.1, 1.0));
    for (double& p : row) p /= total;
  }
  const auto stream = posteriors(probs);
  const CtcPrefixScorer ctc(5, 0, 4);
  const StatePtr root = ctc.init();
  const std::vector<int> prefix{4};
  const ScoreStep expected = CtcPrefixScorer(5, 0, 4).score_step(
      CtcPrefixScorer(5, 0, 4).init(), prefix, BlockView{stream.get(), 1});
  std::vector<std::thread> workers;
  std::vector<std::vector<double>> results(4);
  for (int w = 0; w < 4; ++w) {
    workers.emplace_back([&, w] {
      results[w] = ctc.score_step(root, prefix, BlockView{stream.get(), 1}).scores;
    });
  }
  for (auto& t : workers) t.join();
  for (const auto& r : results) EXPECT_EQ(r, expected.scores);
}

TEST(AttentionDecoder, UniformOutputProjection) {
  auto inst = checks::random_instance(2, 6, 0.3);
  inst.model.decoder.output_proj.setZero();
  inst.model.decoder.output_bias.setZero();
  const AttentionDecoderScorer att(inst.model.decoder);
  BlockStream stream;
  stream.append(inst.model.encode_batch(inst.features, 4));
  const std::vector<int> prefix{5};
  const ScoreStep step = att.score_step(att.init(), prefix, BlockView{&stream, 1});
  for (double s : step.scores) EXPECT_NEAR(s, -std::log(6.0), 1e-12);
}

TEST(AttentionDecoder, CachedScoresMatchFromScratch) {
  EXPECT_TRUE(checks::decoder_cache_purity(60).ok());
}
TEST(AttentionDecoder, EarlierStepsIgnoreLaterTokens) {
  EXPECT_TRUE(checks::decoder_causality(40).ok());
}

TEST(AttentionDecoder, RejectsShrinkingBlockStream) {
  const auto inst = checks::random_instance(3, 6, 1.0);
  BlockLayout layout;
  layout.n_center = 4;
  BlockStream stream;
  for (auto& b : inst.model.encode_streaming(inst.features, layout)) stream.append(std::move(b));
  const AttentionDecoderScorer att(inst.model.decoder);
  const std::vector<int> prefix{5};
  const ScoreStep step = att.score_step(att.init(), prefix, BlockView{&stream, 2});
  const StatePtr child = att.extend(step, prefix, 1, BlockView{&stream, 2});
  const std::vector<int> longer{5, 1};
  EXPECT_THROW(att.score_step(child, longer, BlockView{&stream, 1}), Error);
  EXPECT_THROW(att.score_step(child, prefix, BlockView{&stream, 2}), Error);
}

TEST(Lm, BigramTableLookup) {
  const Vocabulary vocab({"<blank>", "a", "b", "<sos/eos>"}, 0, 3);
  std::istringstream in("#floor -9\na b -0.10536051565782628\n");
  const BigramLm lm = BigramLm::parse(in, vocab);
  EXPECT_NEAR(lm.log_prob(1, 2), std::log(0.9), 1e-12);
  EXPECT_EQ(lm.log_prob(2, 1), -9.0);
  std::istringstream bad("a c -1\n");
  EXPECT_THROW(BigramLm::parse(bad, vocab), ParseError);
}

TEST(Lm, UniformScoresMinusLogV) {
  const UniformLm lm(7);
  BlockStream stream;
  const std::vector<int> prefix{6};
  for (double s : lm.score_step(lm.init(), prefix, BlockView{&stream, 0}).scores) {
    EXPECT_NEAR(s, -std::log(7.0), 1e-15);
  }
}

TEST(Lm, StatesAccumulateLogProbabilities) { EXPECT_TRUE(checks::lm_cache_purity(100).ok()); }

TEST(TableScorer, ParsesScenarioTables) {
  const Vocabulary vocab = Vocabulary::load(std::string(BLOCKSYNC_DATA_DIR) + "/scenarios/clasp.vocab");
  const TableScorer table =
      TableScorer::load(std::string(BLOCKSYNC_DATA_DIR) + "/scenarios/clasp.tbl", vocab);
  const int eos = vocab.sos_eos_id();
  const auto dist = table.lookup(std::vector<int>{eos, vocab.id("he")}, 1);
  ASSERT_TRUE(dist.has_value());
  EXPECT_NEAR((*dist)[vocab.id("clasp")], std::log(0.6), 1e-12);
  EXPECT_EQ((*dist)[vocab.id("desk")], kLogZero);
  EXPECT_FALSE(table.lookup(std::vector<int>{eos, vocab.id("desk"), vocab.id("desk")}, 1));
  const auto directives =
      read_table_directives(std::string(BLOCKSYNC_DATA_DIR) + "/scenarios/clasp.tbl");
  EXPECT_EQ(directives.at("blocks"), "3");
}

TEST(TableScorer, BlockSpecificEntriesOverrideWildcard) {
  const Vocabulary vocab({"<blank>", "a", "b", "<sos/eos>"}, 0, 3);
  std::istringstream in(" | 2 | a:-1\n | * | b:-2\n");
  const TableScorer table = TableScorer::parse(in, vocab);
  const std::vector<int> root{3};
  EXPECT_EQ((*table.lookup(root, 2))[1], -1.0);
  EXPECT_EQ((*table.lookup(root, 1))[2], -2.0);
  std::istringstream bad(" | x | a:-1\n");
  EXPECT_THROW(TableScorer::parse(bad, vocab), ParseError);
  std::istringstream unknown(" | * | z:-1\n");
  EXPECT_THROW(TableScorer::parse(unknown, vocab), ParseError);
}

TEST(KdLoss, Examples) {
  const std::vector<double> one_hot{0.0, 1.0, 0.0};
  const std::vector<double> certain{kLogZero, 0.0, kLogZero};
  EXPECT_EQ(kd_loss(one_hot, certain), 0.0);
  const std::vector<double> uniform(4, 0.25);
  const std::vector<double> log_uniform(4, std::log(0.25));
  EXPECT_NEAR(kd_loss(uniform, log_uniform), std::log(4.0), 1e-12);
  const std::vector<double> miss{0.5, 0.5, 0.0};
  EXPECT_TRUE(std::isinf(kd_loss(miss, certain)));
  EXPECT_THROW(kd_loss(std::vector<double>{0.5, 0.4}, std::vector<double>{0.0, 0.0}),
               std::invalid_argument);
}

TEST(KdLoss, MatchesDirectSummation) {
  PortableRandom rng(9);
  for (int k = 0; k < 100; ++k) {
    const int n = rng.integer(2, 10);
    std::vector<double> q(n), p(n), logp(n);
    double qs = 0, ps = 0;
    for (int y = 0; y < n; ++y) {
      qs += (q[y] = rng.uniform(0.0, 1.0));
      ps += (p[y] = rng.uniform(0.01, 1.0));
    }
    long double expected = 0;
    for (int y = 0; y < n; ++y) {
      q[y] /= qs;
      logp[y] = std::log(p[y] / ps);
      expected -= static_cast<long double>(q[y]) * logp[y];
    }
    EXPECT_NEAR(kd_loss(q, logp), static_cast<double>(expected), 1e-12);
  }
}

TEST(KdLoss, CombinedWeights) {
  EXPECT_EQ(kd_combined_loss(2.0, 4.0, 0.5), 3.0);
  EXPECT_EQ(kd_combined_loss(2.0, 4.0, 0.0), 2.0);
  EXPECT_EQ(kd_combined_loss(2.0, 4.0, 1.0), 4.0);
  EXPECT_THROW(kd_combined_loss(2.0, 4.0, 1.5), std::invalid_argument);
}

}  // namespace
}  // namespace blocksync
