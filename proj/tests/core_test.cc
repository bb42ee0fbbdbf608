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

#include <sstream>

#include <gtest/gtest.h>

#include "blocksync/core.h"
#include "blocksync/tensor_io.h"
#include "checks.h"

namespace blocksync {
namespace {

TEST(LogAdd, HandlesLogZero) {
  EXPECT_EQ(log_add(kLogZero, -1.5), -1.5);
  EXPECT_EQ(log_add(-1.5, kLogZero), -1.5);
  EXPECT_EQ(log_add(kLogZero, kLogZero), kLogZero);
  EXPECT_NEAR(log_add(std::log(0.25), std::log(0.5)), std::log(0.75), 1e-15);
}

TEST(LogAdd, Associative) { EXPECT_TRUE(checks::log_add_associativity(300).ok()); }

TEST(Vocabulary, ParsesDirectivesAndTokens) {
  std::istringstream in("#blank 0\n#soseos 3\n<blank>\na\nb\n<sos/eos>\n");
  const Vocabulary v = Vocabulary::parse(in);
  EXPECT_EQ(v.size(), 4);
  EXPECT_EQ(v.blank_id(), 0);
  EXPECT_EQ(v.sos_eos_id(), 3);
  EXPECT_EQ(v.id("b"), 2);
  EXPECT_FALSE(v.find("c").has_value());
  EXPECT_EQ(v.encode("a b a"), (std::vector<int>{1, 2, 1}));
  const std::vector<int> ids{3, 1, 2, 3};
  EXPECT_EQ(v.decode(ids), "a b");
}

TEST(Vocabulary, RejectsMalformedFiles) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return Vocabulary::parse(in, "v.txt");
  };
  EXPECT_THROW(parse("<blank>\na\n"), ParseError);
  EXPECT_THROW(parse("#blank 0\n#soseos 0\n<blank>\n"), ParseError);
  EXPECT_THROW(parse("#blank 0\n#soseos 2\n<blank>\na\na\n"), ParseError);
  EXPECT_THROW(parse("#blank 0\n#soseos 2\n<blank>\na b\n<eos>\n"), ParseError);
  EXPECT_THROW(parse("#blank 0\n#bogus 2\n"), ParseError);
  try {
    parse("#blank 0\n#soseos 2\n<blank>\n\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
    EXPECT_NE(std::string(e.what()).find("v.txt:4"), std::string::npos);
  }
}

TEST(Vocabulary, UnknownTokenThrows) {
  const Vocabulary v({"<b>", "x", "<e>"}, 0, 2);
  EXPECT_THROW(v.id("y"), Error);
  EXPECT_THROW(v.token(3), Error);
}

Hypothesis hyp(std::vector<int> tokens, double score) {
  Hypothesis h;
  h.tokens = std::move(tokens);
  h.score = score;
  return h;
}

TEST(Beam, TiesBreakOnSmallerTokenSequence) {
  Beam beam;
  beam.hypotheses = {hyp({0, 2}, -1.0), hyp({0, 1, 5}, -1.0), hyp({0, 3}, -0.5)};
  prune_beam(beam, 2);
  ASSERT_EQ(beam.hypotheses.size(), 2u);
  EXPECT_EQ(beam.hypotheses[0].tokens, (std::vector<int>{0, 3}));
  EXPECT_EQ(beam.hypotheses[1].tokens, (std::vector<int>{0, 1, 5}));
}

TEST(Beam, OrderingIsTotalAndIdempotent) { EXPECT_TRUE(checks::beam_ordering(200).ok()); }

TEST(CombinedScore, WeightsComponents) {
  DecodeConfig config;
  config.ctc_weight = 0.25;
  config.lm_weight = 0.5;
  EXPECT_DOUBLE_EQ(combined_score({-4.0, -8.0, -2.0}, config), 0.75 * -4.0 + 0.25 * -8.0 - 1.0);
  config.ctc_weight = 0.0;
  config.lm_weight = 0.0;
  EXPECT_EQ(combined_score({-1.0, kLogZero, kLogZero}, config), -1.0);
}

TEST(CombinedScore, MatchesStoredScoresAfterExtensions) {
  EXPECT_TRUE(checks::score_recomputation(40).ok());
}

TEST(DecodeConfig, Validation) {
  DecodeConfig config;
  EXPECT_NO_THROW(config.validate());
  config.beam_width = 0;
  EXPECT_THROW(config.validate(), Error);
  config.beam_width = 1;
  config.ctc_weight = 1.5;
  EXPECT_THROW(config.validate(), std::invalid_argument);
  config.ctc_weight = 0.3;
  EXPECT_EQ(config.resolve_i_max(10), 12);
  config.i_max = 4;
  EXPECT_EQ(config.resolve_i_max(10), 4);
}

TEST(BlockLayout, Validation) {
  BlockLayout layout;
  EXPECT_NO_THROW(layout.validate());
  layout.n_center = 0;
  EXPECT_THROW(layout.validate(), Error);
}

TEST(TensorFile, RoundTrips) {
  TensorFile file;
  Matrix m(2, 3);
  m << 1.5, -2.25, 3.0, 1e-300, 0.1, -7.0;
  RowVector v(2);
  v << 0.3, -0.7;
  file.put("a.weight", m);
  file.put("a.bias", v);
  file.put_scalar("heads", 4);
  std::stringstream buffer;
  file.write(buffer);
  const TensorFile back = TensorFile::parse(buffer);
  EXPECT_EQ(back.matrix("a.weight"), m);
  EXPECT_EQ(back.vector("a.bias"), v);
  EXPECT_EQ(back.scalar("heads"), 4.0);
  EXPECT_THROW(back.get("missing"), Error);
}

TEST(TensorFile, RejectsShortSections) {
  std::istringstream in("[tensor w 2 2]\n1 2 3\n");
  EXPECT_THROW(TensorFile::parse(in), ParseError);
}

}  // namespace
}  // namespace blocksync
