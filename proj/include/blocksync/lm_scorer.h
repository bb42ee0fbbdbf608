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

#ifndef BLOCKSYNC_LM_SCORER_H_
#define BLOCKSYNC_LM_SCORER_H_

#include <istream>
#include <string>
#include <vector>

#include "blocksync/scorer.h"

namespace blocksync {

/// Language models for shallow fusion. They condition on the prefix only and
/// ignore encoder blocks.
class UniformLm : public Scorer {
 public:
  explicit UniformLm(int vocab_size);

  std::string_view name() const override { return "lm"; }
  StatePtr init() const override;
  ScoreStep score_step(const StatePtr& state, std::span<const int> prefix,
                       const BlockView& blocks) const override;
  StatePtr extend(const ScoreStep& step, std::span<const int> prefix, int token,
                  const BlockView& blocks) const override;

 private:
  int vocab_size_;
};

/// Bigram table: log P(next | last token of the prefix). The file holds lines
/// `prev next logp`; a leading `#floor <logp>` sets the score of unlisted pairs
/// (default log 1e-10).
class BigramLm : public Scorer {
 public:
  BigramLm(const Vocabulary& vocab, double floor_log_prob = -23.025850929940457);

  static BigramLm parse(std::istream& in, const Vocabulary& vocab,
                        const std::string& source = "<lm>");
  static BigramLm load(const std::string& path, const Vocabulary& vocab);

  void set(int prev, int next, double log_prob);
  double log_prob(int prev, int next) const;

  std::string_view name() const override { return "lm"; }
  StatePtr init() const override;
  ScoreStep score_step(const StatePtr& state, std::span<const int> prefix,
                       const BlockView& blocks) const override;
  StatePtr extend(const ScoreStep& step, std::span<const int> prefix, int token,
                  const BlockView& blocks) const override;

 private:
  int vocab_size_;
  std::vector<double> table_;  // [prev * |V| + next]
};

}  // namespace blocksync

#endif  // BLOCKSYNC_LM_SCORER_H_
