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

#ifndef BLOCKSYNC_TABLE_SCORER_H_
#define BLOCKSYNC_TABLE_SCORER_H_

#include <istream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "blocksync/scorer.h"

namespace blocksync {

/// Scripted next-token distributions keyed by (prefix, number of visible
/// blocks). File lines are `PREFIX | b | token:logp token:logp ...` where b may
/// be `*`. Unlisted tokens get log-zero; a prefix without an entry yields an
/// all log-zero row. Leading `#` lines are directives: `#blocks N` and
/// `#vocab <path>` describe a scenario and are kept for the caller.
class TableScorer : public Scorer {
 public:
  TableScorer(const Vocabulary& vocab, std::string name = "table");

  static TableScorer parse(std::istream& in, const Vocabulary& vocab,
                           const std::string& source = "<table>");
  static TableScorer load(const std::string& path, const Vocabulary& vocab);

  /// `block` 0 is the wildcard.
  void set(std::vector<int> prefix, int block, std::vector<double> log_probs);
  /// Exact (prefix, block) entry, falling back to the wildcard entry.
  std::optional<std::vector<double>> lookup(std::span<const int> prefix, int block) const;

  std::string_view name() const override { return name_; }
  StatePtr init() const override;
  ScoreStep score_step(const StatePtr& state, std::span<const int> prefix,
                       const BlockView& blocks) const override;
  StatePtr extend(const ScoreStep& step, std::span<const int> prefix, int token,
                  const BlockView& blocks) const override;

  /// When set, distributions ignore the block count (language-model use).
  void set_block_independent(bool value) { block_independent_ = value; }

 private:
  int vocab_size_;
  int sos_eos_id_;
  std::string name_;
  bool block_independent_ = false;
  std::map<std::pair<std::vector<int>, int>, std::vector<double>> entries_;
};

/// Reads the leading `#key value` directives of a scenario table.
std::map<std::string, std::string> read_table_directives(const std::string& path);

}  // namespace blocksync

#endif  // BLOCKSYNC_TABLE_SCORER_H_
