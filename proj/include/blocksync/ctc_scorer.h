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

#ifndef BLOCKSYNC_CTC_SCORER_H_
#define BLOCKSYNC_CTC_SCORER_H_

#include <atomic>
#include <mutex>
#include <utility>

#include "blocksync/scorer.h"

namespace blocksync {

/// CTC prefix scorer over the frames of h_{1:b}. For prefix g and token c the
/// accumulated score is the log prefix probability
///   psi(g.c) = sum_t Phi_t(g, c) p(c | x_t),
///   Phi_t(g, c) = gamma_{t-1}^B(g) + [last(g) != c] gamma_{t-1}^N(g),
/// and <eos> scores the complete labeling, gamma_T^N(g) + gamma_T^B(g).
/// Each prefix keeps its gamma columns; when more frames arrive only the new
/// columns are computed, resuming from the last scored frame.
class CtcPrefixScorer : public Scorer {
 public:
  CtcPrefixScorer(int vocab_size, int blank_id, int eos_id);

  std::string_view name() const override { return "ctc"; }
  StatePtr init() const override;
  ScoreStep score_step(const StatePtr& state, std::span<const int> prefix,
                       const BlockView& blocks) const override;
  StatePtr extend(const ScoreStep& step, std::span<const int> prefix, int token,
                  const BlockView& blocks) const override;

  /// log psi(prefix + token) over the frames of `blocks`, and its state.
  std::pair<double, StatePtr> prefix_score(const StatePtr& state, std::span<const int> prefix,
                                           int token, const BlockView& blocks) const;

  /// Frames folded into the state so far (T_b).
  static int frames_scored(const StatePtr& state);
  /// Number of gamma columns computed over the scorer's lifetime.
  long columns_computed() const { return columns_computed_; }

 private:
  struct Node;
  class State;
  struct Carry;

  void advance(Node& node, int frames, const BlockStream& stream) const;

  int vocab_size_;
  int blank_id_;
  int eos_id_;
  mutable std::mutex mutex_;
  mutable std::atomic<long> columns_computed_{0};
};

}  // namespace blocksync

#endif  // BLOCKSYNC_CTC_SCORER_H_
