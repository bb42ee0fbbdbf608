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

#ifndef BLOCKSYNC_SCORER_H_
#define BLOCKSYNC_SCORER_H_

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string_view>
#include <vector>

#include "blocksync/core.h"
#include "blocksync/encoder.h"

namespace blocksync {

/// Encoder blocks received so far for one utterance, plus per-scorer caches of
/// quantities derived from them (e.g. projected decoder memory).
class BlockStream {
 public:
  BlockStream() = default;
  BlockStream(const BlockStream&) = delete;
  BlockStream& operator=(const BlockStream&) = delete;

  /// Blocks must be contiguous in frames and uniform in width.
  void append(EncodedBlock block);

  size_t size() const { return blocks_.size(); }
  const EncodedBlock& block(size_t k) const { return blocks_.at(k); }
  const std::vector<EncodedBlock>& blocks() const { return blocks_; }

  /// Number of center frames in the first `count` blocks (T_b).
  int frames_through(size_t count) const;
  int total_frames() const { return frames_through(blocks_.size()); }

  /// All received encoder vectors, one row per frame.
  const Matrix& memory() const { return memory_; }
  bool has_ctc() const { return ctc_width_ > 0; }
  int ctc_width() const { return ctc_width_; }
  /// CTC log posteriors of frame t (0-based), ctc_width() entries.
  const double* ctc_row(int t) const { return ctc_.data() + static_cast<size_t>(t) * ctc_width_; }

  /// Scorer-owned derived data keyed by the scorer's address.
  template <typename T>
  std::shared_ptr<T> cache(const void* owner) const {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto& slot = caches_[owner];
    if (!slot) slot = std::make_shared<T>();
    return std::static_pointer_cast<T>(slot);
  }

 private:
  std::vector<EncodedBlock> blocks_;
  std::vector<int> cumulative_frames_{0};
  Matrix memory_;
  std::vector<double> ctc_;
  int ctc_width_ = 0;
  mutable std::mutex cache_mutex_;
  mutable std::map<const void*, std::shared_ptr<void>> caches_;
};

/// h_{1:b}: the first `count` blocks of a stream.
struct BlockView {
  const BlockStream* stream = nullptr;
  size_t count = 0;

  int frames() const { return stream ? stream->frames_through(count) : 0; }
};

/// Opaque per-hypothesis scorer state. `score` is the accumulated log score
/// of the prefix under this scorer.
class ScorerState {
 public:
  virtual ~ScorerState() = default;

  int prefix_length = 1;    // tokens including <sos>
  size_t blocks_seen = 0;   // blocks the state was computed with
  double score = 0.0;
};

/// Result of scoring one prefix: per-token increments over the vocabulary and
/// scorer-private data from which child states are derived lazily.
struct ScoreStep {
  std::vector<double> scores;
  std::shared_ptr<const void> carry;
  size_t blocks_seen = 0;
  double parent_score = 0.0;
};

/// Incremental scorer contract shared by the attention decoder, CTC prefix
/// scorer, language models and the table-driven scorer.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string_view name() const = 0;
  /// State for the bare <sos> prefix with zero accumulated score.
  virtual StatePtr init() const = 0;
  /// Scores every one-token extension of `prefix` given h_{1:b}. Scores are
  /// increments: the extension's accumulated score is state.score + scores[c].
  virtual ScoreStep score_step(const StatePtr& state, std::span<const int> prefix,
                               const BlockView& blocks) const = 0;
  /// State of prefix + token, derived from a previous score_step.
  virtual StatePtr extend(const ScoreStep& step, std::span<const int> prefix, int token,
                          const BlockView& blocks) const = 0;

 protected:
  /// Checks the prefix/block-stream preconditions shared by all scorers.
  static void check_contract(const ScorerState& state, std::span<const int> prefix,
                             const BlockView& blocks);
};

}  // namespace blocksync

#endif  // BLOCKSYNC_SCORER_H_
