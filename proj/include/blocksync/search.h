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

#ifndef BLOCKSYNC_SEARCH_H_
#define BLOCKSYNC_SEARCH_H_

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "blocksync/bbd.h"
#include "blocksync/core.h"
#include "blocksync/scorer.h"

namespace blocksync {

struct ScorerSet {
  const Scorer* attention = nullptr;  // required
  const Scorer* ctc = nullptr;
  const Scorer* lm = nullptr;
};

/// Everything a decoding run needs besides the encoder blocks.
struct SearchSetup {
  const Vocabulary* vocab = nullptr;
  ScorerSet scorers;
  DecodeConfig config;
  /// Record per-step beams and boundary checks in the trace.
  bool record_events = true;

  void validate() const;
};

struct TraceHypothesis {
  std::vector<int> tokens;
  double score = 0.0;
};

struct TraceCheck {
  std::vector<int> tokens;
  double r = kLogZero;
  double s = 0.0;
  int position = -1;
  bool reliable = true;
};

struct TraceEvent {
  enum class Kind { kStep, kCheck, kBoundary };
  Kind kind = Kind::kStep;
  int step = 0;
  int block = 0;
  bool final_phase = false;
  std::vector<TraceHypothesis> beam;       // kStep: pruned beam, eos hypotheses included
  std::vector<TraceCheck> checks;          // kCheck
  bool boundary = false;                   // kCheck
  int index_boundary = -1;                 // kBoundary: I_b
};

struct SearchTrace {
  std::vector<int> index_boundaries{0};  // I_0 = 0, I_1, ...
  std::vector<int> decode_counts;        // decode_counts[i]: times index i was searched
  int redecoded_steps = 0;
  std::vector<TraceEvent> events;
};

struct SearchResult {
  Hypothesis best;
  std::vector<Hypothesis> completed;  // Omega-hat, ranked
  /// No hypothesis reached <eos> before i_max; `best` is the top running one.
  bool forced = false;
  SearchTrace trace;
};

/// Omega_0: the bare <sos> hypothesis with initial scorer states.
Beam initial_beam(const SearchSetup& setup);

/// Expands every hypothesis by every non-blank token, scores with the fused
/// scorers over `blocks` and keeps the top K. <eos> extensions stay in the
/// returned beam; callers decide where they go.
Beam search_step(const Beam& previous, const BlockView& blocks, const SearchSetup& setup);

/// Conventional label-synchronous search over the complete block stream.
SearchResult batch_beam_search(const BlockStream& blocks, const SearchSetup& setup);

/// Streaming driver for blockwise synchronous beam search. Each non-final block
/// is decoded until block boundary detection fires; the final block runs
/// ordinary decoding to the ending criterion.
class StreamingSession {
 public:
  explicit StreamingSession(SearchSetup setup);

  /// Decodes as far as the new block allows. A block flagged is_last is only
  /// stored; its decoding happens in finalize().
  void push_block(EncodedBlock block);
  /// Treats the last pushed block as final and completes decoding.
  SearchResult finalize();

  std::optional<Hypothesis> partial_best() const;
  const SearchTrace& trace() const { return trace_; }
  const EvaluatedSet& evaluated() const { return evaluated_; }
  size_t blocks_received() const { return stream_.size(); }
  bool finalized() const { return finalized_; }

 private:
  void decode_block();

  SearchSetup setup_;
  BlockStream stream_;
  std::vector<Beam> beams_;  // beams_[i] = Omega_i, retained for rewinds
  std::vector<Hypothesis> completed_;
  EvaluatedSet evaluated_;
  SearchTrace trace_;
  bool finalized_ = false;
};

/// One-shot wrapper: pushes every block, then finalizes.
SearchResult blockwise_synchronous_beam_search(std::vector<EncodedBlock> blocks,
                                               const SearchSetup& setup);

/// Scores a token sequence (starting with <sos>) from scratch over `blocks`.
ScoreBreakdown rescore(std::span<const int> tokens, const BlockView& blocks,
                       const SearchSetup& setup);

/// Line-delimited JSON, one record per trace event.
void write_trace(std::ostream& out, const SearchTrace& trace, const Vocabulary& vocab);

}  // namespace blocksync

#endif  // BLOCKSYNC_SEARCH_H_
