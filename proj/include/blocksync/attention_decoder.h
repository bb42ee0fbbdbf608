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

#ifndef BLOCKSYNC_ATTENTION_DECODER_H_
#define BLOCKSYNC_ATTENTION_DECODER_H_

#include <atomic>
#include <memory>
#include <vector>

#include "blocksync/nn.h"
#include "blocksync/scorer.h"

namespace blocksync {

struct DecoderLayerWeights {
  LayerNormWeights norm1;
  AttentionWeights self_attn;
  LayerNormWeights norm2;
  AttentionWeights src_attn;
  LayerNormWeights norm3;
  FeedForwardWeights ffn;
};

struct DecoderWeights {
  Matrix embedding;  // [|V| x d_model]
  std::vector<DecoderLayerWeights> layers;
  LayerNormWeights final_norm;
  Matrix output_proj;  // [d_model x |V|]
  RowVector output_bias;

  int vocab_size() const { return static_cast<int>(embedding.rows()); }
  int d_model() const { return static_cast<int>(embedding.cols()); }
  void validate() const;
};

/// Transformer decoder (pre-norm self-attention, source attention over
/// h_{1:b}, feed-forward) scoring the next token. Self-attention keys and
/// values of the emitted prefix are cached per hypothesis; the cache is rebuilt
/// when the number of visible blocks changes, since deeper layers of earlier
/// positions depend on the encoder memory.
class AttentionDecoderScorer : public Scorer {
 public:
  explicit AttentionDecoderScorer(DecoderWeights weights);

  std::string_view name() const override { return "attention"; }
  StatePtr init() const override;
  ScoreStep score_step(const StatePtr& state, std::span<const int> prefix,
                       const BlockView& blocks) const override;
  StatePtr extend(const ScoreStep& step, std::span<const int> prefix, int token,
                  const BlockView& blocks) const override;

  const DecoderWeights& weights() const { return *weights_; }

  /// Decoder positions run so far, including cache rebuilds.
  long positions_computed() const { return positions_computed_; }

 private:
  struct Cache;
  struct MemoryProjection;
  struct PrefixCaches;
  class State;

  std::shared_ptr<MemoryProjection> project_memory(const BlockView& blocks) const;
  /// Runs the decoder over `tokens` against `frames`, reusing the longest
  /// prefix already rebuilt for the same block count.
  void rebuild(Cache& cache, std::span<const int> tokens, const BlockView& blocks,
               const MemoryProjection& memory, int frames) const;
  RowVector run_position(Cache& cache, int token, const MemoryProjection& memory,
                         int frames) const;

  std::shared_ptr<const DecoderWeights> weights_;
  mutable std::atomic<long> positions_computed_{0};
};

}  // namespace blocksync

#endif  // BLOCKSYNC_ATTENTION_DECODER_H_
