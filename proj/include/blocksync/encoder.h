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

#ifndef BLOCKSYNC_ENCODER_H_
#define BLOCKSYNC_ENCODER_H_

#include <string>
#include <utility>
#include <vector>

#include "blocksync/core.h"
#include "blocksync/nn.h"

namespace blocksync {

/// Acoustic features, one row per input frame.
struct FeatureSequence {
  Matrix frames;
  double frame_shift_ms = 10.0;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }
  double duration_seconds() const { return num_frames() * frame_shift_ms / 1000.0; }

  /// Header `T F frame_shift_ms`, then T rows of F numbers.
  static FeatureSequence parse(std::istream& in, const std::string& source = "<features>");
  static FeatureSequence load(const std::string& path);
  void write(std::ostream& out) const;
};

/// One stride-2 downsampling stage. Kernel width equals the stride, so each
/// output frame sees two adjacent input frames: weight is [2*in x out].
struct ConvStage {
  Matrix weight;
  RowVector bias;
};

struct EncoderLayerWeights {
  LayerNormWeights norm1;
  AttentionWeights self_attn;
  LayerNormWeights norm2;
  FeedForwardWeights ffn;
};

struct EncoderWeights {
  std::vector<ConvStage> conv;  // empty: strided averaging
  Matrix input_proj;            // [feat_after_downsampling x d_model]
  RowVector input_bias;
  std::vector<EncoderLayerWeights> layers;
  LayerNormWeights final_norm;

  int d_model() const { return static_cast<int>(input_proj.cols()); }
  int num_layers() const { return static_cast<int>(layers.size()); }
  void validate(int feat_dim) const;
};

/// Runs the downsampling front end. With conv stages present the factor must
/// be 2^stages; otherwise frames are averaged in non-overlapping groups.
/// Output length is floor(T / factor).
Matrix downsample(const Matrix& frames, int factor, const EncoderWeights& weights);

/// Geometry of one block over L downsampled frames; ranges are half-open.
struct BlockSpan {
  int index = 0;  // 1-based
  int begin = 0;
  int end = 0;
  int center_begin = 0;
  int center_end = 0;
  bool is_last = false;
};

std::vector<BlockSpan> block_spans(int num_frames, const BlockLayout& layout);

struct BlockInput {
  BlockSpan span;
  Matrix frames;  // downsampled frames [span.begin, span.end)
};

/// Segments already-downsampled frames into overlapping blocks whose centers
/// tile the sequence.
std::vector<BlockInput> segment_blocks(const Matrix& downsampled, const BlockLayout& layout);

/// Downsamples with strided averaging, then segments.
std::vector<BlockInput> segment_blocks(const FeatureSequence& seq, const BlockLayout& layout);

/// Context embeddings handed from block b to block b+1: row n is the context
/// vector produced by layer n of block b (row 0 comes from the block input)
/// and feeds layer n+1 of the next block.
struct ContextState {
  Matrix vectors;
  bool has_history = false;

  static ContextState initial(int num_layers, int d_model);
};

/// One block of encoder output: the center frames only.
struct EncodedBlock {
  int index = 0;  // 1-based
  Matrix vectors;
  int frame_start = 0;
  int frame_end = 0;
  bool is_last = false;
  /// Optional CTC log posteriors, one row per center frame, |V| columns.
  Matrix ctc_log_probs;

  int num_frames() const { return frame_end - frame_start; }
};

/// Encodes one block, augmenting every layer's self-attention with the
/// previous block's context embedding, and returns the next context.
std::pair<EncodedBlock, ContextState> encode_block(const BlockInput& block,
                                                   const ContextState& context,
                                                   const EncoderWeights& weights);

/// Runs all blocks of an utterance in order.
std::vector<EncodedBlock> encode_blocks(const std::vector<BlockInput>& blocks,
                                        const EncoderWeights& weights);

/// Full-utterance encoding as a single block without context history.
EncodedBlock encode_full(const Matrix& downsampled, const EncoderWeights& weights);

/// Seconds between block emissions: n_center * downsample * frame_shift.
double theoretical_delay(const BlockLayout& layout);

}  // namespace blocksync

#endif  // BLOCKSYNC_ENCODER_H_
