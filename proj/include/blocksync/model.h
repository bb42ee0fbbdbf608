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

#ifndef BLOCKSYNC_MODEL_H_
#define BLOCKSYNC_MODEL_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "blocksync/attention_decoder.h"
#include "blocksync/encoder.h"
#include "blocksync/tensor_io.h"

namespace blocksync {

/// Encoder, attention decoder and CTC head of one toy ASR model.
struct Model {
  int feat_dim = 0;
  EncoderWeights encoder;
  DecoderWeights decoder;
  Matrix ctc_weight;  // [d_model x |V|], empty when the model has no CTC head
  RowVector ctc_bias;

  int vocab_size() const { return decoder.vocab_size(); }
  int d_model() const { return encoder.d_model(); }
  bool has_ctc() const { return ctc_weight.size() > 0; }
  void validate() const;

  static Model from_tensors(const TensorFile& file);
  TensorFile to_tensors() const;
  static Model load(const std::string& path);
  void save(const std::string& path) const;

  /// Fills block.ctc_log_probs from the CTC head.
  void attach_ctc(EncodedBlock& block) const;

  /// Blockwise streaming encoding of a whole utterance.
  std::vector<EncodedBlock> encode_streaming(const FeatureSequence& features,
                                             const BlockLayout& layout) const;
  /// Full-utterance encoding as a single final block.
  EncodedBlock encode_batch(const FeatureSequence& features, int downsample_factor) const;
  /// Throws unless the feature width matches feat_dim.
  void check_features(const FeatureSequence& features) const;
};

struct ToyModelSpec {
  int vocab_size = 8;
  int feat_dim = 8;
  int d_model = 16;
  int heads = 2;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int ffn_dim = 32;
  /// Number of stride-2 convolution stages; 0 selects strided averaging.
  int conv_stages = 0;
  double scale = 0.5;
  bool ctc_head = true;
  std::uint32_t seed = 1;
};

/// Deterministic random weights, identical across standard libraries.
Model random_model(const ToyModelSpec& spec);

/// Hand-built model that transcribes features made by aligned_features():
/// the decoder reads the frames whose "previous token" channel matches the
/// last emitted token and emits <eos> when no such frame has been encoded.
struct AlignedToySpec {
  int vocab_size = 64;
  double embedding_scale = 1000.0;
  double histogram_gain = 20.0;
  double attention_gain = 1.0;
  double copy_gain = 100.0;
  double detect_threshold = 6.0;
  double successor_penalty = 600.0;
  double frontier_boost = 600.0;
  double repeat_gain = 1000.0;
  double repeat_threshold = 0.015;
  double repeat_penalty = 100.0;
  double output_gain = 2.0;
  double eos_bias = -5.0;
  double ctc_gain = 4.0;
  /// Amplitude of the random perturbation of the encoder layer.
  double encoder_noise = 0.02;
  std::uint32_t seed = 1;
};

Model aligned_toy_model(const AlignedToySpec& spec, int blank_id, int eos_id);

/// Features for a token sequence: token k occupies durations[k] downsampled
/// frames, followed by `trailing` frames of silence (the blank channel).
FeatureSequence aligned_features(const std::vector<int>& tokens, const std::vector<int>& durations,
                                 int vocab_size, int blank_id, int eos_id, int downsample_factor,
                                 int trailing, double noise, std::uint32_t seed,
                                 double frame_shift_ms = 10.0);

/// Uniform draws in [lo, hi) from a mt19937 stream, independent of the
/// standard library's distribution implementations.
class PortableRandom {
 public:
  explicit PortableRandom(std::uint32_t seed) : engine_(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0);
  int integer(int lo, int hi);  // inclusive range
  Matrix matrix(int rows, int cols, double scale);
  RowVector row(int cols, double scale);

 private:
  std::mt19937 engine_;
};

}  // namespace blocksync

#endif  // BLOCKSYNC_MODEL_H_
