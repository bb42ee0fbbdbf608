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

#include "blocksync/encoder.h"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace blocksync {

FeatureSequence FeatureSequence::parse(std::istream& in, const std::string& source) {
  std::string line;
  int line_no = 0;
  auto next_content_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_content_line()) throw ParseError(source, line_no, "empty feature file");
  std::istringstream header(line);
  long frames = 0, dim = 0;
  double shift = 0.0;
  if (!(header >> frames >> dim >> shift) || frames < 1 || dim < 1 || !(shift > 0)) {
    throw ParseError(source, line_no, "expected header 'T F frame_shift_ms'");
  }
  FeatureSequence seq;
  seq.frame_shift_ms = shift;
  seq.frames.resize(frames, dim);
  for (long t = 0; t < frames; ++t) {
    if (!next_content_line()) {
      throw ParseError(source, line_no, "expected " + std::to_string(frames) + " frames, found " +
                                            std::to_string(t));
    }
    std::istringstream row(line);
    for (long f = 0; f < dim; ++f) {
      std::string word;
      if (!(row >> word)) throw ParseError(source, line_no, "too few values in frame");
      try {
        size_t used = 0;
        seq.frames(t, f) = std::stod(word, &used);
        if (used != word.size()) throw std::invalid_argument(word);
      } catch (const std::exception&) {
        throw ParseError(source, line_no, "malformed number '" + word + "'");
      }
    }
    std::string extra;
    if (row >> extra) throw ParseError(source, line_no, "too many values in frame");
  }
  if (next_content_line()) throw ParseError(source, line_no, "trailing data after frames");
  return seq;
}

FeatureSequence FeatureSequence::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open feature file: " + path);
  return parse(in, path);
}

void FeatureSequence::write(std::ostream& out) const {
  out << num_frames() << ' ' << dim() << ' ' << frame_shift_ms << '\n';
  out << std::setprecision(17);
  for (int t = 0; t < num_frames(); ++t) {
    for (int f = 0; f < dim(); ++f) out << (f ? " " : "") << frames(t, f);
    out << '\n';
  }
}

void EncoderWeights::validate(int feat_dim) const {
  int width = feat_dim;
  for (const ConvStage& stage : conv) {
    if (stage.weight.rows() != 2 * width || stage.bias.size() != stage.weight.cols()) {
      throw Error("encoder: convolution shape mismatch");
    }
    width = static_cast<int>(stage.weight.cols());
  }
  if (input_proj.rows() != width) throw Error("encoder: input projection shape mismatch");
  const int d = d_model();
  if (d < 1 || input_bias.size() != d) throw Error("encoder: input bias shape mismatch");
  auto check_norm = [d](const LayerNormWeights& n) {
    if (n.gamma.size() != d || n.beta.size() != d) throw Error("encoder: layer norm shape mismatch");
  };
  for (const EncoderLayerWeights& layer : layers) {
    check_norm(layer.norm1);
    check_norm(layer.norm2);
    layer.self_attn.validate(d);
    const auto& f = layer.ffn;
    if (f.w1.rows() != d || f.b1.size() != f.w1.cols() || f.w2.rows() != f.w1.cols() ||
        f.w2.cols() != d || f.b2.size() != d) {
      throw Error("encoder: feed-forward shape mismatch");
    }
  }
  check_norm(final_norm);
}

Matrix downsample(const Matrix& frames, int factor, const EncoderWeights& weights) {
  if (factor < 1) throw Error("downsample factor must be at least 1");
  if (!weights.conv.empty()) {
    if (factor != (1 << weights.conv.size())) {
      throw Error("downsample factor " + std::to_string(factor) + " does not match " +
                  std::to_string(weights.conv.size()) + " convolution stages");
    }
    Matrix x = frames;
    for (const ConvStage& stage : weights.conv) {
      if (stage.weight.rows() != 2 * x.cols()) throw Error("convolution input width mismatch");
      const Eigen::Index out_len = x.rows() / 2;
      Matrix pairs(out_len, 2 * x.cols());
      for (Eigen::Index r = 0; r < out_len; ++r) {
        pairs.row(r) << x.row(2 * r), x.row(2 * r + 1);
      }
      x = ((pairs * stage.weight).rowwise() + stage.bias).cwiseMax(0.0);
    }
    return x;
  }
  const Eigen::Index out_len = frames.rows() / factor;
  Matrix out(out_len, frames.cols());
  for (Eigen::Index r = 0; r < out_len; ++r) {
    out.row(r) = frames.middleRows(r * factor, factor).colwise().mean();
  }
  return out;
}

std::vector<BlockSpan> block_spans(int num_frames, const BlockLayout& layout) {
  layout.validate();
  if (num_frames < 1) throw Error("input shorter than one downsampled frame");
  std::vector<BlockSpan> spans;
  for (int start = 0, index = 1; start < num_frames; start += layout.n_center, ++index) {
    BlockSpan s;
    s.index = index;
    s.center_begin = start;
    s.center_end = std::min(num_frames, start + layout.n_center);
    s.begin = std::max(0, start - layout.n_left);
    s.end = std::min(num_frames, start + layout.n_center + layout.n_right);
    s.is_last = s.center_end == num_frames;
    spans.push_back(s);
  }
  return spans;
}

std::vector<BlockInput> segment_blocks(const Matrix& downsampled, const BlockLayout& layout) {
  std::vector<BlockInput> blocks;
  for (const BlockSpan& span : block_spans(static_cast<int>(downsampled.rows()), layout)) {
    blocks.push_back({span, downsampled.middleRows(span.begin, span.end - span.begin)});
  }
  return blocks;
}

std::vector<BlockInput> segment_blocks(const FeatureSequence& seq, const BlockLayout& layout) {
  return segment_blocks(downsample(seq.frames, layout.downsample, EncoderWeights{}), layout);
}

ContextState ContextState::initial(int num_layers, int d_model) {
  return ContextState{Matrix::Zero(num_layers, d_model), false};
}

std::pair<EncodedBlock, ContextState> encode_block(const BlockInput& block,
                                                   const ContextState& context,
                                                   const EncoderWeights& weights) {
  const int d = weights.d_model();
  const int layers = weights.num_layers();
  if (context.vectors.rows() != layers || context.vectors.cols() != d) {
    throw Error("context state does not match encoder layers/width");
  }
  const BlockSpan& span = block.span;
  if (block.frames.rows() != span.end - span.begin || block.frames.rows() < 1) {
    throw Error("block frames do not match block span");
  }
  if (block.frames.cols() != weights.input_proj.rows()) {
    throw Error("block feature width does not match the encoder input projection");
  }
  Matrix x = (block.frames * weights.input_proj).rowwise() + weights.input_bias;
  x += sinusoidal_positions(span.begin, static_cast<int>(x.rows()), d);

  ContextState next{Matrix(layers, d), true};
  RowVector ctx = x.colwise().mean();
  const Eigen::Index rows = x.rows();
  for (int n = 0; n < layers; ++n) {
    const EncoderLayerWeights& layer = weights.layers[n];
    next.vectors.row(n) = ctx;
    Matrix query(rows + 1, d);
    query << x, ctx;
    Matrix memory;
    if (context.has_history) {
      memory.resize(rows + 1, d);
      memory << x, context.vectors.row(n);
    } else {
      memory = x;
    }
    const Matrix q_norm = layer_norm(query, layer.norm1);
    const Matrix kv_norm = layer_norm(memory, layer.norm1);
    Matrix out = multi_head_attention(q_norm, kv_norm, kv_norm, layer.self_attn) + query;
    out += feed_forward(layer_norm(out, layer.norm2), layer.ffn);
    if (!out.allFinite()) throw Error("numerical overflow in encoder");
    x = out.topRows(rows);
    ctx = out.row(rows);
  }
  const Matrix normed = layer_norm(x, weights.final_norm);
  if (!normed.allFinite()) throw Error("numerical overflow in encoder");

  EncodedBlock encoded;
  encoded.index = span.index;
  encoded.frame_start = span.center_begin;
  encoded.frame_end = span.center_end;
  encoded.is_last = span.is_last;
  encoded.vectors = normed.middleRows(span.center_begin - span.begin,
                                      span.center_end - span.center_begin);
  return {std::move(encoded), std::move(next)};
}

std::vector<EncodedBlock> encode_blocks(const std::vector<BlockInput>& blocks,
                                        const EncoderWeights& weights) {
  std::vector<EncodedBlock> out;
  ContextState context = ContextState::initial(weights.num_layers(), weights.d_model());
  for (const BlockInput& block : blocks) {
    auto [encoded, next] = encode_block(block, context, weights);
    out.push_back(std::move(encoded));
    context = std::move(next);
  }
  return out;
}

EncodedBlock encode_full(const Matrix& downsampled, const EncoderWeights& weights) {
  const int frames = static_cast<int>(downsampled.rows());
  if (frames < 1) throw Error("input shorter than one downsampled frame");
  BlockLayout whole;
  whole.n_left = 0;
  whole.n_center = frames;
  whole.n_right = 0;
  auto blocks = segment_blocks(downsampled, whole);
  return encode_block(blocks.front(),
                      ContextState::initial(weights.num_layers(), weights.d_model()), weights)
      .first;
}

double theoretical_delay(const BlockLayout& layout) {
  layout.validate();
  return layout.n_center * layout.downsample * layout.frame_shift_ms / 1000.0;
}

}  // namespace blocksync
