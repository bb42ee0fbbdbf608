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

#include "blocksync/model.h"

#include <cmath>

#include "blocksync/core.h"

namespace blocksync {

namespace {

void put_norm(TensorFile& f, const std::string& prefix, const LayerNormWeights& n) {
  f.put(prefix + ".gamma", n.gamma);
  f.put(prefix + ".beta", n.beta);
}

LayerNormWeights get_norm(const TensorFile& f, const std::string& prefix) {
  return {f.vector(prefix + ".gamma"), f.vector(prefix + ".beta")};
}

void put_attention(TensorFile& f, const std::string& prefix, const AttentionWeights& a) {
  f.put(prefix + ".w_q", a.w_q);
  f.put(prefix + ".w_k", a.w_k);
  f.put(prefix + ".w_v", a.w_v);
  f.put(prefix + ".w_o", a.w_o);
}

AttentionWeights get_attention(const TensorFile& f, const std::string& prefix, int heads) {
  return {f.matrix(prefix + ".w_q"), f.matrix(prefix + ".w_k"), f.matrix(prefix + ".w_v"),
          f.matrix(prefix + ".w_o"), heads};
}

void put_ffn(TensorFile& f, const std::string& prefix, const FeedForwardWeights& w) {
  f.put(prefix + ".w1", w.w1);
  f.put(prefix + ".b1", w.b1);
  f.put(prefix + ".w2", w.w2);
  f.put(prefix + ".b2", w.b2);
}

FeedForwardWeights get_ffn(const TensorFile& f, const std::string& prefix) {
  return {f.matrix(prefix + ".w1"), f.vector(prefix + ".b1"), f.matrix(prefix + ".w2"),
          f.vector(prefix + ".b2")};
}

int count_indexed(const TensorFile& f, const std::string& prefix, const std::string& probe) {
  int n = 0;
  while (f.contains(prefix + std::to_string(n) + probe)) ++n;
  return n;
}

int heads_of(const TensorFile& f, const std::string& name) {
  const double h = f.scalar(name);
  if (h < 1 || h != std::floor(h)) throw Error(name + " must be a positive integer");
  return static_cast<int>(h);
}

LayerNormWeights random_norm(PortableRandom& rng, int d) {
  return {RowVector::Ones(d) + rng.row(d, 0.1), rng.row(d, 0.1)};
}

AttentionWeights random_attention(PortableRandom& rng, int d, int heads, double scale) {
  return {rng.matrix(d, d, scale), rng.matrix(d, d, scale), rng.matrix(d, d, scale),
          rng.matrix(d, d, scale), heads};
}

FeedForwardWeights random_ffn(PortableRandom& rng, int d, int ffn, double scale) {
  return {rng.matrix(d, ffn, scale), rng.row(ffn, 0.1), rng.matrix(ffn, d, scale),
          rng.row(d, 0.1)};
}

}  // namespace

double PortableRandom::uniform(double lo, double hi) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(engine_()) << 32) | engine_();
  return lo + (hi - lo) * static_cast<double>(bits >> 11) * 0x1.0p-53;
}

int PortableRandom::integer(int lo, int hi) {
  const double u = uniform();
  return std::min(hi, lo + static_cast<int>(u * (hi - lo + 1)));
}

Matrix PortableRandom::matrix(int rows, int cols, double scale) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = uniform(-scale, scale);
  }
  return m;
}

RowVector PortableRandom::row(int cols, double scale) {
  RowVector v(cols);
  for (int c = 0; c < cols; ++c) v(c) = uniform(-scale, scale);
  return v;
}

void Model::validate() const {
  if (feat_dim < 1) throw Error("model: feature dimension must be positive");
  encoder.validate(feat_dim);
  decoder.validate();
  if (decoder.d_model() != encoder.d_model()) throw Error("model: encoder/decoder width mismatch");
  if (has_ctc() && (ctc_weight.rows() != d_model() || ctc_weight.cols() != vocab_size() ||
                    ctc_bias.size() != vocab_size())) {
    throw Error("model: CTC head shape mismatch");
  }
}

Model Model::from_tensors(const TensorFile& f) {
  Model m;
  m.feat_dim = static_cast<int>(f.scalar("model.feat_dim"));
  for (int k = 0; f.contains("enc.conv" + std::to_string(k) + ".weight"); ++k) {
    const std::string p = "enc.conv" + std::to_string(k);
    m.encoder.conv.push_back({f.matrix(p + ".weight"), f.vector(p + ".bias")});
  }
  m.encoder.input_proj = f.matrix("enc.input.weight");
  m.encoder.input_bias = f.vector("enc.input.bias");
  const int enc_heads = heads_of(f, "enc.heads");
  const int enc_layers = count_indexed(f, "enc.layers.", ".self_attn.w_q");
  for (int n = 0; n < enc_layers; ++n) {
    const std::string p = "enc.layers." + std::to_string(n);
    m.encoder.layers.push_back({get_norm(f, p + ".norm1"),
                                get_attention(f, p + ".self_attn", enc_heads),
                                get_norm(f, p + ".norm2"), get_ffn(f, p + ".ffn")});
  }
  m.encoder.final_norm = get_norm(f, "enc.final_norm");

  m.decoder.embedding = f.matrix("dec.embed");
  const int dec_heads = heads_of(f, "dec.heads");
  const int dec_layers = count_indexed(f, "dec.layers.", ".self_attn.w_q");
  for (int n = 0; n < dec_layers; ++n) {
    const std::string p = "dec.layers." + std::to_string(n);
    m.decoder.layers.push_back(
        {get_norm(f, p + ".norm1"), get_attention(f, p + ".self_attn", dec_heads),
         get_norm(f, p + ".norm2"), get_attention(f, p + ".src_attn", dec_heads),
         get_norm(f, p + ".norm3"), get_ffn(f, p + ".ffn")});
  }
  m.decoder.final_norm = get_norm(f, "dec.final_norm");
  m.decoder.output_proj = f.matrix("dec.output.weight");
  m.decoder.output_bias = f.vector("dec.output.bias");
  if (f.contains("ctc.weight")) {
    m.ctc_weight = f.matrix("ctc.weight");
    m.ctc_bias = f.vector("ctc.bias");
  }
  m.validate();
  return m;
}

TensorFile Model::to_tensors() const {
  TensorFile f;
  f.put_scalar("model.feat_dim", feat_dim);
  for (size_t k = 0; k < encoder.conv.size(); ++k) {
    const std::string p = "enc.conv" + std::to_string(k);
    f.put(p + ".weight", encoder.conv[k].weight);
    f.put(p + ".bias", encoder.conv[k].bias);
  }
  f.put("enc.input.weight", encoder.input_proj);
  f.put("enc.input.bias", encoder.input_bias);
  f.put_scalar("enc.heads", encoder.layers.empty() ? 1 : encoder.layers.front().self_attn.heads);
  for (size_t n = 0; n < encoder.layers.size(); ++n) {
    const std::string p = "enc.layers." + std::to_string(n);
    const EncoderLayerWeights& l = encoder.layers[n];
    put_norm(f, p + ".norm1", l.norm1);
    put_attention(f, p + ".self_attn", l.self_attn);
    put_norm(f, p + ".norm2", l.norm2);
    put_ffn(f, p + ".ffn", l.ffn);
  }
  put_norm(f, "enc.final_norm", encoder.final_norm);

  f.put("dec.embed", decoder.embedding);
  f.put_scalar("dec.heads", decoder.layers.empty() ? 1 : decoder.layers.front().self_attn.heads);
  for (size_t n = 0; n < decoder.layers.size(); ++n) {
    const std::string p = "dec.layers." + std::to_string(n);
    const DecoderLayerWeights& l = decoder.layers[n];
    put_norm(f, p + ".norm1", l.norm1);
    put_attention(f, p + ".self_attn", l.self_attn);
    put_norm(f, p + ".norm2", l.norm2);
    put_attention(f, p + ".src_attn", l.src_attn);
    put_norm(f, p + ".norm3", l.norm3);
    put_ffn(f, p + ".ffn", l.ffn);
  }
  put_norm(f, "dec.final_norm", decoder.final_norm);
  f.put("dec.output.weight", decoder.output_proj);
  f.put("dec.output.bias", decoder.output_bias);
  if (has_ctc()) {
    f.put("ctc.weight", ctc_weight);
    f.put("ctc.bias", ctc_bias);
  }
  return f;
}

Model Model::load(const std::string& path) { return from_tensors(TensorFile::load(path)); }

void Model::save(const std::string& path) const { to_tensors().save(path); }

void Model::attach_ctc(EncodedBlock& block) const {
  if (!has_ctc()) return;
  const Matrix logits = (block.vectors * ctc_weight).rowwise() + ctc_bias;
  block.ctc_log_probs.resize(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    block.ctc_log_probs.row(r) = log_softmax(logits.row(r));
  }
}

void Model::check_features(const FeatureSequence& features) const {
  if (features.dim() != feat_dim) {
    throw Error("features have " + std::to_string(features.dim()) + " dimensions, model expects " +
                std::to_string(feat_dim));
  }
}

std::vector<EncodedBlock> Model::encode_streaming(const FeatureSequence& features,
                                                  const BlockLayout& layout) const {
  check_features(features);
  const Matrix down = downsample(features.frames, layout.downsample, encoder);
  std::vector<EncodedBlock> blocks = encode_blocks(segment_blocks(down, layout), encoder);
  for (EncodedBlock& block : blocks) attach_ctc(block);
  return blocks;
}

EncodedBlock Model::encode_batch(const FeatureSequence& features, int downsample_factor) const {
  check_features(features);
  EncodedBlock block = encode_full(downsample(features.frames, downsample_factor, encoder), encoder);
  attach_ctc(block);
  return block;
}

Model random_model(const ToyModelSpec& spec) {
  if (spec.vocab_size < 2 || spec.feat_dim < 1 || spec.d_model < 1 || spec.heads < 1 ||
      spec.d_model % spec.heads != 0 || spec.ffn_dim < 1 || spec.conv_stages < 0) {
    throw Error("toy model: invalid specification");
  }
  PortableRandom rng(spec.seed);
  const int d = spec.d_model;
  const double s = spec.scale;
  Model m;
  m.feat_dim = spec.feat_dim;
  int width = spec.feat_dim;
  for (int k = 0; k < spec.conv_stages; ++k) {
    m.encoder.conv.push_back({rng.matrix(2 * width, d, s), rng.row(d, 0.1)});
    width = d;
  }
  m.encoder.input_proj = rng.matrix(width, d, s);
  m.encoder.input_bias = rng.row(d, 0.1);
  for (int n = 0; n < spec.encoder_layers; ++n) {
    m.encoder.layers.push_back({random_norm(rng, d), random_attention(rng, d, spec.heads, s),
                                random_norm(rng, d), random_ffn(rng, d, spec.ffn_dim, s)});
  }
  m.encoder.final_norm = random_norm(rng, d);

  m.decoder.embedding = rng.matrix(spec.vocab_size, d, 1.0);
  for (int n = 0; n < spec.decoder_layers; ++n) {
    m.decoder.layers.push_back({random_norm(rng, d), random_attention(rng, d, spec.heads, s),
                                random_norm(rng, d), random_attention(rng, d, spec.heads, s),
                                random_norm(rng, d), random_ffn(rng, d, spec.ffn_dim, s)});
  }
  m.decoder.final_norm = random_norm(rng, d);
  m.decoder.output_proj = rng.matrix(d, spec.vocab_size, 1.0);
  m.decoder.output_bias = rng.row(spec.vocab_size, 0.1);
  if (spec.ctc_head) {
    m.ctc_weight = rng.matrix(d, spec.vocab_size, 1.0);
    m.ctc_bias = rng.row(spec.vocab_size, 0.1);
  }
  m.validate();
  return m;
}

Model aligned_toy_model(const AlignedToySpec& spec, int blank_id, int eos_id) {
  const int v = spec.vocab_size;
  if (v < 3 || blank_id < 0 || blank_id >= v || eos_id < 0 || eos_id >= v || blank_id == eos_id) {
    throw Error("aligned toy model: invalid vocabulary layout");
  }
  // Channel blocks of width v: [0] token, [1] successor / output, [2] own
  // frames, [3] prefix histogram. Features fill [0] (current) and [1]
  // (previous); the other blocks stay empty.
  const int d = 4 * v;
  const int tok = 0, succ = v, own = 2 * v, hist = 3 * v;
  PortableRandom rng(spec.seed);
  const LayerNormWeights plain{RowVector::Ones(d), RowVector::Zero(d)};
  Model m;
  m.feat_dim = d;
  m.encoder.input_proj = Matrix::Identity(d, d);
  m.encoder.input_bias = RowVector::Zero(d);
  m.encoder.layers.push_back({plain, random_attention(rng, d, 4, spec.encoder_noise), plain,
                              random_ffn(rng, d, d, spec.encoder_noise)});
  m.encoder.final_norm = plain;

  m.decoder.embedding = Matrix::Zero(v, d);
  for (int t = 0; t < v; ++t) m.decoder.embedding(t, tok + t) = spec.embedding_scale;
  auto zero_attention = [d]() {
    return AttentionWeights{Matrix::Zero(d, d), Matrix::Zero(d, d), Matrix::Zero(d, d),
                            Matrix::Zero(d, d), 4};
  };
  DecoderLayerWeights layer{plain, zero_attention(), plain, zero_attention(), plain, {}};
  for (int t = 0; t < v; ++t) {
    if (t != eos_id) {
      layer.self_attn.w_v(tok + t, hist + t) = 1.0;
      layer.self_attn.w_o(hist + t, hist + t) = spec.histogram_gain;
    }
    // Head 0 finds the frames whose previous token is the last output and
    // copies their current token; head 1 finds the last output's own frames.
    layer.src_attn.w_q(tok + t, 0 * v + t) = spec.attention_gain;
    layer.src_attn.w_k(succ + t, 0 * v + t) = 1.0;
    layer.src_attn.w_v(tok + t, 0 * v + t) = 1.0;
    layer.src_attn.w_o(0 * v + t, succ + t) = spec.copy_gain;
    layer.src_attn.w_q(tok + t, 1 * v + t) = spec.attention_gain;
    layer.src_attn.w_k(tok + t, 1 * v + t) = 1.0;
    layer.src_attn.w_v(tok + t, 1 * v + t) = 1.0;
    layer.src_attn.w_o(1 * v + t, own + t) = spec.copy_gain;
  }
  // Hidden units: [0, v) successor detectors, [v, 2v) own-frame detectors,
  // [2v, 3v) repetition detectors.
  FeedForwardWeights& f = layer.ffn;
  f.w1 = Matrix::Zero(d, 3 * v);
  f.b1 = RowVector::Zero(3 * v);
  f.w2 = Matrix::Zero(3 * v, d);
  f.b2 = RowVector::Zero(d);
  for (int t = 0; t < v; ++t) {
    if (t != blank_id && t != eos_id) {
      f.w1(succ + t, t) = 1.0;
      f.b1(t) = -spec.detect_threshold;
      f.w2(t, succ + eos_id) = -spec.successor_penalty;
      f.w1(own + t, v + t) = 1.0;
      f.b1(v + t) = -spec.detect_threshold;
      f.w2(v + t, succ + eos_id) = spec.frontier_boost;
    }
    if (t != eos_id) {
      f.w1(hist + t, 2 * v + t) = spec.repeat_gain;
      f.b1(2 * v + t) = -spec.repeat_threshold * spec.repeat_gain;
      f.w2(2 * v + t, succ + t) = -spec.repeat_penalty;
    }
  }
  m.decoder.layers.push_back(std::move(layer));
  m.decoder.final_norm = plain;
  m.decoder.output_proj = Matrix::Zero(d, v);
  for (int t = 0; t < v; ++t) {
    m.decoder.output_proj(succ + t, t == blank_id ? eos_id : t) = spec.output_gain;
  }
  m.decoder.output_bias = RowVector::Zero(v);
  m.decoder.output_bias(eos_id) = spec.eos_bias;

  m.ctc_weight = Matrix::Zero(d, v);
  for (int t = 0; t < v; ++t) m.ctc_weight(tok + t, t) = spec.ctc_gain;
  m.ctc_bias = RowVector::Zero(v);
  m.ctc_bias(eos_id) = -1e3;
  m.validate();
  return m;
}

FeatureSequence aligned_features(const std::vector<int>& tokens, const std::vector<int>& durations,
                                 int vocab_size, int blank_id, int eos_id, int downsample_factor,
                                 int trailing, double noise, std::uint32_t seed,
                                 double frame_shift_ms) {
  if (tokens.size() != durations.size()) throw Error("aligned features: one duration per token");
  if (downsample_factor < 1 || trailing < 0) throw Error("aligned features: invalid geometry");
  int total = trailing;
  for (int dur : durations) {
    if (dur < 1) throw Error("aligned features: durations must be positive");
    total += dur;
  }
  if (total < 1) throw Error("aligned features: empty utterance");
  PortableRandom rng(seed);
  FeatureSequence seq;
  seq.frame_shift_ms = frame_shift_ms;
  seq.frames.resize(static_cast<Eigen::Index>(total) * downsample_factor, 4 * vocab_size);
  int row = 0;
  auto emit = [&](int current, int previous, int frames) {
    for (int k = 0; k < frames * downsample_factor; ++k, ++row) {
      for (int c = 0; c < 4 * vocab_size; ++c) seq.frames(row, c) = rng.uniform(-noise, noise);
      seq.frames(row, current) += 10.0;
      seq.frames(row, vocab_size + previous) += 10.0;
    }
  };
  int previous = eos_id;
  for (size_t k = 0; k < tokens.size(); ++k) {
    if (tokens[k] < 0 || tokens[k] >= vocab_size || tokens[k] == blank_id || tokens[k] == eos_id) {
      throw Error("aligned features: token out of range");
    }
    emit(tokens[k], previous, durations[k]);
    previous = tokens[k];
  }
  emit(blank_id, previous, trailing);
  return seq;
}

}  // namespace blocksync
