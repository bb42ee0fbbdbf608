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

#include "blocksync/attention_decoder.h"

#include <map>

namespace blocksync {

struct AttentionDecoderScorer::Cache {
  size_t blocks_seen = 0;
  int positions = 0;
  std::vector<Matrix> self_k;  // per layer, one row per position
  std::vector<Matrix> self_v;
};

struct AttentionDecoderScorer::MemoryProjection {
  std::mutex mutex;
  Eigen::Index rows = 0;
  std::vector<Matrix> k;  // per layer
  std::vector<Matrix> v;
};

struct AttentionDecoderScorer::PrefixCaches {
  std::mutex mutex;
  size_t blocks_seen = 0;
  std::map<std::vector<int>, std::shared_ptr<const Cache>> entries;
};

class AttentionDecoderScorer::State : public ScorerState {
 public:
  std::shared_ptr<const Cache> cache;  // positions [0, prefix_length - 1)
};

void DecoderWeights::validate() const {
  const int d = d_model();
  const int v = vocab_size();
  if (d < 1 || v < 1) throw Error("decoder: empty embedding");
  auto check_norm = [d](const LayerNormWeights& n) {
    if (n.gamma.size() != d || n.beta.size() != d) throw Error("decoder: layer norm shape mismatch");
  };
  for (const DecoderLayerWeights& layer : layers) {
    check_norm(layer.norm1);
    check_norm(layer.norm2);
    check_norm(layer.norm3);
    layer.self_attn.validate(d);
    layer.src_attn.validate(d);
    const auto& f = layer.ffn;
    if (f.w1.rows() != d || f.b1.size() != f.w1.cols() || f.w2.rows() != f.w1.cols() ||
        f.w2.cols() != d || f.b2.size() != d) {
      throw Error("decoder: feed-forward shape mismatch");
    }
  }
  check_norm(final_norm);
  if (output_proj.rows() != d || output_proj.cols() != v || output_bias.size() != v) {
    throw Error("decoder: output projection must map d_model to |V|");
  }
}

AttentionDecoderScorer::AttentionDecoderScorer(DecoderWeights weights)
    : weights_(std::make_shared<const DecoderWeights>(std::move(weights))) {
  weights_->validate();
}

StatePtr AttentionDecoderScorer::init() const { return std::make_shared<State>(); }

std::shared_ptr<AttentionDecoderScorer::MemoryProjection> AttentionDecoderScorer::project_memory(
    const BlockView& blocks) const {
  auto proj = blocks.stream->cache<MemoryProjection>(this);
  std::lock_guard<std::mutex> lock(proj->mutex);
  const Matrix& memory = blocks.stream->memory();
  if (memory.cols() != weights_->d_model()) {
    throw Error("encoder width does not match decoder width");
  }
  const size_t layers = weights_->layers.size();
  if (proj->k.empty()) {
    proj->k.assign(layers, Matrix(0, weights_->d_model()));
    proj->v.assign(layers, Matrix(0, weights_->d_model()));
  }
  const Eigen::Index fresh = memory.rows() - proj->rows;
  if (fresh > 0) {
    const Matrix rows = memory.bottomRows(fresh);
    for (size_t l = 0; l < layers; ++l) {
      const auto& attn = weights_->layers[l].src_attn;
      proj->k[l].conservativeResize(memory.rows(), Eigen::NoChange);
      proj->k[l].bottomRows(fresh) = rows * attn.w_k;
      proj->v[l].conservativeResize(memory.rows(), Eigen::NoChange);
      proj->v[l].bottomRows(fresh) = rows * attn.w_v;
    }
    proj->rows = memory.rows();
  }
  return proj;
}

RowVector AttentionDecoderScorer::run_position(Cache& cache, int token,
                                               const MemoryProjection& memory,
                                               int frames) const {
  const DecoderWeights& w = *weights_;
  if (token < 0 || token >= w.vocab_size()) throw Error("decoder: token out of range");
  Matrix x = w.embedding.row(token) + sinusoidal_positions(cache.positions, 1, w.d_model());
  for (size_t l = 0; l < w.layers.size(); ++l) {
    const DecoderLayerWeights& layer = w.layers[l];
    const Matrix xn = layer_norm(x, layer.norm1);
    Matrix& keys = cache.self_k[l];
    Matrix& values = cache.self_v[l];
    keys.conservativeResize(keys.rows() + 1, w.d_model());
    keys.bottomRows(1) = xn * layer.self_attn.w_k;
    values.conservativeResize(values.rows() + 1, w.d_model());
    values.bottomRows(1) = xn * layer.self_attn.w_v;
    x += multi_head_attention_projected(xn, keys, values, layer.self_attn);
    x += multi_head_attention_projected(layer_norm(x, layer.norm2), memory.k[l].topRows(frames),
                                        memory.v[l].topRows(frames), layer.src_attn);
    x += feed_forward(layer_norm(x, layer.norm3), layer.ffn);
  }
  ++cache.positions;
  ++positions_computed_;
  return log_softmax(layer_norm(x, w.final_norm) * w.output_proj + w.output_bias);
}

void AttentionDecoderScorer::rebuild(Cache& cache, std::span<const int> tokens,
                                     const BlockView& blocks, const MemoryProjection& memory,
                                     int frames) const {
  auto shared = blocks.stream->cache<PrefixCaches>(this);
  size_t reused = 0;
  {
    std::lock_guard<std::mutex> lock(shared->mutex);
    if (shared->blocks_seen == blocks.count) {
      for (size_t k = tokens.size(); k > 0 && reused == 0; --k) {
        auto it = shared->entries.find(std::vector<int>(tokens.begin(), tokens.begin() + k));
        if (it != shared->entries.end()) {
          cache = *it->second;
          reused = k;
        }
      }
    }
  }
  if (reused == 0) {
    cache.blocks_seen = blocks.count;
    cache.positions = 0;
    cache.self_k.assign(weights_->layers.size(), Matrix(0, weights_->d_model()));
    cache.self_v.assign(weights_->layers.size(), Matrix(0, weights_->d_model()));
  }
  for (size_t p = reused; p < tokens.size(); ++p) run_position(cache, tokens[p], memory, frames);
  if (tokens.empty() || reused == tokens.size()) return;
  std::lock_guard<std::mutex> lock(shared->mutex);
  if (blocks.count > shared->blocks_seen) {
    shared->entries.clear();
    shared->blocks_seen = blocks.count;
  }
  if (blocks.count == shared->blocks_seen) {
    shared->entries[std::vector<int>(tokens.begin(), tokens.end())] =
        std::make_shared<const Cache>(cache);
  }
}

ScoreStep AttentionDecoderScorer::score_step(const StatePtr& state, std::span<const int> prefix,
                                             const BlockView& blocks) const {
  const auto& st = dynamic_cast<const State&>(*state);
  check_contract(st, prefix, blocks);
  const int frames = blocks.frames();
  if (frames < 1) throw Error("attention decoder needs at least one encoded frame");
  auto memory = project_memory(blocks);

  auto cache = std::make_shared<Cache>();
  if (st.cache && st.cache->blocks_seen == blocks.count) {
    *cache = *st.cache;
  } else {
    rebuild(*cache, prefix.first(prefix.size() - 1), blocks, *memory, frames);
  }
  const RowVector dist = run_position(*cache, prefix.back(), *memory, frames);

  ScoreStep step;
  step.scores.assign(dist.data(), dist.data() + dist.size());
  step.carry = std::move(cache);
  step.blocks_seen = blocks.count;
  step.parent_score = st.score;
  return step;
}

StatePtr AttentionDecoderScorer::extend(const ScoreStep& step, std::span<const int> prefix,
                                        int token, const BlockView& /*blocks*/) const {
  auto child = std::make_shared<State>();
  child->cache = std::static_pointer_cast<const Cache>(step.carry);
  child->prefix_length = static_cast<int>(prefix.size()) + 1;
  child->blocks_seen = step.blocks_seen;
  child->score = step.parent_score + step.scores.at(token);
  return child;
}

}  // namespace blocksync
