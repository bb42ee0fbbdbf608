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

#include "blocksync/nn.h"

#include <cmath>

#include "blocksync/core.h"

namespace blocksync {

namespace {

void softmax_rows(Matrix& scores) {
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double peak = scores.row(r).maxCoeff();
    scores.row(r) = (scores.row(r).array() - peak).exp();
    scores.row(r) /= scores.row(r).sum();
  }
}

}  // namespace

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() != k.cols()) throw Error("attention: query/key width mismatch");
  if (k.rows() != v.rows()) throw Error("attention: key/value length mismatch");
  if (k.rows() == 0) throw Error("attention: empty key sequence");
  Matrix scores = (q * k.transpose()) / std::sqrt(static_cast<double>(q.cols()));
  softmax_rows(scores);
  return scores * v;
}

void AttentionWeights::validate(int d_model) const {
  if (heads < 1 || d_model % heads != 0) throw Error("heads must divide d_model");
  auto square = [d_model](const Matrix& m) {
    return m.rows() == d_model && m.cols() == d_model;
  };
  if (!square(w_q) || !square(w_k) || !square(w_v) || !square(w_o)) {
    throw Error("attention projections must be d_model x d_model");
  }
}

Matrix multi_head_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                            const AttentionWeights& weights) {
  if (q.cols() != weights.w_q.rows() || k.cols() != weights.w_k.rows() ||
      v.cols() != weights.w_v.rows()) {
    throw Error("multi_head_attention: input width does not match projections");
  }
  return multi_head_attention_projected(q, k * weights.w_k, v * weights.w_v, weights);
}

Matrix multi_head_attention_projected(const Matrix& q, const Matrix& k_proj,
                                      const Matrix& v_proj, const AttentionWeights& weights) {
  const int d_model = weights.d_model();
  if (weights.heads < 1 || d_model % weights.heads != 0) {
    throw Error("multi_head_attention: heads must divide d_model");
  }
  if (q.cols() != d_model || k_proj.cols() != d_model || v_proj.cols() != d_model) {
    throw Error("multi_head_attention: dimension mismatch");
  }
  const int d = d_model / weights.heads;
  const Matrix q_proj = q * weights.w_q;
  Matrix concat(q.rows(), d_model);
  for (int m = 0; m < weights.heads; ++m) {
    concat.middleCols(m * d, d) =
        attention(q_proj.middleCols(m * d, d), k_proj.middleCols(m * d, d),
                  v_proj.middleCols(m * d, d));
  }
  return concat * weights.w_o;
}

Matrix layer_norm(const Matrix& x, const LayerNormWeights& weights) {
  if (weights.gamma.size() != x.cols() || weights.beta.size() != x.cols()) {
    throw Error("layer_norm: parameter width mismatch");
  }
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const RowVector centered = x.row(r).array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(x.cols());
    out.row(r) = (centered / std::sqrt(var + kLayerNormEps)).cwiseProduct(weights.gamma) +
                 weights.beta;
  }
  return out;
}

Matrix feed_forward(const Matrix& x, const FeedForwardWeights& weights) {
  Matrix hidden = (x * weights.w1).rowwise() + weights.b1;
  hidden = hidden.cwiseMax(0.0);
  return (hidden * weights.w2).rowwise() + weights.b2;
}

RowVector log_softmax(const RowVector& logits) {
  const double peak = logits.maxCoeff();
  const double norm = peak + std::log((logits.array() - peak).exp().sum());
  return logits.array() - norm;
}

Matrix sinusoidal_positions(int start, int count, int d_model) {
  Matrix table(count, d_model);
  for (int r = 0; r < count; ++r) {
    const double pos = start + r;
    for (int c = 0; c < d_model; ++c) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (c / 2)) / d_model);
      table(r, c) = (c % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return table;
}

}  // namespace blocksync
