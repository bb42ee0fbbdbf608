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

#ifndef BLOCKSYNC_NN_H_
#define BLOCKSYNC_NN_H_

#include <Eigen/Dense>

namespace blocksync {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// softmax(Q K^T / sqrt(d)) V with d = Q.cols().
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v);

/// Projection matrices of one multi-head attention block. w_q, w_k and w_v are
/// [d_model x d_model]; head m owns columns [m*d, (m+1)*d) with
/// d = d_model / heads. w_o maps the concatenated heads back to d_model.
struct AttentionWeights {
  Matrix w_q;
  Matrix w_k;
  Matrix w_v;
  Matrix w_o;
  int heads = 1;

  int d_model() const { return static_cast<int>(w_q.rows()); }
  void validate(int d_model) const;
};

Matrix multi_head_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                            const AttentionWeights& weights);

/// Multi-head attention where K and V were already projected with w_k / w_v.
/// Lets callers cache the key/value projections.
Matrix multi_head_attention_projected(const Matrix& q, const Matrix& k_proj,
                                      const Matrix& v_proj, const AttentionWeights& weights);

struct LayerNormWeights {
  RowVector gamma;
  RowVector beta;
};

inline constexpr double kLayerNormEps = 1e-12;

Matrix layer_norm(const Matrix& x, const LayerNormWeights& weights);

struct FeedForwardWeights {
  Matrix w1;
  RowVector b1;
  Matrix w2;
  RowVector b2;
};

/// max(0, x W1 + b1) W2 + b2
Matrix feed_forward(const Matrix& x, const FeedForwardWeights& weights);

RowVector log_softmax(const RowVector& logits);

/// Rows [start, start + count) of the standard sinusoidal position table.
Matrix sinusoidal_positions(int start, int count, int d_model);

}  // namespace blocksync

#endif  // BLOCKSYNC_NN_H_
