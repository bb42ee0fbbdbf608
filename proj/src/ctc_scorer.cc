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

#include "blocksync/ctc_scorer.h"

#include <cmath>
#include <vector>

namespace blocksync {

namespace {

constexpr double kPosteriorTolerance = 1e-4;

}  // namespace

struct CtcPrefixScorer::Node {
  std::shared_ptr<Node> parent;
  int token = -1;  // -1 marks the <sos> root
  int depth = 1;   // prefix length including <sos>
  std::vector<double> gamma_n;  // index t = 0..frames
  std::vector<double> gamma_b;
  std::vector<double> psi;  // per extension token, summed over t <= psi_frames
  int psi_frames = 0;

  int frames() const { return static_cast<int>(gamma_n.size()) - 1; }
};

class CtcPrefixScorer::State : public ScorerState {
 public:
  std::shared_ptr<Node> node;
  int frames = 0;
};

struct CtcPrefixScorer::Carry {
  std::shared_ptr<Node> node;
  int frames = 0;
  double complete = kLogZero;
};

CtcPrefixScorer::CtcPrefixScorer(int vocab_size, int blank_id, int eos_id)
    : vocab_size_(vocab_size), blank_id_(blank_id), eos_id_(eos_id) {
  if (vocab_size < 2 || blank_id < 0 || blank_id >= vocab_size || eos_id < 0 ||
      eos_id >= vocab_size || blank_id == eos_id) {
    throw Error("CTC scorer: invalid vocabulary layout");
  }
}

StatePtr CtcPrefixScorer::init() const {
  auto root = std::make_shared<Node>();
  root->gamma_n = {kLogZero};
  root->gamma_b = {0.0};
  auto state = std::make_shared<State>();
  state->node = std::move(root);
  return state;
}

int CtcPrefixScorer::frames_scored(const StatePtr& state) {
  return dynamic_cast<const State&>(*state).frames;
}

void CtcPrefixScorer::advance(Node& node, int frames, const BlockStream& stream) const {
  if (node.frames() >= frames) return;
  if (stream.ctc_width() != vocab_size_) {
    throw Error("CTC posteriors have " + std::to_string(stream.ctc_width()) +
                " columns, expected " + std::to_string(vocab_size_));
  }
  if (node.parent) advance(*node.parent, frames, stream);
  for (int t = node.frames() + 1; t <= frames; ++t) {
    const double* row = stream.ctc_row(t - 1);
    double gn = kLogZero;
    double gb = kLogZero;
    if (!node.parent) {
      double mass = 0.0;
      for (int c = 0; c < vocab_size_; ++c) mass += std::exp(row[c]);
      if (std::abs(mass - 1.0) > kPosteriorTolerance) {
        throw Error("CTC posterior row " + std::to_string(t) + " sums to " +
                    std::to_string(mass));
      }
      gb = node.gamma_b[t - 1] + row[blank_id_];
    } else {
      const Node& parent = *node.parent;
      double phi = parent.gamma_b[t - 1];
      if (parent.token != node.token) phi = log_add(phi, parent.gamma_n[t - 1]);
      gn = log_add(node.gamma_n[t - 1], phi) + row[node.token];
      gb = log_add(node.gamma_b[t - 1], node.gamma_n[t - 1]) + row[blank_id_];
    }
    node.gamma_n.push_back(gn);
    node.gamma_b.push_back(gb);
    ++columns_computed_;
  }
}

ScoreStep CtcPrefixScorer::score_step(const StatePtr& state, std::span<const int> prefix,
                                      const BlockView& blocks) const {
  const auto& st = dynamic_cast<const State&>(*state);
  check_contract(st, prefix, blocks);
  if (!st.node || st.node->depth != static_cast<int>(prefix.size())) {
    throw Error("prefix does not match CTC state");
  }
  const int frames = blocks.frames();
  if (frames < st.frames) throw Error("non-monotone block stream");

  std::lock_guard<std::mutex> lock(mutex_);
  Node& node = *st.node;
  if (frames > 0) advance(node, frames, *blocks.stream);
  if (node.psi.empty()) node.psi.assign(vocab_size_, kLogZero);
  for (int t = node.psi_frames + 1; t <= frames; ++t) {
    const double* row = blocks.stream->ctc_row(t - 1);
    for (int c = 0; c < vocab_size_; ++c) {
      if (c == blank_id_ || c == eos_id_) continue;
      double phi = node.gamma_b[t - 1];
      if (node.token != c) phi = log_add(phi, node.gamma_n[t - 1]);
      node.psi[c] = log_add(node.psi[c], phi + row[c]);
    }
  }
  node.psi_frames = std::max(node.psi_frames, frames);

  auto carry = std::make_shared<Carry>();
  carry->node = st.node;
  carry->frames = frames;
  carry->complete = log_add(node.gamma_n[frames], node.gamma_b[frames]);

  ScoreStep step;
  step.scores.resize(vocab_size_);
  if (st.score == kLogZero) {
    // Nothing extends an impossible prefix.
    step.scores.assign(vocab_size_, kLogZero);
  } else {
    for (int c = 0; c < vocab_size_; ++c) step.scores[c] = node.psi[c] - st.score;
    step.scores[blank_id_] = kLogZero;
    step.scores[eos_id_] = carry->complete - st.score;
  }
  step.blocks_seen = blocks.count;
  step.parent_score = st.score;
  step.carry = std::move(carry);
  return step;
}

StatePtr CtcPrefixScorer::extend(const ScoreStep& step, std::span<const int> prefix, int token,
                                 const BlockView& blocks) const {
  if (token == blank_id_) throw Error("CTC prefix cannot be extended by the blank");
  if (token < 0 || token >= vocab_size_) throw Error("CTC: token out of range");
  const auto& carry = *std::static_pointer_cast<const Carry>(step.carry);
  auto child = std::make_shared<State>();
  child->prefix_length = static_cast<int>(prefix.size()) + 1;
  child->blocks_seen = step.blocks_seen;
  child->frames = carry.frames;
  child->score = step.parent_score + step.scores[token];
  if (token == eos_id_) {
    // Complete hypotheses are never extended again.
    child->node = carry.node;
    return child;
  }
  auto node = std::make_shared<Node>();
  node->parent = carry.node;
  node->token = token;
  node->depth = carry.node->depth + 1;
  node->gamma_n = {kLogZero};
  node->gamma_b = {kLogZero};
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (carry.frames > 0) advance(*node, carry.frames, *blocks.stream);
  }
  child->node = std::move(node);
  return child;
}

std::pair<double, StatePtr> CtcPrefixScorer::prefix_score(const StatePtr& state,
                                                          std::span<const int> prefix, int token,
                                                          const BlockView& blocks) const {
  if (token == blank_id_) throw Error("CTC prefix cannot be extended by the blank");
  const ScoreStep step = score_step(state, prefix, blocks);
  return {state->score + step.scores.at(token), extend(step, prefix, token, blocks)};
}

}  // namespace blocksync
