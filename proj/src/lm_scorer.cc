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

#include "blocksync/lm_scorer.h"

#include <cmath>
#include <fstream>
#include <sstream>

namespace blocksync {

namespace {

// LM states only track prefix length; block counts are irrelevant.
void check_prefix(const ScorerState& state, std::span<const int> prefix) {
  if (static_cast<int>(prefix.size()) != state.prefix_length) {
    throw Error("prefix does not match scorer state");
  }
}

StatePtr child_state(const ScoreStep& step, std::span<const int> prefix, int token) {
  auto child = std::make_shared<ScorerState>();
  child->prefix_length = static_cast<int>(prefix.size()) + 1;
  child->score = step.parent_score + step.scores.at(token);
  return child;
}

}  // namespace

UniformLm::UniformLm(int vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size < 1) throw Error("uniform LM needs a non-empty vocabulary");
}

StatePtr UniformLm::init() const { return std::make_shared<ScorerState>(); }

ScoreStep UniformLm::score_step(const StatePtr& state, std::span<const int> prefix,
                                const BlockView& /*blocks*/) const {
  check_prefix(*state, prefix);
  ScoreStep step;
  step.scores.assign(vocab_size_, -std::log(static_cast<double>(vocab_size_)));
  step.parent_score = state->score;
  return step;
}

StatePtr UniformLm::extend(const ScoreStep& step, std::span<const int> prefix, int token,
                           const BlockView& /*blocks*/) const {
  return child_state(step, prefix, token);
}

BigramLm::BigramLm(const Vocabulary& vocab, double floor_log_prob)
    : vocab_size_(vocab.size()),
      table_(static_cast<size_t>(vocab.size()) * vocab.size(), floor_log_prob) {}

BigramLm BigramLm::parse(std::istream& in, const Vocabulary& vocab, const std::string& source) {
  std::string line;
  int line_no = 0;
  std::vector<std::string> body;
  std::vector<int> body_lines;
  double floor = -23.025850929940457;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string first;
    if (!(ss >> first)) continue;
    if (first == "#floor") {
      if (!(ss >> floor)) throw ParseError(source, line_no, "#floor needs a value");
      continue;
    }
    body.push_back(line);
    body_lines.push_back(line_no);
  }
  BigramLm lm(vocab, floor);
  for (size_t i = 0; i < body.size(); ++i) {
    std::istringstream ss(body[i]);
    std::string prev, next, extra;
    double logp = 0.0;
    if (!(ss >> prev >> next >> logp) || (ss >> extra)) {
      throw ParseError(source, body_lines[i], "expected 'prev next logp'");
    }
    auto p = vocab.find(prev);
    auto n = vocab.find(next);
    if (!p || !n) throw ParseError(source, body_lines[i], "unknown token");
    lm.set(*p, *n, logp);
  }
  return lm;
}

BigramLm BigramLm::load(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open LM file: " + path);
  return parse(in, vocab, path);
}

void BigramLm::set(int prev, int next, double log_prob) {
  table_.at(static_cast<size_t>(prev) * vocab_size_ + next) = log_prob;
}

double BigramLm::log_prob(int prev, int next) const {
  return table_.at(static_cast<size_t>(prev) * vocab_size_ + next);
}

StatePtr BigramLm::init() const { return std::make_shared<ScorerState>(); }

ScoreStep BigramLm::score_step(const StatePtr& state, std::span<const int> prefix,
                               const BlockView& /*blocks*/) const {
  check_prefix(*state, prefix);
  ScoreStep step;
  const auto row = table_.begin() + static_cast<long>(prefix.back()) * vocab_size_;
  step.scores.assign(row, row + vocab_size_);
  step.parent_score = state->score;
  return step;
}

StatePtr BigramLm::extend(const ScoreStep& step, std::span<const int> prefix, int token,
                          const BlockView& /*blocks*/) const {
  return child_state(step, prefix, token);
}

}  // namespace blocksync
