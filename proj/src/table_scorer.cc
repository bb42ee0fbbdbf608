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

#include "blocksync/table_scorer.h"

#include <fstream>
#include <sstream>

namespace blocksync {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_log_prob(const std::string& text, const std::string& source, int line) {
  if (text == "-inf") return kLogZero;
  try {
    size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ParseError(source, line, "malformed log-probability '" + text + "'");
  }
}

}  // namespace

TableScorer::TableScorer(const Vocabulary& vocab, std::string name)
    : vocab_size_(vocab.size()), sos_eos_id_(vocab.sos_eos_id()), name_(std::move(name)) {}

TableScorer TableScorer::parse(std::istream& in, const Vocabulary& vocab,
                               const std::string& source) {
  TableScorer table(vocab);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string content = trim(line);
    if (content.empty() || content[0] == '#') continue;
    const auto bar1 = content.find('|');
    const auto bar2 = bar1 == std::string::npos ? bar1 : content.find('|', bar1 + 1);
    if (bar2 == std::string::npos) {
      throw ParseError(source, line_no, "expected 'PREFIX | b | token:logp ...'");
    }
    std::vector<int> prefix;
    {
      std::istringstream ss(content.substr(0, bar1));
      std::string word;
      while (ss >> word) {
        auto id = vocab.find(word);
        if (!id) throw ParseError(source, line_no, "unknown token '" + word + "'");
        prefix.push_back(*id);
      }
    }
    if (prefix.empty() || prefix.front() != vocab.sos_eos_id()) {
      prefix.insert(prefix.begin(), vocab.sos_eos_id());
    }
    const std::string block_text = trim(content.substr(bar1 + 1, bar2 - bar1 - 1));
    int block = 0;
    if (block_text != "*") {
      try {
        size_t used = 0;
        block = std::stoi(block_text, &used);
        if (used != block_text.size() || block < 1) throw std::invalid_argument(block_text);
      } catch (const std::exception&) {
        throw ParseError(source, line_no, "block must be a positive integer or '*'");
      }
    }
    std::vector<double> dist(vocab.size(), kLogZero);
    std::istringstream ss(content.substr(bar2 + 1));
    std::string pair;
    while (ss >> pair) {
      const auto colon = pair.rfind(':');
      if (colon == std::string::npos || colon == 0) {
        throw ParseError(source, line_no, "expected token:logp, got '" + pair + "'");
      }
      auto id = vocab.find(pair.substr(0, colon));
      if (!id) throw ParseError(source, line_no, "unknown token '" + pair.substr(0, colon) + "'");
      dist[*id] = parse_log_prob(pair.substr(colon + 1), source, line_no);
    }
    if (table.entries_.count({prefix, block})) {
      throw ParseError(source, line_no, "duplicate entry for prefix and block");
    }
    table.entries_[{std::move(prefix), block}] = std::move(dist);
  }
  return table;
}

TableScorer TableScorer::load(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open table file: " + path);
  return parse(in, vocab, path);
}

void TableScorer::set(std::vector<int> prefix, int block, std::vector<double> log_probs) {
  if (static_cast<int>(log_probs.size()) != vocab_size_) {
    throw Error("table entry must cover the vocabulary");
  }
  entries_[{std::move(prefix), block}] = std::move(log_probs);
}

std::optional<std::vector<double>> TableScorer::lookup(std::span<const int> prefix,
                                                       int block) const {
  std::vector<int> key(prefix.begin(), prefix.end());
  if (!block_independent_) {
    auto exact = entries_.find({key, block});
    if (exact != entries_.end()) return exact->second;
  }
  auto wildcard = entries_.find({key, 0});
  if (wildcard != entries_.end()) return wildcard->second;
  return std::nullopt;
}

StatePtr TableScorer::init() const { return std::make_shared<ScorerState>(); }

ScoreStep TableScorer::score_step(const StatePtr& state, std::span<const int> prefix,
                                  const BlockView& blocks) const {
  check_contract(*state, prefix, blocks);
  ScoreStep step;
  auto dist = lookup(prefix, static_cast<int>(blocks.count));
  step.scores = dist ? std::move(*dist) : std::vector<double>(vocab_size_, kLogZero);
  step.blocks_seen = blocks.count;
  step.parent_score = state->score;
  return step;
}

StatePtr TableScorer::extend(const ScoreStep& step, std::span<const int> prefix, int token,
                             const BlockView& /*blocks*/) const {
  auto child = std::make_shared<ScorerState>();
  child->prefix_length = static_cast<int>(prefix.size()) + 1;
  child->blocks_seen = step.blocks_seen;
  child->score = step.parent_score + step.scores.at(token);
  return child;
}

std::map<std::string, std::string> read_table_directives(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open table file: " + path);
  std::map<std::string, std::string> directives;
  std::string line;
  while (std::getline(in, line)) {
    const std::string content = trim(line);
    if (content.empty()) continue;
    if (content[0] != '#') break;
    std::istringstream ss(content.substr(1));
    std::string key, value;
    ss >> key;
    std::getline(ss, value);
    directives[key] = trim(value);
  }
  return directives;
}

}  // namespace blocksync
