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

#include "blocksync/core.h"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace blocksync {

ParseError::ParseError(const std::string& source, int line, const std::string& what)
    : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens, int blank_id, int sos_eos_id)
    : tokens_(std::move(tokens)), blank_id_(blank_id), sos_eos_id_(sos_eos_id) {
  const int n = size();
  if (blank_id_ < 0 || blank_id_ >= n) throw Error("blank id out of range");
  if (sos_eos_id_ < 0 || sos_eos_id_ >= n) throw Error("sos/eos id out of range");
  if (blank_id_ == sos_eos_id_) throw Error("blank and sos/eos must differ");
  std::vector<std::string> sorted = tokens_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error("duplicate token in vocabulary");
  }
}

Vocabulary Vocabulary::parse(std::istream& in, const std::string& source) {
  std::vector<std::string> tokens;
  std::optional<int> blank;
  std::optional<int> sos_eos;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (tokens.empty() && !line.empty() && line[0] == '#') {
      std::istringstream ss(line);
      std::string directive;
      int value = -1;
      ss >> directive;
      if (!(ss >> value)) throw ParseError(source, line_no, "directive needs an index");
      if (directive == "#blank") {
        blank = value;
      } else if (directive == "#soseos") {
        sos_eos = value;
      } else {
        throw ParseError(source, line_no, "unknown directive '" + directive + "'");
      }
      continue;
    }
    std::istringstream ss(line);
    std::string token, extra;
    if (!(ss >> token)) throw ParseError(source, line_no, "empty token line");
    if (ss >> extra) throw ParseError(source, line_no, "token contains whitespace");
    tokens.push_back(token);
  }
  if (!blank) throw ParseError(source, line_no, "missing #blank directive");
  if (!sos_eos) throw ParseError(source, line_no, "missing #soseos directive");
  try {
    return Vocabulary(std::move(tokens), *blank, *sos_eos);
  } catch (const Error& e) {
    throw ParseError(source, line_no, e.what());
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary file: " + path);
  return parse(in, path);
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error("token id out of range: " + std::to_string(id));
  return tokens_[id];
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = std::find(tokens_.begin(), tokens_.end(), token);
  if (it == tokens_.end()) return std::nullopt;
  return static_cast<int>(it - tokens_.begin());
}

int Vocabulary::id(std::string_view token) const {
  auto found = find(token);
  if (!found) throw Error("unknown token '" + std::string(token) + "'");
  return *found;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::istringstream ss{std::string(text)};
  std::vector<int> ids;
  std::string token;
  while (ss >> token) ids.push_back(id(token));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == sos_eos_id_) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(),
                                      b.tokens.end());
}

void sort_beam(Beam& beam) {
  std::stable_sort(beam.hypotheses.begin(), beam.hypotheses.end(), ranks_before);
}

void prune_beam(Beam& beam, int beam_width) {
  sort_beam(beam);
  if (static_cast<int>(beam.hypotheses.size()) > beam_width) {
    beam.hypotheses.resize(beam_width);
  }
}

void BlockLayout::validate() const {
  if (n_center < 1) throw Error("block center must be at least one frame");
  if (n_left < 0 || n_right < 0) throw Error("block context sizes must be non-negative");
  if (downsample < 1) throw Error("downsample factor must be at least 1");
  if (!(frame_shift_ms > 0)) throw Error("frame shift must be positive");
}

void DecodeConfig::validate() const {
  if (beam_width < 1) throw Error("beam width must be at least 1");
  if (i_max < 0) throw Error("i_max must be non-negative (0 = automatic)");
  if (!(ctc_weight >= 0.0 && ctc_weight <= 1.0)) {
    throw std::invalid_argument("ctc weight must lie in [0, 1]");
  }
  if (!(lm_weight >= 0.0)) throw std::invalid_argument("lm weight must be non-negative");
}

double combined_score(const ScoreBreakdown& components, const DecodeConfig& config) {
  if (!(config.ctc_weight >= 0.0 && config.ctc_weight <= 1.0)) {
    throw std::invalid_argument("ctc weight must lie in [0, 1]");
  }
  return weighted(1.0 - config.ctc_weight, components.attention) +
         weighted(config.ctc_weight, components.ctc) +
         weighted(config.lm_weight, components.lm);
}

}  // namespace blocksync
