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

#ifndef BLOCKSYNC_CORE_H_
#define BLOCKSYNC_CORE_H_

#include <cmath>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace blocksync {

/// Log-domain zero. Scores are natural-log probabilities carried as doubles.
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for malformed input files; the message names the offending line.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

/// log(exp(a) + exp(b)) without overflow.
inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

/// Dense token inventory. The blank is a regular index; <sos> and <eos> share
/// one index.
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> tokens, int blank_id, int sos_eos_id);

  /// Header directives `#blank <idx>` and `#soseos <idx>`, then one token per
  /// line; the n-th token line gets index n (0-based).
  static Vocabulary parse(std::istream& in, const std::string& source = "<vocab>");
  static Vocabulary load(const std::string& path);

  int size() const { return static_cast<int>(tokens_.size()); }
  int blank_id() const { return blank_id_; }
  int sos_eos_id() const { return sos_eos_id_; }
  const std::string& token(int id) const;
  std::optional<int> find(std::string_view token) const;
  int id(std::string_view token) const;

  /// Whitespace-separated token strings to ids.
  std::vector<int> encode(std::string_view text) const;
  /// Ids to a space-joined string; <sos>/<eos> markers are dropped.
  std::string decode(std::span<const int> ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  int blank_id_;
  int sos_eos_id_;
};

class ScorerState;
using StatePtr = std::shared_ptr<const ScorerState>;

/// Per-scorer log-score contributions of a hypothesis.
struct ScoreBreakdown {
  double attention = 0.0;
  double ctc = 0.0;
  double lm = 0.0;
};

struct ScorerStates {
  StatePtr attention;
  StatePtr ctc;
  StatePtr lm;
};

/// The parent-side distributions that produced a hypothesis' last token.
/// Shared by all siblings expanded from the same parent; block boundary
/// detection reads it to form the repetition score.
struct ParentStep {
  std::vector<double> attention;  // log p(.|parent, h_{1:b}) from the decoder
  std::vector<double> joint;      // weighted sum of all scorer increments
  double parent_attention = 0.0;  // attention component of the parent
  double parent_total = 0.0;      // combined score of the parent
};

struct Hypothesis {
  std::vector<int> tokens;  // tokens[0] is <sos>
  double score = 0.0;       // combined score, alpha
  ScoreBreakdown components;
  ScorerStates states;
  std::shared_ptr<const ParentStep> origin;

  int length() const { return static_cast<int>(tokens.size()) - 1; }
  int last_token() const { return tokens.back(); }
};

/// Descending score, then the lexicographically smaller token sequence.
bool ranks_before(const Hypothesis& a, const Hypothesis& b);

struct Beam {
  std::vector<Hypothesis> hypotheses;
  int output_index = 0;

  bool empty() const { return hypotheses.empty(); }
  const Hypothesis& best() const { return hypotheses.front(); }
};

void sort_beam(Beam& beam);
/// Sorts and keeps the first `beam_width` hypotheses.
void prune_beam(Beam& beam, int beam_width);

struct BlockLayout {
  int n_left = 16;
  int n_center = 16;
  int n_right = 8;
  int downsample = 4;
  double frame_shift_ms = 10.0;

  void validate() const;
};

enum class BbdScoreSource { kAttention, kJoint };

struct DecodeConfig {
  int beam_width = 10;
  /// Maximum output length; 0 selects 2 + number of downsampled frames seen.
  int i_max = 0;
  double ctc_weight = 0.3;
  double lm_weight = 0.0;
  /// Rewind two output steps instead of one at a block boundary.
  bool conservative = false;
  /// Off selects the eos-only boundary criterion.
  bool repetition_criterion = true;
  BbdScoreSource bbd_score_source = BbdScoreSource::kAttention;
  /// Fire on s < 0 instead of s <= 0.
  bool strict_boundary = false;
  /// Ending criterion margin for the final-block phase.
  double end_margin = 0.0;

  void validate() const;
  int resolve_i_max(int frames) const { return i_max > 0 ? i_max : 2 + frames; }
};

/// `weight * score`, with a zero weight silencing the term even when the
/// score is log-zero.
inline double weighted(double weight, double score) {
  return weight == 0.0 ? 0.0 : weight * score;
}

/// (1 - ctc_weight) * att + ctc_weight * ctc + lm_weight * lm.
double combined_score(const ScoreBreakdown& components, const DecodeConfig& config);

}  // namespace blocksync

#endif  // BLOCKSYNC_CORE_H_
