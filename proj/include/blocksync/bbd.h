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

#ifndef BLOCKSYNC_BBD_H_
#define BLOCKSYNC_BBD_H_

#include <set>
#include <span>
#include <utility>
#include <vector>

#include "blocksync/core.h"

namespace blocksync {

/// (prefix y_{0:i-1}, repeated position j) pairs already judged at a block
/// boundary. Lives for one utterance.
class EvaluatedSet {
 public:
  bool contains(std::span<const int> prefix, int position) const;
  /// Returns false when the pair was already present.
  bool insert(std::span<const int> prefix, int position);
  size_t size() const { return pairs_.size(); }
  void clear() { pairs_.clear(); }

 private:
  std::set<std::pair<std::vector<int>, int>> pairs_;
};

struct RepetitionScore {
  double r = kLogZero;
  int position = -1;  // j*, -1 when every candidate is excluded
};

/// Best score among continuations of `prefix` that repeat one of its tokens.
/// <eos> counts as a repeat of y_0 = <sos>. With `repetition_criterion` off
/// only <eos> is considered. Positions whose (prefix, j) pair is in `excluded`
/// are skipped; ties keep the earliest position.
RepetitionScore repetition_score(std::span<const int> prefix, std::span<const double> dist,
                                 double alpha_prev, const EvaluatedSet& excluded,
                                 bool repetition_criterion);

/// s = alpha_new - r; +infinity when r is log-zero.
double reliability(double alpha_new, double r);

/// True when `s` triggers a boundary: s <= 0, or s < 0 in strict mode.
inline bool is_unreliable(double s, bool strict) { return strict ? s < 0.0 : s <= 0.0; }

struct ReliabilityReport {
  int hypothesis = 0;  // index within the beam
  double r = kLogZero;
  double s = 0.0;
  int position = -1;  // j*
  bool reliable = true;
};

/// Reliability of every hypothesis of a freshly pruned beam. Each hypothesis
/// must carry its ParentStep; the score source follows the config.
std::vector<ReliabilityReport> assess_beam(const Beam& beam, const EvaluatedSet& excluded,
                                           const DecodeConfig& config);

struct BoundaryDecision {
  bool boundary = false;
  std::vector<ReliabilityReport> reports;
};

/// Boundary iff any report is unreliable. The (prefix, j*) pairs of unreliable
/// hypotheses are added to `evaluated`.
BoundaryDecision detect_boundary(const Beam& beam, std::vector<ReliabilityReport> reports,
                                 EvaluatedSet& evaluated);

}  // namespace blocksync

#endif  // BLOCKSYNC_BBD_H_
