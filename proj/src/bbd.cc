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

#include "blocksync/bbd.h"

#include <limits>

namespace blocksync {

bool EvaluatedSet::contains(std::span<const int> prefix, int position) const {
  return pairs_.count({std::vector<int>(prefix.begin(), prefix.end()), position}) != 0;
}

bool EvaluatedSet::insert(std::span<const int> prefix, int position) {
  return pairs_.insert({std::vector<int>(prefix.begin(), prefix.end()), position}).second;
}

RepetitionScore repetition_score(std::span<const int> prefix, std::span<const double> dist,
                                 double alpha_prev, const EvaluatedSet& excluded,
                                 bool repetition_criterion) {
  if (prefix.empty()) throw Error("repetition score needs a prefix starting with <sos>");
  RepetitionScore best;
  const size_t candidates = repetition_criterion ? prefix.size() : 1;
  for (size_t j = 0; j < candidates; ++j) {
    if (excluded.contains(prefix, static_cast<int>(j))) continue;
    const double score = dist[prefix[j]] + alpha_prev;
    if (best.position < 0 || score > best.r) {
      best.r = score;
      best.position = static_cast<int>(j);
    }
  }
  if (best.position >= 0 && best.r == kLogZero) best.position = -1;
  return best;
}

double reliability(double alpha_new, double r) {
  if (r == kLogZero) return std::numeric_limits<double>::infinity();
  return alpha_new - r;
}

std::vector<ReliabilityReport> assess_beam(const Beam& beam, const EvaluatedSet& excluded,
                                           const DecodeConfig& config) {
  const bool joint = config.bbd_score_source == BbdScoreSource::kJoint;
  std::vector<ReliabilityReport> reports;
  reports.reserve(beam.hypotheses.size());
  for (size_t h = 0; h < beam.hypotheses.size(); ++h) {
    const Hypothesis& hyp = beam.hypotheses[h];
    if (!hyp.origin || hyp.tokens.size() < 2) {
      throw Error("reliability needs a hypothesis produced by a search step");
    }
    const std::span<const int> prefix(hyp.tokens.data(), hyp.tokens.size() - 1);
    const ParentStep& parent = *hyp.origin;
    const RepetitionScore rep =
        joint ? repetition_score(prefix, parent.joint, parent.parent_total, excluded,
                                 config.repetition_criterion)
              : repetition_score(prefix, parent.attention, parent.parent_attention, excluded,
                                 config.repetition_criterion);
    ReliabilityReport report;
    report.hypothesis = static_cast<int>(h);
    report.r = rep.r;
    report.position = rep.position;
    report.s = reliability(joint ? hyp.score : hyp.components.attention, rep.r);
    report.reliable = !is_unreliable(report.s, config.strict_boundary);
    reports.push_back(report);
  }
  return reports;
}

BoundaryDecision detect_boundary(const Beam& beam, std::vector<ReliabilityReport> reports,
                                 EvaluatedSet& evaluated) {
  BoundaryDecision decision;
  for (const ReliabilityReport& report : reports) {
    if (report.reliable) continue;
    decision.boundary = true;
    const Hypothesis& hyp = beam.hypotheses.at(report.hypothesis);
    if (report.position >= 0) {
      evaluated.insert(std::span<const int>(hyp.tokens.data(), hyp.tokens.size() - 1),
                       report.position);
    }
  }
  decision.reports = std::move(reports);
  return decision;
}

}  // namespace blocksync
