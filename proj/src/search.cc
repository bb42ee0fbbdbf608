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

#include "blocksync/search.h"

#include <algorithm>

#include "json.hpp"

namespace blocksync {

namespace {

struct Candidate {
  int parent = 0;
  int token = 0;
  double score = 0.0;
};

struct ParentScores {
  ScoreStep attention;
  std::optional<ScoreStep> ctc;
  std::optional<ScoreStep> lm;
  std::vector<double> joint;
};

bool candidate_before(const Candidate& a, const Candidate& b, const Beam& beam) {
  if (a.score != b.score) return a.score > b.score;
  if (a.parent != b.parent) {
    const auto& ta = beam.hypotheses[a.parent].tokens;
    const auto& tb = beam.hypotheses[b.parent].tokens;
    if (ta != tb) return std::lexicographical_compare(ta.begin(), ta.end(), tb.begin(), tb.end());
  }
  return a.token < b.token;
}

void count_decode(SearchTrace& trace, int index) {
  if (static_cast<int>(trace.decode_counts.size()) <= index) {
    trace.decode_counts.resize(index + 1, 0);
  }
  if (++trace.decode_counts[index] > 1) ++trace.redecoded_steps;
}

TraceEvent step_event(const Beam& beam, int step, int block, bool final_phase) {
  TraceEvent event;
  event.kind = TraceEvent::Kind::kStep;
  event.step = step;
  event.block = block;
  event.final_phase = final_phase;
  for (const Hypothesis& h : beam.hypotheses) event.beam.push_back({h.tokens, h.score});
  return event;
}

/// Splits <eos>-terminated hypotheses off a freshly searched beam.
std::vector<Hypothesis> take_completed(Beam& beam, int eos) {
  std::vector<Hypothesis> done;
  auto& hyps = beam.hypotheses;
  auto split = std::stable_partition(hyps.begin(), hyps.end(),
                                     [eos](const Hypothesis& h) { return h.last_token() != eos; });
  std::move(split, hyps.end(), std::back_inserter(done));
  hyps.erase(split, hyps.end());
  return done;
}

/// Ordinary decoding over h_{1:B} from the last retained beam until the
/// ending criterion or i_max.
void run_final_phase(std::vector<Beam>& beams, std::vector<Hypothesis>& completed,
                     const BlockView& view, const SearchSetup& setup, SearchTrace& trace) {
  const int cap = setup.config.resolve_i_max(view.frames());
  const int eos = setup.vocab->sos_eos_id();
  for (int i = static_cast<int>(beams.size()); i <= cap; ++i) {
    const Beam& running = beams.back();
    if (running.empty()) break;
    if (!completed.empty()) {
      const auto best = std::min_element(completed.begin(), completed.end(), ranks_before);
      if (best->score > running.best().score + setup.config.end_margin) break;
    }
    Beam next = search_step(running, view, setup);
    count_decode(trace, i);
    if (setup.record_events) {
      trace.events.push_back(step_event(next, i, static_cast<int>(view.count), true));
    }
    for (Hypothesis& h : take_completed(next, eos)) completed.push_back(std::move(h));
    beams.push_back(std::move(next));
  }
}

SearchResult make_result(const std::vector<Beam>& beams, std::vector<Hypothesis> completed,
                         SearchTrace trace) {
  SearchResult result;
  std::stable_sort(completed.begin(), completed.end(), ranks_before);
  if (!completed.empty()) {
    result.best = completed.front();
  } else {
    result.forced = true;
    for (auto it = beams.rbegin(); it != beams.rend(); ++it) {
      if (!it->empty()) {
        result.best = it->best();
        break;
      }
    }
  }
  result.completed = std::move(completed);
  result.trace = std::move(trace);
  return result;
}

}  // namespace

void SearchSetup::validate() const {
  if (!vocab) throw Error("search needs a vocabulary");
  if (!scorers.attention) throw Error("search needs an attention scorer");
  config.validate();
}

Beam initial_beam(const SearchSetup& setup) {
  Hypothesis root;
  root.tokens = {setup.vocab->sos_eos_id()};
  root.states.attention = setup.scorers.attention->init();
  if (setup.scorers.ctc) root.states.ctc = setup.scorers.ctc->init();
  if (setup.scorers.lm) root.states.lm = setup.scorers.lm->init();
  Beam beam;
  beam.hypotheses.push_back(std::move(root));
  return beam;
}

Beam search_step(const Beam& previous, const BlockView& blocks, const SearchSetup& setup) {
  if (previous.empty()) throw Error("search step on an empty beam");
  const DecodeConfig& config = setup.config;
  const int vocab_size = setup.vocab->size();
  const int blank = setup.vocab->blank_id();
  const double w_att = 1.0 - config.ctc_weight;
  const double w_ctc = config.ctc_weight;
  const double w_lm = config.lm_weight;
  const bool use_ctc = setup.scorers.ctc && w_ctc > 0.0;
  const bool use_lm = setup.scorers.lm && w_lm > 0.0;

  std::vector<ParentScores> parents(previous.hypotheses.size());
  std::vector<Candidate> candidates;
  candidates.reserve(previous.hypotheses.size() * vocab_size);
  for (size_t p = 0; p < previous.hypotheses.size(); ++p) {
    const Hypothesis& hyp = previous.hypotheses[p];
    ParentScores& ps = parents[p];
    ps.attention = setup.scorers.attention->score_step(hyp.states.attention, hyp.tokens, blocks);
    if (use_ctc) ps.ctc = setup.scorers.ctc->score_step(hyp.states.ctc, hyp.tokens, blocks);
    if (use_lm) ps.lm = setup.scorers.lm->score_step(hyp.states.lm, hyp.tokens, blocks);
    ps.joint.assign(vocab_size, kLogZero);
    for (int c = 0; c < vocab_size; ++c) {
      if (c == blank) continue;
      double joint = weighted(w_att, ps.attention.scores[c]);
      if (use_ctc) joint += weighted(w_ctc, ps.ctc->scores[c]);
      if (use_lm) joint += weighted(w_lm, ps.lm->scores[c]);
      ps.joint[c] = joint;
      if (joint == kLogZero || std::isnan(joint)) continue;
      candidates.push_back({static_cast<int>(p), c, hyp.score + joint});
    }
  }
  if (candidates.empty()) throw Error("beam collapse: every expansion scored log-zero");

  auto before = [&previous](const Candidate& a, const Candidate& b) {
    return candidate_before(a, b, previous);
  };
  const size_t keep = std::min(candidates.size(), static_cast<size_t>(config.beam_width));
  std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(), before);
  candidates.resize(keep);

  std::vector<std::shared_ptr<const ParentStep>> origins(parents.size());
  Beam next;
  next.output_index = previous.output_index + 1;
  next.hypotheses.reserve(keep);
  for (const Candidate& cand : candidates) {
    const Hypothesis& parent = previous.hypotheses[cand.parent];
    const ParentScores& ps = parents[cand.parent];
    if (!origins[cand.parent]) {
      auto origin = std::make_shared<ParentStep>();
      origin->attention = ps.attention.scores;
      origin->joint = ps.joint;
      origin->parent_attention = parent.components.attention;
      origin->parent_total = parent.score;
      origins[cand.parent] = std::move(origin);
    }
    Hypothesis child;
    child.tokens = parent.tokens;
    child.tokens.push_back(cand.token);
    child.score = cand.score;
    child.components = parent.components;
    child.components.attention += ps.attention.scores[cand.token];
    child.states.attention =
        setup.scorers.attention->extend(ps.attention, parent.tokens, cand.token, blocks);
    if (use_ctc) {
      child.components.ctc += ps.ctc->scores[cand.token];
      child.states.ctc = setup.scorers.ctc->extend(*ps.ctc, parent.tokens, cand.token, blocks);
    }
    if (use_lm) {
      child.components.lm += ps.lm->scores[cand.token];
      child.states.lm = setup.scorers.lm->extend(*ps.lm, parent.tokens, cand.token, blocks);
    }
    child.origin = origins[cand.parent];
    next.hypotheses.push_back(std::move(child));
  }
  return next;
}

SearchResult batch_beam_search(const BlockStream& blocks, const SearchSetup& setup) {
  setup.validate();
  if (blocks.size() == 0) throw Error("batch search needs encoded blocks");
  std::vector<Beam> beams{initial_beam(setup)};
  std::vector<Hypothesis> completed;
  SearchTrace trace;
  run_final_phase(beams, completed, BlockView{&blocks, blocks.size()}, setup, trace);
  return make_result(beams, std::move(completed), std::move(trace));
}

StreamingSession::StreamingSession(SearchSetup setup) : setup_(setup) {
  setup_.validate();
  beams_.push_back(initial_beam(setup_));
}

void StreamingSession::push_block(EncodedBlock block) {
  if (finalized_) throw Error("push after finalize");
  if (block.index != static_cast<int>(stream_.size()) + 1) {
    throw Error("block " + std::to_string(block.index) + " arrived out of order");
  }
  const bool last = block.is_last;
  stream_.append(std::move(block));
  if (!last) decode_block();
}

void StreamingSession::decode_block() {
  const BlockView view{&stream_, stream_.size()};
  const int block = static_cast<int>(view.count);
  const int cap = setup_.config.resolve_i_max(view.frames());
  const int previous_boundary = static_cast<int>(beams_.size()) - 1;  // I_{b-1}
  const int eos = setup_.vocab->sos_eos_id();
  auto assign_boundary = [&](int index_boundary, int step) {
    index_boundary = std::max(index_boundary, previous_boundary);
    beams_.resize(index_boundary + 1);
    trace_.index_boundaries.push_back(index_boundary);
    if (setup_.record_events) {
      TraceEvent event;
      event.kind = TraceEvent::Kind::kBoundary;
      event.step = step;
      event.block = block;
      event.index_boundary = index_boundary;
      trace_.events.push_back(std::move(event));
    }
  };

  for (int i = previous_boundary + 1; i <= cap; ++i) {
    if (beams_.back().empty()) {
      assign_boundary(i - 1, i);
      return;
    }
    Beam next = search_step(beams_.back(), view, setup_);
    count_decode(trace_, i);
    BoundaryDecision decision =
        detect_boundary(next, assess_beam(next, evaluated_, setup_.config), evaluated_);
    if (setup_.record_events) {
      trace_.events.push_back(step_event(next, i, block, false));
      TraceEvent check;
      check.kind = TraceEvent::Kind::kCheck;
      check.step = i;
      check.block = block;
      check.boundary = decision.boundary;
      for (const ReliabilityReport& report : decision.reports) {
        check.checks.push_back({next.hypotheses[report.hypothesis].tokens, report.r, report.s,
                                report.position, report.reliable});
      }
      trace_.events.push_back(std::move(check));
    }
    if (decision.boundary) {
      assign_boundary(setup_.config.conservative && i >= 2 ? i - 2 : i - 1, i);
      return;
    }
    // <eos> before the final block is premature; such hypotheses are dropped.
    take_completed(next, eos);
    if (next.empty()) {
      assign_boundary(i - 1, i);
      return;
    }
    beams_.push_back(std::move(next));
  }
  assign_boundary(static_cast<int>(beams_.size()) - 1, cap);
}

SearchResult StreamingSession::finalize() {
  if (finalized_) throw Error("session already finalized");
  if (stream_.size() == 0) throw Error("block stream ended before any block");
  finalized_ = true;
  run_final_phase(beams_, completed_, BlockView{&stream_, stream_.size()}, setup_, trace_);
  return make_result(beams_, completed_, trace_);
}

std::optional<Hypothesis> StreamingSession::partial_best() const {
  for (auto it = beams_.rbegin(); it != beams_.rend(); ++it) {
    if (!it->empty() && it->best().length() > 0) return it->best();
  }
  return std::nullopt;
}

SearchResult blockwise_synchronous_beam_search(std::vector<EncodedBlock> blocks,
                                               const SearchSetup& setup) {
  if (blocks.empty()) throw Error("block stream ended before any block");
  StreamingSession session(setup);
  for (EncodedBlock& block : blocks) session.push_block(std::move(block));
  return session.finalize();
}

ScoreBreakdown rescore(std::span<const int> tokens, const BlockView& blocks,
                       const SearchSetup& setup) {
  if (tokens.empty() || tokens.front() != setup.vocab->sos_eos_id()) {
    throw Error("rescore needs a sequence starting with <sos>");
  }
  ScoreBreakdown total;
  auto run = [&](const Scorer* scorer, double& sum) {
    StatePtr state = scorer->init();
    for (size_t k = 1; k < tokens.size(); ++k) {
      const auto prefix = tokens.first(k);
      const ScoreStep step = scorer->score_step(state, prefix, blocks);
      sum += step.scores.at(tokens[k]);
      state = scorer->extend(step, prefix, tokens[k], blocks);
    }
  };
  run(setup.scorers.attention, total.attention);
  if (setup.scorers.ctc && setup.config.ctc_weight > 0.0) run(setup.scorers.ctc, total.ctc);
  if (setup.scorers.lm && setup.config.lm_weight > 0.0) run(setup.scorers.lm, total.lm);
  return total;
}

void write_trace(std::ostream& out, const SearchTrace& trace, const Vocabulary& vocab) {
  using nlohmann::ordered_json;
  auto render = [&vocab](const std::vector<int>& tokens) {
    std::string text;
    for (int t : tokens) {
      if (!text.empty()) text += ' ';
      text += vocab.token(t);
    }
    return text;
  };
  auto number = [](double v) -> ordered_json {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : "-inf";
  };
  for (const TraceEvent& event : trace.events) {
    ordered_json record;
    switch (event.kind) {
      case TraceEvent::Kind::kStep: {
        record["event"] = "step";
        record["block"] = event.block;
        record["step"] = event.step;
        record["phase"] = event.final_phase ? "final" : "block";
        ordered_json beam = ordered_json::array();
        for (const TraceHypothesis& h : event.beam) {
          beam.push_back({{"tokens", render(h.tokens)}, {"score", number(h.score)}});
        }
        record["beam"] = std::move(beam);
        break;
      }
      case TraceEvent::Kind::kCheck: {
        record["event"] = "check";
        record["block"] = event.block;
        record["step"] = event.step;
        record["boundary"] = event.boundary;
        ordered_json hyps = ordered_json::array();
        for (const TraceCheck& c : event.checks) {
          hyps.push_back({{"tokens", render(c.tokens)},
                          {"r", number(c.r)},
                          {"s", number(c.s)},
                          {"j", c.position},
                          {"reliable", c.reliable}});
        }
        record["hyps"] = std::move(hyps);
        break;
      }
      case TraceEvent::Kind::kBoundary:
        record["event"] = "boundary";
        record["block"] = event.block;
        record["step"] = event.step;
        record["index_boundary"] = event.index_boundary;
        break;
    }
    out << record.dump() << '\n';
  }
  ordered_json summary;
  summary["event"] = "summary";
  summary["index_boundaries"] = trace.index_boundaries;
  summary["redecoded_steps"] = trace.redecoded_steps;
  out << summary.dump() << '\n';
}

}  // namespace blocksync
