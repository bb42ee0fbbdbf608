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

#include "checks.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "blocksync/bbd.h"
#include "blocksync/ctc_scorer.h"
#include "blocksync/lm_scorer.h"
#include "blocksync/search.h"
#include "oracles.h"

namespace checks {

using namespace blocksync;

namespace {

std::string join(const std::vector<int>& v) {
  std::ostringstream out;
  for (size_t k = 0; k < v.size(); ++k) out << (k ? " " : "") << v[k];
  return out.str();
}

/// Random normalized log-posteriors, T rows by |V| columns.
Matrix random_posteriors(PortableRandom& rng, int frames, int symbols) {
  Matrix out(frames, symbols);
  for (int t = 0; t < frames; ++t) {
    RowVector logits(symbols);
    for (int c = 0; c < symbols; ++c) logits(c) = rng.uniform(-3.0, 3.0);
    out.row(t) = log_softmax(logits);
  }
  return out;
}

/// Stream of CTC-only blocks cut at the given frame offsets.
std::unique_ptr<BlockStream> posterior_stream(const Matrix& log_probs, std::vector<int> cuts) {
  auto stream = std::make_unique<BlockStream>();
  cuts.push_back(static_cast<int>(log_probs.rows()));
  int start = 0;
  for (size_t k = 0; k < cuts.size(); ++k) {
    EncodedBlock block;
    block.index = static_cast<int>(k) + 1;
    block.frame_start = start;
    block.frame_end = cuts[k];
    block.is_last = k + 1 == cuts.size();
    block.ctc_log_probs = log_probs.middleRows(start, cuts[k] - start);
    stream->append(std::move(block));
    start = cuts[k];
  }
  return stream;
}

std::vector<int> random_cuts(PortableRandom& rng, int frames) {
  std::vector<int> cuts;
  for (int t = 1; t < frames; ++t) {
    if (rng.uniform() < 0.4) cuts.push_back(t);
  }
  return cuts;
}

/// Walks a scorer from <sos> through `prefix`, using views[k] for step k.
StatePtr walk(const Scorer& scorer, const std::vector<int>& prefix, const BlockStream& stream,
              const std::vector<size_t>& views) {
  StatePtr state = scorer.init();
  for (size_t k = 1; k < prefix.size(); ++k) {
    const std::span<const int> head(prefix.data(), k);
    const BlockView view{&stream, views.at(k - 1)};
    const ScoreStep step = scorer.score_step(state, head, view);
    state = scorer.extend(step, head, prefix[k], view);
  }
  return state;
}

std::vector<size_t> nondecreasing_views(PortableRandom& rng, size_t steps, size_t blocks) {
  std::vector<size_t> views(steps);
  size_t current = 1;
  for (size_t k = 0; k < steps; ++k) {
    if (current < blocks && rng.uniform() < 0.5) current = rng.integer(current, blocks);
    views[k] = current;
  }
  return views;
}

BlockLayout small_layout(PortableRandom& rng) {
  BlockLayout layout;
  layout.n_left = rng.integer(1, 4);
  layout.n_center = rng.integer(2, 4);
  layout.n_right = rng.integer(0, 2);
  layout.downsample = 4;
  return layout;
}

std::unique_ptr<BlockStream> stream_of(std::vector<EncodedBlock> blocks) {
  auto stream = std::make_unique<BlockStream>();
  for (EncodedBlock& b : blocks) stream->append(std::move(b));
  return stream;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

std::vector<std::string> random_words(PortableRandom& rng, int max_len, int alphabet) {
  std::vector<std::string> out(rng.integer(0, max_len));
  for (auto& w : out) w = std::string(1, static_cast<char>('a' + rng.integer(0, alphabet - 1)));
  return out;
}

/// Beam of hypotheses carrying hand-made parent steps, as search_step would
/// leave them. Scores are multiples of 1/8 so shifts are exact.
Beam scripted_beam(PortableRandom& rng, int vocab_size, int eos, double shift) {
  auto grid = [&rng](double lo, double hi) {
    return std::round(rng.uniform(lo, hi) * 8.0) / 8.0;
  };
  Beam beam;
  const int hyps = rng.integer(1, 5);
  for (int h = 0; h < hyps; ++h) {
    Hypothesis hyp;
    hyp.tokens = {eos};
    const int len = rng.integer(1, 5);
    for (int k = 0; k < len; ++k) hyp.tokens.push_back(rng.integer(1, vocab_size - 1));
    auto origin = std::make_shared<ParentStep>();
    origin->attention.resize(vocab_size);
    origin->joint.resize(vocab_size);
    for (int c = 0; c < vocab_size; ++c) {
      origin->attention[c] = grid(-6.0, 0.0);
      origin->joint[c] = grid(-6.0, 0.0);
    }
    origin->parent_attention = grid(-10.0, 0.0) + shift;
    origin->parent_total = grid(-10.0, 0.0) + shift;
    hyp.components.attention = origin->parent_attention + origin->attention[hyp.last_token()];
    hyp.score = origin->parent_total + origin->joint[hyp.last_token()];
    hyp.origin = origin;
    beam.hypotheses.push_back(std::move(hyp));
  }
  return beam;
}

}  // namespace

void Result::fail(const std::string& what) {
  if (failures++ == 0) first_failure = what;
}

std::string Result::summary() const {
  std::ostringstream out;
  out << name << ": " << cases << " cases, " << failures << " failures";
  if (failures) out << " (first: " << first_failure << ")";
  return out.str();
}

Instance random_instance(std::uint32_t seed, int vocab_size, double seconds, int conv_stages) {
  ToyModelSpec spec;
  spec.vocab_size = vocab_size;
  spec.conv_stages = conv_stages;
  spec.seed = seed;
  return {toy_vocabulary(vocab_size), random_model(spec),
          synthetic_features(seconds, spec.feat_dim, seed + 7)};
}

bool close(double a, double b, double tolerance) {
  if (std::isinf(a) || std::isinf(b)) return a == b;
  return std::abs(a - b) <= tolerance;
}

Result batch_equivalence(int instances) {
  Result res{"batch equivalence"};
  for (int k = 0; k < instances; ++k) {
    PortableRandom rng(1000 + k);
    const int vocab_size = 4 + k % 13;
    Instance inst = random_instance(1000 + k, vocab_size, rng.uniform(0.2, 0.6));
    UniformLm lm(vocab_size);
    DecodeConfig config;
    config.beam_width = 1 + k % 6;
    config.ctc_weight = std::vector<double>{0.0, 0.3, 0.5}[k % 3];
    config.lm_weight = k % 4 == 3 ? 0.2 : 0.0;
    const BlockLayout layout;
    ++res.cases;
    std::vector<EncodedBlock> blocks = inst.model.encode_streaming(inst.features, layout);
    if (blocks.size() != 1) {
      res.fail("instance " + std::to_string(k) + " segments into more than one block");
      continue;
    }
    const ModelScorers scorers(inst.model, inst.vocab, &lm);
    const SearchSetup setup = scorers.setup(config, false);
    const SearchResult streaming = blockwise_synchronous_beam_search(std::move(blocks), setup);
    BlockStream stream;
    stream.append(inst.model.encode_batch(inst.features, layout.downsample));
    const SearchResult batch = batch_beam_search(stream, setup);
    if (streaming.best.tokens != batch.best.tokens ||
        !close(streaming.best.score, batch.best.score) || streaming.forced != batch.forced ||
        streaming.completed.size() != batch.completed.size()) {
      res.fail("instance " + std::to_string(k) + ": streaming [" + join(streaming.best.tokens) +
               "] vs batch [" + join(batch.best.tokens) + "]");
    }
  }
  return res;
}

Result exhaustive_oracle(int instances) {
  Result res{"exhaustive oracle"};
  for (int k = 0; k < instances; ++k) {
    PortableRandom rng(2000 + k);
    const int vocab_size = 3 + k % 2;
    const int i_max = 3 + k % 3;
    Instance inst = random_instance(2000 + k, vocab_size, rng.uniform(0.08, 0.17));
    DecodeConfig config;
    config.i_max = i_max;
    config.beam_width = static_cast<int>(std::pow(vocab_size, i_max));
    config.ctc_weight = k % 2 ? 0.3 : 0.0;
    const ModelScorers scorers(inst.model, inst.vocab);
    BlockStream stream;
    stream.append(inst.model.encode_batch(inst.features, 4));
    const SearchResult found = batch_beam_search(stream, scorers.setup(config, false));

    const oracle::Mat memory = oracle::encode(inst.features.frames, 4, inst.model.encoder);
    const Matrix ctc_logits =
        (oracle::to_matrix(memory) * inst.model.ctc_weight).rowwise() + inst.model.ctc_bias;
    Matrix ctc_log_probs(ctc_logits.rows(), ctc_logits.cols());
    for (long t = 0; t < ctc_logits.rows(); ++t) ctc_log_probs.row(t) = log_softmax(ctc_logits.row(t));
    const auto labelings = oracle::ctc_labelings(ctc_log_probs, inst.vocab.blank_id());
    const int eos = inst.vocab.sos_eos_id();

    // Every label sequence of length < i_max, scored as sequence + <eos>.
    std::vector<std::pair<long double, std::vector<int>>> scored;
    std::vector<std::vector<int>> frontier{{}};
    for (int len = 0; len < i_max; ++len) {
      std::vector<std::vector<int>> next;
      for (const auto& labels : frontier) {
        std::vector<int> tokens{eos};
        long double att = 0.0L;
        for (size_t p = 0; p <= labels.size(); ++p) {
          const int target = p < labels.size() ? labels[p] : eos;
          att += oracle::decoder_log_probs(inst.model.decoder, tokens, memory)[target];
          tokens.push_back(target);
        }
        long double total = (1.0L - config.ctc_weight) * att;
        if (config.ctc_weight > 0) {
          total += config.ctc_weight * oracle::ctc_complete_log_prob(labelings, labels);
        }
        if (std::isfinite(static_cast<double>(total))) scored.push_back({total, tokens});
        for (int c = 1; c < vocab_size - 1; ++c) {
          next.push_back(labels);
          next.back().push_back(c);
        }
      }
      frontier = std::move(next);
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    ++res.cases;
    const double best = static_cast<double>(scored.front().first);
    const bool unique = scored.size() < 2 || scored[0].first - scored[1].first > kScoreTolerance;
    if (found.forced || !close(found.best.score, best) ||
        (unique && found.best.tokens != scored.front().second)) {
      res.fail("instance " + std::to_string(k) + ": search [" + join(found.best.tokens) +
               "] vs oracle [" + join(scored.front().second) + "]");
    }
  }
  return res;
}

Result ctc_oracle(int instances) {
  Result res{"ctc prefix oracle"};
  for (int k = 0; k < instances; ++k) {
    PortableRandom rng(3000 + k);
    const int labels = 1 + k % 3;
    const int symbols = labels + 2;
    const int eos = symbols - 1;
    const int frames = 1 + (k / 3) % 4;
    const Matrix log_probs = random_posteriors(rng, frames, symbols);
    const auto stream = posterior_stream(log_probs, {});
    const auto labelings = oracle::ctc_labelings(log_probs, 0);
    const CtcPrefixScorer scorer(symbols, 0, eos);
    ++res.cases;
    std::vector<std::vector<int>> prefixes{{}};
    for (size_t p = 0; p < prefixes.size(); ++p) {
      const std::vector<int> g = prefixes[p];
      std::vector<int> prefix{eos};
      prefix.insert(prefix.end(), g.begin(), g.end());
      const StatePtr state = walk(scorer, prefix, *stream, std::vector<size_t>(g.size(), 1));
      const double expected = static_cast<double>(oracle::ctc_prefix_log_prob(labelings, g));
      // A prefix longer than the frames allow has no further scores to check.
      if (state->score == kLogZero) {
        if (expected != kLogZero) res.fail("prefix [" + join(g) + "] scored log-zero");
        continue;
      }
      if (!close(state->score, expected)) {
        res.fail("prefix [" + join(g) + "] T=" + std::to_string(frames));
      }
      const ScoreStep step = scorer.score_step(state, prefix, BlockView{stream.get(), 1});
      const double complete = state->score + step.scores[eos];
      if (!close(complete, static_cast<double>(oracle::ctc_complete_log_prob(labelings, g)))) {
        res.fail("complete [" + join(g) + "] T=" + std::to_string(frames));
      }
      if (g.size() == 3) continue;
      for (int c = 1; c <= labels; ++c) {
        std::vector<int> gc = g;
        gc.push_back(c);
        const double psi = state->score + step.scores[c];
        if (!close(psi, static_cast<double>(oracle::ctc_prefix_log_prob(labelings, gc)))) {
          res.fail("extension [" + join(gc) + "] T=" + std::to_string(frames));
        }
        prefixes.push_back(gc);
      }
    }
  }
  return res;
}

Result ctc_resumption(int instances) {
  Result res{"ctc chunked resumption"};
  for (int k = 0; res.cases < instances; ++k) {
    PortableRandom rng(4000 + k);
    const int symbols = rng.integer(3, 6);
    const int eos = symbols - 1;
    const int frames = rng.integer(2, 10);
    const Matrix log_probs = random_posteriors(rng, frames, symbols);
    const auto whole = posterior_stream(log_probs, {});
    const auto chunked = posterior_stream(log_probs, random_cuts(rng, frames));
    const CtcPrefixScorer one_shot(symbols, 0, eos);
    const CtcPrefixScorer resumed(symbols, 0, eos);
    std::vector<int> prefix{eos};
    const int len = rng.integer(0, 3);
    for (int p = 0; p < len; ++p) prefix.push_back(rng.integer(1, symbols - 2));
    const size_t blocks = chunked->size();
    const StatePtr a = walk(one_shot, prefix, *whole, std::vector<size_t>(len, 1));
    const StatePtr b = walk(resumed, prefix, *chunked, nondecreasing_views(rng, len, blocks));
    const ScoreStep sa = one_shot.score_step(a, prefix, BlockView{whole.get(), 1});
    const ScoreStep sb = resumed.score_step(b, prefix, BlockView{chunked.get(), blocks});
    // Search never keeps a prefix that was impossible at an earlier block.
    if (b->score == kLogZero && a->score != kLogZero) continue;
    ++res.cases;
    if (a->score == kLogZero) {
      if (b->score != kLogZero) res.fail("instance " + std::to_string(k) + " prefix score");
      continue;
    }
    for (int c = 1; c < symbols; ++c) {
      if (!close(a->score + sa.scores[c], b->score + sb.scores[c])) {
        res.fail("instance " + std::to_string(k) + " token " + std::to_string(c));
        break;
      }
    }
  }
  return res;
}

Result log_add_associativity(int cases) {
  Result res{"log_add associativity"};
  PortableRandom rng(5000);
  for (int k = 0; k < cases; ++k) {
    double v[3];
    for (double& x : v) x = rng.uniform() < 0.05 ? kLogZero : rng.uniform(-50.0, 0.0);
    const double left = log_add(log_add(v[0], v[1]), v[2]);
    const double right = log_add(v[0], log_add(v[1], v[2]));
    long double direct = 0.0L;
    for (double x : v) direct += std::exp(static_cast<long double>(x));
    const double expected = direct > 0 ? static_cast<double>(std::log(direct)) : kLogZero;
    ++res.cases;
    if (!close(left, right) || !close(left, expected)) res.fail("triple " + std::to_string(k));
  }
  return res;
}

Result beam_ordering(int cases) {
  Result res{"beam ordering"};
  PortableRandom rng(5100);
  for (int k = 0; k < cases; ++k) {
    Beam beam;
    const int size = rng.integer(2, 12);
    for (int h = 0; h < size; ++h) {
      Hypothesis hyp;
      hyp.tokens = {9};
      for (int p = rng.integer(0, 3); p > 0; --p) hyp.tokens.push_back(rng.integer(1, 3));
      hyp.score = -static_cast<double>(rng.integer(1, 3));
      beam.hypotheses.push_back(hyp);
    }
    Beam shuffled = beam;
    std::mt19937 engine(k);
    std::shuffle(shuffled.hypotheses.begin(), shuffled.hypotheses.end(), engine);
    sort_beam(beam);
    sort_beam(shuffled);
    Beam again = beam;
    sort_beam(again);
    ++res.cases;
    bool ok = true;
    for (int h = 0; h < size; ++h) {
      ok = ok && beam.hypotheses[h].tokens == shuffled.hypotheses[h].tokens &&
           beam.hypotheses[h].score == shuffled.hypotheses[h].score &&
           beam.hypotheses[h].tokens == again.hypotheses[h].tokens;
      if (h > 0) ok = ok && !ranks_before(beam.hypotheses[h], beam.hypotheses[h - 1]);
    }
    if (!ok) res.fail("beam " + std::to_string(k));
  }
  return res;
}

Result score_recomputation(int cases) {
  Result res{"score recomputation"};
  for (int k = 0; k < cases; ++k) {
    PortableRandom rng(5200 + k);
    const int vocab_size = rng.integer(4, 9);
    Instance inst = random_instance(5200 + k, vocab_size, rng.uniform(0.2, 0.5));
    UniformLm lm(vocab_size);
    DecodeConfig config;
    config.beam_width = rng.integer(1, 5);
    config.ctc_weight = rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.1, 0.9);
    config.lm_weight = rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.1, 1.0);
    const ModelScorers scorers(inst.model, inst.vocab, &lm);
    const SearchSetup setup = scorers.setup(config, false);
    BlockStream stream;
    stream.append(inst.model.encode_batch(inst.features, 4));
    Beam beam = initial_beam(setup);
    ++res.cases;
    for (int step = 0; step < 4; ++step) {
      std::vector<Hypothesis> keep;
      beam = search_step(beam, BlockView{&stream, 1}, setup);
      for (const Hypothesis& h : beam.hypotheses) {
        if (!close(combined_score(h.components, config), h.score)) {
          res.fail("instance " + std::to_string(k) + " step " + std::to_string(step));
        }
        if (h.last_token() != inst.vocab.sos_eos_id()) keep.push_back(h);
      }
      beam.hypotheses = keep;
      if (beam.empty()) break;
    }
  }
  return res;
}

Result tiling_completeness(int cases) {
  Result res{"tiling completeness"};
  PortableRandom rng(5300);
  for (int k = 0; k < cases; ++k) {
    BlockLayout layout;
    layout.n_left = rng.integer(0, 20);
    layout.n_center = rng.integer(1, 20);
    layout.n_right = rng.integer(0, 10);
    const int frames = rng.integer(1, 400);
    const auto spans = block_spans(frames, layout);
    ++res.cases;
    int covered = 0;
    bool ok = !spans.empty();
    for (size_t b = 0; b < spans.size(); ++b) {
      const BlockSpan& s = spans[b];
      ok = ok && s.index == static_cast<int>(b) + 1 && s.center_begin == covered &&
           s.center_end > s.center_begin && s.center_end - s.center_begin <= layout.n_center &&
           s.begin == std::max(0, s.center_begin - layout.n_left) &&
           s.end == std::min(frames, s.center_end + layout.n_right) &&
           s.is_last == (b + 1 == spans.size());
      covered = s.center_end;
    }
    if (!ok || covered != frames) res.fail("L=" + std::to_string(frames));
  }
  return res;
}

Result encoder_oracle(int cases) {
  Result res{"encoder oracle"};
  for (int k = 0; k < cases; ++k) {
    PortableRandom rng(5400 + k);
    Instance inst = random_instance(5400 + k, 6, rng.uniform(0.05, 0.5));
    const EncodedBlock block = inst.model.encode_batch(inst.features, 4);
    const Matrix expected =
        oracle::to_matrix(oracle::encode(inst.features.frames, 4, inst.model.encoder));
    ++res.cases;
    if (!(max_abs_diff(block.vectors, expected) <= kScoreTolerance)) {
      res.fail("instance " + std::to_string(k));
    }
  }
  return res;
}

Result encoder_causality(int cases) {
  Result res{"encoder causality"};
  for (int k = 0; k < cases; ++k) {
    PortableRandom rng(5500 + k);
    Instance inst = random_instance(5500 + k, 6, rng.uniform(0.3, 1.2), k % 2 ? 2 : 0);
    const BlockLayout layout = small_layout(rng);
    const auto blocks = inst.model.encode_streaming(inst.features, layout);
    const auto spans = block_spans(inst.features.num_frames() / layout.downsample, layout);
    const int b = rng.integer(0, static_cast<int>(blocks.size()) - 1);
    const int cutoff = spans[b].end * layout.downsample;
    FeatureSequence perturbed = inst.features;
    for (int t = cutoff; t < perturbed.num_frames(); ++t) {
      perturbed.frames.row(t) += rng.row(perturbed.dim(), 3.0);
    }
    const auto again = inst.model.encode_streaming(perturbed, layout);
    ++res.cases;
    for (int c = 0; c <= b; ++c) {
      if (blocks[c].vectors != again[c].vectors || blocks[c].ctc_log_probs != again[c].ctc_log_probs) {
        res.fail("instance " + std::to_string(k) + " block " + std::to_string(c + 1));
        break;
      }
    }
  }
  return res;
}

Result context_chaining(int cases) {
  Result res{"context chaining"};
  for (int k = 0; k < cases; ++k) {
    PortableRandom rng(5600 + k);
    Instance inst = random_instance(5600 + k, 6, rng.uniform(0.5, 1.0));
    const BlockLayout layout = small_layout(rng);
    const auto inputs = segment_blocks(
        downsample(inst.features.frames, layout.downsample, inst.model.encoder), layout);
    const EncoderWeights& w = inst.model.encoder;
    const auto [first, context] =
        encode_block(inputs[0], ContextState::initial(w.num_layers(), w.d_model()), w);
    const auto chained = encode_block(inputs[1], context, w).first;
    ContextState zeroed = context;
    zeroed.vectors.setZero();
    const auto cut = encode_block(inputs[1], zeroed, w).first;
    ++res.cases;
    if (!(max_abs_diff(chained.vectors, cut.vectors) > 1e-9)) {
      res.fail("instance " + std::to_string(k) + ": zeroed context left block 2 unchanged");
    }
  }
  return res;
}

Result decoder_cache_purity(int cases) {
  Result res{"decoder cache purity"};
  for (int k = 0; k < cases; ++k) {
    PortableRandom rng(5700 + k);
    const int vocab_size = rng.integer(4, 8);
    Instance inst = random_instance(5700 + k, vocab_size, rng.uniform(0.4, 0.9));
    const auto stream = stream_of(inst.model.encode_streaming(inst.features, small_layout(rng)));
    const AttentionDecoderScorer scorer(inst.model.decoder);
    std::vector<int> prefix{inst.vocab.sos_eos_id()};
    const int len = rng.integer(1, 5);
    for (int p = 0; p < len; ++p) prefix.push_back(rng.integer(1, vocab_size - 2));
    const auto views = nondecreasing_views(rng, prefix.size(), stream->size());
    StatePtr state = scorer.init();
    ++res.cases;
    for (size_t p = 0; p < prefix.size(); ++p) {
      const std::span<const int> head(prefix.data(), p + 1);
      const BlockView view{stream.get(), views[p]};
      const ScoreStep step = scorer.score_step(state, head, view);
      const ScoreStep repeat = scorer.score_step(state, head, view);
      const Matrix memory = stream->memory().topRows(view.frames());
      const auto expected = oracle::decoder_log_probs(
          inst.model.decoder, std::vector<int>(head.begin(), head.end()), oracle::from_matrix(memory));
      bool ok = step.scores == repeat.scores;
      for (int c = 0; c < vocab_size; ++c) ok = ok && close(step.scores[c], static_cast<double>(expected[c]));
      if (!ok) {
        res.fail("instance " + std::to_string(k) + " step " + std::to_string(p));
        break;
      }
      if (p + 1 < prefix.size()) state = scorer.extend(step, head, prefix[p + 1], view);
    }
  }
  return res;
}

Result decoder_causality(int cases) {
  Result res{"decoder causality"};
  for (int k = 0; k < cases; ++k) {
    PortableRandom rng(5800 + k);
    const int vocab_size = rng.integer(5, 8);
    Instance inst = random_instance(5800 + k, vocab_size, rng.uniform(0.2, 0.5));
    const auto stream = stream_of({inst.model.encode_batch(inst.features, 4)});
    const AttentionDecoderScorer scorer(inst.model.decoder);
    std::vector<int> a{inst.vocab.sos_eos_id()};
    for (int p = 0; p < 5; ++p) a.push_back(rng.integer(1, vocab_size - 2));
    std::vector<int> b = a;
    const int j = rng.integer(1, 5);
    b[j] = 1 + b[j] % (vocab_size - 2);
    auto distributions = [&](const std::vector<int>& seq) {
      std::vector<std::vector<double>> out;
      StatePtr state = scorer.init();
      for (size_t p = 0; p < seq.size(); ++p) {
        const std::span<const int> head(seq.data(), p + 1);
        const ScoreStep step = scorer.score_step(state, head, BlockView{stream.get(), 1});
        out.push_back(step.scores);
        if (p + 1 < seq.size()) state = scorer.extend(step, head, seq[p + 1], BlockView{stream.get(), 1});
      }
      return out;
    };
    const auto da = distributions(a);
    const auto db = distributions(b);
    ++res.cases;
    for (int p = 0; p < j; ++p) {
      if (da[p] != db[p]) res.fail("instance " + std::to_string(k) + " step " + std::to_string(p));
    }
    if (da[j] == db[j]) res.fail("instance " + std::to_string(k) + ": changed token had no effect");
  }
  return res;
}

Result ctc_nesting(int cases) {
  Result res{"ctc prefix nesting"};
  for (int k = 0; k < cases; ++k) {
    PortableRandom rng(5900 + k);
    const int symbols = rng.integer(3, 6);
    const int eos = symbols - 1;
    const Matrix log_probs = random_posteriors(rng, rng.integer(1, 8), symbols);
    const auto stream = posterior_stream(log_probs, {});
    const CtcPrefixScorer scorer(symbols, 0, eos);
    std::vector<int> prefix{eos};
    for (int p = rng.integer(0, 3); p > 0; --p) prefix.push_back(rng.integer(1, symbols - 2));
    const StatePtr state = walk(scorer, prefix, *stream, std::vector<size_t>(prefix.size(), 1));
    const ScoreStep step = scorer.score_step(state, prefix, BlockView{stream.get(), 1});
    long double mass = 0.0L;
    for (int c = 1; c < symbols; ++c) mass += std::exp(static_cast<long double>(state->score + step.scores[c]));
    ++res.cases;
    if (mass > std::exp(static_cast<long double>(state->score)) + 1e-9L) {
      res.fail("instance " + std::to_string(k));
    }
  }
  return res;
}

Result ctc_block_monotonicity(int cases) {
  Result res{"ctc block monotonicity"};
  for (int k = 0; k < cases; ++k) {
    PortableRandom rng(6000 + k);
    const int symbols = rng.integer(3, 6);
    const int eos = symbols - 1;
    const int frames = rng.integer(2, 12);
    const Matrix log_probs = random_posteriors(rng, frames, symbols);
    const int cut = rng.integer(1, frames - 1);
    const auto stream = posterior_stream(log_probs, {cut});
    const CtcPrefixScorer scorer(symbols, 0, eos);
    std::vector<int> prefix{eos};
    for (int p = rng.integer(0, 4); p > 0; --p) prefix.push_back(rng.integer(1, symbols - 2));
    const StatePtr state = walk(scorer, prefix, *stream, std::vector<size_t>(prefix.size(), 1));
    scorer.score_step(state, prefix, BlockView{stream.get(), 1});
    const long before = scorer.columns_computed();
    scorer.score_step(state, prefix, BlockView{stream.get(), 2});
    const long grown = scorer.columns_computed() - before;
    scorer.score_step(state, prefix, BlockView{stream.get(), 2});
    const long repeated = scorer.columns_computed() - before - grown;
    ++res.cases;
    const long expected = static_cast<long>(prefix.size()) * (frames - cut);
    if (grown != expected || repeated != 0) {
      res.fail("instance " + std::to_string(k) + ": computed " + std::to_string(grown) +
               " columns, expected " + std::to_string(expected));
    }
  }
  return res;
}

Result lm_cache_purity(int cases) {
  Result res{"lm cache purity"};
  for (int k = 0; k < cases; ++k) {
    PortableRandom rng(6100 + k);
    const Vocabulary vocab = toy_vocabulary(rng.integer(4, 8));
    BigramLm lm(vocab);
    for (int a = 0; a < vocab.size(); ++a) {
      for (int b = 0; b < vocab.size(); ++b) {
        if (rng.uniform() < 0.7) lm.set(a, b, rng.uniform(-5.0, 0.0));
      }
    }
    BlockStream stream;
    std::vector<int> seq{vocab.sos_eos_id()};
    for (int p = rng.integer(1, 6); p > 0; --p) seq.push_back(rng.integer(1, vocab.size() - 2));
    seq.push_back(vocab.sos_eos_id());
    StatePtr state = lm.init();
    double expected = 0.0;
    ++res.cases;
    for (size_t p = 1; p < seq.size(); ++p) {
      const std::span<const int> head(seq.data(), p);
      const ScoreStep step = lm.score_step(state, head, BlockView{&stream, 0});
      state = lm.extend(step, head, seq[p], BlockView{&stream, 0});
      expected += lm.log_prob(seq[p - 1], seq[p]);
    }
    if (!close(state->score, expected)) res.fail("instance " + std::to_string(k));
  }
  return res;
}

Result repetition_score_properties(int cases) {
  Result res{"repetition score"};
  PortableRandom rng(6200);
  for (int k = 0; k < cases; ++k) {
    const int vocab_size = rng.integer(3, 8);
    const int eos = vocab_size - 1;
    std::vector<int> prefix{eos};
    for (int p = rng.integer(0, 6); p > 0; --p) prefix.push_back(rng.integer(1, vocab_size - 2));
    std::vector<double> dist(vocab_size);
    for (double& d : dist) d = rng.uniform(-8.0, 0.0);
    const double alpha = rng.uniform(-20.0, 0.0);
    EvaluatedSet excluded;
    const RepetitionScore on = repetition_score(prefix, dist, alpha, excluded, true);
    const RepetitionScore off = repetition_score(prefix, dist, alpha, excluded, false);
    double brute = kLogZero;
    for (int t : prefix) brute = std::max(brute, dist[t] + alpha);
    bool ok = off.r <= on.r && on.r == brute && off.r == dist[eos] + alpha;
    double previous = on.r;
    for (int round = 0; round < 3; ++round) {
      excluded.insert(prefix, rng.integer(0, static_cast<int>(prefix.size()) - 1));
      const RepetitionScore now = repetition_score(prefix, dist, alpha, excluded, true);
      ok = ok && now.r <= previous;
      ok = ok && (now.position < 0 || !excluded.contains(prefix, now.position));
      previous = now.r;
    }
    ++res.cases;
    if (!ok) res.fail("case " + std::to_string(k));
  }
  return res;
}

Result boundary_shift_invariance(int cases) {
  Result res{"boundary shift invariance"};
  for (int k = 0; k < cases; ++k) {
    PortableRandom a_rng(6300 + k), b_rng(6300 + k);
    const double shift = 0.125 * (1 + k % 40);
    const Beam base = scripted_beam(a_rng, 6, 5, 0.0);
    const Beam shifted = scripted_beam(b_rng, 6, 5, shift);
    DecodeConfig config;
    config.bbd_score_source = k % 2 ? BbdScoreSource::kJoint : BbdScoreSource::kAttention;
    config.strict_boundary = k % 3 == 0;
    EvaluatedSet e1, e2;
    const auto r1 = detect_boundary(base, assess_beam(base, e1, config), e1);
    const auto r2 = detect_boundary(shifted, assess_beam(shifted, e2, config), e2);
    bool ok = r1.boundary == r2.boundary && e1.size() == e2.size();
    for (size_t h = 0; h < r1.reports.size(); ++h) {
      ok = ok && r1.reports[h].s == r2.reports[h].s && r1.reports[h].position == r2.reports[h].position;
    }
    ++res.cases;
    if (!ok) res.fail("case " + std::to_string(k));
  }
  return res;
}

Result reevaluation_suppression(int cases) {
  Result res{"re-evaluation suppression"};
  for (int k = 0; k < cases; ++k) {
    PortableRandom rng(6400 + k);
    const Beam beam = scripted_beam(rng, 6, 5, 0.0);
    DecodeConfig config;
    config.repetition_criterion = k % 4 != 0;
    EvaluatedSet evaluated;
    const auto first = detect_boundary(beam, assess_beam(beam, evaluated, config), evaluated);
    std::set<std::pair<std::vector<int>, int>> judged;
    for (const auto& r : first.reports) {
      const auto& t = beam.hypotheses[r.hypothesis].tokens;
      if (!r.reliable && r.position >= 0) judged.insert({{t.begin(), t.end() - 1}, r.position});
    }
    const auto second = assess_beam(beam, evaluated, config);
    ++res.cases;
    for (const auto& r : second) {
      const auto& t = beam.hypotheses[r.hypothesis].tokens;
      if (!r.reliable && judged.count({{t.begin(), t.end() - 1}, r.position})) {
        res.fail("case " + std::to_string(k));
        break;
      }
    }
  }
  return res;
}

Result boundary_monotonicity(int cases) {
  Result res{"boundary monotonicity"};
  for (int k = 0; k < cases; ++k) {
    PortableRandom rng(6500 + k);
    const int vocab_size = rng.integer(5, 10);
    Instance inst = random_instance(6500 + k, vocab_size, rng.uniform(0.5, 1.2));
    DecodeConfig config;
    config.beam_width = rng.integer(1, 4);
    config.ctc_weight = rng.uniform() < 0.5 ? 0.0 : 0.3;
    config.conservative = rng.uniform() < 0.5;
    config.repetition_criterion = rng.uniform() < 0.7;
    config.strict_boundary = rng.uniform() < 0.3;
    const ModelScorers scorers(inst.model, inst.vocab);
    auto blocks = inst.model.encode_streaming(inst.features, small_layout(rng));
    const int count = static_cast<int>(blocks.size());
    const SearchResult result =
        blockwise_synchronous_beam_search(std::move(blocks), scorers.setup(config, true));
    const SearchTrace& trace = result.trace;
    bool ok = trace.index_boundaries.front() == 0 &&
              static_cast<int>(trace.index_boundaries.size()) == count;
    for (size_t b = 1; b < trace.index_boundaries.size(); ++b) {
      ok = ok && trace.index_boundaries[b] >= trace.index_boundaries[b - 1];
    }
    // A detected boundary rewinds below its step; reaching i_max keeps every step.
    bool detected = false;
    for (const TraceEvent& e : trace.events) {
      if (e.kind == TraceEvent::Kind::kCheck) detected = e.boundary;
      if (e.kind == TraceEvent::Kind::kBoundary) {
        ok = ok && e.index_boundary <= (detected ? e.step - 1 : e.step);
      }
    }
    const int bound = config.conservative ? 2 * count : count;
    for (int c : trace.decode_counts) ok = ok && c <= bound;
    for (const Hypothesis& h : result.completed) ok = ok && h.last_token() == inst.vocab.sos_eos_id();
    ++res.cases;
    if (!ok) res.fail("instance " + std::to_string(k));
  }
  return res;
}

Result approximation_direction(int cases) {
  Result res{"approximation direction"};
  for (int k = 0; k < cases; ++k) {
    PortableRandom rng(6600 + k);
    Instance inst = random_instance(6600 + k, 4, rng.uniform(0.3, 0.5));
    const ModelScorers scorers(inst.model, inst.vocab);
    DecodeConfig config;
    config.i_max = 4;
    config.ctc_weight = k % 2 ? 0.3 : 0.0;
    config.conservative = k % 3 == 0;
    const BlockLayout layout = small_layout(rng);
    const auto stream = stream_of(inst.model.encode_streaming(inst.features, layout));
    config.beam_width = rng.integer(1, 3);
    const SearchSetup streaming_setup = scorers.setup(config, false);
    const SearchResult streaming = blockwise_synchronous_beam_search(
        inst.model.encode_streaming(inst.features, layout), streaming_setup);
    config.beam_width = 256;
    const SearchSetup exhaustive = scorers.setup(config, false);
    const SearchResult batch = batch_beam_search(*stream, exhaustive);
    ++res.cases;
    if (streaming.forced) continue;
    const ScoreBreakdown full =
        rescore(streaming.best.tokens, BlockView{stream.get(), stream->size()}, exhaustive);
    if (combined_score(full, config) > batch.best.score + kScoreTolerance) {
      res.fail("instance " + std::to_string(k));
    }
  }
  return res;
}

Result determinism(int cases) {
  Result res{"determinism"};
  for (int k = 0; k < cases; ++k) {
    PortableRandom rng(6700 + k);
    Instance inst = random_instance(6700 + k, rng.integer(4, 10), rng.uniform(0.3, 1.0));
    DecodeConfig config;
    config.beam_width = rng.integer(1, 4);
    config.ctc_weight = 0.3;
    const BlockLayout layout = small_layout(rng);
    auto run = [&] {
      const ModelScorers scorers(inst.model, inst.vocab);
      const SearchResult r = blockwise_synchronous_beam_search(
          inst.model.encode_streaming(inst.features, layout), scorers.setup(config, true));
      std::ostringstream out;
      write_trace(out, r.trace, inst.vocab);
      return out.str();
    };
    ++res.cases;
    if (run() != run()) res.fail("instance " + std::to_string(k));
  }
  return res;
}

Result edit_distance_oracle(int cases) {
  Result res{"edit distance oracle"};
  PortableRandom rng(6800);
  for (int k = 0; k < cases; ++k) {
    const auto ref = random_words(rng, 8, 3);
    const auto hyp = random_words(rng, 8, 3);
    const EditStats stats = edit_distance(ref, hyp);
    ++res.cases;
    if (stats.distance != oracle::edit_distance(ref, hyp) ||
        stats.substitutions + stats.insertions + stats.deletions != stats.distance ||
        stats.ref_length != static_cast<int>(ref.size()) ||
        stats.deletions - stats.insertions != static_cast<int>(ref.size()) - static_cast<int>(hyp.size())) {
      res.fail("case " + std::to_string(k));
    }
  }
  return res;
}

Result record_round_trip(int cases) {
  Result res{"record round trip"};
  PortableRandom rng(6900);
  for (int k = 0; k < cases; ++k) {
    UtteranceResult r;
    r.id = "utt" + std::to_string(k);
    r.mode = k % 2 ? "batch" : "streaming";
    r.hypothesis = random_words(rng, 6, 4);
    if (k % 3) {
      r.reference = random_words(rng, 6, 4);
      r.errors = edit_distance(*r.reference, r.hypothesis);
    }
    r.score = k % 7 == 0 ? kLogZero : rng.uniform(-50.0, 0.0);
    r.scores = {rng.uniform(-30.0, 0.0), rng.uniform(-30.0, 0.0), 0.0};
    r.forced = k % 5 == 0;
    r.audio_seconds = rng.uniform(0.1, 15.0);
    r.response_time = rng.uniform(0.0, 1.0);
    r.rtf = rng.uniform(0.0, 2.0);
    r.cpu_seconds = rng.uniform(0.0, 5.0);
    for (int b = rng.integer(0, 4); b > 0; --b) {
      r.block_times.push_back(rng.uniform(0.0, 0.1));
      r.index_boundaries.push_back(rng.integer(0, 9));
    }
    r.redecoded_steps = rng.integer(0, 5);
    const std::string line = r.to_json();
    ++res.cases;
    if (UtteranceResult::from_json(line).to_json() != line) res.fail("record " + std::to_string(k));
  }
  return res;
}

Result summary_micro_average(int cases) {
  Result res{"summary micro-average"};
  PortableRandom rng(7000);
  for (int k = 0; k < cases; ++k) {
    std::vector<UtteranceResult> results(rng.integer(1, 6));
    int distance = 0, length = 0;
    for (auto& r : results) {
      r.id = "u";
      r.mode = "batch";
      r.hypothesis = random_words(rng, 6, 3);
      r.reference = random_words(rng, 6, 3);
      if (r.reference->empty()) r.reference->push_back("a");
      r.errors = edit_distance(*r.reference, r.hypothesis);
      distance += oracle::edit_distance(*r.reference, r.hypothesis);
      length += static_cast<int>(r.reference->size());
    }
    std::ostringstream out;
    write_summary(out, results);
    std::ostringstream expected;
    expected << std::fixed << std::setprecision(4) << "error rate "
             << static_cast<double>(distance) / length << " (" << distance << "/" << length << ")";
    ++res.cases;
    if (out.str().find(expected.str()) == std::string::npos) res.fail("case " + std::to_string(k));
  }
  return res;
}

std::vector<Result> invariant_suites() {
  return {log_add_associativity(300),   beam_ordering(200),
          score_recomputation(60),      tiling_completeness(500),
          encoder_oracle(60),           encoder_causality(100),
          context_chaining(60),         decoder_cache_purity(100),
          decoder_causality(60),        ctc_nesting(300),
          ctc_block_monotonicity(300),  lm_cache_purity(100),
          repetition_score_properties(300), boundary_shift_invariance(200),
          reevaluation_suppression(200), boundary_monotonicity(150),
          approximation_direction(100), determinism(30),
          edit_distance_oracle(300),    record_round_trip(100),
          summary_micro_average(100)};
}

}  // namespace checks
