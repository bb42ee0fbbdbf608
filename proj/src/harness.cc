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

#include "blocksync/harness.h"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace blocksync {

namespace {

using nlohmann::ordered_json;

ordered_json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double number_from(const ordered_json& j) {
  return j.is_null() ? kLogZero : j.get<double>();
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const std::string& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace

double EditStats::rate() const {
  if (ref_length == 0) return distance == 0 ? 0.0 : 1.0;
  return static_cast<double>(distance) / ref_length;
}

EditStats& EditStats::operator+=(const EditStats& o) {
  distance += o.distance;
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  ref_length += o.ref_length;
  return *this;
}

EditStats edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  const size_t n = ref.size();
  const size_t m = hyp.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const int sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      d[i][j] = std::min({sub, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }
  EditStats stats;
  stats.distance = d[n][m];
  stats.ref_length = static_cast<int>(n);
  size_t i = n;
  size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++stats.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++stats.deletions;
      --i;
    } else {
      ++stats.insertions;
      --j;
    }
  }
  return stats;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> tokens;
  for (std::string t; in >> t;) tokens.push_back(t);
  return tokens;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::istringstream fs(line);
    for (std::string f; std::getline(fs, f, '\t');) fields.push_back(f);
    if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() || fields[1].empty()) {
      throw ParseError(path, lineno, "expected id<TAB>feature-file[<TAB>reference]");
    }
    ManifestEntry entry;
    entry.id = fields[0];
    std::filesystem::path feat(fields[1]);
    entry.feature_path = feat.is_absolute() ? feat.string() : (base / feat).string();
    if (fields.size() == 3) entry.reference = split_tokens(fields[2]);
    entries.push_back(std::move(entry));
  }
  return entries;
}

void merge_references(const std::string& path, std::vector<ManifestEntry>& entries) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open reference file " + path);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    std::vector<std::string> tokens = split_tokens(line);
    if (tokens.empty()) continue;
    const std::string id = tokens.front();
    tokens.erase(tokens.begin());
    auto it = std::find_if(entries.begin(), entries.end(),
                           [&id](const ManifestEntry& e) { return e.id == id; });
    if (it == entries.end()) throw ParseError(path, lineno, "unknown utterance id '" + id + "'");
    it->reference = std::move(tokens);
  }
}

std::string UtteranceResult::to_json() const {
  ordered_json j;
  j["schema"] = kResultSchema;
  j["id"] = id;
  j["mode"] = mode;
  j["hypothesis"] = hypothesis;
  if (reference) j["reference"] = *reference;
  if (errors) {
    j["errors"] = {{"distance", errors->distance},
                   {"substitutions", errors->substitutions},
                   {"insertions", errors->insertions},
                   {"deletions", errors->deletions},
                   {"ref_length", errors->ref_length}};
  }
  j["score"] = number(score);
  j["scores"] = {{"attention", number(scores.attention)},
                 {"ctc", number(scores.ctc)},
                 {"lm", number(scores.lm)}};
  j["forced"] = forced;
  j["audio_seconds"] = audio_seconds;
  j["response_time"] = response_time;
  j["rtf"] = rtf;
  j["cpu_seconds"] = cpu_seconds;
  j["block_times"] = block_times;
  j["index_boundaries"] = index_boundaries;
  j["redecoded_steps"] = redecoded_steps;
  return j.dump();
}

UtteranceResult UtteranceResult::from_json(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed result record: ") + e.what());
  }
  if (j.value("schema", "") != kResultSchema) throw Error("unsupported result schema");
  try {
    UtteranceResult r;
    r.id = j.at("id").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.hypothesis = j.at("hypothesis").get<std::vector<std::string>>();
    if (j.contains("reference")) r.reference = j["reference"].get<std::vector<std::string>>();
    if (j.contains("errors")) {
      const auto& e = j["errors"];
      r.errors = EditStats{e.at("distance").get<int>(), e.at("substitutions").get<int>(),
                           e.at("insertions").get<int>(), e.at("deletions").get<int>(),
                           e.at("ref_length").get<int>()};
    }
    r.score = number_from(j.at("score"));
    r.scores.attention = number_from(j.at("scores").at("attention"));
    r.scores.ctc = number_from(j.at("scores").at("ctc"));
    r.scores.lm = number_from(j.at("scores").at("lm"));
    r.forced = j.at("forced").get<bool>();
    r.audio_seconds = j.at("audio_seconds").get<double>();
    r.response_time = j.at("response_time").get<double>();
    r.rtf = j.at("rtf").get<double>();
    r.cpu_seconds = j.at("cpu_seconds").get<double>();
    r.block_times = j.at("block_times").get<std::vector<double>>();
    r.index_boundaries = j.at("index_boundaries").get<std::vector<int>>();
    r.redecoded_steps = j.at("redecoded_steps").get<int>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed result record: ") + e.what());
  }
}

double steady_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

ModelScorers::ModelScorers(const Model& model, const Vocabulary& vocab, const Scorer* lm)
    : vocab_(&vocab), lm_(lm) {
  if (model.vocab_size() != vocab.size()) {
    throw Error("model has " + std::to_string(model.vocab_size()) + " outputs but vocabulary has " +
                std::to_string(vocab.size()) + " tokens");
  }
  attention_ = std::make_unique<AttentionDecoderScorer>(model.decoder);
  if (model.has_ctc()) {
    ctc_ = std::make_unique<CtcPrefixScorer>(vocab.size(), vocab.blank_id(), vocab.sos_eos_id());
  }
}

SearchSetup ModelScorers::setup(const DecodeConfig& config, bool record_events) const {
  if (config.ctc_weight > 0.0 && !ctc_) throw Error("CTC weight set but the model has no CTC head");
  if (config.lm_weight > 0.0 && !lm_) throw Error("LM weight set but no language model given");
  SearchSetup s;
  s.vocab = vocab_;
  s.scorers.attention = attention_.get();
  s.scorers.ctc = ctc_.get();
  s.scorers.lm = lm_;
  s.config = config;
  s.record_events = record_events;
  return s;
}

RunOutcome measure_run(const RunRequest& req, const Clock& clock) {
  if (!req.model || !req.vocab) throw Error("measure_run needs a model and a vocabulary");
  req.layout.validate();
  const Model& model = *req.model;
  model.check_features(req.features);
  const ModelScorers scorers(model, *req.vocab, req.lm);
  const SearchSetup setup = scorers.setup(req.config, req.record_events);
  const int ds = req.layout.downsample;
  const double frame_seconds = req.features.frame_shift_ms / 1000.0;
  const double audio = req.features.duration_seconds();

  double last_tick = clock();
  auto tick = [&]() {
    const double now = clock();
    if (now < last_tick) throw Error("clock went backwards; measurement aborted");
    last_tick = now;
    return now;
  };

  RunOutcome out;
  UtteranceResult& r = out.result;
  double completion = 0.0;
  double cpu = 0.0;
  if (req.mode == DecodeMode::kBatch) {
    r.mode = "batch";
    const double w0 = tick();
    const double c0 = cpu_seconds();
    BlockStream stream;
    stream.append(model.encode_batch(req.features, ds));
    out.search = batch_beam_search(stream, setup);
    cpu += cpu_seconds() - c0;
    const double work = tick() - w0;
    r.block_times.push_back(work);
    completion = audio + work;
  } else {
    r.mode = "streaming";
    const int frames = static_cast<int>(req.features.frames.rows()) / ds;
    const std::vector<BlockSpan> spans = block_spans(frames, req.layout);
    StreamingSession session(setup);
    ContextState context =
        ContextState::initial(model.encoder.num_layers(), model.encoder.d_model());
    double done = 0.0;
    for (const BlockSpan& span : spans) {
      const double available = span.is_last ? audio : span.end * ds * frame_seconds;
      const double start = std::max(done, available);
      const double w0 = tick();
      const double c0 = cpu_seconds();
      BlockInput input{span, downsample(req.features.frames.middleRows(span.begin * ds,
                                                                       (span.end - span.begin) * ds),
                                        ds, model.encoder)};
      auto [block, next] = encode_block(input, context, model.encoder);
      context = std::move(next);
      model.attach_ctc(block);
      session.push_block(std::move(block));
      if (span.is_last) out.search = session.finalize();
      cpu += cpu_seconds() - c0;
      const double work = tick() - w0;
      r.block_times.push_back(work);
      done = start + work;
    }
    completion = done;
  }

  const SearchResult& s = out.search;
  r.id = req.id;
  r.hypothesis = split_tokens(req.vocab->decode(s.best.tokens));
  r.reference = req.reference;
  if (r.reference) r.errors = edit_distance(*r.reference, r.hypothesis);
  r.score = s.best.score;
  r.scores = s.best.components;
  r.forced = s.forced;
  r.audio_seconds = audio;
  r.response_time = std::max(0.0, completion - audio);
  r.cpu_seconds = cpu;
  r.rtf = audio > 0.0 ? cpu / audio : 0.0;
  r.index_boundaries = s.trace.index_boundaries;
  r.redecoded_steps = s.trace.redecoded_steps;
  return out;
}

FeatureSequence synthetic_features(double seconds, int feat_dim, std::uint32_t seed,
                                   double frame_shift_ms) {
  if (!(seconds > 0.0) || feat_dim < 1 || !(frame_shift_ms > 0.0)) {
    throw Error("synthetic features: invalid length or dimension");
  }
  const int frames = std::max(1, static_cast<int>(std::lround(seconds * 1000.0 / frame_shift_ms)));
  PortableRandom rng(seed);
  // Each dimension is a slowly drifting sinusoid plus noise; segments of
  // random length switch the drift so the sequence has "phone" structure.
  FeatureSequence seq;
  seq.frame_shift_ms = frame_shift_ms;
  seq.frames.resize(frames, feat_dim);
  std::vector<double> freq(feat_dim);
  std::vector<double> phase(feat_dim);
  std::vector<double> level(feat_dim);
  int remaining = 0;
  for (int t = 0; t < frames; ++t) {
    if (remaining == 0) {
      remaining = rng.integer(5, 25);
      for (int f = 0; f < feat_dim; ++f) {
        freq[f] = rng.uniform(0.02, 0.3);
        phase[f] = rng.uniform(0.0, 6.283185307179586);
        level[f] = rng.uniform(-1.0, 1.0);
      }
    }
    --remaining;
    for (int f = 0; f < feat_dim; ++f) {
      seq.frames(t, f) = level[f] + std::sin(freq[f] * t + phase[f]) + rng.uniform(-0.1, 0.1);
    }
  }
  return seq;
}

Vocabulary toy_vocabulary(int size) {
  if (size < 3) throw Error("toy vocabulary needs at least 3 tokens");
  std::vector<std::string> tokens{"<blank>"};
  for (int k = 1; k < size - 1; ++k) tokens.push_back("t" + std::to_string(k));
  tokens.push_back("<sos/eos>");
  return Vocabulary(std::move(tokens), 0, size - 1);
}

SyntheticUtterance aligned_utterance(const Vocabulary& vocab, double seconds, int downsample_factor,
                                     std::uint32_t seed, double frame_shift_ms) {
  constexpr int kTrailing = 8;
  if (!(seconds > 0.0) || downsample_factor < 1 || !(frame_shift_ms > 0.0)) {
    throw Error("synthetic utterance: invalid length or geometry");
  }
  PortableRandom rng(seed);
  std::vector<int> pool;
  for (int t = 0; t < vocab.size(); ++t) {
    if (t != vocab.blank_id() && t != vocab.sos_eos_id()) pool.push_back(t);
  }
  for (int k = static_cast<int>(pool.size()) - 1; k > 0; --k) std::swap(pool[k], pool[rng.integer(0, k)]);
  const double frame_seconds = downsample_factor * frame_shift_ms / 1000.0;
  SyntheticUtterance u;
  std::vector<int> durations;
  int frames = kTrailing;
  while (u.tokens.size() < pool.size() && (frames + 4) * frame_seconds <= seconds) {
    u.tokens.push_back(pool[u.tokens.size()]);
    durations.push_back(rng.integer(4, 8));
    frames += durations.back();
  }
  if (u.tokens.empty()) throw Error("synthetic utterance: too short for one token");
  u.features = aligned_features(u.tokens, durations, vocab.size(), vocab.blank_id(),
                                vocab.sos_eos_id(), downsample_factor, kTrailing, 0.5, seed + 1,
                                frame_shift_ms);
  return u;
}

void write_summary(std::ostream& out, const std::vector<UtteranceResult>& results) {
  EditStats total;
  bool any_ref = false;
  double response = 0.0;
  double cpu = 0.0;
  double audio = 0.0;
  out << std::left << std::setw(20) << "id" << std::setw(11) << "mode" << std::right
      << std::setw(8) << "tokens" << std::setw(8) << "err" << std::setw(12) << "response_s"
      << std::setw(8) << "rtf" << "  hypothesis\n";
  for (const UtteranceResult& r : results) {
    out << std::left << std::setw(20) << r.id << std::setw(11) << r.mode << std::right
        << std::setw(8) << r.hypothesis.size() << std::setw(8);
    if (r.errors) {
      out << r.errors->distance;
      total += *r.errors;
      any_ref = true;
    } else {
      out << "-";
    }
    out << std::setw(12) << std::fixed << std::setprecision(4) << r.response_time << std::setw(8)
        << std::setprecision(3) << r.rtf << "  " << join(r.hypothesis) << (r.forced ? " [forced]" : "")
        << '\n';
    out.unsetf(std::ios::floatfield);
    response += r.response_time;
    cpu += r.cpu_seconds;
    audio += r.audio_seconds;
  }
  if (results.empty()) return;
  out << std::fixed << std::setprecision(4);
  out << "utterances " << results.size() << "  mean response " << response / results.size()
      << " s  rtf " << (audio > 0.0 ? cpu / audio : 0.0);
  if (any_ref) {
    out << "  error rate " << total.rate() << " (" << total.distance << "/" << total.ref_length
        << ")";
  }
  out << '\n';
  out.unsetf(std::ios::floatfield);
}

}  // namespace blocksync
