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

#include "blocksync/cli.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "blocksync/harness.h"
#include "blocksync/lm_scorer.h"
#include "blocksync/table_scorer.h"

namespace blocksync {

namespace {

namespace fs = std::filesystem;

const std::map<std::string, bool> kOnOff{{"on", true}, {"off", false}};

struct DecodeFlags {
  std::string model;
  std::string vocab;
  std::string input;
  std::string ref;
  std::string lm;
  std::string trace;
  std::string output;
  std::string block = "16,16,8";
  int downsample = 4;
  std::string mode = "streaming";
  std::string bbd_source = "attention";
  bool conservative = false;
  bool repetition = true;
  bool strict = false;
  DecodeConfig config;
};

BlockLayout parse_block(const std::string& text, int downsample, double frame_shift_ms) {
  std::vector<int> v;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    try {
      size_t used = 0;
      v.push_back(std::stoi(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw Error("--block expects L,C,R integers, got '" + text + "'");
    }
  }
  if (v.size() != 3) throw Error("--block expects L,C,R integers, got '" + text + "'");
  BlockLayout layout{v[0], v[1], v[2], downsample, frame_shift_ms};
  layout.validate();
  return layout;
}

void add_search_flags(CLI::App* cmd, DecodeFlags& f) {
  cmd->add_option("--beam", f.config.beam_width, "beam width K")->capture_default_str();
  cmd->add_option("--i-max", f.config.i_max, "maximum output length (0: frames + 2)")
      ->capture_default_str();
  cmd->add_option("--ctc-weight", f.config.ctc_weight, "CTC weight in [0,1]")->capture_default_str();
  cmd->add_option("--lm-weight", f.config.lm_weight, "LM fusion weight")->capture_default_str();
  cmd->add_option("--lm", f.lm, "bigram LM file")->check(CLI::ExistingFile);
  cmd->add_option("--conservative", f.conservative, "rewind two steps at a boundary")
      ->transform(CLI::CheckedTransformer(kOnOff))
      ->default_str("off");
  cmd->add_option("--repetition", f.repetition, "repetition criterion (off: eos only)")
      ->transform(CLI::CheckedTransformer(kOnOff))
      ->default_str("on");
  cmd->add_option("--strict-boundary", f.strict, "fire on s < 0 instead of s <= 0")
      ->transform(CLI::CheckedTransformer(kOnOff))
      ->default_str("off");
  cmd->add_option("--bbd-source", f.bbd_source, "score source for boundary detection")
      ->check(CLI::IsMember({"attention", "joint"}))
      ->capture_default_str();
  cmd->add_option("--end-margin", f.config.end_margin, "ending criterion margin")
      ->capture_default_str();
}

void add_model_flags(CLI::App* cmd, DecodeFlags& f) {
  cmd->add_option("--model", f.model, "model tensor file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--vocab", f.vocab, "vocabulary file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--input", f.input, "manifest of id<TAB>features[<TAB>ref]")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--ref", f.ref, "reference file: id tokens...")->check(CLI::ExistingFile);
  cmd->add_option("--block", f.block, "block layout L,C,R")->capture_default_str();
  cmd->add_option("--downsample", f.downsample, "input downsampling factor")->capture_default_str();
  cmd->add_option("--trace", f.trace, "directory for per-utterance trace files");
  cmd->add_option("--output", f.output, "result records file (default: standard output)");
  add_search_flags(cmd, f);
}

DecodeConfig finish_config(const DecodeFlags& f) {
  DecodeConfig c = f.config;
  c.conservative = f.conservative;
  c.repetition_criterion = f.repetition;
  c.strict_boundary = f.strict;
  c.bbd_score_source = f.bbd_source == "joint" ? BbdScoreSource::kJoint : BbdScoreSource::kAttention;
  c.validate();
  return c;
}

std::unique_ptr<Scorer> load_lm(const DecodeFlags& f, const Vocabulary& vocab) {
  if (f.lm.empty()) return nullptr;
  return std::make_unique<BigramLm>(BigramLm::load(f.lm, vocab));
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

void write_trace_file(const std::string& dir, const UtteranceResult& r, const SearchTrace& trace,
                      const Vocabulary& vocab) {
  fs::create_directories(dir);
  std::ofstream out = open_output((fs::path(dir) / (r.id + "." + r.mode + ".trace.jsonl")).string());
  write_trace(out, trace, vocab);
}

int run_decode(const DecodeFlags& f, bool compare, std::ostream& out) {
  const DecodeConfig config = finish_config(f);
  const Vocabulary vocab = Vocabulary::load(f.vocab);
  const Model model = Model::load(f.model);
  const std::unique_ptr<Scorer> lm = load_lm(f, vocab);
  std::vector<ManifestEntry> entries = read_manifest(f.input);
  if (!f.ref.empty()) merge_references(f.ref, entries);

  std::vector<DecodeMode> modes;
  if (compare) {
    modes = {DecodeMode::kBatch, DecodeMode::kStreaming};
  } else {
    if (f.mode != "batch" && f.mode != "streaming") throw Error("--mode must be batch or streaming");
    modes = {f.mode == "batch" ? DecodeMode::kBatch : DecodeMode::kStreaming};
  }

  std::ofstream file;
  if (!f.output.empty()) file = open_output(f.output);
  std::ostream& records = f.output.empty() ? out : file;
  std::vector<UtteranceResult> results;
  int diffs = 0;
  std::ostringstream diff_report;
  for (const ManifestEntry& entry : entries) {
    RunRequest req;
    req.id = entry.id;
    req.model = &model;
    req.vocab = &vocab;
    req.lm = lm.get();
    req.features = FeatureSequence::load(entry.feature_path);
    req.layout = parse_block(f.block, f.downsample, req.features.frame_shift_ms);
    req.config = config;
    req.record_events = !f.trace.empty();
    req.reference = entry.reference;
    std::vector<UtteranceResult> pair;
    for (DecodeMode mode : modes) {
      req.mode = mode;
      RunOutcome outcome = measure_run(req);
      if (!f.trace.empty()) write_trace_file(f.trace, outcome.result, outcome.search.trace, vocab);
      records << outcome.result.to_json() << '\n';
      pair.push_back(outcome.result);
      results.push_back(std::move(outcome.result));
    }
    if (compare) {
      const EditStats d = edit_distance(pair[0].hypothesis, pair[1].hypothesis);
      if (d.distance != 0) ++diffs;
      diff_report << std::left << std::setw(20) << entry.id << std::right << " token diffs "
                  << std::setw(4) << d.distance << "  score batch " << std::setprecision(10)
                  << pair[0].score << " streaming " << pair[1].score << "  response batch "
                  << std::setprecision(4) << pair[0].response_time << " s streaming "
                  << pair[1].response_time << " s\n";
    }
  }
  write_summary(out, results);
  if (compare) {
    out << diff_report.str();
    out << "utterances with token diffs: " << diffs << " of " << entries.size() << '\n';
  }
  return 0;
}

struct ScenarioFlags {
  std::string table;
  std::string vocab;
  std::string trace;
  std::string mode = "streaming";
  int blocks = 0;
  DecodeFlags search;
};

int run_scenario(ScenarioFlags& f, std::ostream& out) {
  const auto directives = read_table_directives(f.table);
  std::string vocab_path = f.vocab;
  if (vocab_path.empty()) {
    auto it = directives.find("vocab");
    if (it == directives.end()) throw Error(f.table + ": no #vocab directive and no --vocab given");
    vocab_path = (fs::path(f.table).parent_path() / it->second).string();
  }
  int blocks = f.blocks;
  if (blocks == 0) {
    auto it = directives.find("blocks");
    blocks = it == directives.end() ? 1 : std::stoi(it->second);
  }
  if (blocks < 1) throw Error("scenario needs at least one block");
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const TableScorer table = TableScorer::load(f.table, vocab);
  const std::unique_ptr<Scorer> lm = load_lm(f.search, vocab);
  DecodeConfig config = finish_config(f.search);

  SearchSetup setup;
  setup.vocab = &vocab;
  setup.scorers.attention = &table;
  setup.scorers.lm = lm.get();
  setup.config = config;
  if (config.ctc_weight > 0.0) throw Error("scenario scripts carry no CTC posteriors; use --ctc-weight 0");

  std::vector<EncodedBlock> stream;
  for (int b = 1; b <= blocks; ++b) {
    EncodedBlock block;
    block.index = b;
    block.vectors = Matrix::Zero(1, 1);
    block.frame_start = b - 1;
    block.frame_end = b;
    block.is_last = b == blocks;
    stream.push_back(std::move(block));
  }
  SearchResult result;
  if (f.mode == "batch") {
    BlockStream all;
    for (EncodedBlock& b : stream) all.append(std::move(b));
    result = batch_beam_search(all, setup);
  } else {
    result = blockwise_synchronous_beam_search(std::move(stream), setup);
  }

  out << "best: " << vocab.decode(result.best.tokens) << (result.forced ? "  [forced]" : "") << '\n';
  out << "score: " << std::setprecision(10) << result.best.score << '\n';
  for (const TraceEvent& e : result.trace.events) {
    if (e.kind != TraceEvent::Kind::kBoundary) continue;
    out << "block " << e.block << ": boundary at step " << e.step << ", I_" << e.block << " = "
        << e.index_boundary << ", resume from Omega_" << e.index_boundary << '\n';
  }
  out << "index boundaries:";
  for (int i : result.trace.index_boundaries) out << ' ' << i;
  out << "\nredecoded steps: " << result.trace.redecoded_steps << '\n';
  if (!f.trace.empty()) {
    std::ofstream trace = open_output(f.trace);
    write_trace(trace, result.trace, vocab);
  }
  return 0;
}

struct SynthFlags {
  std::string dir;
  std::string kind = "aligned";
  int utterances = 4;
  double min_seconds = 1.0;
  double max_seconds = 15.0;
  unsigned seed = 1;
  ToyModelSpec spec;
};

int run_synth(const SynthFlags& f, std::ostream& out) {
  if (!(f.min_seconds > 0.0) || f.max_seconds < f.min_seconds) throw Error("invalid length range");
  const Vocabulary vocab = toy_vocabulary(f.spec.vocab_size);
  fs::create_directories(fs::path(f.dir) / "feats");
  if (f.kind == "aligned") {
    AlignedToySpec spec;
    spec.vocab_size = f.spec.vocab_size;
    spec.seed = f.seed;
    aligned_toy_model(spec, vocab.blank_id(), vocab.sos_eos_id())
        .save((fs::path(f.dir) / "model.tensors").string());
  } else {
    ToyModelSpec spec = f.spec;
    spec.seed = f.seed;
    random_model(spec).save((fs::path(f.dir) / "model.tensors").string());
  }
  {
    std::ofstream v = open_output((fs::path(f.dir) / "vocab.txt").string());
    v << "#blank " << vocab.blank_id() << "\n#soseos " << vocab.sos_eos_id() << '\n';
    for (const std::string& t : vocab.tokens()) v << t << '\n';
  }
  PortableRandom rng(f.seed ^ 0x9e3779b9u);
  std::ofstream manifest = open_output((fs::path(f.dir) / "manifest.tsv").string());
  for (int u = 0; u < f.utterances; ++u) {
    const double seconds = rng.uniform(f.min_seconds, f.max_seconds);
    const std::uint32_t seed = f.seed * 1000u + static_cast<std::uint32_t>(u);
    std::ostringstream id;
    id << "utt" << std::setw(3) << std::setfill('0') << u;
    const fs::path rel = fs::path("feats") / (id.str() + ".feats");
    std::ofstream feats = open_output((fs::path(f.dir) / rel).string());
    manifest << id.str() << '\t' << rel.string();
    if (f.kind == "aligned") {
      const SyntheticUtterance utt = aligned_utterance(vocab, seconds, 4, seed);
      utt.features.write(feats);
      manifest << '\t' << vocab.decode(utt.tokens);
    } else {
      synthetic_features(seconds, f.spec.feat_dim, seed).write(feats);
    }
    manifest << '\n';
  }
  out << "wrote " << f.kind << " model.tensors, vocab.txt and " << f.utterances
      << " utterances to " << f.dir << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Blockwise synchronous beam search decoder", "blocksync"};
  app.require_subcommand(1);

  DecodeFlags decode_flags;
  CLI::App* decode = app.add_subcommand("decode", "decode a manifest in batch or streaming mode");
  add_model_flags(decode, decode_flags);
  decode->add_option("--mode", decode_flags.mode, "batch or streaming")
      ->check(CLI::IsMember({"batch", "streaming"}))
      ->capture_default_str();

  DecodeFlags compare_flags;
  CLI::App* compare = app.add_subcommand("compare", "decode in both modes and diff the outputs");
  add_model_flags(compare, compare_flags);

  ScenarioFlags scenario_flags;
  scenario_flags.search.config.ctc_weight = 0.0;
  scenario_flags.search.config.i_max = 64;
  CLI::App* scenario = app.add_subcommand("scenario", "run a table-scorer script");
  scenario->add_option("table", scenario_flags.table, "scenario table file")
      ->required()
      ->check(CLI::ExistingFile);
  scenario->add_option("--vocab", scenario_flags.vocab, "vocabulary (default: #vocab directive)")
      ->check(CLI::ExistingFile);
  scenario->add_option("--blocks", scenario_flags.blocks, "block count (default: #blocks directive)");
  scenario->add_option("--trace", scenario_flags.trace, "trace output file");
  scenario->add_option("--mode", scenario_flags.mode, "batch or streaming")
      ->check(CLI::IsMember({"batch", "streaming"}))
      ->capture_default_str();
  add_search_flags(scenario, scenario_flags.search);

  std::string delay_block = "16,16,8";
  int delay_downsample = 4;
  double delay_shift = 10.0;
  CLI::App* delay = app.add_subcommand("delay", "theoretical delay of a block layout in seconds");
  delay->add_option("--block", delay_block, "block layout L,C,R")->capture_default_str();
  delay->add_option("--downsample", delay_downsample, "downsampling factor")->capture_default_str();
  delay->add_option("--frame-shift-ms", delay_shift, "frame shift")->capture_default_str();

  SynthFlags synth_flags;
  synth_flags.spec.vocab_size = 64;
  CLI::App* synth = app.add_subcommand("synth", "write a random toy model and synthetic inputs");
  synth->add_option("--output-dir", synth_flags.dir, "destination directory")->required();
  synth->add_option("--kind", synth_flags.kind, "aligned (transcribes its inputs) or random")
      ->check(CLI::IsMember({"aligned", "random"}))
      ->capture_default_str();
  synth->add_option("--utterances", synth_flags.utterances)->capture_default_str();
  synth->add_option("--min-seconds", synth_flags.min_seconds)->capture_default_str();
  synth->add_option("--max-seconds", synth_flags.max_seconds)->capture_default_str();
  synth->add_option("--seed", synth_flags.seed)->capture_default_str();
  synth->add_option("--vocab-size", synth_flags.spec.vocab_size)->capture_default_str();
  synth->add_option("--feat-dim", synth_flags.spec.feat_dim)->capture_default_str();
  synth->add_option("--d-model", synth_flags.spec.d_model)->capture_default_str();
  synth->add_option("--heads", synth_flags.spec.heads)->capture_default_str();
  synth->add_option("--encoder-layers", synth_flags.spec.encoder_layers)->capture_default_str();
  synth->add_option("--decoder-layers", synth_flags.spec.decoder_layers)->capture_default_str();
  synth->add_option("--conv-stages", synth_flags.spec.conv_stages)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (*decode) return run_decode(decode_flags, false, out);
    if (*compare) return run_decode(compare_flags, true, out);
    if (*scenario) return run_scenario(scenario_flags, out);
    if (*delay) {
      const BlockLayout layout = parse_block(delay_block, delay_downsample, delay_shift);
      out << theoretical_delay(layout) << '\n';
      return 0;
    }
    if (*synth) return run_synth(synth_flags, out);
  } catch (const std::exception& e) {
    err << "blocksync: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace blocksync
