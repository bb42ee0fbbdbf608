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

#ifndef BLOCKSYNC_HARNESS_H_
#define BLOCKSYNC_HARNESS_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "blocksync/ctc_scorer.h"
#include "blocksync/model.h"
#include "blocksync/search.h"

namespace blocksync {

struct EditStats {
  int distance = 0;
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;
  int ref_length = 0;

  /// distance / ref_length. An empty reference yields 0 for an empty
  /// hypothesis and 1 otherwise, with empty_reference() set.
  double rate() const;
  bool empty_reference() const { return ref_length == 0; }
  EditStats& operator+=(const EditStats& other);
};

EditStats edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

struct ManifestEntry {
  std::string id;
  std::string feature_path;
  std::optional<std::vector<std::string>> reference;
};

/// Lines `id<TAB>feature-file[<TAB>reference tokens]`; relative feature paths
/// resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::string& path);

/// Lines `id token token ...`, merged into matching manifest entries.
void merge_references(const std::string& path, std::vector<ManifestEntry>& entries);

std::vector<std::string> split_tokens(const std::string& text);

struct UtteranceResult {
  std::string id;
  std::string mode;  // "batch" or "streaming"
  std::vector<std::string> hypothesis;
  std::optional<std::vector<std::string>> reference;
  std::optional<EditStats> errors;
  double score = 0.0;
  ScoreBreakdown scores;
  bool forced = false;
  double audio_seconds = 0.0;
  double response_time = 0.0;
  double rtf = 0.0;
  double cpu_seconds = 0.0;
  std::vector<double> block_times;  // wall seconds of work per block
  std::vector<int> index_boundaries;
  int redecoded_steps = 0;

  std::string to_json() const;
  static UtteranceResult from_json(const std::string& line);
};

inline constexpr const char* kResultSchema = "blocksync.result/1";

/// Monotonic seconds.
using Clock = std::function<double()>;
double steady_seconds();
double cpu_seconds();

/// Scorers built from a model for one decoding configuration.
class ModelScorers {
 public:
  ModelScorers(const Model& model, const Vocabulary& vocab, const Scorer* lm = nullptr);
  SearchSetup setup(const DecodeConfig& config, bool record_events = true) const;

 private:
  const Vocabulary* vocab_;
  std::unique_ptr<AttentionDecoderScorer> attention_;
  std::unique_ptr<CtcPrefixScorer> ctc_;
  const Scorer* lm_;
};

enum class DecodeMode { kBatch, kStreaming };

struct RunRequest {
  std::string id;
  const Model* model = nullptr;
  const Vocabulary* vocab = nullptr;
  const Scorer* lm = nullptr;
  FeatureSequence features;
  BlockLayout layout;
  DecodeConfig config;
  DecodeMode mode = DecodeMode::kStreaming;
  bool record_events = false;
  std::optional<std::vector<std::string>> reference;
};

struct RunOutcome {
  UtteranceResult result;
  SearchResult search;
};

/// Decodes one utterance under simulated real-time arrival. Block b becomes
/// available when its last input frame (right context included) has been
/// captured; batch decoding starts when the whole utterance has. Work is
/// timed with `clock`, and a clock that runs backwards aborts the run.
RunOutcome measure_run(const RunRequest& request, const Clock& clock = steady_seconds);

/// Fixed-seed smooth random features of the given length.
FeatureSequence synthetic_features(double seconds, int feat_dim, std::uint32_t seed,
                                   double frame_shift_ms = 10.0);

/// Vocabulary `<blank> t1 ... t{n-2} <sos/eos>` used by the toy models.
Vocabulary toy_vocabulary(int size);

struct SyntheticUtterance {
  FeatureSequence features;
  std::vector<int> tokens;  // transcript, no <sos>/<eos>
};

/// Fixed-seed input for aligned_toy_model(): distinct random tokens of 4 to 8
/// downsampled frames each until `seconds` is filled, then 8 frames of
/// silence. The transcript is capped at the number of distinct tokens.
SyntheticUtterance aligned_utterance(const Vocabulary& vocab, double seconds, int downsample_factor,
                                     std::uint32_t seed, double frame_shift_ms = 10.0);

/// Human-readable summary of a set of results.
void write_summary(std::ostream& out, const std::vector<UtteranceResult>& results);

}  // namespace blocksync

#endif  // BLOCKSYNC_HARNESS_H_
