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

#include "blocksync/scorer.h"

namespace blocksync {

void BlockStream::append(EncodedBlock block) {
  if (block.num_frames() < 1) throw Error("input shorter than one downsampled frame");
  if (block.frame_start != cumulative_frames_.back()) {
    throw Error("block " + std::to_string(block.index) + " is not contiguous with the stream");
  }
  if (block.vectors.rows() != 0 && block.vectors.rows() != block.num_frames()) {
    throw Error("block vectors do not match its frame range");
  }
  if (!blocks_.empty()) {
    if (blocks_.back().is_last) throw Error("block pushed after the last block");
    if (block.vectors.cols() != memory_.cols()) throw Error("block width changed mid-stream");
    if (block.ctc_log_probs.cols() != ctc_width_) throw Error("CTC width changed mid-stream");
  } else {
    memory_.resize(0, block.vectors.cols());
    ctc_width_ = static_cast<int>(block.ctc_log_probs.cols());
  }
  if (block.vectors.rows() != 0) {
    const Eigen::Index old = memory_.rows();
    memory_.conservativeResize(old + block.vectors.rows(), Eigen::NoChange);
    memory_.bottomRows(block.vectors.rows()) = block.vectors;
  }
  if (ctc_width_ > 0) {
    if (block.ctc_log_probs.rows() != block.num_frames()) {
      throw Error("CTC posteriors do not match block frames");
    }
    for (Eigen::Index r = 0; r < block.ctc_log_probs.rows(); ++r) {
      for (Eigen::Index c = 0; c < ctc_width_; ++c) ctc_.push_back(block.ctc_log_probs(r, c));
    }
  }
  cumulative_frames_.push_back(block.frame_end);
  blocks_.push_back(std::move(block));
}

int BlockStream::frames_through(size_t count) const {
  if (count >= cumulative_frames_.size()) throw Error("block view exceeds received blocks");
  return cumulative_frames_[count];
}

void Scorer::check_contract(const ScorerState& state, std::span<const int> prefix,
                            const BlockView& blocks) {
  if (static_cast<int>(prefix.size()) != state.prefix_length) {
    throw Error("prefix does not match scorer state");
  }
  if (blocks.count < state.blocks_seen) throw Error("non-monotone block stream");
}

}  // namespace blocksync
