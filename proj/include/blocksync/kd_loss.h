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

#ifndef BLOCKSYNC_KD_LOSS_H_
#define BLOCKSYNC_KD_LOSS_H_

#include <span>

namespace blocksync {

/// Cross-entropy of a student log-distribution against a teacher distribution,
/// -sum_y q(y) log p(y). Returns +infinity when the student assigns log-zero to
/// a token the teacher supports.
double kd_loss(std::span<const double> teacher, std::span<const double> student_log_probs);

/// (1 - weight) * attention_loss + weight * kd_loss, weight in [0, 1].
double kd_combined_loss(double attention_loss, double distillation_loss, double weight);

}  // namespace blocksync

#endif  // BLOCKSYNC_KD_LOSS_H_
