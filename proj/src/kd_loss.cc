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

#include "blocksync/kd_loss.h"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace blocksync {

double kd_loss(std::span<const double> teacher, std::span<const double> student_log_probs) {
  if (teacher.size() != student_log_probs.size() || teacher.empty()) {
    throw std::invalid_argument("teacher and student must cover the same vocabulary");
  }
  double mass = 0.0;
  for (double q : teacher) {
    if (!(q >= 0.0)) throw std::invalid_argument("teacher probabilities must be non-negative");
    mass += q;
  }
  if (std::abs(mass - 1.0) > 1e-6) throw std::invalid_argument("teacher must sum to 1");
  double loss = 0.0;
  for (size_t y = 0; y < teacher.size(); ++y) {
    if (teacher[y] == 0.0) continue;
    if (std::isinf(student_log_probs[y]) && student_log_probs[y] < 0) {
      return std::numeric_limits<double>::infinity();
    }
    loss -= teacher[y] * student_log_probs[y];
  }
  return loss;
}

double kd_combined_loss(double attention_loss, double distillation_loss, double weight) {
  if (!(weight >= 0.0 && weight <= 1.0)) {
    throw std::invalid_argument("distillation weight must lie in [0, 1]");
  }
  if (weight == 0.0) return attention_loss;
  if (weight == 1.0) return distillation_loss;
  return (1.0 - weight) * attention_loss + weight * distillation_loss;
}

}  // namespace blocksync
