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

#ifndef BLOCKSYNC_TENSOR_IO_H_
#define BLOCKSYNC_TENSOR_IO_H_

#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "blocksync/nn.h"

namespace blocksync {

struct Tensor {
  std::vector<int> dims;
  std::vector<double> data;  // row-major
};

/// Sectioned text tensor container: each section is a `[tensor <name> <dims...>]`
/// header followed by the row-major values, whitespace separated. Lines
/// starting with `;` are comments.
class TensorFile {
 public:
  static TensorFile parse(std::istream& in, const std::string& source = "<tensors>");
  static TensorFile load(const std::string& path);
  void write(std::ostream& out) const;
  void save(const std::string& path) const;

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Matrix matrix(const std::string& name) const;   // 2-D
  RowVector vector(const std::string& name) const;  // 1-D
  double scalar(const std::string& name) const;    // one element

  void put(const std::string& name, const Matrix& m);
  void put(const std::string& name, const RowVector& v);
  void put_scalar(const std::string& name, double value);

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

 private:
  std::map<std::string, Tensor> tensors_;
};

}  // namespace blocksync

#endif  // BLOCKSYNC_TENSOR_IO_H_
