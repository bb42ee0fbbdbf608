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

#include "blocksync/tensor_io.h"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "blocksync/core.h"

namespace blocksync {

namespace {

double parse_number(const std::string& word, const std::string& source, int line) {
  try {
    size_t used = 0;
    const double value = std::stod(word, &used);
    if (used != word.size()) throw std::invalid_argument(word);
    return value;
  } catch (const std::exception&) {
    throw ParseError(source, line, "malformed number '" + word + "'");
  }
}

}  // namespace

TensorFile TensorFile::parse(std::istream& in, const std::string& source) {
  TensorFile file;
  std::string line;
  int line_no = 0;
  Tensor* current = nullptr;
  std::string current_name;
  size_t expected = 0;
  int header_line = 0;
  auto close_section = [&]() {
    if (current && current->data.size() != expected) {
      throw ParseError(source, header_line,
                       "tensor '" + current_name + "' expects " + std::to_string(expected) +
                           " values, found " + std::to_string(current->data.size()));
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == ';') continue;
    if (line[first] == '[') {
      close_section();
      const auto close = line.find(']', first);
      if (close == std::string::npos) throw ParseError(source, line_no, "unterminated header");
      std::istringstream ss(line.substr(first + 1, close - first - 1));
      std::string keyword;
      ss >> keyword >> current_name;
      if (keyword != "tensor" || current_name.empty()) {
        throw ParseError(source, line_no, "expected '[tensor <name> <dims...>]'");
      }
      if (file.tensors_.count(current_name)) {
        throw ParseError(source, line_no, "duplicate tensor '" + current_name + "'");
      }
      Tensor tensor;
      std::string dim;
      expected = 1;
      while (ss >> dim) {
        const double d = parse_number(dim, source, line_no);
        if (d < 0 || d != static_cast<int>(d)) {
          throw ParseError(source, line_no, "bad dimension '" + dim + "'");
        }
        tensor.dims.push_back(static_cast<int>(d));
        expected *= static_cast<size_t>(d);
      }
      if (tensor.dims.empty()) throw ParseError(source, line_no, "tensor needs dimensions");
      current = &file.tensors_.emplace(current_name, std::move(tensor)).first->second;
      header_line = line_no;
      continue;
    }
    if (!current) throw ParseError(source, line_no, "values outside a tensor section");
    std::istringstream ss(line);
    std::string word;
    while (ss >> word) {
      if (current->data.size() == expected) {
        throw ParseError(source, line_no, "too many values for '" + current_name + "'");
      }
      current->data.push_back(parse_number(word, source, line_no));
    }
  }
  close_section();
  return file;
}

TensorFile TensorFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open tensor file: " + path);
  return parse(in, path);
}

void TensorFile::write(std::ostream& out) const {
  out << std::setprecision(17);
  for (const auto& [name, tensor] : tensors_) {
    out << "[tensor " << name;
    for (int d : tensor.dims) out << ' ' << d;
    out << "]\n";
    const size_t row = tensor.dims.size() >= 2 ? static_cast<size_t>(tensor.dims.back()) : 0;
    for (size_t i = 0; i < tensor.data.size(); ++i) {
      out << tensor.data[i];
      const bool end_row = row == 0 ? i + 1 == tensor.data.size() : (i + 1) % row == 0;
      out << (end_row ? '\n' : ' ');
    }
    if (tensor.data.empty()) out << '\n';
  }
}

void TensorFile::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write tensor file: " + path);
  write(out);
}

const Tensor& TensorFile::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("missing tensor '" + name + "'");
  return it->second;
}

Matrix TensorFile::matrix(const std::string& name) const {
  const Tensor& t = get(name);
  if (t.dims.size() != 2) throw Error("tensor '" + name + "' is not 2-D");
  Matrix m(t.dims[0], t.dims[1]);
  for (int r = 0; r < t.dims[0]; ++r) {
    for (int c = 0; c < t.dims[1]; ++c) m(r, c) = t.data[static_cast<size_t>(r) * t.dims[1] + c];
  }
  return m;
}

RowVector TensorFile::vector(const std::string& name) const {
  const Tensor& t = get(name);
  if (t.dims.size() != 1) throw Error("tensor '" + name + "' is not 1-D");
  RowVector v(t.dims[0]);
  for (int i = 0; i < t.dims[0]; ++i) v(i) = t.data[i];
  return v;
}

double TensorFile::scalar(const std::string& name) const {
  const Tensor& t = get(name);
  if (t.data.size() != 1) throw Error("tensor '" + name + "' is not a scalar");
  return t.data[0];
}

void TensorFile::put(const std::string& name, const Matrix& m) {
  Tensor t;
  t.dims = {static_cast<int>(m.rows()), static_cast<int>(m.cols())};
  t.data.reserve(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(m(r, c));
  }
  tensors_[name] = std::move(t);
}

void TensorFile::put(const std::string& name, const RowVector& v) {
  Tensor t;
  t.dims = {static_cast<int>(v.size())};
  t.data.assign(v.data(), v.data() + v.size());
  tensors_[name] = std::move(t);
}

void TensorFile::put_scalar(const std::string& name, double value) {
  tensors_[name] = Tensor{{1}, {value}};
}

}  // namespace blocksync
