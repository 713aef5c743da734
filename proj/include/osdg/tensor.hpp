// Copyright 2026 The OSDG Scheduler Authors.
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

#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "osdg/common.hpp"

namespace osdg {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major block of doubles. A scalar has shape {1}.
struct Tensor {
  Shape shape{1};
  std::vector<double> data{0.0};

  Tensor() = default;

  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape.empty()) throw DimensionError("Tensor: empty shape");
    for (std::size_t dim : shape) {
      if (dim == 0) throw DimensionError("Tensor: zero-sized dimension in " + shape_str(shape));
    }
    if (numel(shape) != data.size()) {
      throw DimensionError(str_cat("Tensor: shape ", shape_str(shape), " needs ", numel(shape),
                                   " values, got ", data.size()));
    }
  }

  static Tensor filled(Shape s, double value) {
    const std::size_t n = numel(s);
    return Tensor(std::move(s), std::vector<double>(n, value));
  }
  static Tensor zeros(Shape s) { return filled(std::move(s), 0.0); }
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  double item() const {
    if (data.size() != 1) throw DimensionError("Tensor::item on " + shape_str(shape));
    return data[0];
  }

  bool operator==(const Tensor&) const = default;
};

}  // namespace osdg
