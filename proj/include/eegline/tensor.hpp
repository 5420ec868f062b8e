#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "eegline/errors.hpp"

namespace eegline::nn {

// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(numel_of(shape), 0.0);
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d <= 0) fail(errc::shape_mismatch, "nonpositive dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t numel() const { return v.size(); }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape[i]);
    return s + ")";
  }
};

}  // namespace eegline::nn
