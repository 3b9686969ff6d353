#pragma once
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ham {

// Dense row-major tensor of 64-bit reals. Rank is 1 or 2 in practice; the
// whole toolkit runs in double precision so that small norm differences
// between horizon subseries survive the area analytics downstream.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), 0.0);
  }
  Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape))
      throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str());
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  static Tensor zeros(std::size_t r, std::size_t c) { return Tensor({r, c}); }
  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
  static Tensor row(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({1, n}, std::move(v));
  }
  static Tensor col(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({n, 1}, std::move(v));
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
  }
};

// A named parameter layer: value and gradient always share a shape.
struct ParamGroup {
  std::string name;
  Tensor value;
  Tensor grad;

  ParamGroup() = default;
  ParamGroup(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor(value.shape);
  }
};

// Flattened view over a set of groups: concatenation in the stored (name)
// order plus offsets so per-layer slices can be recovered exactly.
struct FlatVector {
  std::vector<double> values;
  std::vector<std::size_t> offsets;  // size groups+1, offsets.front()==0
};

inline FlatVector grad_vector(const std::vector<ParamGroup>& groups) {
  FlatVector out;
  out.offsets.push_back(0);
  for (const auto& g : groups) {
    out.values.insert(out.values.end(), g.grad.data.begin(), g.grad.data.end());
    out.offsets.push_back(out.values.size());
  }
  return out;
}

inline FlatVector param_vector(const std::vector<ParamGroup>& groups) {
  FlatVector out;
  out.offsets.push_back(0);
  for (const auto& g : groups) {
    out.values.insert(out.values.end(), g.value.data.begin(), g.value.data.end());
    out.offsets.push_back(out.values.size());
  }
  return out;
}

}  // namespace ham
