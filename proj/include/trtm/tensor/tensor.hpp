#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace trtm::ad {

// Dense row-major tensor. Shape dims must all be >= 1 and multiply to the
// data length; both are enforced at construction.
template <typename Real>
struct Tensor {
  std::vector<int> shape;
  std::vector<Real> data;
  bool requires_grad = false;

  Tensor() = default;

  explicit Tensor(std::vector<int> s, Real fill = Real(0)) : shape(std::move(s)) {
    data.assign(checked_numel(shape), fill);
  }

  Tensor(std::vector<int> s, std::vector<Real> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (checked_numel(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("tensor shape does not match data length");
  }

  static int64_t checked_numel(const std::vector<int>& s) {
    if (s.empty()) throw std::invalid_argument("tensor rank must be >= 1");
    int64_t n = 1;
    for (int d : s) {
      if (d < 1) throw std::invalid_argument("tensor dims must be >= 1");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(i); }

  Real& operator[](int64_t i) { return data[i]; }
  Real operator[](int64_t i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + ")";
  }
};

}  // namespace trtm::ad
