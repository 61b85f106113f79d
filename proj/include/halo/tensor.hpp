#pragma once

#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "halo/common.hpp"

namespace halo {

// Dense row-major tensor of doubles. Rank is small (<= 4 in this codebase);
// shape checks are the caller's job except where noted.
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<int> dims, double fill = 0.0) : dims_(std::move(dims)) {
    data_.assign(count(dims_), fill);
  }

  static Tensor from(std::vector<int> dims, std::vector<double> data) {
    Tensor t;
    require(count(dims) == static_cast<int64_t>(data.size()), Err::ShapeMismatch,
            "Tensor::from: data size does not match dims");
    t.dims_ = std::move(dims);
    t.data_ = std::move(data);
    return t;
  }

  int rank() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_[static_cast<size_t>(i)]; }
  const std::vector<int>& dims() const { return dims_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(int i) { return data_[static_cast<size_t>(i)]; }
  double at(int i) const { return data_[static_cast<size_t>(i)]; }
  double& at(int i, int j) { return data_[static_cast<size_t>(i) * dims_[1] + j]; }
  double at(int i, int j) const { return data_[static_cast<size_t>(i) * dims_[1] + j]; }
  double& at(int i, int j, int k) {
    return data_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k];
  }
  double at(int i, int j, int k) const {
    return data_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k];
  }

  // Same data, new shape (element count must match).
  Tensor reshaped(std::vector<int> dims) const {
    require(count(dims) == size(), Err::ShapeMismatch, "reshape: element count mismatch");
    Tensor t = *this;
    t.dims_ = std::move(dims);
    return t;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  static int64_t count(const std::vector<int>& dims) {
    int64_t n = 1;
    for (int d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }

private:
  std::vector<int> dims_;
  std::vector<double> data_;
};

}  // namespace halo
