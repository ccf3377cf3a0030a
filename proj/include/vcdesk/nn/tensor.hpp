// Copyright 2026 The vcdesk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VCDESK_NN_TENSOR_HPP_
#define VCDESK_NN_TENSOR_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "vcdesk/common.hpp"

namespace vcdesk::nn {

// Dense row-major matrix. Vectors are 1 x n, scalars 1 x 1.
template <class T>
struct Mat {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<T> d;

  Mat() = default;
  Mat(int64_t r, int64_t c) : rows(r), cols(c), d(static_cast<size_t>(r * c), T(0)) {}

  static Mat Zeros(int64_t r, int64_t c) { return Mat(r, c); }
  static Mat Scalar(T v) {
    Mat m(1, 1);
    m.d[0] = v;
    return m;
  }

  int64_t numel() const { return rows * cols; }
  bool empty() const { return numel() == 0; }
  T& at(int64_t r, int64_t c) { return d[static_cast<size_t>(r * cols + c)]; }
  T at(int64_t r, int64_t c) const { return d[static_cast<size_t>(r * cols + c)]; }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (T v : d) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }
};

template <class T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<EMat<T>> Em(Mat<T>& m) {
  return Eigen::Map<EMat<T>>(m.d.data(), m.rows, m.cols);
}

template <class T>
Eigen::Map<const EMat<T>> Em(const Mat<T>& m) {
  return Eigen::Map<const EMat<T>>(m.d.data(), m.rows, m.cols);
}

// Trainable tensor plus its accumulated gradient and Adam state.
template <class T>
struct Param {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  Mat<T> adam_m;
  Mat<T> adam_v;
  bool trainable = true;  // false freezes the tensor: gradient stays zero
};

// Owns model parameters in creation order (stable iteration order is what the
// checkpoint format and deterministic training rely on).
template <class T>
class ParamStore {
 public:
  Param<T>& Create(const std::string& name, int64_t rows, int64_t cols) {
    Require(index_.find(name) == index_.end(), "duplicate parameter: " + name);
    params_.emplace_back();
    Param<T>& p = params_.back();
    p.name = name;
    p.value = Mat<T>::Zeros(rows, cols);
    p.grad = Mat<T>::Zeros(rows, cols);
    index_[name] = static_cast<int>(params_.size()) - 1;
    return p;
  }

  Param<T>* Find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  size_t size() const { return params_.size(); }
  Param<T>& operator[](size_t i) { return params_[i]; }
  const Param<T>& operator[](size_t i) const { return params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void ZeroGrads() {
    for (auto& p : params_) std::fill(p.grad.d.begin(), p.grad.d.end(), T(0));
  }

  int64_t TotalParams() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

 private:
  std::deque<Param<T>> params_;
  std::map<std::string, int> index_;
};

// Xavier-uniform fill for weight matrices.
template <class T>
void InitXavier(Mat<T>& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
  for (auto& v : m.d) v = static_cast<T>(rng.uniform(-limit, limit));
}

// N(0, d^-0.5) fill for embedding tables (d = embedding dim).
template <class T>
void InitEmbedding(Mat<T>& m, Rng& rng) {
  const double sd = std::pow(static_cast<double>(m.cols), -0.5);
  for (auto& v : m.d) v = static_cast<T>(rng.normal() * sd);
}

}  // namespace vcdesk::nn

#endif  // VCDESK_NN_TENSOR_HPP_
