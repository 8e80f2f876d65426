#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <vector>

#include "oscope/types.hpp"

namespace oscope::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

// Cache-line alignment keeps the vectorized kernels on one code path for
// every allocation, which is what makes training runs bit-reproducible.
template <class T>
struct AlignedAlloc {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;

  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U>&) {}

  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + kAlign - 1) / kAlign * kAlign;
    void* p = std::aligned_alloc(kAlign, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { std::free(p); }

  template <class U>
  bool operator==(const AlignedAlloc<U>&) const { return true; }
};

using AlignedF64 = std::vector<double, AlignedAlloc<double>>;

// Dense row-major tensor of 64-bit reals. A 32-bit compute mode exists for
// speed (see gemm_into); storage stays 64-bit and gradient checks always run
// the 64-bit path.
struct Tensor {
  std::vector<std::size_t> shape;
  AlignedF64 data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(count(shape), 0.0);
  }
  Tensor(std::vector<std::size_t> s, AlignedF64 d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != count(shape)) throw DataError("tensor: data size does not match shape");
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }

  // View as a rows x cols row-major matrix (sizes must multiply out).
  MatMap mat(std::size_t rows, std::size_t cols) {
    if (rows * cols != data.size()) throw DataError("tensor: bad matrix view");
    return MatMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  CMatMap mat(std::size_t rows, std::size_t cols) const {
    if (rows * cols != data.size()) throw DataError("tensor: bad matrix view");
    return CMatMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  VecMap vec() { return VecMap(data.data(), static_cast<Eigen::Index>(data.size())); }
  CVecMap vec() const { return CVecMap(data.data(), static_cast<Eigen::Index>(data.size())); }

  // Metadata-only reshape; the linear layout is already right for folding
  // consecutive timesteps into channels.
  Tensor reshaped(std::vector<std::size_t> s) const {
    if (count(s) != data.size()) throw DataError("tensor: reshape count mismatch");
    return Tensor(std::move(s), data);
  }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C = A * B, optionally computed via 32-bit floats for speed. The 32-bit
// path is deterministic but less precise; training may opt in, gradient
// checks must not.
template <class OutT, class AT, class BT>
void gemm_into(OutT&& C, const AT& A, const BT& B, bool f32 = false) {
  if (f32) {
    MatF a = A.template cast<float>();
    MatF b = B.template cast<float>();
    MatF c(a.rows(), b.cols());
    c.noalias() = a * b;
    C = c.template cast<double>();
  } else {
    C.noalias() = A * B;
  }
}

// C += A * B (64-bit, used on gradient accumulation paths).
template <class OutT, class AT, class BT>
void gemm_acc(OutT&& C, const AT& A, const BT& B) {
  C.noalias() += A * B;
}

}  // namespace oscope::nn
