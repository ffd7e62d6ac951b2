#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccpt {

// Dense row-major tensor. Training state is stored in 32-bit floats
// (TensorT<float> is the default everywhere); double instantiations are used
// by the test oracles. Products accumulate in double regardless of T.
template <class T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;

  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(element_count(shape), T(0));
  }

  TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != element_count(shape))
      throw std::invalid_argument("tensor: data length does not match shape");
  }

  static std::size_t element_count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d <= 0) throw std::invalid_argument("tensor: shape entries must be positive");
      n *= std::size_t(d);
    }
    return n;
  }

  static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }

  std::size_t size() const { return data.size(); }

  // 2-D accessors; most of the library works on matrices
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  T& at(int r, int c) { return data[std::size_t(r) * cols() + c]; }
  const T& at(int r, int c) const { return data[std::size_t(r) * cols() + c]; }
};

using Tensor = TensorT<float>;

template <class T>
bool same_shape(const TensorT<T>& a, const TensorT<T>& b) {
  return a.shape == b.shape;
}

template <class T>
bool all_finite(const TensorT<T>& x) {
  for (T v : x.data)
    if (!std::isfinite(double(v))) return false;
  return true;
}

template <class T>
double max_abs(const TensorT<T>& x) {
  double m = 0.0;
  for (T v : x.data) m = std::max(m, std::abs(double(v)));
  return m;
}

// C = A * B, [m x k] * [k x n]
template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  TensorT<T> c({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += double(a.at(i, p)) * double(b.at(p, j));
      c.at(i, j) = T(acc);
    }
  return c;
}

// C = A^T * B, A is [k x m]
template <class T>
TensorT<T> matmul_tn(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: inner dimensions differ");
  const int k = a.rows(), m = a.cols(), n = b.cols();
  TensorT<T> c({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += double(a.at(p, i)) * double(b.at(p, j));
      c.at(i, j) = T(acc);
    }
  return c;
}

// C = A * B^T, B is [n x k]
template <class T>
TensorT<T> matmul_nt(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimensions differ");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  TensorT<T> c({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += double(a.at(i, p)) * double(b.at(j, p));
      c.at(i, j) = T(acc);
    }
  return c;
}

// adds the [1 x n] row vector to every row in place
template <class T>
void add_row_vector(TensorT<T>& x, const TensorT<T>& row) {
  if (row.size() != std::size_t(x.cols()))
    throw std::invalid_argument("add_row_vector: width mismatch");
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) x.at(i, j) = T(double(x.at(i, j)) + double(row.data[j]));
}

template <class T>
TensorT<T> relu(const TensorT<T>& x) {
  TensorT<T> y = x;
  for (T& v : y.data) v = v > T(0) ? v : T(0);
  return y;
}

// upstream gradient masked by the sign of the matching pre-activation
template <class T>
TensorT<T> relu_backward(const TensorT<T>& upstream, const TensorT<T>& pre) {
  if (!same_shape(upstream, pre)) throw std::invalid_argument("relu_backward: shape mismatch");
  TensorT<T> g = upstream;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(pre.data[i] > T(0))) g.data[i] = T(0);
  return g;
}

// column sums as a [1 x n] row (bias gradient)
template <class T>
TensorT<T> column_sums(const TensorT<T>& x) {
  TensorT<T> s({1, x.cols()});
  for (int j = 0; j < x.cols(); ++j) {
    double acc = 0.0;
    for (int i = 0; i < x.rows(); ++i) acc += double(x.at(i, j));
    s.data[j] = T(acc);
  }
  return s;
}

// rows of `x` whose index is listed, in listed order
template <class T>
TensorT<T> gather_rows(const TensorT<T>& x, const std::vector<int>& idx) {
  if (idx.empty()) throw std::invalid_argument("gather_rows: empty index list");
  TensorT<T> y({int(idx.size()), x.cols()});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (int j = 0; j < x.cols(); ++j) y.at(int(r), j) = x.at(idx[r], j);
  return y;
}

}  // namespace ccpt
