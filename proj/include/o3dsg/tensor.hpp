#pragma once

// Row-major dense matrix used by the graph network and its autodiff tape.

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace o3dsg {

template <typename T>
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int r, int c, T fill = T(0)) : rows(r), cols(c), data(std::size_t(r) * c, fill) {}

  T& operator()(int r, int c) { return data[std::size_t(r) * cols + c]; }
  const T& operator()(int r, int c) const { return data[std::size_t(r) * cols + c]; }

  std::span<T> row(int r) { return {data.data() + std::size_t(r) * cols, std::size_t(cols)}; }
  std::span<const T> row(int r) const { return {data.data() + std::size_t(r) * cols, std::size_t(cols)}; }

  std::size_t size() const noexcept { return data.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(rows, cols);
    for (std::size_t k = 0; k < data.size(); ++k) out.data[k] = static_cast<U>(data[k]);
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// C = A * B with a fixed accumulation order per output element (k ascending,
/// double accumulators). Each output row depends only on the matching row of A.
template <typename T>
void matmul_into(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
  assert(a.cols == b.rows);
  c = Tensor<T>(a.rows, b.cols);
  std::vector<double> acc(std::size_t(b.cols));
  for (int i = 0; i < a.rows; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const T* arow = a.data.data() + std::size_t(i) * a.cols;
    for (int k = 0; k < a.cols; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      const T* brow = b.data.data() + std::size_t(k) * b.cols;
      for (int j = 0; j < b.cols; ++j) acc[j] += av * double(brow[j]);
    }
    T* crow = c.data.data() + std::size_t(i) * c.cols;
    for (int j = 0; j < b.cols; ++j) crow[j] = static_cast<T>(acc[j]);
  }
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  Tensor<T> t(a.cols, a.rows);
  for (int r = 0; r < a.rows; ++r)
    for (int c = 0; c < a.cols; ++c) t(c, r) = a(r, c);
  return t;
}

}  // namespace o3dsg
