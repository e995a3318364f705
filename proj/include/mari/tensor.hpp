// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace mari {

// Dimension sizes of a dense tensor, outermost first. Rank is 1, 2 or 3.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims);
  explicit Shape(std::vector<std::int64_t> dims);

  std::size_t rank() const noexcept { return dims_.size(); }
  std::int64_t operator[](std::size_t axis) const { return dims_.at(axis); }
  std::int64_t num_elements() const noexcept;
  const std::vector<std::int64_t>& dims() const noexcept { return dims_; }

  std::string to_string() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::int64_t> dims_;
};

// Dense row-major tensor. A value type: copies are deep, kernels never
// mutate their operands.
//
// For matrix kernels a rank-2 tensor is rows x cols. Rank-3 tensors
// ([rows, seq, cols]) only appear as user behaviour sequences.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : BasicTensor(Shape{1}) {}
  explicit BasicTensor(Shape shape);
  BasicTensor(Shape shape, std::vector<T> data);

  // Rank-2 literal, e.g. {{1, 2}, {3, 4}}.
  static BasicTensor matrix(std::initializer_list<std::initializer_list<T>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.rank(); }
  std::int64_t size() const noexcept { return static_cast<std::int64_t>(data_.size()); }

  // Leading and trailing dimension; a rank-1 tensor is one row.
  std::int64_t rows() const noexcept { return rank() == 1 ? 1 : shape_[0]; }
  std::int64_t cols() const noexcept { return shape_[rank() - 1]; }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> mutable_data() noexcept { return data_; }

  T at(std::int64_t row, std::int64_t col) const { return data_[row * cols() + col]; }
  T& at(std::int64_t row, std::int64_t col) { return data_[row * cols() + col]; }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& x) {
  if constexpr (std::is_same_v<To, From>) {
    return x;
  } else {
    std::vector<To> out(x.data().begin(), x.data().end());
    return BasicTensor<To>(x.shape(), std::move(out));
  }
}

// ---------------------------------------------------------------------------
// Kernels. All are pure; matrix kernels require rank-2 operands.

// a[n x k] * b[k x m]. Every output element is accumulated over k in
// ascending order starting from zero, so results are reproducible bit for
// bit and equal a naive triple loop.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// acc += a * b, continuing each element's accumulation in ascending k.
// matmul_accumulate(matmul(a1, b1), a2, b2) is bit-identical to
// matmul([a1 a2], [b1; b2]).
template <typename T>
void matmul_accumulate(BasicTensor<T>& acc, const BasicTensor<T>& a, const BasicTensor<T>& b);

// a[n x k] * b[m x k]^T.
template <typename T>
BasicTensor<T> matmul_transposed(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Replicates a single-row tensor `batch` times along the leading axis.
// Rank-3 inputs ([1, L, C]) are tiled to [batch, L, C].
template <typename T>
BasicTensor<T> tile_rows(const BasicTensor<T>& x, std::int64_t batch);

template <typename T>
BasicTensor<T> concat_cols(std::span<const BasicTensor<T>> parts);

template <typename T>
BasicTensor<T> concat_cols(std::span<const BasicTensor<T>* const> parts);

template <typename T>
BasicTensor<T> concat_cols(std::initializer_list<BasicTensor<T>> parts) {
  return concat_cols(std::span<const BasicTensor<T>>(parts.begin(), parts.size()));
}

template <typename T>
BasicTensor<T> slice_cols(const BasicTensor<T>& x, std::int64_t start, std::int64_t width);

// Elementwise a + b where either operand may be a single row that is
// broadcast over the other's rows.
template <typename T>
BasicTensor<T> add_broadcast(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);

// Selects one slice of a rank-3 tensor as a rank-2 [seq x cols] matrix.
template <typename T>
BasicTensor<T> sequence_at(const BasicTensor<T>& x, std::int64_t row);

}  // namespace mari
