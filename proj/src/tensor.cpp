// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include "mari/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "mari/errors.hpp"

namespace mari {

Shape::Shape(std::initializer_list<std::int64_t> dims) : Shape(std::vector<std::int64_t>(dims)) {}

Shape::Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) {
  if (dims_.empty() || dims_.size() > 3) {
    throw InvalidArgument("tensor rank must be 1, 2 or 3, got " + std::to_string(dims_.size()));
  }
  for (auto d : dims_) {
    if (d <= 0) throw InvalidArgument("tensor dimensions must be positive: " + to_string());
  }
}

std::int64_t Shape::num_elements() const noexcept {
  std::int64_t n = 1;
  for (auto d : dims_) n *= d;
  return n;
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "x" : "") << dims_[i];
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.num_elements()), T(0)) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != shape_.num_elements()) {
    throw DimensionError("tensor of shape " + shape_.to_string() + " needs " +
                         std::to_string(shape_.num_elements()) + " elements, got " +
                         std::to_string(data_.size()));
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::matrix(std::initializer_list<std::initializer_list<T>> rows) {
  const auto n = static_cast<std::int64_t>(rows.size());
  const auto m = n ? static_cast<std::int64_t>(rows.begin()->size()) : 0;
  std::vector<T> data;
  data.reserve(static_cast<std::size_t>(n * m));
  for (const auto& row : rows) {
    if (static_cast<std::int64_t>(row.size()) != m) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return BasicTensor(Shape{n, m}, std::move(data));
}

namespace {

template <typename T>
void require_matrix(const BasicTensor<T>& x, const char* op) {
  if (x.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a rank-2 tensor, got " + x.shape().to_string());
  }
}

// ---------------------------------------------------------------------------
// GEMM: C[n x m] += A[n x k] * B[k x m], all row-major and contiguous.
//
// The k loop is blocked, but blocks are visited in ascending order and each
// C element is carried through them in place, so every element still sees
// c = ((c + a0*b0) + a1*b1) + ... exactly as a naive loop would.

constexpr std::int64_t kBlockK = 256;
constexpr std::int64_t kBlockRows = 96;
constexpr int kMicroRows = 6;
constexpr int kVectorBytes = 64;
constexpr int kVectorsPerRow = 2;

template <typename T>
using Vec [[gnu::vector_size(kVectorBytes)]] = T;

template <typename T>
constexpr int kLanes = kVectorBytes / static_cast<int>(sizeof(T));

template <typename T>
constexpr int kMicroCols = kLanes<T> * kVectorsPerRow;

template <typename T>
inline Vec<T> load(const T* p) {
  Vec<T> v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

template <typename V>
inline void store(void* p, const V& v) {
  std::memcpy(p, &v, sizeof(v));
}

// MR rows of C times one packed panel of kMicroCols columns, kept in
// registers across the whole k block.
template <typename T, int MR>
inline void micro_kernel(std::int64_t kc, const T* a, std::int64_t lda, const T* panel, T* c,
                         std::int64_t ldc, int valid_cols) {
  constexpr int L = kLanes<T>;
  constexpr int NR = kMicroCols<T>;
  Vec<T> acc[MR][kVectorsPerRow];
  if (valid_cols == NR) {
    for (int r = 0; r < MR; ++r)
      for (int v = 0; v < kVectorsPerRow; ++v) acc[r][v] = load(c + r * ldc + v * L);
  } else {
    alignas(64) T tmp[NR];
    for (int r = 0; r < MR; ++r) {
      for (int j = 0; j < NR; ++j) tmp[j] = j < valid_cols ? c[r * ldc + j] : T(0);
      for (int v = 0; v < kVectorsPerRow; ++v) acc[r][v] = load(tmp + v * L);
    }
  }
  for (std::int64_t p = 0; p < kc; ++p) {
    Vec<T> b[kVectorsPerRow];
    for (int v = 0; v < kVectorsPerRow; ++v) b[v] = load(panel + p * NR + v * L);
    for (int r = 0; r < MR; ++r) {
      const T av = a[r * lda + p];
      for (int v = 0; v < kVectorsPerRow; ++v) acc[r][v] = acc[r][v] + av * b[v];
    }
  }
  if (valid_cols == NR) {
    for (int r = 0; r < MR; ++r)
      for (int v = 0; v < kVectorsPerRow; ++v) store(c + r * ldc + v * L, acc[r][v]);
  } else {
    alignas(64) T tmp[NR];
    for (int r = 0; r < MR; ++r) {
      for (int v = 0; v < kVectorsPerRow; ++v) store(tmp + v * L, acc[r][v]);
      for (int j = 0; j < valid_cols; ++j) c[r * ldc + j] = tmp[j];
    }
  }
}

template <typename T>
void gemm_small(const T* a, const T* b, T* c, std::int64_t n, std::int64_t k, std::int64_t m) {
  for (std::int64_t i = 0; i < n; ++i) {
    T* crow = c + i * m;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * m;
      for (std::int64_t j = 0; j < m; ++j) crow[j] = crow[j] + av * brow[j];
    }
  }
}

template <typename T>
void gemm_accumulate(const T* a, const T* b, T* c, std::int64_t n, std::int64_t k,
                     std::int64_t m) {
  if (n < kMicroRows) {
    gemm_small(a, b, c, n, k, m);
    return;
  }
  constexpr int NR = kMicroCols<T>;
  const std::int64_t panels = (m + NR - 1) / NR;
  std::vector<T> packed(static_cast<std::size_t>(panels * std::min(k, kBlockK) * NR));

  for (std::int64_t kb = 0; kb < k; kb += kBlockK) {
    const std::int64_t kc = std::min(kBlockK, k - kb);
    for (std::int64_t jp = 0; jp < panels; ++jp) {
      const std::int64_t j0 = jp * NR;
      const int valid = static_cast<int>(std::min<std::int64_t>(NR, m - j0));
      T* dst = packed.data() + jp * kc * NR;
      for (std::int64_t p = 0; p < kc; ++p) {
        const T* src = b + (kb + p) * m + j0;
        std::copy(src, src + valid, dst + p * NR);
        std::fill(dst + p * NR + valid, dst + (p + 1) * NR, T(0));
      }
    }
    for (std::int64_t ib = 0; ib < n; ib += kBlockRows) {
      const std::int64_t ie = std::min(n, ib + kBlockRows);
      for (std::int64_t jp = 0; jp < panels; ++jp) {
        const std::int64_t j0 = jp * NR;
        const int valid = static_cast<int>(std::min<std::int64_t>(NR, m - j0));
        const T* panel = packed.data() + jp * kc * NR;
        std::int64_t i = ib;
        for (; i + kMicroRows <= ie; i += kMicroRows) {
          micro_kernel<T, kMicroRows>(kc, a + i * k + kb, k, panel, c + i * m + j0, m, valid);
        }
        const T* ai = a + i * k + kb;
        T* ci = c + i * m + j0;
        switch (ie - i) {
          case 5: micro_kernel<T, 5>(kc, ai, k, panel, ci, m, valid); break;
          case 4: micro_kernel<T, 4>(kc, ai, k, panel, ci, m, valid); break;
          case 3: micro_kernel<T, 3>(kc, ai, k, panel, ci, m, valid); break;
          case 2: micro_kernel<T, 2>(kc, ai, k, panel, ci, m, valid); break;
          case 1: micro_kernel<T, 1>(kc, ai, k, panel, ci, m, valid); break;
          default: break;
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + a.shape().to_string() + " x " + b.shape().to_string() +
                         " (inner dimensions differ)");
  }
  BasicTensor<T> out(Shape{a.rows(), b.cols()});
  gemm_accumulate(a.data().data(), b.data().data(), out.mutable_data().data(), a.rows(), a.cols(),
                  b.cols());
  return out;
}

template <typename T>
void matmul_accumulate(BasicTensor<T>& acc, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_matrix(acc, "matmul_accumulate");
  require_matrix(a, "matmul_accumulate");
  require_matrix(b, "matmul_accumulate");
  if (a.cols() != b.rows() || acc.rows() != a.rows() || acc.cols() != b.cols()) {
    throw DimensionError("matmul_accumulate: " + acc.shape().to_string() + " += " +
                         a.shape().to_string() + " x " + b.shape().to_string());
  }
  gemm_accumulate(a.data().data(), b.data().data(), acc.mutable_data().data(), a.rows(), a.cols(),
                  b.cols());
}

template <typename T>
BasicTensor<T> matmul_transposed(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_matrix(a, "matmul_transposed");
  require_matrix(b, "matmul_transposed");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_transposed: " + a.shape().to_string() + " x " +
                         b.shape().to_string() + "^T");
  }
  const std::int64_t n = a.rows(), m = b.rows(), k = a.cols();
  BasicTensor<T> out(Shape{n, m});
  auto o = out.mutable_data();
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < m; ++j) {
      T s = 0;
      for (std::int64_t p = 0; p < k; ++p) s = s + pa[i * k + p] * pb[j * k + p];
      o[i * m + j] = s;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> tile_rows(const BasicTensor<T>& x, std::int64_t batch) {
  if (batch <= 0) throw InvalidArgument("tile_rows: batch count must be >= 1");
  if (x.rank() < 2 || x.shape()[0] != 1) {
    throw DimensionError("tile_rows expects exactly one row, got " + x.shape().to_string());
  }
  std::vector<std::int64_t> dims = x.shape().dims();
  dims[0] = batch;
  std::vector<T> data;
  data.reserve(static_cast<std::size_t>(x.size() * batch));
  for (std::int64_t r = 0; r < batch; ++r) data.insert(data.end(), x.data().begin(), x.data().end());
  return BasicTensor<T>(Shape(std::move(dims)), std::move(data));
}

template <typename T>
BasicTensor<T> concat_cols(std::span<const BasicTensor<T>* const> parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  const std::int64_t rows = parts.front()->rows();
  std::int64_t total = 0;
  for (const auto* p : parts) {
    require_matrix(*p, "concat_cols");
    if (p->rows() != rows) {
      throw DimensionError("concat_cols: row count mismatch " + parts.front()->shape().to_string() +
                           " vs " + p->shape().to_string());
    }
    total += p->cols();
  }
  std::vector<T> data(static_cast<std::size_t>(rows * total));
  for (std::int64_t r = 0; r < rows; ++r) {
    T* dst = data.data() + r * total;
    for (const auto* p : parts) {
      const T* src = p->data().data() + r * p->cols();
      dst = std::copy(src, src + p->cols(), dst);
    }
  }
  return BasicTensor<T>(Shape{rows, total}, std::move(data));
}

template <typename T>
BasicTensor<T> concat_cols(std::span<const BasicTensor<T>> parts) {
  std::vector<const BasicTensor<T>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  return concat_cols<T>(std::span<const BasicTensor<T>* const>(ptrs));
}

template <typename T>
BasicTensor<T> slice_cols(const BasicTensor<T>& x, std::int64_t start, std::int64_t width) {
  require_matrix(x, "slice_cols");
  if (start < 0 || width <= 0 || start + width > x.cols()) {
    throw BoundsError("slice_cols: window [" + std::to_string(start) + ", " +
                      std::to_string(start + width) + ") outside " + x.shape().to_string());
  }
  BasicTensor<T> out(Shape{x.rows(), width});
  auto o = out.mutable_data();
  for (std::int64_t r = 0; r < x.rows(); ++r) {
    const T* src = x.data().data() + r * x.cols() + start;
    std::copy(src, src + width, o.data() + r * width);
  }
  return out;
}

template <typename T>
BasicTensor<T> add_broadcast(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_matrix(a, "add_broadcast");
  require_matrix(b, "add_broadcast");
  const bool rows_ok = a.rows() == b.rows() || a.rows() == 1 || b.rows() == 1;
  if (a.cols() != b.cols() || !rows_ok) {
    throw DimensionError("add_broadcast: incompatible shapes " + a.shape().to_string() + " and " +
                         b.shape().to_string());
  }
  const std::int64_t rows = std::max(a.rows(), b.rows());
  const std::int64_t cols = a.cols();
  BasicTensor<T> out(Shape{rows, cols});
  auto o = out.mutable_data();
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* ra = pa + (a.rows() == 1 ? 0 : r * cols);
    const T* rb = pb + (b.rows() == 1 ? 0 : r * cols);
    T* ro = o.data() + r * cols;
    for (std::int64_t j = 0; j < cols; ++j) ro[j] = ra[j] + rb[j];
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x) {
  require_matrix(x, "softmax_rows");
  BasicTensor<T> out(x.shape());
  auto o = out.mutable_data();
  const std::int64_t cols = x.cols();
  for (std::int64_t r = 0; r < x.rows(); ++r) {
    const T* src = x.data().data() + r * cols;
    T* dst = o.data() + r * cols;
    const T peak = *std::max_element(src, src + cols);
    T total = 0;
    for (std::int64_t j = 0; j < cols; ++j) {
      dst[j] = std::exp(src[j] - peak);
      total += dst[j];
    }
    for (std::int64_t j = 0; j < cols; ++j) dst[j] /= total;
  }
  return out;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
  return out;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  BasicTensor<T> out(x.shape());
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] * factor;
  return out;
}

template <typename T>
BasicTensor<T> sequence_at(const BasicTensor<T>& x, std::int64_t row) {
  if (x.rank() != 3) throw DimensionError("sequence_at expects rank 3, got " + x.shape().to_string());
  if (row < 0 || row >= x.shape()[0]) throw BoundsError("sequence_at: row out of range");
  const std::int64_t seq = x.shape()[1], cols = x.shape()[2];
  auto begin = x.data().begin() + row * seq * cols;
  return BasicTensor<T>(Shape{seq, cols}, std::vector<T>(begin, begin + seq * cols));
}

#define MARI_INSTANTIATE(T)                                                                     \
  template class BasicTensor<T>;                                                                \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                 \
  template void matmul_accumulate(BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> matmul_transposed(const BasicTensor<T>&, const BasicTensor<T>&);      \
  template BasicTensor<T> tile_rows(const BasicTensor<T>&, std::int64_t);                       \
  template BasicTensor<T> concat_cols(std::span<const BasicTensor<T>>);                         \
  template BasicTensor<T> concat_cols(std::span<const BasicTensor<T>* const>);                  \
  template BasicTensor<T> slice_cols(const BasicTensor<T>&, std::int64_t, std::int64_t);        \
  template BasicTensor<T> add_broadcast(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> softmax_rows(const BasicTensor<T>&);                                  \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                          \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                      \
  template BasicTensor<T> sequence_at(const BasicTensor<T>&, std::int64_t);

MARI_INSTANTIATE(double)
MARI_INSTANTIATE(float)

#undef MARI_INSTANTIATE

}  // namespace mari
