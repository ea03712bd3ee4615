#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "mpf/memory.hpp"

namespace mpf {

using Real = double;
using Index = std::int32_t;
using Offset = std::int64_t;

// Row-major dense matrix. Storage is accounted by MemoryAccountant.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, Real fill = 0.0);

  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<Real>> rows);
  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<Real> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }
  std::span<Real> values() noexcept { return values_; }
  std::span<const Real> values() const noexcept { return values_; }

  bool all_finite() const noexcept;
  bool same_shape(const DenseMatrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Buffer<Real> values_;
};

struct Triplet {
  Index row;
  Index col;
  Real value;
};

// Compressed-sparse-row matrix in canonical form: columns strictly increasing
// within each row and no stored zeros.
class SparseMatrix {
 public:
  SparseMatrix() : row_offsets_(1, 0) {}
  SparseMatrix(std::size_t rows, std::size_t cols);

  // Duplicate coordinates are summed, then zeros are dropped.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries);
  // Takes ownership of CSR arrays; throws ShapeError unless they are canonical.
  static SparseMatrix from_csr(std::size_t rows, std::size_t cols, Buffer<Offset> row_offsets,
                               Buffer<Index> col_indices, Buffer<Real> values);
  static SparseMatrix identity(std::size_t n);
  static SparseMatrix from_dense(const DenseMatrix& dense);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  std::span<const Offset> row_offsets() const noexcept { return row_offsets_; }
  std::span<const Index> col_indices() const noexcept { return col_indices_; }
  std::span<const Real> values() const noexcept { return values_; }

  std::span<const Index> row_cols(std::size_t r) const noexcept {
    return {col_indices_.data() + row_offsets_[r], static_cast<std::size_t>(row_offsets_[r + 1] - row_offsets_[r])};
  }
  std::span<const Real> row_values(std::size_t r) const noexcept {
    return {values_.data() + row_offsets_[r], static_cast<std::size_t>(row_offsets_[r + 1] - row_offsets_[r])};
  }

  // Position of (r, c) in the value array, or -1 when structurally absent.
  Offset find(std::size_t r, std::size_t c) const noexcept;
  Real at(std::size_t r, std::size_t c) const noexcept;

  DenseMatrix to_dense() const;
  std::vector<Real> row_sums() const;
  bool is_row_stochastic(Real tol) const;
  // Storage footprint of the three CSR arrays.
  std::size_t bytes() const noexcept;

  // Drops stored zeros; a no-op on canonical matrices.
  SparseMatrix canonicalized() const;
  // Same pattern, replaced values. Zeros are kept; callers canonicalize if needed.
  SparseMatrix with_values(Buffer<Real> values) const;

  friend bool operator==(const SparseMatrix& a, const SparseMatrix& b);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Buffer<Offset> row_offsets_;
  Buffer<Index> col_indices_;
  Buffer<Real> values_;
};

// D^{-1}(A + eps I) with D the row sums of A + eps I. All-zero rows stay zero.
SparseMatrix row_normalize(const SparseMatrix& a, Real epsilon);

SparseMatrix spmm(const SparseMatrix& a, const SparseMatrix& b);
DenseMatrix spdm(const SparseMatrix& a, const DenseMatrix& x);
// Computes A^T X without forming the transpose.
DenseMatrix spdm_transposed(const SparseMatrix& a, const DenseMatrix& x);

// sum_t alpha_t * mats[t]; alpha must be a probability vector.
SparseMatrix weighted_sum(std::span<const SparseMatrix> mats, std::span<const Real> alpha);
// Unconstrained linear combination used by the weighted sum and non-convex callers.
SparseMatrix linear_combination(std::span<const SparseMatrix> mats, std::span<const Real> coeffs);
SparseMatrix linear_combination(std::span<const SparseMatrix* const> mats, std::span<const Real> coeffs);

// Row sums of A*B for row-stochastic A, B.
std::vector<Real> degree_of_product(const SparseMatrix& a, const SparseMatrix& b);

// A + gamma I on a square matrix.
SparseMatrix add_scaled_identity(const SparseMatrix& a, Real gamma);

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// A^T B and A B^T, used by adjoints.
DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_a_bt(const DenseMatrix& a, const DenseMatrix& b);

Real max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

}  // namespace mpf
