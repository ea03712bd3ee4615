#include "mpf/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mpf/errors.hpp"
#include "mpf/parallel.hpp"

namespace mpf {

namespace {

std::string dims(std::size_t r, std::size_t c) { return std::to_string(r) + "x" + std::to_string(c); }

}  // namespace

// ---------------------------------------------------------------------------
// DenseMatrix

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, Real fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  DenseMatrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("DenseMatrix::from_rows: ragged rows");
    std::copy(row.begin(), row.end(), m.row(i++).begin());
  }
  return m;
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool DenseMatrix::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](Real v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// SparseMatrix

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_offsets_(rows + 1, 0) {}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) {
  for (const auto& t : entries) {
    if (t.row < 0 || t.col < 0 || static_cast<std::size_t>(t.row) >= rows ||
        static_cast<std::size_t>(t.col) >= cols) {
      throw ShapeError("triplet (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                       ") outside " + dims(rows, cols));
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  Buffer<Offset> offsets(rows + 1, 0);
  Buffer<Index> cols_out;
  Buffer<Real> vals_out;
  cols_out.reserve(entries.size());
  vals_out.reserve(entries.size());
  std::size_t i = 0;
  while (i < entries.size()) {
    const Index r = entries[i].row;
    const Index c = entries[i].col;
    Real sum = 0.0;
    for (; i < entries.size() && entries[i].row == r && entries[i].col == c; ++i) sum += entries[i].value;
    if (sum != 0.0) {
      cols_out.push_back(c);
      vals_out.push_back(sum);
      ++offsets[r + 1];
    }
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  return from_csr(rows, cols, std::move(offsets), std::move(cols_out), std::move(vals_out));
}

SparseMatrix SparseMatrix::from_csr(std::size_t rows, std::size_t cols, Buffer<Offset> row_offsets,
                                    Buffer<Index> col_indices, Buffer<Real> values) {
  if (row_offsets.size() != rows + 1 || row_offsets.front() != 0 ||
      row_offsets.back() != static_cast<Offset>(col_indices.size()) || col_indices.size() != values.size()) {
    throw ShapeError("from_csr: inconsistent CSR arrays for " + dims(rows, cols));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (row_offsets[r + 1] < row_offsets[r]) throw ShapeError("from_csr: decreasing row offsets");
    for (Offset p = row_offsets[r]; p < row_offsets[r + 1]; ++p) {
      if (col_indices[p] < 0 || static_cast<std::size_t>(col_indices[p]) >= cols)
        throw ShapeError("from_csr: column index out of range");
      if (p > row_offsets[r] && col_indices[p] <= col_indices[p - 1])
        throw ShapeError("from_csr: columns not strictly increasing in row " + std::to_string(r));
    }
  }
  SparseMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_offsets_ = std::move(row_offsets);
  m.col_indices_ = std::move(col_indices);
  m.values_ = std::move(values);
  return m;
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  Buffer<Offset> offsets(n + 1);
  Buffer<Index> cols(n);
  Buffer<Real> vals(n, 1.0);
  for (std::size_t i = 0; i <= n; ++i) offsets[i] = static_cast<Offset>(i);
  for (std::size_t i = 0; i < n; ++i) cols[i] = static_cast<Index>(i);
  return from_csr(n, n, std::move(offsets), std::move(cols), std::move(vals));
}

SparseMatrix SparseMatrix::from_dense(const DenseMatrix& dense) {
  Buffer<Offset> offsets(dense.rows() + 1, 0);
  Buffer<Index> cols;
  Buffer<Real> vals;
  for (std::size_t r = 0; r < dense.rows(); ++r) {
    for (std::size_t c = 0; c < dense.cols(); ++c) {
      if (dense(r, c) != 0.0) {
        cols.push_back(static_cast<Index>(c));
        vals.push_back(dense(r, c));
      }
    }
    offsets[r + 1] = static_cast<Offset>(cols.size());
  }
  return from_csr(dense.rows(), dense.cols(), std::move(offsets), std::move(cols), std::move(vals));
}

Offset SparseMatrix::find(std::size_t r, std::size_t c) const noexcept {
  const auto cols = row_cols(r);
  const auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<Index>(c));
  if (it == cols.end() || *it != static_cast<Index>(c)) return -1;
  return row_offsets_[r] + (it - cols.begin());
}

Real SparseMatrix::at(std::size_t r, std::size_t c) const noexcept {
  const Offset p = find(r, c);
  return p < 0 ? 0.0 : values_[p];
}

DenseMatrix SparseMatrix::to_dense() const {
  DenseMatrix d(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (Offset p = row_offsets_[r]; p < row_offsets_[r + 1]; ++p) d(r, col_indices_[p]) = values_[p];
  }
  return d;
}

std::vector<Real> SparseMatrix::row_sums() const {
  std::vector<Real> sums(rows_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (Offset p = row_offsets_[r]; p < row_offsets_[r + 1]; ++p) sums[r] += values_[p];
  }
  return sums;
}

bool SparseMatrix::is_row_stochastic(Real tol) const {
  if (std::any_of(values_.begin(), values_.end(), [](Real v) { return v < 0.0; })) return false;
  const auto sums = row_sums();
  return std::all_of(sums.begin(), sums.end(), [tol](Real s) { return std::abs(s - 1.0) <= tol; });
}

std::size_t SparseMatrix::bytes() const noexcept {
  return row_offsets_.size() * sizeof(Offset) + col_indices_.size() * sizeof(Index) + values_.size() * sizeof(Real);
}

SparseMatrix SparseMatrix::canonicalized() const {
  Buffer<Offset> offsets(rows_ + 1, 0);
  Buffer<Index> cols;
  Buffer<Real> vals;
  cols.reserve(nnz());
  vals.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (Offset p = row_offsets_[r]; p < row_offsets_[r + 1]; ++p) {
      if (values_[p] != 0.0) {
        cols.push_back(col_indices_[p]);
        vals.push_back(values_[p]);
      }
    }
    offsets[r + 1] = static_cast<Offset>(cols.size());
  }
  return from_csr(rows_, cols_, std::move(offsets), std::move(cols), std::move(vals));
}

SparseMatrix SparseMatrix::with_values(Buffer<Real> values) const {
  if (values.size() != nnz()) throw ShapeError("with_values: value count does not match pattern");
  SparseMatrix m;
  m.rows_ = rows_;
  m.cols_ = cols_;
  m.row_offsets_ = row_offsets_;
  m.col_indices_ = col_indices_;
  m.values_ = std::move(values);
  return m;
}

bool operator==(const SparseMatrix& a, const SparseMatrix& b) {
  return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.row_offsets_ == b.row_offsets_ &&
         a.col_indices_ == b.col_indices_ && a.values_ == b.values_;
}

// ---------------------------------------------------------------------------
// Kernels

SparseMatrix row_normalize(const SparseMatrix& a, Real epsilon) {
  if (!(epsilon >= 0.0)) throw DomainError("row_normalize: epsilon must be non-negative");
  if (epsilon > 0.0 && !a.is_square()) {
    throw ShapeError("row_normalize: diagonal augmentation needs a square matrix, got " + dims(a.rows(), a.cols()));
  }
  if (epsilon > 0.0) return row_normalize(add_scaled_identity(a, epsilon), 0.0);
  const auto sums = a.row_sums();
  Buffer<Real> vals(a.values().begin(), a.values().end());
  bool underflow = false;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    if (sums[r] == 0.0) continue;
    const Real inv = 1.0 / sums[r];
    for (Offset p = a.row_offsets()[r]; p < a.row_offsets()[r + 1]; ++p) {
      vals[p] *= inv;
      underflow = underflow || vals[p] == 0.0;
    }
  }
  SparseMatrix out = a.with_values(std::move(vals));
  if (underflow) return out.canonicalized();
  return out;
}

SparseMatrix spmm(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("spmm: " + dims(a.rows(), a.cols()) + " times " + dims(b.rows(), b.cols()));
  }
  // Two passes: count the distinct columns of every output row, then fill
  // exact-size arrays. No growth slack, so the transient peak is the result.
  const std::size_t n = a.rows();
  Buffer<Offset> offsets(n + 1, 0);
  parallel_chunks(n, [&](std::size_t, std::size_t begin, std::size_t end) {
    Buffer<char> touched(b.cols(), 0);
    std::vector<Index> live;
    for (std::size_t i = begin; i < end; ++i) {
      live.clear();
      for (Index k : a.row_cols(i)) {
        for (Index j : b.row_cols(k)) {
          if (!touched[j]) {
            touched[j] = 1;
            live.push_back(j);
          }
        }
      }
      for (Index j : live) touched[j] = 0;
      offsets[i + 1] = static_cast<Offset>(live.size());
    }
  });
  for (std::size_t i = 0; i < n; ++i) offsets[i + 1] += offsets[i];

  Buffer<Index> cols(static_cast<std::size_t>(offsets[n]));
  Buffer<Real> vals(static_cast<std::size_t>(offsets[n]));
  Buffer<Offset> kept(n, 0);
  parallel_chunks(n, [&](std::size_t, std::size_t begin, std::size_t end) {
    Buffer<Real> acc(b.cols(), 0.0);
    Buffer<char> touched(b.cols(), 0);
    std::vector<Index> live;
    for (std::size_t i = begin; i < end; ++i) {
      live.clear();
      const auto a_cols = a.row_cols(i);
      const auto a_vals = a.row_values(i);
      for (std::size_t p = 0; p < a_cols.size(); ++p) {
        const auto b_cols = b.row_cols(a_cols[p]);
        const auto b_vals = b.row_values(a_cols[p]);
        for (std::size_t q = 0; q < b_cols.size(); ++q) {
          const Index j = b_cols[q];
          if (!touched[j]) {
            touched[j] = 1;
            live.push_back(j);
          }
          acc[j] += a_vals[p] * b_vals[q];
        }
      }
      std::sort(live.begin(), live.end());
      Offset w = offsets[i];
      for (Index j : live) {
        // Exact cancellation leaves a hole that the compaction below removes.
        if (acc[j] != 0.0) {
          cols[w] = j;
          vals[w] = acc[j];
          ++w;
        }
        acc[j] = 0.0;
        touched[j] = 0;
      }
      kept[i] = w - offsets[i];
    }
  });

  bool holes = false;
  for (std::size_t i = 0; i < n && !holes; ++i) holes = kept[i] != offsets[i + 1] - offsets[i];
  if (holes) {
    Offset w = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Offset start = offsets[i];
      for (Offset q = 0; q < kept[i]; ++q) {
        cols[w + q] = cols[start + q];
        vals[w + q] = vals[start + q];
      }
      offsets[i] = w;
      w += kept[i];
    }
    offsets[n] = w;
    cols.resize(static_cast<std::size_t>(w));
    vals.resize(static_cast<std::size_t>(w));
  }
  return SparseMatrix::from_csr(n, b.cols(), std::move(offsets), std::move(cols), std::move(vals));
}

DenseMatrix spdm(const SparseMatrix& a, const DenseMatrix& x) {
  if (a.cols() != x.rows()) {
    throw ShapeError("spdm: " + dims(a.rows(), a.cols()) + " times " + dims(x.rows(), x.cols()));
  }
  DenseMatrix y(a.rows(), x.cols());
  parallel_chunks(a.rows(), [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto out = y.row(i);
      const auto cols = a.row_cols(i);
      const auto vals = a.row_values(i);
      for (std::size_t p = 0; p < cols.size(); ++p) {
        const auto in = x.row(cols[p]);
        const Real v = vals[p];
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += v * in[c];
      }
    }
  });
  return y;
}

DenseMatrix spdm_transposed(const SparseMatrix& a, const DenseMatrix& x) {
  if (a.rows() != x.rows()) {
    throw ShapeError("spdm_transposed: " + dims(a.rows(), a.cols()) + "^T times " + dims(x.rows(), x.cols()));
  }
  DenseMatrix y(a.cols(), x.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto in = x.row(i);
    const auto cols = a.row_cols(i);
    const auto vals = a.row_values(i);
    for (std::size_t p = 0; p < cols.size(); ++p) {
      auto out = y.row(cols[p]);
      const Real v = vals[p];
      for (std::size_t c = 0; c < out.size(); ++c) out[c] += v * in[c];
    }
  }
  return y;
}

SparseMatrix linear_combination(std::span<const SparseMatrix> mats, std::span<const Real> coeffs) {
  std::vector<const SparseMatrix*> ptrs;
  for (const auto& m : mats) ptrs.push_back(&m);
  return linear_combination(std::span<const SparseMatrix* const>(ptrs), coeffs);
}

SparseMatrix linear_combination(std::span<const SparseMatrix* const> mats, std::span<const Real> coeffs) {
  if (mats.empty()) throw ShapeError("linear_combination: no matrices");
  if (mats.size() != coeffs.size()) throw ShapeError("linear_combination: coefficient count mismatch");
  const std::size_t rows = mats[0]->rows();
  const std::size_t cols = mats[0]->cols();
  for (const auto* m : mats) {
    if (m->rows() != rows || m->cols() != cols) throw ShapeError("linear_combination: shape mismatch");
  }
  Buffer<Offset> offsets(rows + 1, 0);
  Buffer<Index> out_cols;
  Buffer<Real> out_vals;
  std::size_t upper = 0;
  for (const auto* m : mats) upper += m->nnz();
  out_cols.reserve(upper);
  out_vals.reserve(upper);
  std::vector<std::size_t> cursor(mats.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < mats.size(); ++t) cursor[t] = static_cast<std::size_t>(mats[t]->row_offsets()[r]);
    // k-way merge of sorted rows; summation order follows candidate order.
    while (true) {
      Index next = -1;
      for (std::size_t t = 0; t < mats.size(); ++t) {
        if (cursor[t] < static_cast<std::size_t>(mats[t]->row_offsets()[r + 1])) {
          const Index c = mats[t]->col_indices()[cursor[t]];
          if (next < 0 || c < next) next = c;
        }
      }
      if (next < 0) break;
      Real sum = 0.0;
      for (std::size_t t = 0; t < mats.size(); ++t) {
        if (cursor[t] < static_cast<std::size_t>(mats[t]->row_offsets()[r + 1]) &&
            mats[t]->col_indices()[cursor[t]] == next) {
          sum += coeffs[t] * mats[t]->values()[cursor[t]];
          ++cursor[t];
        }
      }
      if (sum != 0.0) {
        out_cols.push_back(next);
        out_vals.push_back(sum);
      }
    }
    offsets[r + 1] = static_cast<Offset>(out_cols.size());
  }
  return SparseMatrix::from_csr(rows, cols, std::move(offsets), std::move(out_cols), std::move(out_vals));
}

SparseMatrix weighted_sum(std::span<const SparseMatrix> mats, std::span<const Real> alpha) {
  if (mats.size() != alpha.size()) throw ShapeError("weighted_sum: alpha length does not match matrix count");
  Real total = 0.0;
  for (Real a : alpha) {
    if (!(a >= 0.0)) throw DomainError("weighted_sum: alpha has a negative or NaN entry");
    total += a;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("weighted_sum: alpha does not sum to 1");
  return linear_combination(mats, alpha);
}

std::vector<Real> degree_of_product(const SparseMatrix& a, const SparseMatrix& b) {
  constexpr Real kTol = 1e-9;
  if (!a.is_row_stochastic(kTol) || !b.is_row_stochastic(kTol)) {
    throw PreconditionError("degree_of_product: inputs must be row-stochastic; normalize first");
  }
  return spmm(a, b).row_sums();
}

SparseMatrix add_scaled_identity(const SparseMatrix& a, Real gamma) {
  if (!a.is_square()) throw ShapeError("add_scaled_identity: matrix is " + dims(a.rows(), a.cols()));
  if (gamma == 0.0) return a;
  // Merge the diagonal into each row directly; exact-size output, no copy of a first.
  const std::size_t n = a.rows();
  const auto off = a.row_offsets();
  const auto ac = a.col_indices();
  const auto av = a.values();
  Buffer<Offset> offsets(n + 1, 0);
  for (std::size_t r = 0; r < n; ++r) {
    const bool has_diag = a.find(r, static_cast<Index>(r)) >= 0;
    offsets[r + 1] = offsets[r] + (off[r + 1] - off[r]) + (has_diag ? 0 : 1);
  }
  Buffer<Index> cols(static_cast<std::size_t>(offsets[n]));
  Buffer<Real> vals(cols.size());
  bool cancelled = false;
  for (std::size_t r = 0; r < n; ++r) {
    const auto diag = static_cast<Index>(r);
    Offset w = offsets[r];
    bool placed = false;
    for (Offset p = off[r]; p < off[r + 1]; ++p) {
      if (!placed && ac[p] >= diag) {
        placed = true;
        if (ac[p] == diag) {
          cols[w] = diag;
          vals[w++] = av[p] + gamma;
          cancelled = cancelled || av[p] + gamma == 0.0;
          continue;
        }
        cols[w] = diag;
        vals[w++] = gamma;
      }
      cols[w] = ac[p];
      vals[w++] = av[p];
    }
    if (!placed) {
      cols[w] = diag;
      vals[w++] = gamma;
    }
  }
  SparseMatrix out = SparseMatrix::from_csr(n, n, std::move(offsets), std::move(cols), std::move(vals));
  if (cancelled) return out.canonicalized();
  return out;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + dims(a.rows(), a.cols()) + " times " + dims(b.rows(), b.cols()));
  }
  DenseMatrix y(a.rows(), b.cols());
  parallel_chunks(a.rows(), [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto out = y.row(i);
      const auto in = a.row(i);
      for (std::size_t k = 0; k < in.size(); ++k) {
        const Real v = in[k];
        if (v == 0.0) continue;
        const auto brow = b.row(k);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += v * brow[j];
      }
    }
  });
  return y;
}

DenseMatrix matmul_at_b(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_at_b: row count mismatch");
  DenseMatrix y(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto ar = a.row(r);
    const auto br = b.row(r);
    for (std::size_t i = 0; i < ar.size(); ++i) {
      if (ar[i] == 0.0) continue;
      auto out = y.row(i);
      for (std::size_t j = 0; j < br.size(); ++j) out[j] += ar[i] * br[j];
    }
  }
  return y;
}

DenseMatrix matmul_a_bt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_a_bt: column count mismatch");
  DenseMatrix y(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto br = b.row(j);
      Real s = 0.0;
      for (std::size_t k = 0; k < ar.size(); ++k) s += ar[k] * br[k];
      y(i, j) = s;
    }
  }
  return y;
}

Real max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  Real m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace mpf
