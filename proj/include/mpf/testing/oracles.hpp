#pragma once

// Independent dense-arithmetic oracles and random instance generators shared
// by the tests and the verification suite. Nothing here calls the sparse
// kernels under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mpf/sparse.hpp"

namespace mpf::testing {

using Dense = std::vector<std::vector<double>>;

inline Dense to_nested(const DenseMatrix& m) {
  Dense out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

// Reads a sparse matrix entry by entry through its CSR arrays.
inline Dense to_nested(const SparseMatrix& s) {
  Dense out(s.rows(), std::vector<double>(s.cols(), 0.0));
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (auto p = s.row_offsets()[i]; p < s.row_offsets()[i + 1]; ++p) out[i][s.col_indices()[p]] = s.values()[p];
  }
  return out;
}

inline Dense dense_matmul(const Dense& a, const Dense& b) {
  const std::size_t n = a.size(), m = b.empty() ? 0 : b[0].size(), k = b.size();
  Dense c(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < k; ++l) s += a[i][l] * b[l][j];
      c[i][j] = s;
    }
  return c;
}

inline Dense dense_add(const Dense& a, const Dense& b, double cb = 1.0) {
  Dense c = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) c[i][j] += cb * b[i][j];
  return c;
}

inline Dense dense_scale(const Dense& a, double c) {
  Dense out = a;
  for (auto& row : out)
    for (auto& v : row) v *= c;
  return out;
}

inline Dense dense_identity(std::size_t n) {
  Dense out(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) out[i][i] = 1.0;
  return out;
}

inline Dense dense_row_normalize(const Dense& a) {
  Dense out = a;
  for (auto& row : out) {
    double s = 0.0;
    for (double v : row) s += v;
    if (s != 0.0)
      for (double& v : row) v /= s;
  }
  return out;
}

inline double max_abs_diff(const Dense& a, const Dense& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

inline std::vector<double> dense_softmax(const std::vector<double>& z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  std::vector<double> out(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (out[i] = std::exp(z[i] - mx));
  for (double& v : out) v /= s;
  return out;
}

inline SparseMatrix random_sparse(std::size_t rows, std::size_t cols, double density, std::mt19937_64& rng,
                                  double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> val(lo, hi);
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      if (coin(rng) < density) t.push_back({static_cast<Index>(i), static_cast<Index>(j), val(rng)});
  return SparseMatrix::from_triplets(rows, cols, std::move(t));
}

// Non-negative square matrix with every row non-empty, normalized to
// row-stochastic by explicit division (no library kernels).
inline SparseMatrix random_stochastic(std::size_t n, double density, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> val(0.1, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<Index, double>> row;
    for (std::size_t j = 0; j < n; ++j)
      if (coin(rng) < density) row.push_back({static_cast<Index>(j), val(rng)});
    if (row.empty()) row.push_back({static_cast<Index>(pick(rng)), val(rng)});
    double s = 0.0;
    for (auto& e : row) s += e.second;
    for (auto& e : row) t.push_back({static_cast<Index>(i), e.first, e.second / s});
  }
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

inline DenseMatrix random_dense(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                                double hi = 1.0) {
  std::uniform_real_distribution<double> val(lo, hi);
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = val(rng);
  return m;
}

}  // namespace mpf::testing
