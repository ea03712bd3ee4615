#include <gtest/gtest.h>

#include <random>

#include "mpf/errors.hpp"
#include "mpf/sparse.hpp"
#include "test_support.hpp"

namespace mpf {
namespace {

using testing::Dense;
using testing::to_nested;

SparseMatrix from_nested(const Dense& d) {
  DenseMatrix m(d.size(), d.empty() ? 0 : d[0].size());
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d[i].size(); ++j) m(i, j) = d[i][j];
  return SparseMatrix::from_dense(m);
}

const Dense kCycle = {{0, 1, 0}, {0, 0, 1}, {1, 0, 0}};

TEST(SparseMatrix, TripletsSumDuplicatesAndDropZeros) {
  auto m = SparseMatrix::from_triplets(2, 3, {{0, 2, 1.0}, {0, 2, 2.0}, {1, 0, 1.0}, {1, 0, -1.0}, {0, 0, 5.0}});
  EXPECT_EQ(m.nnz(), 2u);
  EXPECT_DOUBLE_EQ(m.at(0, 2), 3.0);
  EXPECT_DOUBLE_EQ(m.at(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(m.at(1, 0), 0.0);
  EXPECT_EQ(m.row_offsets()[0], 0);
  EXPECT_EQ(m.row_offsets()[2], static_cast<Offset>(m.nnz()));
}

TEST(SparseMatrix, RejectsOutOfRangeTriplet) {
  EXPECT_THROW(SparseMatrix::from_triplets(2, 2, {{0, 2, 1.0}}), ShapeError);
}

TEST(SparseMatrix, FromCsrRejectsUnsortedColumns) {
  Buffer<Offset> off{0, 2};
  Buffer<Index> cols{1, 0};
  Buffer<Real> vals{1.0, 1.0};
  EXPECT_THROW(SparseMatrix::from_csr(1, 2, off, cols, vals), ShapeError);
}

TEST(RowNormalize, DividesByRowSums) {
  auto out = row_normalize(from_nested({{2, 2}, {0, 4}}), 0.0);
  EXPECT_EQ(to_nested(out), (Dense{{0.5, 0.5}, {0, 1}}));
}

TEST(RowNormalize, PermutationUnchanged) {
  const auto p = from_nested(kCycle);
  EXPECT_EQ(row_normalize(p, 0.0), p);
}

TEST(RowNormalize, EpsilonFillsEmptyRowWithDiagonal) {
  const Dense a = {{0, 0}, {1, 0}};
  const double eps = 1e-6;
  // Oracle: add eps on the diagonal, then divide each row by its sum.
  const Dense expected = testing::dense_row_normalize(testing::dense_add(a, testing::dense_identity(2), eps));
  const auto out = to_nested(row_normalize(from_nested(a), eps));
  EXPECT_LE(testing::max_abs_diff(out, expected), 1e-15);
  EXPECT_NEAR(out[0][0], 1.0, 1e-9);
  EXPECT_EQ(out[0][1], 0.0);
}

TEST(RowNormalize, ZeroRowStaysZeroWithoutEpsilon) {
  auto out = row_normalize(from_nested({{0, 0}, {3, 1}}), 0.0);
  EXPECT_EQ(out.row_cols(0).size(), 0u);
  EXPECT_NEAR(out.row_sums()[1], 1.0, 1e-12);
}

TEST(RowNormalize, Errors) {
  EXPECT_THROW(row_normalize(SparseMatrix(2, 3), 1e-6), ShapeError);
  EXPECT_THROW(row_normalize(SparseMatrix(2, 2), -1.0), DomainError);
  EXPECT_NO_THROW(row_normalize(SparseMatrix(2, 3), 0.0));
}

TEST(RowNormalize, RandomRowsSumToOne) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = testing::random_sparse(9, 9, 0.3, rng, 0.0, 5.0);
    auto out = row_normalize(a, 1e-6);
    for (double s : out.row_sums()) EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Spmm, PermutationComposition) {
  const auto p = from_nested(kCycle);
  EXPECT_EQ(to_nested(spmm(p, p)), (Dense{{0, 0, 1}, {1, 0, 0}, {0, 1, 0}}));
}

TEST(Spmm, RightIdentity) {
  std::mt19937_64 rng(1);
  const auto a = testing::random_sparse(7, 7, 0.3, rng);
  EXPECT_EQ(spmm(a, SparseMatrix::identity(7)), a);
}

TEST(Spmm, MatchesDenseOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const auto a = testing::random_sparse(6, 6, 0.4, rng);
    const auto b = testing::random_sparse(6, 6, 0.4, rng);
    const auto expected = testing::dense_matmul(to_nested(a), to_nested(b));
    EXPECT_LE(testing::max_abs_diff(to_nested(spmm(a, b)), expected), 1e-12);
  }
}

TEST(Spmm, ExactCancellationIsDropped) {
  // Row 0 of the product cancels at column 0 but not at column 1; row 1 keeps both.
  const auto a = SparseMatrix::from_dense(DenseMatrix::from_rows({{1, 1}, {1, 0}}));
  const auto b = SparseMatrix::from_dense(DenseMatrix::from_rows({{1, 2}, {-1, 3}}));
  const auto c = spmm(a, b);
  EXPECT_EQ(c.nnz(), 3u);
  EXPECT_EQ(c.at(0, 0), 0.0);
  EXPECT_EQ(c.at(0, 1), 5.0);
  EXPECT_EQ(c.at(1, 0), 1.0);
  EXPECT_EQ(c.at(1, 1), 2.0);
  EXPECT_EQ(c.canonicalized(), c);
}

TEST(Spmm, DimensionMismatch) { EXPECT_THROW(spmm(SparseMatrix(2, 3), SparseMatrix(2, 3)), ShapeError); }

TEST(Spdm, IdentityAndZero) {
  std::mt19937_64 rng(2);
  const auto x = testing::random_dense(5, 3, rng);
  EXPECT_EQ(max_abs_diff(spdm(SparseMatrix::identity(5), x), x), 0.0);
  const auto z = spdm(SparseMatrix(5, 5), x);
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(Spdm, MatchesDenseOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const auto a = testing::random_sparse(8, 8, 0.3, rng);
    const auto x = testing::random_dense(8, 3, rng);
    const auto expected = testing::dense_matmul(to_nested(a), to_nested(x));
    EXPECT_LE(testing::max_abs_diff(to_nested(spdm(a, x)), expected), 1e-12);
  }
}

TEST(Spdm, TransposedMatchesDenseOracle) {
  std::mt19937_64 rng(6);
  const auto a = testing::random_sparse(7, 5, 0.4, rng);
  const auto x = testing::random_dense(7, 2, rng);
  Dense at(5, std::vector<double>(7));
  const auto an = to_nested(a);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 5; ++j) at[j][i] = an[i][j];
  EXPECT_LE(testing::max_abs_diff(to_nested(spdm_transposed(a, x)), testing::dense_matmul(at, to_nested(x))), 1e-12);
}

TEST(Spdm, DimensionMismatch) { EXPECT_THROW(spdm(SparseMatrix(2, 3), DenseMatrix(2, 1)), ShapeError); }

TEST(WeightedSum, OneHotReturnsSelectedMatrix) {
  std::mt19937_64 rng(8);
  const SparseMatrix mats[] = {testing::random_stochastic(5, 0.4, rng), testing::random_stochastic(5, 0.4, rng)};
  const double alpha[] = {1.0, 0.0};
  EXPECT_EQ(weighted_sum(mats, alpha), mats[0]);
}

TEST(WeightedSum, HalfAndHalfWithIdentity) {
  const auto a = from_nested(kCycle);
  const SparseMatrix mats[] = {a, SparseMatrix::identity(3)};
  const double alpha[] = {0.5, 0.5};
  const auto expected = testing::dense_add(testing::dense_scale(kCycle, 0.5), testing::dense_scale(testing::dense_identity(3), 0.5));
  EXPECT_EQ(to_nested(weighted_sum(mats, alpha)), expected);
}

TEST(WeightedSum, StochasticInputsGiveStochasticOutput) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<SparseMatrix> mats;
    for (int t = 0; t < 3; ++t) mats.push_back(testing::random_stochastic(5, 0.4, rng));
    std::vector<double> alpha{u(rng), u(rng), u(rng)};
    const double s = alpha[0] + alpha[1] + alpha[2];
    for (double& v : alpha) v /= s;
    Dense expected(5, std::vector<double>(5, 0.0));
    for (int t = 0; t < 3; ++t) expected = testing::dense_add(expected, to_nested(mats[t]), alpha[t]);
    const auto out = weighted_sum(mats, alpha);
    EXPECT_LE(testing::max_abs_diff(to_nested(out), expected), 1e-15);
    for (double r : out.row_sums()) EXPECT_NEAR(r, 1.0, 1e-12);
  }
}

TEST(WeightedSum, Errors) {
  const SparseMatrix mats[] = {SparseMatrix::identity(3), SparseMatrix::identity(3)};
  const SparseMatrix mixed[] = {SparseMatrix::identity(3), SparseMatrix::identity(4)};
  const double ok[] = {0.5, 0.5};
  const double not_dist[] = {0.7, 0.7};
  const double negative[] = {1.5, -0.5};
  const double short_alpha[] = {1.0};
  EXPECT_THROW(weighted_sum(mats, not_dist), DomainError);
  EXPECT_THROW(weighted_sum(mats, negative), DomainError);
  EXPECT_THROW(weighted_sum(mats, short_alpha), ShapeError);
  EXPECT_THROW(weighted_sum(mixed, ok), ShapeError);
}

TEST(DegreeOfProduct, PermutationsGiveOnes) {
  const auto p = from_nested(kCycle);
  for (double d : degree_of_product(p, spmm(p, p))) EXPECT_EQ(d, 1.0);
}

TEST(DegreeOfProduct, UniformTwoByTwo) {
  const auto h = from_nested({{0.5, 0.5}, {0.5, 0.5}});
  EXPECT_EQ(degree_of_product(h, h), (std::vector<double>{1.0, 1.0}));
}

TEST(DegreeOfProduct, RandomNormalizedPairs) {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<std::size_t> size(4, 16);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = size(rng);
    const auto a = row_normalize(testing::random_sparse(n, n, 0.3, rng, 0.0, 3.0), 1e-6);
    const auto b = row_normalize(testing::random_sparse(n, n, 0.3, rng, 0.0, 3.0), 1e-6);
    // Oracle: row sums of the dense product.
    const auto prod = testing::dense_matmul(to_nested(a), to_nested(b));
    const auto deg = degree_of_product(a, b);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (double v : prod[i]) s += v;
      EXPECT_NEAR(s, 1.0, 1e-9);
      EXPECT_NEAR(deg[i], 1.0, 1e-9);
    }
  }
}

TEST(DegreeOfProduct, RejectsUnnormalizedInput) {
  const auto a = from_nested({{2, 0}, {0, 1}});
  EXPECT_THROW(degree_of_product(a, a), PreconditionError);
}

// Property tests over random instances.

TEST(SparseProperties, StochasticClosureAndSelfLoopDegree) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = testing::random_stochastic(8, 0.3, rng);
    const auto b = testing::random_stochastic(8, 0.3, rng);
    EXPECT_TRUE(spmm(a, b).is_row_stochastic(1e-9));
    for (double s : add_scaled_identity(a, 1.0).row_sums()) EXPECT_NEAR(s, 2.0, 1e-12);
  }
}

TEST(SparseProperties, Associativity) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 30; ++trial) {
    const auto a = testing::random_sparse(6, 7, 0.4, rng);
    const auto b = testing::random_sparse(7, 5, 0.4, rng);
    const auto c = testing::random_sparse(5, 6, 0.4, rng);
    const auto left = to_nested(spmm(spmm(a, b), c));
    const auto right = to_nested(spmm(a, spmm(b, c)));
    EXPECT_LE(testing::max_abs_diff(left, right), 1e-10);
  }
}

TEST(SparseProperties, SpdmConsistency) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const auto a = testing::random_sparse(6, 6, 0.4, rng);
    const auto b = testing::random_sparse(6, 6, 0.4, rng);
    const auto x = testing::random_dense(6, 3, rng);
    const auto via_product = spdm(spmm(a, b), x);
    const auto via_chain = spdm(a, spdm(b, x));
    EXPECT_LE(max_abs_diff(via_product, via_chain), 1e-10);
  }
}

TEST(SparseProperties, CanonicalizationIdempotent) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = testing::random_sparse(6, 6, 0.4, rng);
    const auto b = testing::random_sparse(6, 6, 0.4, rng);
    const auto c = spmm(a, b);
    EXPECT_EQ(c.canonicalized(), c);
    const auto n = row_normalize(c, 0.0);
    EXPECT_EQ(n.canonicalized(), n);
  }
}

TEST(MemoryAccounting, TracksMatrixStorage) {
  PeakScope scope;
  {
    DenseMatrix m(100, 10);
    EXPECT_GE(MemoryAccountant::instance().current_bytes(), scope.baseline_bytes() + 100 * 10 * sizeof(double));
  }
  EXPECT_GE(scope.peak_extra_bytes(), 100 * 10 * sizeof(double));
  EXPECT_EQ(MemoryAccountant::instance().current_bytes(), scope.baseline_bytes());
}

TEST(MemoryAccounting, LimitRaisesBadAlloc) {
  const std::size_t before = MemoryAccountant::instance().current_bytes();
  {
    MemoryLimitScope cap(before + 1000);
    EXPECT_THROW(DenseMatrix(100, 100), std::bad_alloc);
    EXPECT_NO_THROW(DenseMatrix(10, 10));
  }
  EXPECT_EQ(MemoryAccountant::instance().limit(), 0u);
  EXPECT_EQ(MemoryAccountant::instance().current_bytes(), before);
}

}  // namespace
}  // namespace mpf
