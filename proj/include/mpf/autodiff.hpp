#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mpf/sparse.hpp"

namespace mpf::ad {

// A recorded value. Dense values carry a dense gradient; sparse values carry a
// gradient per stored entry (the pattern is treated as fixed).
struct Node {
  std::variant<DenseMatrix, SparseMatrix> value;
  DenseMatrix dense_grad;
  Buffer<Real> sparse_grad;
  bool requires_grad = false;
  bool has_grad = false;
  std::function<void(Node& self)> backward;

  bool is_sparse() const noexcept { return std::holds_alternative<SparseMatrix>(value); }
  const DenseMatrix& dense() const { return std::get<DenseMatrix>(value); }
  const SparseMatrix& sparse() const { return std::get<SparseMatrix>(value); }

  // Lazily zero-initialized gradient buffers.
  DenseMatrix& dense_grad_buffer();
  Buffer<Real>& sparse_grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const DenseMatrix& dense() const { return node_->dense(); }
  const SparseMatrix& sparse() const { return node_->sparse(); }
  bool is_sparse() const { return node_->is_sparse(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Gradient after Tape::backward; zeros when the value did not influence the loss.
  DenseMatrix grad() const;
  Buffer<Real> sparse_grad() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

// Reverse-mode recorder. With recording disabled the tape keeps no history,
// so intermediates are released as soon as the caller drops them.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var constant(DenseMatrix value);
  Var constant(SparseMatrix value);
  // A leaf whose gradient is requested. Behaves as a constant when not recording.
  Var parameter(DenseMatrix value);

  // Result of an op. `backward` is installed only if recording and at least
  // one input requires a gradient.
  Var make(std::variant<DenseMatrix, SparseMatrix> value, std::initializer_list<const Var*> inputs,
           std::function<void(Node& out)> backward);
  Var make(std::variant<DenseMatrix, SparseMatrix> value, std::span<const Var> inputs,
           std::function<void(Node& out)> backward);

  // Seeds d(loss)/d(loss) = 1 on a 1x1 dense value and replays adjoints.
  // A tape can be consumed once.
  void backward(const Var& loss);

 private:
  Var finish(std::variant<DenseMatrix, SparseMatrix> value, bool needs_grad, std::function<void(Node& out)> backward);

  bool record_;
  bool consumed_ = false;
  std::vector<std::shared_ptr<Node>> nodes_;
};

// ---------------------------------------------------------------------------
// Dense ops

Var matmul(Tape& t, const Var& a, const Var& b);
Var add(Tape& t, const Var& a, const Var& b);
// ca * a + cb * b with constant coefficients.
Var lincomb(Tape& t, const Var& a, Real ca, const Var& b, Real cb);
Var scale(Tape& t, const Var& a, Real c);
// Adds a 1 x cols bias row to every row.
Var add_row_bias(Tape& t, const Var& a, const Var& bias);
Var relu(Tape& t, const Var& a);
Var tanh(Tape& t, const Var& a);
// Elementwise product with a constant mask (inverted dropout).
Var mask_multiply(Tape& t, const Var& a, std::shared_ptr<const DenseMatrix> mask);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var sum(Tape& t, std::span<const Var> parts);
Var mean(Tape& t, std::span<const Var> parts);
// softmax of one row of a logits matrix, returned as 1 x cols.
Var softmax_row(Tape& t, const Var& logits, std::size_t row);
// Mean cross-entropy of softmax(logits) over the masked nodes; 1x1 result.
Var cross_entropy(Tape& t, const Var& logits, std::span<const int> labels, std::span<const Index> mask);

// ---------------------------------------------------------------------------
// Sparse ops

// sum_t alpha[t] * mats[t]; alpha is 1 x T.
Var weighted_sum(Tape& t, std::span<const Var> mats, const Var& alpha);
Var spmm(Tape& t, const Var& a, const Var& b);
// D^{-1} A with D the row sums; zero rows stay zero.
Var row_renormalize(Tape& t, const Var& a);
Var add_scaled_identity(Tape& t, const Var& a, Real gamma);
Var spdm(Tape& t, const Var& a, const Var& x);
// Non-local adjacency of projected features g: per-row top-n of g g^T with a
// softmax over the kept entries. The kept pattern is piecewise constant
// under differentiation.
Var topn_affinity_softmax(Tape& t, const Var& g, std::size_t top_n);

}  // namespace mpf::ad
