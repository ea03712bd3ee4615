#include "mpf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mpf/errors.hpp"
#include "mpf/layers.hpp"

namespace mpf::ad {

namespace {

void add_into(DenseMatrix& dst, const DenseMatrix& src, Real c = 1.0) {
  auto d = dst.values();
  const auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * s[i];
}

bool wants(const Var& v) { return v.requires_grad(); }

}  // namespace

DenseMatrix& Node::dense_grad_buffer() {
  if (!has_grad) {
    dense_grad = DenseMatrix(dense().rows(), dense().cols());
    has_grad = true;
  }
  return dense_grad;
}

Buffer<Real>& Node::sparse_grad_buffer() {
  if (!has_grad) {
    sparse_grad.assign(sparse().nnz(), 0.0);
    has_grad = true;
  }
  return sparse_grad;
}

DenseMatrix Var::grad() const {
  if (node_->is_sparse()) throw std::logic_error("Var::grad: value is sparse; use sparse_grad()");
  if (!node_->has_grad) return DenseMatrix(dense().rows(), dense().cols());
  return node_->dense_grad;
}

Buffer<Real> Var::sparse_grad() const {
  if (!node_->is_sparse()) throw std::logic_error("Var::sparse_grad: value is dense; use grad()");
  if (!node_->has_grad) return Buffer<Real>(sparse().nnz(), 0.0);
  return node_->sparse_grad;
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(DenseMatrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Tape::constant(SparseMatrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Tape::parameter(DenseMatrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = record_;
  if (record_) nodes_.push_back(n);
  return Var(std::move(n));
}

Var Tape::finish(std::variant<DenseMatrix, SparseMatrix> value, bool needs_grad,
                 std::function<void(Node& out)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (record_ && needs_grad) {
    if (consumed_) throw std::logic_error("Tape: recording onto a consumed tape");
    n->requires_grad = true;
    n->backward = std::move(backward);
    nodes_.push_back(n);
  }
  return Var(std::move(n));
}

Var Tape::make(std::variant<DenseMatrix, SparseMatrix> value, std::initializer_list<const Var*> inputs,
               std::function<void(Node& out)> backward) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Var* v) { return v->requires_grad(); });
  return finish(std::move(value), needs, std::move(backward));
}

Var Tape::make(std::variant<DenseMatrix, SparseMatrix> value, std::span<const Var> inputs,
               std::function<void(Node& out)> backward) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(), wants);
  return finish(std::move(value), needs, std::move(backward));
}

void Tape::backward(const Var& loss) {
  if (consumed_) throw std::logic_error("Tape::backward: tape already consumed");
  if (loss.is_sparse() || loss.dense().rows() != 1 || loss.dense().cols() != 1) {
    throw ShapeError("Tape::backward: loss must be a 1x1 dense value");
  }
  consumed_ = true;
  if (!loss.requires_grad()) return;
  loss.node()->dense_grad_buffer()(0, 0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.has_grad && n.backward) n.backward(n);
    n.backward = nullptr;  // releases captured inputs
  }
}

// ---------------------------------------------------------------------------
// Dense ops

Var matmul(Tape& t, const Var& a, const Var& b) {
  return t.make(mpf::matmul(a.dense(), b.dense()), {&a, &b}, [a, b](Node& out) {
    if (wants(a)) add_into(a.node()->dense_grad_buffer(), mpf::matmul_a_bt(out.dense_grad, b.dense()));
    if (wants(b)) add_into(b.node()->dense_grad_buffer(), mpf::matmul_at_b(a.dense(), out.dense_grad));
  });
}

Var lincomb(Tape& t, const Var& a, Real ca, const Var& b, Real cb) {
  if (!a.dense().same_shape(b.dense())) throw ShapeError("lincomb: shape mismatch");
  DenseMatrix y(a.dense().rows(), a.dense().cols());
  for (std::size_t i = 0; i < y.size(); ++i) y.values()[i] = ca * a.dense().values()[i] + cb * b.dense().values()[i];
  return t.make(std::move(y), {&a, &b}, [a, ca, b, cb](Node& out) {
    if (wants(a)) add_into(a.node()->dense_grad_buffer(), out.dense_grad, ca);
    if (wants(b)) add_into(b.node()->dense_grad_buffer(), out.dense_grad, cb);
  });
}

Var add(Tape& t, const Var& a, const Var& b) { return lincomb(t, a, 1.0, b, 1.0); }

Var scale(Tape& t, const Var& a, Real c) {
  DenseMatrix y = a.dense();
  for (Real& v : y.values()) v *= c;
  return t.make(std::move(y), {&a}, [a, c](Node& out) { add_into(a.node()->dense_grad_buffer(), out.dense_grad, c); });
}

Var add_row_bias(Tape& t, const Var& a, const Var& bias) {
  const DenseMatrix& x = a.dense();
  const DenseMatrix& b = bias.dense();
  if (b.rows() != 1 || b.cols() != x.cols()) throw ShapeError("add_row_bias: bias must be 1 x cols");
  DenseMatrix y = x;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto row = y.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b(0, c);
  }
  return t.make(std::move(y), {&a, &bias}, [a, bias](Node& out) {
    if (wants(a)) add_into(a.node()->dense_grad_buffer(), out.dense_grad);
    if (wants(bias)) {
      DenseMatrix& gb = bias.node()->dense_grad_buffer();
      for (std::size_t i = 0; i < out.dense_grad.rows(); ++i) {
        const auto row = out.dense_grad.row(i);
        for (std::size_t c = 0; c < row.size(); ++c) gb(0, c) += row[c];
      }
    }
  });
}

Var relu(Tape& t, const Var& a) {
  DenseMatrix y = a.dense();
  for (Real& v : y.values()) v = v > 0.0 ? v : 0.0;
  return t.make(std::move(y), {&a}, [a](Node& out) {
    DenseMatrix& g = a.node()->dense_grad_buffer();
    const auto x = a.dense().values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) g.values()[i] += out.dense_grad.values()[i];
    }
  });
}

Var tanh(Tape& t, const Var& a) {
  DenseMatrix y = a.dense();
  for (Real& v : y.values()) v = std::tanh(v);
  return t.make(std::move(y), {&a}, [a](Node& out) {
    DenseMatrix& g = a.node()->dense_grad_buffer();
    const auto yv = out.dense().values();
    for (std::size_t i = 0; i < g.size(); ++i) g.values()[i] += out.dense_grad.values()[i] * (1.0 - yv[i] * yv[i]);
  });
}

Var mask_multiply(Tape& t, const Var& a, std::shared_ptr<const DenseMatrix> mask) {
  if (!a.dense().same_shape(*mask)) throw ShapeError("mask_multiply: shape mismatch");
  DenseMatrix y = a.dense();
  for (std::size_t i = 0; i < y.size(); ++i) y.values()[i] *= mask->values()[i];
  return t.make(std::move(y), {&a}, [a, mask](Node& out) {
    DenseMatrix& g = a.node()->dense_grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g.values()[i] += out.dense_grad.values()[i] * mask->values()[i];
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  if (parts.size() == 1) return parts[0];
  const std::size_t rows = parts[0].dense().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.dense().rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.dense().cols();
  }
  DenseMatrix y(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < rows; ++i) {
      const auto src = p.dense().row(i);
      std::copy(src.begin(), src.end(), y.row(i).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += p.dense().cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.make(std::move(y), parts, [inputs](Node& out) {
    std::size_t off = 0;
    for (const auto& p : inputs) {
      const std::size_t w = p.dense().cols();
      if (wants(p)) {
        DenseMatrix& g = p.node()->dense_grad_buffer();
        for (std::size_t i = 0; i < g.rows(); ++i) {
          const auto src = out.dense_grad.row(i).subspan(off, w);
          auto dst = g.row(i);
          for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
        }
      }
      off += w;
    }
  });
}

namespace {

Var scaled_sum(Tape& t, std::span<const Var> parts, Real c) {
  if (parts.empty()) throw ShapeError("sum: no inputs");
  DenseMatrix y(parts[0].dense().rows(), parts[0].dense().cols());
  for (const auto& p : parts) {
    if (!p.dense().same_shape(y)) throw ShapeError("sum: shape mismatch");
    add_into(y, p.dense());
  }
  if (c != 1.0) {
    for (Real& v : y.values()) v *= c;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.make(std::move(y), parts, [inputs, c](Node& out) {
    for (const auto& p : inputs) {
      if (wants(p)) add_into(p.node()->dense_grad_buffer(), out.dense_grad, c);
    }
  });
}

}  // namespace

Var sum(Tape& t, std::span<const Var> parts) { return scaled_sum(t, parts, 1.0); }

Var mean(Tape& t, std::span<const Var> parts) {
  return scaled_sum(t, parts, 1.0 / static_cast<Real>(parts.size()));
}

Var softmax_row(Tape& t, const Var& logits, std::size_t row) {
  const DenseMatrix& z = logits.dense();
  if (row >= z.rows()) throw ShapeError("softmax_row: row out of range");
  const auto p = mpf::softmax(z.row(row));
  DenseMatrix y(1, p.size());
  std::copy(p.begin(), p.end(), y.values().begin());
  return t.make(std::move(y), {&logits}, [logits, row](Node& out) {
    const auto a = out.dense().values();
    const auto g = out.dense_grad.values();
    Real dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * g[i];
    auto dst = logits.node()->dense_grad_buffer().row(row);
    for (std::size_t i = 0; i < a.size(); ++i) dst[i] += a[i] * (g[i] - dot);
  });
}

Var cross_entropy(Tape& t, const Var& logits, std::span<const int> labels, std::span<const Index> mask) {
  const DenseMatrix& z = logits.dense();
  if (mask.empty()) throw DomainError("cross_entropy: empty mask");
  if (labels.size() != z.rows()) throw ShapeError("cross_entropy: label count does not match rows");
  DenseMatrix probs(mask.size(), z.cols());
  Real total = 0.0;
  for (std::size_t m = 0; m < mask.size(); ++m) {
    const Index v = mask[m];
    if (v < 0 || static_cast<std::size_t>(v) >= z.rows()) throw ShapeError("cross_entropy: mask node out of range");
    const int y = labels[v];
    if (y < 0 || static_cast<std::size_t>(y) >= z.cols()) {
      throw DomainError("cross_entropy: node " + std::to_string(v) + " has label " + std::to_string(y) +
                        " outside [0, " + std::to_string(z.cols()) + ")");
    }
    const auto row = z.row(v);
    const Real shift = *std::max_element(row.begin(), row.end());
    Real s = 0.0;
    for (Real x : row) s += std::exp(x - shift);
    const Real lse = shift + std::log(s);
    total += lse - row[y];
    for (std::size_t c = 0; c < row.size(); ++c) probs(m, c) = std::exp(row[c] - lse);
  }
  DenseMatrix y(1, 1);
  y(0, 0) = total / static_cast<Real>(mask.size());
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<Index> msk(mask.begin(), mask.end());
  return t.make(std::move(y), {&logits},
                [logits, lab = std::move(lab), msk = std::move(msk), probs = std::move(probs)](Node& out) {
                  const Real scale = out.dense_grad(0, 0) / static_cast<Real>(msk.size());
                  DenseMatrix& g = logits.node()->dense_grad_buffer();
                  for (std::size_t m = 0; m < msk.size(); ++m) {
                    auto row = g.row(msk[m]);
                    for (std::size_t c = 0; c < row.size(); ++c) row[c] += scale * probs(m, c);
                    row[lab[msk[m]]] -= scale;
                  }
                });
}

// ---------------------------------------------------------------------------
// Sparse ops

Var weighted_sum(Tape& t, std::span<const Var> mats, const Var& alpha) {
  const DenseMatrix& a = alpha.dense();
  if (a.rows() != 1 || a.cols() != mats.size()) throw ShapeError("weighted_sum: alpha must be 1 x T");
  std::vector<const SparseMatrix*> ptrs;
  for (const auto& m : mats) ptrs.push_back(&m.sparse());
  SparseMatrix s = mpf::linear_combination(std::span<const SparseMatrix* const>(ptrs), a.row(0));
  std::vector<Var> inputs(mats.begin(), mats.end());
  inputs.push_back(alpha);
  return t.make(std::move(s), std::span<const Var>(inputs), [inputs](Node& out) {
    const std::size_t n_mats = inputs.size() - 1;
    const Var& alpha = inputs.back();
    const SparseMatrix& s = out.sparse();
    const auto& ds = out.sparse_grad;
    DenseMatrix* galpha = wants(alpha) ? &alpha.node()->dense_grad_buffer() : nullptr;
    for (std::size_t k = 0; k < n_mats; ++k) {
      const Var& m = inputs[k];
      const SparseMatrix& mk = m.sparse();
      const Real coeff = alpha.dense()(0, k);
      Buffer<Real>* gm = wants(m) ? &m.node()->sparse_grad_buffer() : nullptr;
      Real dot = 0.0;
      for (std::size_t r = 0; r < mk.rows(); ++r) {
        const auto out_cols = s.row_cols(r);
        const Offset base = s.row_offsets()[r];
        std::size_t q = 0;
        for (Offset p = mk.row_offsets()[r]; p < mk.row_offsets()[r + 1]; ++p) {
          const Index c = mk.col_indices()[p];
          while (q < out_cols.size() && out_cols[q] < c) ++q;
          if (q == out_cols.size() || out_cols[q] != c) continue;  // cancelled to zero in the sum
          const Real g = ds[base + static_cast<Offset>(q)];
          dot += g * mk.values()[p];
          if (gm) (*gm)[p] += coeff * g;
        }
      }
      if (galpha) (*galpha)(0, k) += dot;
    }
  });
}

Var spmm(Tape& t, const Var& a, const Var& b) {
  return t.make(mpf::spmm(a.sparse(), b.sparse()), {&a, &b}, [a, b](Node& out) {
    const SparseMatrix& A = a.sparse();
    const SparseMatrix& B = b.sparse();
    const SparseMatrix& C = out.sparse();
    const auto& dc = out.sparse_grad;
    Buffer<Real>* ga = wants(a) ? &a.node()->sparse_grad_buffer() : nullptr;
    Buffer<Real>* gb = wants(b) ? &b.node()->sparse_grad_buffer() : nullptr;
    // dA[i,k] = sum_j dC[i,j] B[k,j];  dB[k,j] += A[i,k] dC[i,j].
    Buffer<Real> acc(C.cols(), 0.0);
    for (std::size_t i = 0; i < A.rows(); ++i) {
      const auto ccols = C.row_cols(i);
      const Offset cbase = C.row_offsets()[i];
      for (std::size_t q = 0; q < ccols.size(); ++q) acc[ccols[q]] = dc[cbase + static_cast<Offset>(q)];
      for (Offset p = A.row_offsets()[i]; p < A.row_offsets()[i + 1]; ++p) {
        const Index k = A.col_indices()[p];
        Real s = 0.0;
        for (Offset r = B.row_offsets()[k]; r < B.row_offsets()[k + 1]; ++r) {
          const Real g = acc[B.col_indices()[r]];
          s += g * B.values()[r];
          if (gb) (*gb)[r] += A.values()[p] * g;
        }
        if (ga) (*ga)[p] += s;
      }
      for (Index c : ccols) acc[c] = 0.0;
    }
  });
}

Var row_renormalize(Tape& t, const Var& a) {
  const SparseMatrix& A = a.sparse();
  std::vector<Real> sums = A.row_sums();
  Buffer<Real> vals(A.values().begin(), A.values().end());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    if (sums[r] == 0.0) continue;
    for (Offset p = A.row_offsets()[r]; p < A.row_offsets()[r + 1]; ++p) vals[p] /= sums[r];
  }
  return t.make(A.with_values(std::move(vals)), {&a}, [a, sums = std::move(sums)](Node& out) {
    // y = a / d with d = row sum: dA_ij = dY_ij / d - sum_k dY_ik A_ik / d^2.
    const SparseMatrix& A = a.sparse();
    const auto& dy = out.sparse_grad;
    auto& ga = a.node()->sparse_grad_buffer();
    for (std::size_t r = 0; r < A.rows(); ++r) {
      const Real d = sums[r];
      if (d == 0.0) continue;
      Real dot = 0.0;
      for (Offset p = A.row_offsets()[r]; p < A.row_offsets()[r + 1]; ++p) dot += dy[p] * A.values()[p];
      for (Offset p = A.row_offsets()[r]; p < A.row_offsets()[r + 1]; ++p) ga[p] += dy[p] / d - dot / (d * d);
    }
  });
}

Var add_scaled_identity(Tape& t, const Var& a, Real gamma) {
  return t.make(mpf::add_scaled_identity(a.sparse(), gamma), {&a}, [a](Node& out) {
    const SparseMatrix& A = a.sparse();
    const SparseMatrix& Y = out.sparse();
    auto& ga = a.node()->sparse_grad_buffer();
    for (std::size_t r = 0; r < A.rows(); ++r) {
      for (Offset p = A.row_offsets()[r]; p < A.row_offsets()[r + 1]; ++p) {
        const Offset q = Y.find(r, A.col_indices()[p]);
        if (q >= 0) ga[p] += out.sparse_grad[q];
      }
    }
  });
}

Var spdm(Tape& t, const Var& a, const Var& x) {
  return t.make(mpf::spdm(a.sparse(), x.dense()), {&a, &x}, [a, x](Node& out) {
    const SparseMatrix& A = a.sparse();
    if (wants(x)) add_into(x.node()->dense_grad_buffer(), mpf::spdm_transposed(A, out.dense_grad));
    if (wants(a)) {
      auto& ga = a.node()->sparse_grad_buffer();
      const DenseMatrix& X = x.dense();
      for (std::size_t r = 0; r < A.rows(); ++r) {
        const auto dy = out.dense_grad.row(r);
        for (Offset p = A.row_offsets()[r]; p < A.row_offsets()[r + 1]; ++p) {
          const auto xr = X.row(A.col_indices()[p]);
          Real s = 0.0;
          for (std::size_t c = 0; c < dy.size(); ++c) s += dy[c] * xr[c];
          ga[p] += s;
        }
      }
    }
  });
}

Var topn_affinity_softmax(Tape& t, const Var& g, std::size_t top_n) {
  return t.make(mpf::topn_affinity_softmax(g.dense(), top_n), {&g}, [g](Node& out) {
    const SparseMatrix& V = out.sparse();
    const DenseMatrix& G = g.dense();
    const auto& dv = out.sparse_grad;
    DenseMatrix& gg = g.node()->dense_grad_buffer();
    for (std::size_t i = 0; i < V.rows(); ++i) {
      Real dot = 0.0;
      for (Offset p = V.row_offsets()[i]; p < V.row_offsets()[i + 1]; ++p) dot += V.values()[p] * dv[p];
      const auto gi = G.row(i);
      for (Offset p = V.row_offsets()[i]; p < V.row_offsets()[i + 1]; ++p) {
        // Softmax adjoint onto the kept affinity M_ij = g_i . g_j.
        const Real dm = V.values()[p] * (dv[p] - dot);
        if (dm == 0.0) continue;
        const std::size_t j = static_cast<std::size_t>(V.col_indices()[p]);
        const auto gj = G.row(j);
        auto dgi = gg.row(i);
        for (std::size_t c = 0; c < gi.size(); ++c) dgi[c] += dm * gj[c];
        auto dgj = gg.row(j);
        for (std::size_t c = 0; c < gi.size(); ++c) dgj[c] += dm * gi[c];
      }
    }
  });
}

}  // namespace mpf::ad
