#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mpf/hetgraph.hpp"
#include "mpf/sparse.hpp"

namespace mpf {

inline constexpr const char* kNonLocalName = "NL";

// Numerically stable softmax (shifted by the max entry).
std::vector<Real> softmax(std::span<const Real> logits);

// 1x1-convolution filters of one selection layer: one row of logits per
// channel, one column per candidate adjacency matrix.
struct SelectionWeights {
  DenseMatrix logits;
  std::size_t layer_index = 0;

  std::size_t channels() const noexcept { return logits.rows(); }
  std::size_t candidates() const noexcept { return logits.cols(); }
  std::vector<Real> alpha(std::size_t channel) const;
};

// Parameters of the feature-similarity projector g(h) = tanh(h W + b) and the
// per-row sparsification budget.
struct NonLocalConfig {
  bool enabled = false;
  std::size_t top_n = 1;
  std::size_t proj_dim = 0;
  DenseMatrix proj_weights;  // hidden_dim x proj_dim
  DenseMatrix proj_bias;     // 1 x proj_dim
};

// Convex combination of the candidates under softmax(logits[channel]).
SparseMatrix soft_select(const CandidateSet& candidates, const SelectionWeights& w, std::size_t channel);

// prev * soft_select(...), optionally renormalized by inverse row sums.
SparseMatrix gt_layer_explicit(const SparseMatrix& prev, const CandidateSet& candidates, const SelectionWeights& w,
                               std::size_t channel, bool renormalize = true);

// soft_select(...) * z without materializing any product of adjacency matrices.
DenseMatrix fastgt_step(const DenseMatrix& z, const CandidateSet& candidates, const SelectionWeights& w,
                        std::size_t channel);

// g(h) = tanh(h W + b).
DenseMatrix nonlocal_projection(const DenseMatrix& h, const NonLocalConfig& cfg);

// Per row i: the top_n entries of (g g^T)[i, :], ties to the lower column,
// softmax-normalized. Rows of the affinity are formed one at a time.
SparseMatrix topn_affinity_softmax(const DenseMatrix& g, std::size_t top_n);

SparseMatrix nonlocal_adjacency(const DenseMatrix& h, const NonLocalConfig& cfg);

DenseMatrix channel_average(std::span<const DenseMatrix> zs);

}  // namespace mpf
