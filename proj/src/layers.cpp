#include "mpf/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mpf/errors.hpp"

namespace mpf {

std::vector<Real> softmax(std::span<const Real> logits) {
  std::vector<Real> out(logits.size());
  if (logits.empty()) return out;
  const Real shift = *std::max_element(logits.begin(), logits.end());
  Real total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - shift);
    total += out[i];
  }
  for (Real& v : out) v /= total;
  return out;
}

std::vector<Real> SelectionWeights::alpha(std::size_t channel) const {
  if (channel >= channels()) {
    throw ShapeError("selection channel " + std::to_string(channel) + " out of range (" +
                     std::to_string(channels()) + " channels)");
  }
  return softmax(logits.row(channel));
}

SparseMatrix soft_select(const CandidateSet& candidates, const SelectionWeights& w, std::size_t channel) {
  if (w.candidates() != candidates.size()) {
    throw ShapeError("soft_select: " + std::to_string(w.candidates()) + " logits for " +
                     std::to_string(candidates.size()) + " candidates");
  }
  const auto alpha = w.alpha(channel);
  return weighted_sum(candidates.mats, alpha);
}

SparseMatrix gt_layer_explicit(const SparseMatrix& prev, const CandidateSet& candidates, const SelectionWeights& w,
                               std::size_t channel, bool renormalize) {
  SparseMatrix product = spmm(prev, soft_select(candidates, w, channel));
  if (renormalize) product = row_normalize(product, 0.0);
  return product;
}

DenseMatrix fastgt_step(const DenseMatrix& z, const CandidateSet& candidates, const SelectionWeights& w,
                        std::size_t channel) {
  if (z.rows() != candidates.n_nodes()) throw ShapeError("fastgt_step: feature rows do not match node count");
  return spdm(soft_select(candidates, w, channel), z);
}

DenseMatrix nonlocal_projection(const DenseMatrix& h, const NonLocalConfig& cfg) {
  if (cfg.proj_weights.rows() != h.cols()) throw ShapeError("nonlocal_projection: projector input dim mismatch");
  if (cfg.proj_bias.cols() != cfg.proj_weights.cols() || cfg.proj_bias.rows() != 1) {
    throw ShapeError("nonlocal_projection: bias shape mismatch");
  }
  DenseMatrix g = matmul(h, cfg.proj_weights);
  for (std::size_t i = 0; i < g.rows(); ++i) {
    auto row = g.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = std::tanh(row[c] + cfg.proj_bias(0, c));
  }
  return g;
}

SparseMatrix topn_affinity_softmax(const DenseMatrix& g, std::size_t top_n) {
  if (top_n == 0) throw DomainError("non-local top_n must be at least 1");
  const std::size_t n = g.rows();
  const std::size_t keep = std::min(top_n, n);
  Buffer<Offset> offsets(n + 1, 0);
  Buffer<Index> cols(n * keep);
  Buffer<Real> vals(n * keep);
  Buffer<Real> affinity(n);
  std::vector<Index> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto gi = g.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto gj = g.row(j);
      Real s = 0.0;
      for (std::size_t c = 0; c < gi.size(); ++c) s += gi[c] * gj[c];
      affinity[j] = s;
    }
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](Index a, Index b) { return affinity[a] != affinity[b] ? affinity[a] > affinity[b] : a < b; });
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
    const Real shift = affinity[*std::max_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                                                  [&](Index a, Index b) { return affinity[a] < affinity[b]; })];
    Real total = 0.0;
    for (std::size_t p = 0; p < keep; ++p) {
      cols[i * keep + p] = order[p];
      vals[i * keep + p] = std::exp(affinity[order[p]] - shift);
      total += vals[i * keep + p];
    }
    for (std::size_t p = 0; p < keep; ++p) vals[i * keep + p] /= total;
    offsets[i + 1] = static_cast<Offset>((i + 1) * keep);
  }
  // Softmax weights are strictly positive, so the pattern is already canonical.
  return SparseMatrix::from_csr(n, n, std::move(offsets), std::move(cols), std::move(vals));
}

SparseMatrix nonlocal_adjacency(const DenseMatrix& h, const NonLocalConfig& cfg) {
  if (!cfg.enabled) throw PreconditionError("nonlocal_adjacency: non-local operation is disabled");
  return topn_affinity_softmax(nonlocal_projection(h, cfg), cfg.top_n);
}

DenseMatrix channel_average(std::span<const DenseMatrix> zs) {
  if (zs.empty()) throw ShapeError("channel_average: no channels");
  DenseMatrix out(zs[0].rows(), zs[0].cols());
  for (const auto& z : zs) {
    if (!z.same_shape(out)) throw ShapeError("channel_average: channel shapes differ");
    for (std::size_t i = 0; i < z.size(); ++i) out.values()[i] += z.values()[i];
  }
  const Real inv = 1.0 / static_cast<Real>(zs.size());
  for (Real& v : out.values()) v *= inv;
  return out;
}

}  // namespace mpf
