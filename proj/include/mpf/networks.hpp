#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mpf/autodiff.hpp"
#include "mpf/hetgraph.hpp"
#include "mpf/layers.hpp"

namespace mpf {

enum class ModelKind { gtn, fastgtn };
enum class Aggregation { concat, mean, sum };

std::string to_string(ModelKind k);
std::string to_string(Aggregation a);
ModelKind parse_model_kind(const std::string& s);
Aggregation parse_aggregation(const std::string& s);

struct Hyper {
  // Adjacency selections per block, i.e. the longest meta-path length. A GTN
  // with K selections performs K - 1 explicit adjacency products.
  std::size_t K = 2;
  std::size_t C = 2;  // channels
  // GNN layers on the transformed graphs (GTN) or FastGTN blocks.
  std::size_t L = 1;
  std::size_t hidden = 64;
  // GTN: self-loop weight added to each transformed adjacency.
  // FastGTN: residual coefficient on the untransformed features.
  Real gamma = 0.5;
  Aggregation agg = Aggregation::concat;
  Real epsilon = 1e-6;
  bool include_identity = true;
  // Non-local candidate budget per row; 0 disables it (FastGTN only).
  std::size_t nonlocal_n = 0;
  // GTN: divide each intermediate product by its row sums.
  bool renormalize = true;
};

struct ModelParams {
  ModelKind kind = ModelKind::fastgtn;
  Hyper hyper;
  std::size_t in_dim = 0;
  std::size_t n_classes = 0;
  std::vector<std::string> candidate_names;  // structural candidates, non-local excluded

  // GTN: K entries. FastGTN: L * K entries, block-major.
  std::vector<SelectionWeights> selection;
  // GTN: L matrices shared across channels. FastGTN: L * C, block-major.
  std::vector<DenseMatrix> gnn_weights;
  DenseMatrix classifier_w;
  DenseMatrix classifier_b;
  // FastGTN with non-local enabled: one projector per block.
  std::vector<NonLocalConfig> nonlocal;

  std::size_t n_candidates() const noexcept { return candidate_names.size(); }
  bool nonlocal_enabled() const noexcept { return !nonlocal.empty(); }
  std::size_t block_in_dim(std::size_t l) const;
  std::size_t block_out_dim() const;

  const SelectionWeights& fast_selection(std::size_t block, std::size_t step) const;
  const DenseMatrix& fast_weight(std::size_t block, std::size_t channel) const;

  // Every trainable tensor with its checkpoint key, in a fixed order.
  std::vector<std::pair<std::string, DenseMatrix*>> tensors();
  std::vector<std::pair<std::string, const DenseMatrix*>> tensors() const;

  // Throws ShapeError on an inconsistent dimension chain.
  void validate() const;
};

// Zero selection logits (uniform attention); W and the classifier drawn from
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with a seeded generator.
ModelParams init_params(ModelKind kind, const Hyper& hyper, std::size_t in_dim, std::size_t n_classes,
                        std::vector<std::string> candidate_names, std::uint64_t seed);
ModelParams init_params(ModelKind kind, const Hyper& hyper, const HeteroGraph& g, std::uint64_t seed);
std::vector<std::string> candidate_names_for(const HeteroGraph& g, bool include_identity);

struct Prediction {
  DenseMatrix logits;
  DenseMatrix confidence;  // row softmax of logits

  static Prediction from_logits(DenseMatrix logits);
};

struct ForwardOptions {
  bool training = false;
  Real dropout = 0.0;
  std::uint64_t seed = 0;
  // Reject candidate matrices that are not row-stochastic within 1e-9.
  bool require_stochastic = true;
};

// Tape leaves bound to every tensor in a ModelParams.
struct ParamVars {
  std::vector<ad::Var> selection;
  std::vector<ad::Var> gnn_weights;
  ad::Var classifier_w;
  ad::Var classifier_b;
  std::vector<ad::Var> nonlocal_proj;
  std::vector<ad::Var> nonlocal_bias;
};

ParamVars bind_params(ad::Tape& tape, const ModelParams& p);
// Gradients collected from bound leaves after Tape::backward, shaped like p.
ModelParams collect_gradients(const ModelParams& p, const ParamVars& vars);

// Logits of either model on a prepared candidate set. When `transformed` is
// given, GTN writes its per-channel meta-path adjacency matrices there.
ad::Var model_logits(ad::Tape& tape, const CandidateSet& candidates, const DenseMatrix& features,
                     const ModelParams& p, const ParamVars& vars, const ForwardOptions& opts,
                     std::vector<SparseMatrix>* transformed = nullptr);

Prediction predict(const CandidateSet& candidates, const DenseMatrix& features, const ModelParams& p);

std::pair<Prediction, std::vector<SparseMatrix>> gtn_forward(const HeteroGraph& g, const ModelParams& p);
Prediction fastgtn_forward(const HeteroGraph& g, const ModelParams& p);

// Explicit per-channel meta-path adjacency matrices (C matrices of size N x N).
std::vector<SparseMatrix> gtn_transform(const CandidateSet& candidates, const ModelParams& p);

// Rewrites GTN parameters as an equivalent FastGTN: selection order reversed
// and repeated per block, shared W copied to every channel, and the self-loop
// weight g mapped to the residual coefficient g / (1 + g).
ModelParams transfer_gtn_to_fastgtn(const ModelParams& gtn);

// ---------------------------------------------------------------------------
// Reference models used as equivalence oracles.

// D^{-1/2}(A + I)D^{-1/2}.
SparseMatrix symmetric_normalize(const SparseMatrix& a);

struct Classifier {
  DenseMatrix w;
  DenseMatrix b;
};

// Two-sided normalized D^{-1/2}(A + I)D^{-1/2} propagation with ReLU.
Prediction gcn_forward(const SparseMatrix& adjacency, const DenseMatrix& features, std::span<const DenseMatrix> weights,
                       const Classifier& head);

// Per layer: concat over powers j of ReLU(Ahat^j Z W_j).
Prediction mixhop_forward(const SparseMatrix& adjacency, const DenseMatrix& features,
                          std::span<const std::vector<DenseMatrix>> weights, std::span<const std::size_t> powers,
                          const Classifier& head);

// Per layer: ReLU(sum_t D_t^{-1} A_t Z sum_b a[t, b] V_b) with basis decomposition.
struct RgcnLayer {
  DenseMatrix coefficients;         // T x B
  std::vector<DenseMatrix> bases;   // B matrices
};
Prediction rgcn_forward(std::span<const SparseMatrix> adjacency, const DenseMatrix& features,
                        std::span<const RgcnLayer> layers, const Classifier& head);

// ---------------------------------------------------------------------------
// Checkpoints: JSON container, tensors as base64 little-endian float64.

void save_checkpoint(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace mpf
