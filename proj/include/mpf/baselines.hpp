#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mpf/autodiff.hpp"
#include "mpf/hetgraph.hpp"
#include "mpf/networks.hpp"
#include "mpf/train.hpp"

namespace mpf {

// Trainable classical GNNs on the same graphs, for comparison runs.
// GCN and MixHop propagate over the symmetric-normalized union of all edge
// types; RGCN keeps one row-normalized matrix per edge type plus a self relation.
enum class BaselineKind { gcn, mixhop, rgcn };

std::string to_string(BaselineKind k);
BaselineKind parse_baseline_kind(const std::string& s);

inline constexpr const char* kSelfRelation = "self";

struct BaselineParams {
  BaselineKind kind = BaselineKind::gcn;
  std::size_t in_dim = 0;
  std::size_t n_classes = 0;
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::vector<std::size_t> powers{0, 1, 2};  // MixHop adjacency powers
  std::vector<std::string> relations;        // RGCN: edge types, then "self"
  // GCN "gcn.W{l}", MixHop "mixhop.W{l}.p{j}", RGCN "rgcn.W{l}.r{t}", then
  // "classifier.W" and "classifier.b".
  std::vector<std::pair<std::string, DenseMatrix>> tensors;

  std::size_t layer_in_dim(std::size_t l) const;
  std::size_t layer_out_dim() const;
  void validate() const;
};

BaselineParams init_baseline(BaselineKind kind, const HeteroGraph& g, std::size_t hidden, std::size_t layers,
                             std::uint64_t seed);

// Propagation matrices, built once per graph.
struct BaselineInputs {
  SparseMatrix ahat;                    // GCN, MixHop
  std::vector<SparseMatrix> relations;  // RGCN
};
BaselineInputs baseline_inputs(const HeteroGraph& g, const BaselineParams& p);

// `leaves` are bound in tensors order.
ad::Var baseline_logits(ad::Tape& tape, const BaselineInputs& in, const DenseMatrix& features,
                        const BaselineParams& p, std::span<const ad::Var> leaves, const ForwardOptions& opts);
Prediction baseline_predict(const BaselineInputs& in, const DenseMatrix& features, const BaselineParams& p);

struct BaselineTrainResult {
  BaselineParams best;
  BaselineParams last;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  Real best_valid_f1 = 0.0;
};

// Full-batch training with the same schedule, metrics and selection rule as train().
BaselineTrainResult train_baseline(const HeteroGraph& g, BaselineParams params, const TrainConfig& cfg);

void save_baseline(const BaselineParams& p, const std::filesystem::path& path);
BaselineParams load_baseline(const std::filesystem::path& path);

}  // namespace mpf
