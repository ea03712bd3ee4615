#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpf/hetgraph.hpp"
#include "mpf/networks.hpp"

namespace mpf {

// Mean cross-entropy of softmax(logits) over `mask`, log-sum-exp stabilized.
Real loss(const Prediction& pred, std::span<const int> labels, std::span<const Index> mask);

// Micro-averaged F1 over `nodes`; for single-label classes this is accuracy.
Real micro_f1(const DenseMatrix& logits, std::span<const int> labels, std::span<const Index> nodes);

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  Real lr = 5e-4;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

struct AdamState {
  std::vector<DenseMatrix> m;
  std::vector<DenseMatrix> v;
  std::size_t step = 0;
};

// One bias-corrected Adam update of every tensor. Throws DomainError naming
// the tensor and entry when a gradient is not finite; params are untouched then.
void adam_update(std::span<DenseMatrix* const> params, std::span<const DenseMatrix* const> grads, AdamState& state,
                 const AdamConfig& cfg, std::span<const std::string> names = {});
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const AdamConfig& cfg);

// ---------------------------------------------------------------------------
// Mini-batch sampling

enum class Sampler { neighborhood, layerwise };

struct BatchSpec {
  std::size_t batch_size = 256;
  // One entry per hop. Neighborhood: neighbours kept per frontier node.
  // Layerwise: nodes kept per hop for the whole frontier.
  std::vector<std::size_t> fanout{10, 10};
  Sampler sampler = Sampler::neighborhood;
  std::uint64_t seed = 0;
};

struct Subgraph {
  HeteroGraph graph;                // typed adjacency in local ids, features and labels sliced
  std::vector<Index> node_map;      // local id -> original id; targets occupy the first slots
  std::vector<Index> target_local;  // local ids of the targets, in request order
};

// Expands targets hop by hop over the merged typed adjacency, then keeps the
// induced typed subgraph on the sampled nodes. Raw (unnormalized) weights.
Subgraph sample_subgraph(const HeteroGraph& g, const MergedAdjacency& merged, std::span<const Index> targets,
                         const BatchSpec& spec);
Subgraph sample_subgraph(const HeteroGraph& g, std::span<const Index> targets, const BatchSpec& spec);

// Rows and columns `nodes` of every candidate, values untouched. Used by the
// exact-subgraph mode, which skips re-normalization of the sampled graph.
CandidateSet restrict_candidates(const CandidateSet& full, std::span<const Index> nodes);

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  std::size_t epochs = 100;
  AdamConfig adam;
  Real dropout = 0.5;
  std::optional<BatchSpec> batch;
  // Sample subgraphs but feed them the full graph's normalized candidates.
  bool exact_subgraph = false;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  Real train_loss = 0.0;
  Real valid_f1 = 0.0;
  Real test_f1 = 0.0;
};

struct TrainResult {
  ModelParams best;  // highest validation micro-F1, earliest on ties
  ModelParams last;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  Real best_valid_f1 = 0.0;
};

// Derives an independent seed from a pair, for per-epoch and per-batch streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

TrainResult train(const HeteroGraph& g, ModelParams params, const TrainConfig& cfg);

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace mpf
