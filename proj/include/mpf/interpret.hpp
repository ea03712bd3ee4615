#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mpf/hetgraph.hpp"
#include "mpf/networks.hpp"

namespace mpf {

// Largest number of raw type sequences rank_metapaths will enumerate.
inline constexpr std::size_t kMaxSequences = 1'000'000;

// Names of the selection columns: structural candidates, then "NL" when the
// model carries a non-local candidate.
std::vector<std::string> selection_names(const ModelParams& p);

// The K selection layers whose product forms one meta-path adjacency, in
// matrix-product order (leftmost factor first). GTN ignores `block`; a
// FastGTN block applies its steps right to left, so they come reversed.
std::vector<const SelectionWeights*> chain_layers(const ModelParams& p, std::size_t block = 0);

struct RawSequence {
  std::vector<std::size_t> types;  // selection column per layer, product order
  Real score = 0.0;
};

// Every sequence over the chain with its alpha-product. Throws DomainError
// past kMaxSequences.
std::vector<RawSequence> enumerate_sequences(const ModelParams& p, std::size_t channel, std::size_t block = 0);

// Keeps meta-paths running from the target node type back to itself, judged
// by the declared endpoints of their first and last edge types. Identity
// selections are elided first; "NL" matches any node type.
struct EndpointFilter {
  std::vector<EdgeEndpoints> endpoints;  // per selection column; ignored for I and NL
  int target_type = 0;
};

// Built from the graph's declared schema. Throws PreconditionError when the
// graph lacks edge endpoints or a target node type.
EndpointFilter between_targets(const HeteroGraph& g, const ModelParams& p);

struct MetaPathEntry {
  std::vector<std::string> type_sequence;  // identity elided; empty for the self path
  Real score = 0.0;
  std::size_t length = 0;
};

struct MetaPathReport {
  std::vector<MetaPathEntry> entries;  // collapsed, best first, ties by sequence
  std::vector<std::string> candidates;
  DenseMatrix per_layer_alpha;  // chain layer x candidate, for the reported channel
  std::vector<Real> hop_ratios;  // empty without an identity candidate
  Real raw_total = 0.0;          // sum of every raw score, before any filter
};

MetaPathReport rank_metapaths(const ModelParams& p, std::size_t channel, std::size_t top_k,
                              const EndpointFilter* filter = nullptr, std::size_t block = 0);

// ratios[h] = mass of sequences with exactly h non-identity selections, h = 0..K.
// Throws PreconditionError without an identity candidate.
std::vector<Real> hop_ratios(const ModelParams& p, std::size_t channel, std::size_t block = 0);

struct AttentionTable {
  std::vector<std::string> columns;  // candidate names, "I" and "NL" included
  std::vector<std::string> layers;   // "k{k}" (GTN) or "l{l}.k{k}" (FastGTN), one per row group
  std::vector<std::size_t> channels;
  DenseMatrix alpha;  // (selection layer, channel) rows, selection-major
};

AttentionTable attention_table(const ModelParams& p);

// Header "layer,channel,<columns>", values at 17 significant digits.
void write_attention_csv(const AttentionTable& t, const std::filesystem::path& path);
AttentionTable read_attention_csv(const std::filesystem::path& path);

}  // namespace mpf
