#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mpf/sparse.hpp"

namespace mpf {

inline constexpr int kUnlabeled = -1;

struct Splits {
  std::vector<Index> train;
  std::vector<Index> valid;
  std::vector<Index> test;
};

// Declared source/destination node types of an edge type.
struct EdgeEndpoints {
  int src_type = 0;
  int dst_type = 0;
};

struct HeteroGraph {
  std::size_t n_nodes = 0;
  std::vector<int> node_type_of;
  std::vector<std::string> node_type_names;
  std::vector<std::string> edge_type_names;
  // One n_nodes x n_nodes matrix per edge type; A[i, j] is an edge i -> j.
  std::vector<SparseMatrix> adjacency;
  DenseMatrix features;
  std::vector<int> labels;  // kUnlabeled for nodes without a class
  std::size_t n_classes = 0;
  Splits splits;
  std::vector<EdgeEndpoints> edge_endpoints;  // empty when undeclared
  std::optional<int> target_node_type;

  std::size_t n_edge_types() const noexcept { return adjacency.size(); }
  std::size_t n_features() const noexcept { return features.cols(); }
  std::size_t total_nnz() const noexcept;

  // Throws FormatError describing the first violated invariant.
  void validate() const;
};

// Row-normalized candidate adjacency matrices, optionally followed by I.
struct CandidateSet {
  std::vector<SparseMatrix> mats;
  std::vector<std::string> names;
  std::optional<std::size_t> identity_index;

  std::size_t size() const noexcept { return mats.size(); }
  std::size_t n_nodes() const noexcept { return mats.empty() ? 0 : mats.front().rows(); }
};

inline constexpr const char* kIdentityName = "I";

// Reads a dataset directory. Non-fatal issues (e.g. an empty edge file) are
// appended to `warnings` when provided.
HeteroGraph load_graph(const std::filesystem::path& dir, std::vector<std::string>* warnings = nullptr);
void save_graph(const HeteroGraph& g, const std::filesystem::path& dir);

CandidateSet build_candidates(const HeteroGraph& g, bool include_identity, Real epsilon);

// Union of all typed adjacency matrices. Each (row, col, type) edge keeps its
// own entry; within a row entries are ordered by (col, type).
struct MergedAdjacency {
  std::size_t n_nodes = 0;
  std::size_t n_types = 0;
  std::vector<Offset> row_offsets;
  std::vector<Index> cols;
  std::vector<int> types;
  std::vector<Real> values;

  std::size_t n_entries() const noexcept { return cols.size(); }
  // Structural union with weights summed across types.
  SparseMatrix union_matrix() const;
};

MergedAdjacency merge_for_sampling(const HeteroGraph& g);
std::vector<SparseMatrix> split_by_type(const MergedAdjacency& merged);

}  // namespace mpf
