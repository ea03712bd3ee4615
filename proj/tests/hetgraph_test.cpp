#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "mpf/errors.hpp"
#include "mpf/hetgraph.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace mpf;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mpf_hetgraph_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// Minimal valid dataset: 4 nodes, two edge types, 2 features, 2 classes.
fs::path tiny_dataset(const std::string& name) {
  const fs::path d = fresh_dir(name);
  write_file(d / "meta.json", R"({"n_nodes": 4, "edge_types": ["ab", "ba"], "n_classes": 2})");
  write_file(d / "edges_ab.tsv", "0 1\n0 2 2.5\n3 1\n");
  write_file(d / "edges_ba.tsv", "1 0\n2 0\n");
  write_file(d / "features.tsv", "1 0\n0 1\n0.5 0.5\n1 1\n");
  write_file(d / "labels.tsv", "0 0\n1 1\n3 1\n");
  write_file(d / "splits.tsv", "0 train\n1 valid\n3 test\n");
  return d;
}

// Random typed graph on n nodes with the requested per-type edge counts.
HeteroGraph random_graph(std::size_t n, std::vector<std::size_t> edges_per_type, std::size_t f, std::size_t classes,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> node(0, static_cast<Index>(n - 1));
  HeteroGraph g;
  g.n_nodes = n;
  g.node_type_of.assign(n, 0);
  for (std::size_t t = 0; t < edges_per_type.size(); ++t) {
    g.edge_type_names.push_back("t" + std::to_string(t));
    std::set<std::pair<Index, Index>> seen;
    std::vector<Triplet> trip;
    while (seen.size() < edges_per_type[t]) {
      const Index a = node(rng), b = node(rng);
      if (seen.insert({a, b}).second) trip.push_back({a, b, 1.0});
    }
    g.adjacency.push_back(SparseMatrix::from_triplets(n, n, std::move(trip)));
  }
  g.features = mpf::testing::random_dense(n, f, rng);
  g.n_classes = classes;
  g.labels.assign(n, kUnlabeled);
  for (std::size_t v = 0; v < n; ++v) g.labels[v] = static_cast<int>(v % classes);
  return g;
}

}  // namespace

TEST(LoadGraph, ReadsTinyDataset) {
  std::vector<std::string> warnings;
  const auto g = load_graph(tiny_dataset("tiny"), &warnings);
  EXPECT_TRUE(warnings.empty());
  EXPECT_EQ(g.n_nodes, 4u);
  ASSERT_EQ(g.n_edge_types(), 2u);
  EXPECT_EQ(g.adjacency[0].nnz(), 3u);
  EXPECT_DOUBLE_EQ(g.adjacency[0].at(0, 2), 2.5);
  EXPECT_EQ(g.adjacency[1].nnz(), 2u);
  EXPECT_EQ(g.n_features(), 2u);
  EXPECT_EQ(g.labels[2], kUnlabeled);
  EXPECT_EQ(g.splits.train, std::vector<Index>{0});
  EXPECT_EQ(g.splits.test, std::vector<Index>{3});
}

TEST(LoadGraph, EmptyEdgeFileWarnsButSucceeds) {
  const auto d = tiny_dataset("empty_edges");
  write_file(d / "edges_ba.tsv", "");
  std::vector<std::string> warnings;
  const auto g = load_graph(d, &warnings);
  EXPECT_EQ(g.adjacency[1].nnz(), 0u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("ba"), std::string::npos);
}

TEST(LoadGraph, MissingFileIsRejected) {
  const auto d = tiny_dataset("missing");
  fs::remove(d / "edges_ab.tsv");
  EXPECT_THROW(load_graph(d), FormatError);
  const auto d2 = tiny_dataset("missing_features");
  fs::remove(d2 / "features.tsv");
  EXPECT_THROW(load_graph(d2), FormatError);
}

TEST(LoadGraph, OutOfRangeNodeReportsLine) {
  const auto d = tiny_dataset("range");
  write_file(d / "edges_ab.tsv", "0 1\n0 9\n");
  try {
    load_graph(d);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("edges_ab.tsv:2"), std::string::npos) << e.what();
  }
}

TEST(LoadGraph, DuplicateSplitMembershipIsRejected) {
  const auto d = tiny_dataset("dup_split");
  write_file(d / "splits.tsv", "0 train\n1 valid\n0 test\n");
  EXPECT_THROW(load_graph(d), FormatError);
}

TEST(LoadGraph, FeatureRowMismatchIsRejected) {
  const auto d = tiny_dataset("feat_rows");
  write_file(d / "features.tsv", "1 0\n0 1\n0.5 0.5\n");
  EXPECT_THROW(load_graph(d), FormatError);
  write_file(d / "features.tsv", "1 0\n0 1\n0.5\n1 1\n");
  EXPECT_THROW(load_graph(d), FormatError);
}

TEST(LoadGraph, MalformedRowsAreRejected) {
  const auto d = tiny_dataset("malformed");
  write_file(d / "edges_ab.tsv", "0 x\n");
  EXPECT_THROW(load_graph(d), FormatError);
  write_file(d / "edges_ab.tsv", "0 1 1 1\n");
  EXPECT_THROW(load_graph(d), FormatError);
}

TEST(LoadGraph, RoundTripPreservesAllFields) {
  auto g = random_graph(40, {60, 35, 0}, 5, 3, 11);
  g.node_type_names = {"a", "b"};
  for (std::size_t v = 0; v < g.n_nodes; ++v) g.node_type_of[v] = static_cast<int>(v % 2);
  g.target_node_type = 0;
  g.edge_endpoints = {{0, 1}, {1, 0}, {0, 0}};
  g.splits = {{0, 3, 6}, {9, 12}, {15, 18, 21}};
  const auto d = fresh_dir("roundtrip");
  save_graph(g, d);
  const auto h = load_graph(d);
  save_graph(h, fresh_dir("roundtrip2"));
  const auto h2 = load_graph(fs::temp_directory_path() / "mpf_hetgraph_roundtrip2");
  for (const auto* x : {&h, &h2}) {
    EXPECT_EQ(x->n_nodes, g.n_nodes);
    EXPECT_EQ(x->edge_type_names, g.edge_type_names);
    for (std::size_t t = 0; t < g.n_edge_types(); ++t) EXPECT_TRUE(x->adjacency[t] == g.adjacency[t]);
    EXPECT_EQ(max_abs_diff(x->features, g.features), 0.0);
    EXPECT_EQ(x->labels, g.labels);
    EXPECT_EQ(x->splits.train, g.splits.train);
    EXPECT_EQ(x->splits.valid, g.splits.valid);
    EXPECT_EQ(x->splits.test, g.splits.test);
    EXPECT_EQ(x->node_type_of, g.node_type_of);
    EXPECT_EQ(x->node_type_names, g.node_type_names);
    EXPECT_EQ(x->target_node_type, g.target_node_type);
    ASSERT_EQ(x->edge_endpoints.size(), 3u);
    EXPECT_EQ(x->edge_endpoints[1].src_type, 1);
  }
}

// Same shape as the DBLP benchmark: 4057 authors, 14328 papers, 20 venues.
TEST(LoadGraph, DblpShapedDirectory) {
  const std::size_t authors = 4057, papers = 14328, venues = 20, n = authors + papers + venues;
  std::mt19937_64 rng(3);
  const auto d = fresh_dir("dblp");
  write_file(d / "meta.json",
             R"({"n_nodes": 18405, "edge_types": ["PA", "AP", "PC", "CP"], "n_classes": 4,
                 "node_types": ["author", "paper", "venue"], "target_node_type": 0,
                 "edge_endpoints": {"PA": [1, 0], "AP": [0, 1], "PC": [1, 2], "CP": [2, 1]}})");
  {
    std::uniform_int_distribution<std::size_t> pa(0, papers - 1), au(0, authors - 1), ve(0, venues - 1);
    std::set<std::pair<std::size_t, std::size_t>> pa_edges;
    for (std::size_t p = 0; p < papers && pa_edges.size() < 19420; ++p) pa_edges.insert({authors + p, au(rng)});
    while (pa_edges.size() < 19420) pa_edges.insert({authors + pa(rng), au(rng)});
    std::ofstream f_pa(d / "edges_PA.tsv"), f_ap(d / "edges_AP.tsv"), f_pc(d / "edges_PC.tsv"), f_cp(d / "edges_CP.tsv");
    for (auto [p, a] : pa_edges) {
      f_pa << p << '\t' << a << '\n';
      f_ap << a << '\t' << p << '\n';
    }
    for (std::size_t p = 0; p < papers; ++p) {
      const std::size_t v = authors + papers + ve(rng);
      f_pc << authors + p << '\t' << v << '\n';
      f_cp << v << '\t' << authors + p << '\n';
    }
  }
  {
    std::ofstream f(d / "node_types.tsv");
    for (std::size_t v = 0; v < n; ++v) f << v << '\t' << (v < authors ? 0 : v < authors + papers ? 1 : 2) << '\n';
  }
  {
    std::bernoulli_distribution bit(0.02);
    std::ofstream f(d / "features.tsv");
    std::string line;
    for (std::size_t v = 0; v < n; ++v) {
      line.clear();
      for (std::size_t c = 0; c < 334; ++c) {
        if (c) line += ' ';
        line += bit(rng) ? '1' : '0';
      }
      f << line << '\n';
    }
  }
  {
    std::ofstream fl(d / "labels.tsv"), fs_(d / "splits.tsv");
    for (std::size_t a = 0; a < authors; ++a) {
      fl << a << '\t' << a % 4 << '\n';
      fs_ << a << '\t' << (a < 800 ? "train" : a < 1200 ? "valid" : "test") << '\n';
    }
  }
  const auto g = load_graph(d);
  EXPECT_EQ(g.n_nodes, 18405u);
  EXPECT_EQ(g.total_nnz(), 67496u);
  EXPECT_EQ(g.n_features(), 334u);
  EXPECT_EQ(g.n_classes, 4u);
  EXPECT_EQ(g.splits.train.size(), 800u);
  EXPECT_EQ(g.splits.valid.size(), 400u);
  EXPECT_EQ(g.splits.test.size(), 2857u);
  const auto cands = build_candidates(g, true, 1e-6);
  EXPECT_EQ(cands.size(), 5u);
  for (const auto& m : cands.mats) EXPECT_TRUE(m.is_row_stochastic(1e-9));
}

TEST(LoadGraph, CoraShapedDirectory) {
  const std::size_t n = 2708;
  std::mt19937_64 rng(5);
  const auto d = fresh_dir("cora");
  write_file(d / "meta.json", R"({"n_nodes": 2708, "edge_types": ["cites"], "n_classes": 7})");
  {
    std::uniform_int_distribution<std::size_t> node(0, n - 1);
    std::set<std::pair<std::size_t, std::size_t>> edges;
    while (edges.size() < 5278) {
      const auto a = node(rng), b = node(rng);
      if (a != b) edges.insert({a, b});
    }
    std::ofstream f(d / "edges_cites.tsv");
    for (auto [a, b] : edges) f << a << ' ' << b << '\n';
  }
  {
    std::bernoulli_distribution bit(0.01);
    std::ofstream f(d / "features.tsv");
    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t c = 0; c < 1433; ++c) f << (c ? " " : "") << (bit(rng) ? 1 : 0);
      f << '\n';
    }
  }
  {
    std::ofstream fl(d / "labels.tsv"), fs_(d / "splits.tsv");
    for (std::size_t v = 0; v < n; ++v) fl << v << ' ' << v % 7 << '\n';
    for (std::size_t v = 0; v < 1640; ++v) fs_ << v << ' ' << (v < 140 ? "train" : v < 640 ? "valid" : "test") << '\n';
  }
  const auto g = load_graph(d);
  EXPECT_EQ(g.n_nodes, 2708u);
  EXPECT_EQ(g.total_nnz(), 5278u);
  EXPECT_EQ(g.n_features(), 1433u);
  EXPECT_EQ(g.n_classes, 7u);
  EXPECT_EQ(build_candidates(g, true, 1e-6).size(), 2u);
  EXPECT_EQ(build_candidates(g, false, 1e-6).size(), 1u);
}

TEST(BuildCandidates, IdentityAppendedLastAndNamed) {
  const auto g = random_graph(12, {20, 15}, 3, 2, 1);
  const auto c = build_candidates(g, true, 1e-6);
  ASSERT_EQ(c.size(), 3u);
  ASSERT_TRUE(c.identity_index.has_value());
  EXPECT_EQ(*c.identity_index, 2u);
  EXPECT_EQ(c.names, (std::vector<std::string>{"t0", "t1", "I"}));
  EXPECT_TRUE(c.mats[2] == SparseMatrix::identity(12));
  const auto c2 = build_candidates(g, false, 1e-6);
  EXPECT_EQ(c2.size(), 2u);
  EXPECT_FALSE(c2.identity_index.has_value());
  for (const auto& m : c.mats) EXPECT_TRUE(m.is_row_stochastic(1e-9));
}

TEST(MergeForSampling, DisjointSupportsAddUp) {
  HeteroGraph g;
  g.n_nodes = 3;
  g.node_type_of.assign(3, 0);
  g.edge_type_names = {"x", "y"};
  g.adjacency = {SparseMatrix::from_triplets(3, 3, {{0, 1, 1.0}, {1, 2, 1.0}}),
                 SparseMatrix::from_triplets(3, 3, {{2, 0, 1.0}})};
  g.features = DenseMatrix(3, 1);
  const auto m = merge_for_sampling(g);
  EXPECT_EQ(m.n_entries(), 3u);
  EXPECT_EQ(m.union_matrix().nnz(), 3u);
}

TEST(MergeForSampling, OverlappingEdgeKeepsBothTags) {
  HeteroGraph g;
  g.n_nodes = 2;
  g.node_type_of.assign(2, 0);
  g.edge_type_names = {"x", "y"};
  g.adjacency = {SparseMatrix::from_triplets(2, 2, {{0, 1, 1.0}}), SparseMatrix::from_triplets(2, 2, {{0, 1, 3.0}})};
  g.features = DenseMatrix(2, 1);
  const auto m = merge_for_sampling(g);
  ASSERT_EQ(m.n_entries(), 2u);
  EXPECT_EQ(m.types[0], 0);
  EXPECT_EQ(m.types[1], 1);
  EXPECT_EQ(m.union_matrix().nnz(), 1u);
  EXPECT_DOUBLE_EQ(m.union_matrix().at(0, 1), 4.0);
}

TEST(MergeForSampling, SplitInvertsMergeOnRandomGraphs) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = random_graph(25, {30, 30, 10, 45}, 2, 2, seed);
    const auto back = split_by_type(merge_for_sampling(g));
    ASSERT_EQ(back.size(), g.adjacency.size());
    for (std::size_t t = 0; t < back.size(); ++t) EXPECT_TRUE(back[t] == g.adjacency[t]);
  }
}
