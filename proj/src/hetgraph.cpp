#include "mpf/hetgraph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string_view>

#include <nlohmann/json.hpp>

#include "mpf/errors.hpp"

namespace mpf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

class LineReader {
 public:
  explicit LineReader(const fs::path& path) : path_(path), in_(path) {
    if (!in_) throw FormatError("cannot open " + path.string());
  }

  // Next non-blank line split into fields; false at end of file.
  bool next(std::vector<std::string_view>& fields) {
    while (std::getline(in_, line_)) {
      ++line_no_;
      fields = split_ws(line_);
      if (!fields.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_.filename().string() + ":" + std::to_string(line_no_) + ": " + what);
  }

  long long parse_int(std::string_view s) const {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail("expected an integer, got '" + std::string(s) + "'");
    return v;
  }

  Real parse_real(std::string_view s) const {
    Real v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail("expected a real, got '" + std::string(s) + "'");
    return v;
  }

  Index parse_node(std::string_view s, std::size_t n_nodes) const {
    const long long v = parse_int(s);
    if (v < 0 || static_cast<std::size_t>(v) >= n_nodes) {
      fail("node id " + std::to_string(v) + " out of range [0, " + std::to_string(n_nodes) + ")");
    }
    return static_cast<Index>(v);
  }

 private:
  fs::path path_;
  std::ifstream in_;
  std::string line_;
  std::size_t line_no_ = 0;
};

std::string format_real(Real v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::size_t HeteroGraph::total_nnz() const noexcept {
  std::size_t total = 0;
  for (const auto& a : adjacency) total += a.nnz();
  return total;
}

void HeteroGraph::validate() const {
  if (adjacency.size() != edge_type_names.size()) throw FormatError("edge type count does not match adjacency count");
  for (std::size_t t = 0; t < adjacency.size(); ++t) {
    if (adjacency[t].rows() != n_nodes || adjacency[t].cols() != n_nodes) {
      throw FormatError("adjacency for edge type '" + edge_type_names[t] + "' is not n_nodes square");
    }
  }
  if (features.rows() != n_nodes) {
    throw FormatError("features have " + std::to_string(features.rows()) + " rows, expected " + std::to_string(n_nodes));
  }
  if (node_type_of.size() != n_nodes) throw FormatError("node type map has wrong length");
  if (!labels.empty() && labels.size() != n_nodes) throw FormatError("label vector has wrong length");
  for (int y : labels) {
    if (y != kUnlabeled && (y < 0 || static_cast<std::size_t>(y) >= n_classes)) {
      throw FormatError("label " + std::to_string(y) + " outside [0, n_classes)");
    }
  }
  if (!edge_endpoints.empty() && edge_endpoints.size() != adjacency.size()) {
    throw FormatError("edge endpoint schema does not cover every edge type");
  }
  std::vector<char> seen(n_nodes, 0);
  for (const auto* split : {&splits.train, &splits.valid, &splits.test}) {
    for (Index v : *split) {
      if (v < 0 || static_cast<std::size_t>(v) >= n_nodes) throw FormatError("split node out of range");
      if (seen[v]) throw FormatError("node " + std::to_string(v) + " appears in more than one split entry");
      seen[v] = 1;
      if (labels.empty() || labels[v] == kUnlabeled) {
        throw FormatError("split node " + std::to_string(v) + " has no label");
      }
    }
  }
}

HeteroGraph load_graph(const fs::path& dir, std::vector<std::string>* warnings) {
  const auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };

  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw FormatError("missing meta.json in " + dir.string());
  json meta;
  try {
    meta_in >> meta;
  } catch (const json::exception& e) {
    throw FormatError(std::string("meta.json: ") + e.what());
  }

  HeteroGraph g;
  try {
    g.n_nodes = meta.at("n_nodes").get<std::size_t>();
    g.edge_type_names = meta.at("edge_types").get<std::vector<std::string>>();
    g.n_classes = meta.value("n_classes", std::size_t{0});
    if (meta.contains("node_types")) g.node_type_names = meta["node_types"].get<std::vector<std::string>>();
    if (meta.contains("target_node_type")) g.target_node_type = meta["target_node_type"].get<int>();
    if (meta.contains("edge_endpoints")) {
      const auto& ep = meta["edge_endpoints"];
      for (const auto& name : g.edge_type_names) {
        const auto pair = ep.at(name).get<std::vector<int>>();
        if (pair.size() != 2) throw FormatError("edge_endpoints entry for '" + name + "' must have two types");
        g.edge_endpoints.push_back({pair[0], pair[1]});
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("meta.json: ") + e.what());
  }
  if (g.n_nodes > static_cast<std::size_t>(std::numeric_limits<Index>::max())) {
    throw FormatError("n_nodes exceeds the supported index range");
  }

  for (const auto& name : g.edge_type_names) {
    const fs::path path = dir / ("edges_" + name + ".tsv");
    if (!fs::exists(path)) throw FormatError("missing edge file " + path.filename().string());
    LineReader reader(path);
    std::vector<Triplet> entries;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
      if (f.size() != 2 && f.size() != 3) reader.fail("expected 'src dst [weight]'");
      const Index src = reader.parse_node(f[0], g.n_nodes);
      const Index dst = reader.parse_node(f[1], g.n_nodes);
      const Real w = f.size() == 3 ? reader.parse_real(f[2]) : 1.0;
      if (!std::isfinite(w)) reader.fail("non-finite edge weight");
      entries.push_back({src, dst, w});
    }
    if (entries.empty()) warn("edge type '" + name + "' has no edges");
    g.adjacency.push_back(SparseMatrix::from_triplets(g.n_nodes, g.n_nodes, std::move(entries)));
  }

  g.node_type_of.assign(g.n_nodes, 0);
  if (fs::exists(dir / "node_types.tsv")) {
    LineReader reader(dir / "node_types.tsv");
    std::vector<std::string_view> f;
    while (reader.next(f)) {
      if (f.size() != 2) reader.fail("expected 'node_id type_id'");
      const Index v = reader.parse_node(f[0], g.n_nodes);
      const long long t = reader.parse_int(f[1]);
      if (t < 0) reader.fail("negative node type");
      g.node_type_of[v] = static_cast<int>(t);
    }
  }

  {
    const fs::path path = dir / "features.tsv";
    if (!fs::exists(path)) throw FormatError("missing features.tsv");
    LineReader reader(path);
    std::vector<Real> flat;
    std::size_t n_cols = 0;
    std::size_t n_rows = 0;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
      if (n_rows == 0) n_cols = f.size();
      if (f.size() != n_cols) reader.fail("feature row has " + std::to_string(f.size()) + " values, expected " + std::to_string(n_cols));
      for (auto s : f) flat.push_back(reader.parse_real(s));
      ++n_rows;
    }
    if (n_rows != g.n_nodes) {
      throw FormatError("features.tsv has " + std::to_string(n_rows) + " rows, expected " + std::to_string(g.n_nodes));
    }
    g.features = DenseMatrix(n_rows, n_cols);
    std::copy(flat.begin(), flat.end(), g.features.values().begin());
  }

  if (fs::exists(dir / "labels.tsv")) {
    g.labels.assign(g.n_nodes, kUnlabeled);
    LineReader reader(dir / "labels.tsv");
    std::vector<std::string_view> f;
    while (reader.next(f)) {
      if (f.size() != 2) reader.fail("expected 'node_id class_id'");
      const Index v = reader.parse_node(f[0], g.n_nodes);
      const long long y = reader.parse_int(f[1]);
      if (y < 0 || static_cast<std::size_t>(y) >= g.n_classes) reader.fail("class id out of range");
      g.labels[v] = static_cast<int>(y);
    }
  }

  if (fs::exists(dir / "splits.tsv")) {
    LineReader reader(dir / "splits.tsv");
    std::vector<char> seen(g.n_nodes, 0);
    std::vector<std::string_view> f;
    while (reader.next(f)) {
      if (f.size() != 2) reader.fail("expected 'node_id {train|valid|test}'");
      const Index v = reader.parse_node(f[0], g.n_nodes);
      if (seen[v]) reader.fail("node " + std::to_string(v) + " listed in more than one split");
      seen[v] = 1;
      if (f[1] == "train") {
        g.splits.train.push_back(v);
      } else if (f[1] == "valid") {
        g.splits.valid.push_back(v);
      } else if (f[1] == "test") {
        g.splits.test.push_back(v);
      } else {
        reader.fail("unknown split '" + std::string(f[1]) + "'");
      }
    }
  }

  g.validate();
  return g;
}

void save_graph(const HeteroGraph& g, const fs::path& dir) {
  g.validate();
  fs::create_directories(dir);
  json meta;
  meta["n_nodes"] = g.n_nodes;
  meta["edge_types"] = g.edge_type_names;
  meta["n_classes"] = g.n_classes;
  if (!g.node_type_names.empty()) meta["node_types"] = g.node_type_names;
  if (g.target_node_type) meta["target_node_type"] = *g.target_node_type;
  if (!g.edge_endpoints.empty()) {
    json ep = json::object();
    for (std::size_t t = 0; t < g.edge_type_names.size(); ++t) {
      ep[g.edge_type_names[t]] = {g.edge_endpoints[t].src_type, g.edge_endpoints[t].dst_type};
    }
    meta["edge_endpoints"] = ep;
  }
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';

  for (std::size_t t = 0; t < g.adjacency.size(); ++t) {
    std::ofstream out(dir / ("edges_" + g.edge_type_names[t] + ".tsv"));
    const auto& a = g.adjacency[t];
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const auto cols = a.row_cols(r);
      const auto vals = a.row_values(r);
      for (std::size_t p = 0; p < cols.size(); ++p) {
        out << r << '\t' << cols[p];
        if (vals[p] != 1.0) out << '\t' << format_real(vals[p]);
        out << '\n';
      }
    }
  }

  {
    std::ofstream out(dir / "node_types.tsv");
    for (std::size_t v = 0; v < g.n_nodes; ++v) out << v << '\t' << g.node_type_of[v] << '\n';
  }
  {
    std::ofstream out(dir / "features.tsv");
    std::string line;
    for (std::size_t v = 0; v < g.n_nodes; ++v) {
      line.clear();
      const auto row = g.features.row(v);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) line += '\t';
        line += format_real(row[c]);
      }
      out << line << '\n';
    }
  }
  if (!g.labels.empty()) {
    std::ofstream out(dir / "labels.tsv");
    for (std::size_t v = 0; v < g.n_nodes; ++v) {
      if (g.labels[v] != kUnlabeled) out << v << '\t' << g.labels[v] << '\n';
    }
  }
  {
    std::ofstream out(dir / "splits.tsv");
    for (Index v : g.splits.train) out << v << "\ttrain\n";
    for (Index v : g.splits.valid) out << v << "\tvalid\n";
    for (Index v : g.splits.test) out << v << "\ttest\n";
  }
}

CandidateSet build_candidates(const HeteroGraph& g, bool include_identity, Real epsilon) {
  CandidateSet cs;
  for (std::size_t t = 0; t < g.adjacency.size(); ++t) {
    cs.mats.push_back(row_normalize(g.adjacency[t], epsilon));
    cs.names.push_back(g.edge_type_names[t]);
  }
  if (include_identity) {
    cs.identity_index = cs.mats.size();
    cs.mats.push_back(SparseMatrix::identity(g.n_nodes));
    cs.names.emplace_back(kIdentityName);
  }
  return cs;
}

SparseMatrix MergedAdjacency::union_matrix() const {
  std::vector<Triplet> entries;
  entries.reserve(cols.size());
  for (std::size_t r = 0; r < n_nodes; ++r) {
    for (Offset p = row_offsets[r]; p < row_offsets[r + 1]; ++p) {
      entries.push_back({static_cast<Index>(r), cols[p], values[p]});
    }
  }
  return SparseMatrix::from_triplets(n_nodes, n_nodes, std::move(entries));
}

MergedAdjacency merge_for_sampling(const HeteroGraph& g) {
  MergedAdjacency m;
  m.n_nodes = g.n_nodes;
  m.n_types = g.adjacency.size();
  m.row_offsets.assign(g.n_nodes + 1, 0);
  const std::size_t total = g.total_nnz();
  m.cols.reserve(total);
  m.types.reserve(total);
  m.values.reserve(total);
  struct Entry {
    Index col;
    int type;
    Real value;
  };
  std::vector<Entry> row;
  for (std::size_t r = 0; r < g.n_nodes; ++r) {
    row.clear();
    for (std::size_t t = 0; t < g.adjacency.size(); ++t) {
      const auto cols = g.adjacency[t].row_cols(r);
      const auto vals = g.adjacency[t].row_values(r);
      for (std::size_t p = 0; p < cols.size(); ++p) row.push_back({cols[p], static_cast<int>(t), vals[p]});
    }
    std::sort(row.begin(), row.end(), [](const Entry& a, const Entry& b) {
      return a.col != b.col ? a.col < b.col : a.type < b.type;
    });
    for (const auto& e : row) {
      m.cols.push_back(e.col);
      m.types.push_back(e.type);
      m.values.push_back(e.value);
    }
    m.row_offsets[r + 1] = static_cast<Offset>(m.cols.size());
  }
  return m;
}

std::vector<SparseMatrix> split_by_type(const MergedAdjacency& merged) {
  std::vector<std::vector<Triplet>> per_type(merged.n_types);
  for (std::size_t r = 0; r < merged.n_nodes; ++r) {
    for (Offset p = merged.row_offsets[r]; p < merged.row_offsets[r + 1]; ++p) {
      per_type.at(merged.types[p]).push_back({static_cast<Index>(r), merged.cols[p], merged.values[p]});
    }
  }
  std::vector<SparseMatrix> out;
  out.reserve(merged.n_types);
  for (auto& entries : per_type) {
    out.push_back(SparseMatrix::from_triplets(merged.n_nodes, merged.n_nodes, std::move(entries)));
  }
  return out;
}

}  // namespace mpf
