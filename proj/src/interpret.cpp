#include "mpf/interpret.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "mpf/errors.hpp"
#include "mpf/layers.hpp"

namespace mpf {

std::vector<std::string> selection_names(const ModelParams& p) {
  std::vector<std::string> names = p.candidate_names;
  if (p.nonlocal_enabled()) names.emplace_back(kNonLocalName);
  return names;
}

std::vector<const SelectionWeights*> chain_layers(const ModelParams& p, std::size_t block) {
  std::vector<const SelectionWeights*> out;
  if (p.kind == ModelKind::gtn) {
    for (const auto& s : p.selection) out.push_back(&s);
    return out;
  }
  if (block >= p.hyper.L) throw ShapeError("block " + std::to_string(block) + " outside the model");
  for (std::size_t k = p.hyper.K; k-- > 0;) out.push_back(&p.fast_selection(block, k));
  return out;
}

namespace {

std::vector<std::vector<Real>> chain_alphas(const ModelParams& p, std::size_t channel, std::size_t block) {
  if (channel >= p.hyper.C) throw ShapeError("channel " + std::to_string(channel) + " outside the model");
  std::vector<std::vector<Real>> out;
  for (const auto* s : chain_layers(p, block)) out.push_back(s->alpha(channel));
  return out;
}

bool is_identity(const ModelParams& p, std::size_t col) {
  return col < p.candidate_names.size() && p.candidate_names[col] == kIdentityName;
}

bool passes(const EndpointFilter& f, const std::vector<std::size_t>& path, std::size_t n_structural) {
  if (path.empty()) return true;
  const auto src = [&](std::size_t c) { return c < n_structural ? f.endpoints[c].src_type : f.target_type; };
  const auto dst = [&](std::size_t c) { return c < n_structural ? f.endpoints[c].dst_type : f.target_type; };
  return src(path.front()) == f.target_type && dst(path.back()) == f.target_type;
}

}  // namespace

std::vector<RawSequence> enumerate_sequences(const ModelParams& p, std::size_t channel, std::size_t block) {
  const auto alphas = chain_alphas(p, channel, block);
  const std::size_t t = selection_names(p).size();
  std::size_t total = 1;
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    if (total > kMaxSequences / t) {
      throw DomainError("meta-path enumeration needs " + std::to_string(t) + "^" + std::to_string(alphas.size()) +
                        " sequences, limit " + std::to_string(kMaxSequences));
    }
    total *= t;
  }
  std::vector<RawSequence> out;
  out.reserve(total);
  std::vector<std::size_t> idx(alphas.size(), 0);
  for (std::size_t s = 0; s < total; ++s) {
    RawSequence r;
    r.types = idx;
    r.score = 1.0;
    for (std::size_t k = 0; k < idx.size(); ++k) r.score *= alphas[k][idx[k]];
    out.push_back(std::move(r));
    // Odometer with the last layer fastest.
    for (std::size_t k = idx.size(); k-- > 0;) {
      if (++idx[k] < t) break;
      idx[k] = 0;
    }
  }
  return out;
}

EndpointFilter between_targets(const HeteroGraph& g, const ModelParams& p) {
  if (g.edge_endpoints.empty()) throw PreconditionError("graph declares no edge endpoints");
  if (!g.target_node_type) throw PreconditionError("graph declares no target node type");
  EndpointFilter f;
  f.target_type = *g.target_node_type;
  for (const auto& name : p.candidate_names) {
    if (name == kIdentityName) {
      f.endpoints.push_back({f.target_type, f.target_type});
      continue;
    }
    const auto it = std::find(g.edge_type_names.begin(), g.edge_type_names.end(), name);
    if (it == g.edge_type_names.end()) throw ShapeError("edge type '" + name + "' not in the graph");
    f.endpoints.push_back(g.edge_endpoints[it - g.edge_type_names.begin()]);
  }
  return f;
}

MetaPathReport rank_metapaths(const ModelParams& p, std::size_t channel, std::size_t top_k,
                              const EndpointFilter* filter, std::size_t block) {
  const auto names = selection_names(p);
  if (filter && filter->endpoints.size() != p.candidate_names.size()) {
    throw ShapeError("endpoint filter does not cover the candidates");
  }
  MetaPathReport rep;
  rep.candidates = names;
  const auto alphas = chain_alphas(p, channel, block);
  rep.per_layer_alpha = DenseMatrix(alphas.size(), names.size());
  for (std::size_t k = 0; k < alphas.size(); ++k) std::copy(alphas[k].begin(), alphas[k].end(), rep.per_layer_alpha.row(k).begin());

  std::map<std::vector<std::size_t>, Real> collapsed;
  for (const auto& r : enumerate_sequences(p, channel, block)) {
    rep.raw_total += r.score;
    std::vector<std::size_t> path;
    for (std::size_t c : r.types) {
      if (!is_identity(p, c)) path.push_back(c);
    }
    collapsed[path] += r.score;
  }
  if (p.candidate_names.end() != std::find(p.candidate_names.begin(), p.candidate_names.end(), kIdentityName)) {
    rep.hop_ratios.assign(alphas.size() + 1, 0.0);
    for (const auto& [path, score] : collapsed) rep.hop_ratios[path.size()] += score;
  }

  std::vector<std::pair<std::vector<std::size_t>, Real>> ranked;
  for (const auto& kv : collapsed) {
    if (!filter || passes(*filter, kv.first, p.candidate_names.size())) ranked.push_back(kv);
  }
  // Map order already sorts sequences, so a stable sort breaks score ties by sequence.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > top_k) ranked.resize(top_k);
  for (const auto& [path, score] : ranked) {
    MetaPathEntry e;
    for (std::size_t c : path) e.type_sequence.push_back(names[c]);
    e.score = score;
    e.length = path.size();
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

std::vector<Real> hop_ratios(const ModelParams& p, std::size_t channel, std::size_t block) {
  if (std::find(p.candidate_names.begin(), p.candidate_names.end(), kIdentityName) == p.candidate_names.end()) {
    throw PreconditionError("hop ratios need an identity candidate");
  }
  return rank_metapaths(p, channel, 0, nullptr, block).hop_ratios;
}

AttentionTable attention_table(const ModelParams& p) {
  AttentionTable t;
  t.columns = selection_names(p);
  const std::size_t c = p.hyper.C;
  t.alpha = DenseMatrix(p.selection.size() * c, t.columns.size());
  for (std::size_t s = 0; s < p.selection.size(); ++s) {
    const std::string label = p.kind == ModelKind::gtn
                                  ? "k" + std::to_string(s)
                                  : "l" + std::to_string(s / p.hyper.K) + ".k" + std::to_string(s % p.hyper.K);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const auto a = p.selection[s].alpha(ch);
      std::copy(a.begin(), a.end(), t.alpha.row(s * c + ch).begin());
      t.layers.push_back(label);
      t.channels.push_back(ch);
    }
  }
  return t;
}

void write_attention_csv(const AttentionTable& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "layer,channel";
  for (const auto& c : t.columns) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < t.alpha.rows(); ++r) {
    out << t.layers[r] << ',' << t.channels[r];
    for (Real v : t.alpha.row(r)) out << ',' << v;
    out << '\n';
  }
}

AttentionTable read_attention_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  const auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty attention table");
  auto head = split(line);
  if (head.size() < 3 || head[0] != "layer" || head[1] != "channel") {
    throw FormatError(path.string() + ":1: expected header layer,channel,<candidates>");
  }
  AttentionTable t;
  t.columns.assign(head.begin() + 2, head.end());
  std::vector<Real> vals;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != head.size()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(head.size()) +
                        " fields");
    }
    try {
      t.layers.push_back(cells[0]);
      t.channels.push_back(std::stoul(cells[1]));
      for (std::size_t i = 2; i < cells.size(); ++i) vals.push_back(std::stod(cells[i]));
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  t.alpha = DenseMatrix(t.layers.size(), t.columns.size());
  std::copy(vals.begin(), vals.end(), t.alpha.values().begin());
  return t;
}

}  // namespace mpf
