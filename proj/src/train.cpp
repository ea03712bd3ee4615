#include "mpf/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "mpf/errors.hpp"

namespace mpf {

Real loss(const Prediction& pred, std::span<const int> labels, std::span<const Index> mask) {
  ad::Tape tape(false);
  return ad::cross_entropy(tape, tape.constant(pred.logits), labels, mask).dense()(0, 0);
}

Real micro_f1(const DenseMatrix& logits, std::span<const int> labels, std::span<const Index> nodes) {
  if (nodes.empty()) return 0.0;
  std::size_t tp = 0;
  for (Index v : nodes) {
    const auto row = logits.row(static_cast<std::size_t>(v));
    const auto pred = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (pred == labels[v]) ++tp;
  }
  // Every node contributes one prediction, so FP = FN = misses and micro-F1
  // reduces to tp / (tp + (fp + fn) / 2).
  const std::size_t miss = nodes.size() - tp;
  return static_cast<Real>(tp) / (static_cast<Real>(tp) + static_cast<Real>(miss));
}

// ---------------------------------------------------------------------------
// Adam

void adam_update(std::span<DenseMatrix* const> params, std::span<const DenseMatrix* const> grads, AdamState& state,
                 const AdamConfig& cfg, std::span<const std::string> names) {
  if (params.size() != grads.size()) throw ShapeError("adam: parameter and gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i])) throw ShapeError("adam: gradient shape mismatch");
    const auto g = grads[i]->values();
    for (std::size_t q = 0; q < g.size(); ++q) {
      if (!std::isfinite(g[q])) {
        const std::string name = i < names.size() ? names[i] : "#" + std::to_string(i);
        const std::size_t cols = grads[i]->cols();
        throw DomainError("adam: non-finite gradient " + std::to_string(g[q]) + " in " + name + " at (" +
                          std::to_string(q / cols) + ", " + std::to_string(q % cols) + "), step " +
                          std::to_string(state.step + 1));
      }
    }
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: state does not match parameters");
  ++state.step;
  const Real bc1 = 1.0 - std::pow(cfg.beta1, static_cast<Real>(state.step));
  const Real bc2 = 1.0 - std::pow(cfg.beta2, static_cast<Real>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    const auto g = grads[i]->values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t q = 0; q < p.size(); ++q) {
      m[q] = cfg.beta1 * m[q] + (1.0 - cfg.beta1) * g[q];
      v[q] = cfg.beta2 * v[q] + (1.0 - cfg.beta2) * g[q] * g[q];
      p[q] -= cfg.lr * (m[q] / bc1) / (std::sqrt(v[q] / bc2) + cfg.eps);
    }
  }
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const AdamConfig& cfg) {
  const auto pt = params.tensors();
  const auto gt = grads.tensors();
  std::vector<DenseMatrix*> ps;
  std::vector<const DenseMatrix*> gs;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < pt.size(); ++i) {
    ps.push_back(pt[i].second);
    gs.push_back(gt.at(i).second);
    names.push_back(pt[i].first);
  }
  adam_update(ps, gs, state, cfg, names);
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

// Distinct neighbour ids of row r in the merged adjacency.
void neighbours(const MergedAdjacency& m, Index r, std::vector<Index>& out) {
  out.clear();
  for (Offset p = m.row_offsets[r]; p < m.row_offsets[r + 1]; ++p) {
    if (out.empty() || out.back() != m.cols[p]) out.push_back(m.cols[p]);
  }
}

// Keeps k uniformly chosen entries of v (partial Fisher-Yates), order of the draw.
void sample_in_place(std::vector<Index>& v, std::size_t k, std::mt19937_64& rng) {
  if (v.size() <= k) return;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, v.size() - 1);
    std::swap(v[i], v[pick(rng)]);
  }
  v.resize(k);
}

}  // namespace

Subgraph sample_subgraph(const HeteroGraph& g, const MergedAdjacency& merged, std::span<const Index> targets,
                         const BatchSpec& spec) {
  if (targets.empty()) throw PreconditionError("sample_subgraph: no target nodes");
  for (std::size_t f : spec.fanout) {
    if (f == 0) throw DomainError("sample_subgraph: fanout entries must be >= 1");
  }
  if (merged.n_nodes != g.n_nodes) throw ShapeError("sample_subgraph: merged adjacency does not match the graph");

  std::vector<Index> local(g.n_nodes, -1);
  Subgraph sub;
  auto admit = [&](Index v) {
    if (local[v] >= 0) return false;
    local[v] = static_cast<Index>(sub.node_map.size());
    sub.node_map.push_back(v);
    return true;
  };
  for (Index v : targets) {
    if (v < 0 || static_cast<std::size_t>(v) >= g.n_nodes) {
      throw ShapeError("sample_subgraph: target " + std::to_string(v) + " outside the graph");
    }
    if (!admit(v)) throw PreconditionError("sample_subgraph: duplicate target " + std::to_string(v));
    sub.target_local.push_back(local[v]);
  }

  std::mt19937_64 rng(spec.seed);
  std::vector<Index> frontier(targets.begin(), targets.end());
  std::vector<Index> nb, next;
  for (std::size_t hop = 0; hop < spec.fanout.size() && !frontier.empty(); ++hop) {
    next.clear();
    if (spec.sampler == Sampler::neighborhood) {
      for (Index u : frontier) {
        neighbours(merged, u, nb);
        sample_in_place(nb, spec.fanout[hop], rng);
        for (Index v : nb) {
          if (admit(v)) next.push_back(v);
        }
      }
    } else {
      // Union of the frontier's unseen neighbours, then one budget for the hop.
      std::vector<Index> pool;
      std::vector<char> pooled(g.n_nodes, 0);
      for (Index u : frontier) {
        neighbours(merged, u, nb);
        for (Index v : nb) {
          if (local[v] < 0 && !pooled[v]) {
            pooled[v] = 1;
            pool.push_back(v);
          }
        }
      }
      sample_in_place(pool, spec.fanout[hop], rng);
      for (Index v : pool) {
        if (admit(v)) next.push_back(v);
      }
    }
    frontier.swap(next);
  }

  // Induced typed subgraph, rebuilt as a merged matrix and split back by type.
  const std::size_t n = sub.node_map.size();
  MergedAdjacency sm;
  sm.n_nodes = n;
  sm.n_types = merged.n_types;
  sm.row_offsets.assign(n + 1, 0);
  struct Entry {
    Index col;
    int type;
    Real value;
  };
  std::vector<Entry> row;
  for (std::size_t i = 0; i < n; ++i) {
    const Index gi = sub.node_map[i];
    row.clear();
    for (Offset p = merged.row_offsets[gi]; p < merged.row_offsets[gi + 1]; ++p) {
      const Index c = local[merged.cols[p]];
      if (c >= 0) row.push_back({c, merged.types[p], merged.values[p]});
    }
    std::sort(row.begin(), row.end(),
              [](const Entry& a, const Entry& b) { return a.col != b.col ? a.col < b.col : a.type < b.type; });
    for (const auto& e : row) {
      sm.cols.push_back(e.col);
      sm.types.push_back(e.type);
      sm.values.push_back(e.value);
    }
    sm.row_offsets[i + 1] = static_cast<Offset>(sm.cols.size());
  }

  HeteroGraph& h = sub.graph;
  h.n_nodes = n;
  h.adjacency = split_by_type(sm);
  h.edge_type_names = g.edge_type_names;
  h.node_type_names = g.node_type_names;
  h.edge_endpoints = g.edge_endpoints;
  h.target_node_type = g.target_node_type;
  h.n_classes = g.n_classes;
  h.node_type_of.resize(n);
  h.features = DenseMatrix(n, g.n_features());
  if (!g.labels.empty()) h.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Index gi = sub.node_map[i];
    h.node_type_of[i] = g.node_type_of[gi];
    std::copy(g.features.row(gi).begin(), g.features.row(gi).end(), h.features.row(i).begin());
    if (!g.labels.empty()) h.labels[i] = g.labels[gi];
  }
  return sub;
}

Subgraph sample_subgraph(const HeteroGraph& g, std::span<const Index> targets, const BatchSpec& spec) {
  return sample_subgraph(g, merge_for_sampling(g), targets, spec);
}

CandidateSet restrict_candidates(const CandidateSet& full, std::span<const Index> nodes) {
  const std::size_t big = full.n_nodes();
  std::vector<Index> local(big, -1);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] < 0 || static_cast<std::size_t>(nodes[i]) >= big) throw ShapeError("restrict_candidates: bad node");
    local[nodes[i]] = static_cast<Index>(i);
  }
  CandidateSet out;
  out.names = full.names;
  out.identity_index = full.identity_index;
  std::vector<Triplet> trip;
  for (const auto& m : full.mats) {
    trip.clear();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto cols = m.row_cols(nodes[i]);
      const auto vals = m.row_values(nodes[i]);
      for (std::size_t q = 0; q < cols.size(); ++q) {
        if (local[cols[q]] >= 0) trip.push_back({static_cast<Index>(i), local[cols[q]], vals[q]});
      }
    }
    out.mats.push_back(SparseMatrix::from_triplets(nodes.size(), nodes.size(), trip));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

namespace {

// One forward/backward/update on the given candidates; returns the loss.
Real step(ModelParams& params, AdamState& state, const TrainConfig& cfg, const CandidateSet& cands,
          const DenseMatrix& features, std::span<const int> labels, std::span<const Index> mask, std::uint64_t seed,
          bool require_stochastic) {
  ad::Tape tape;
  const ParamVars vars = bind_params(tape, params);
  ForwardOptions opts;
  opts.training = true;
  opts.dropout = cfg.dropout;
  opts.seed = seed;
  opts.require_stochastic = require_stochastic;
  const ad::Var logits = model_logits(tape, cands, features, params, vars, opts);
  const ad::Var l = ad::cross_entropy(tape, logits, labels, mask);
  tape.backward(l);
  adam_step(params, collect_gradients(params, vars), state, cfg.adam);
  return l.dense()(0, 0);
}

}  // namespace

TrainResult train(const HeteroGraph& g, ModelParams params, const TrainConfig& cfg) {
  params.validate();
  if (g.labels.empty()) throw PreconditionError("train: graph has no labels");
  if (g.splits.train.empty()) throw PreconditionError("train: empty training split");
  g.validate();

  TrainResult result;
  result.best = params;
  if (cfg.epochs == 0) {
    result.last = std::move(params);
    return result;
  }

  const CandidateSet full = build_candidates(g, params.hyper.include_identity, params.hyper.epsilon);
  if (full.names != params.candidate_names) throw ShapeError("train: graph edge types do not match the model");
  std::optional<MergedAdjacency> merged;
  if (cfg.batch) {
    if (cfg.batch->batch_size == 0) throw DomainError("train: batch size must be >= 1");
    merged = merge_for_sampling(g);
  }

  AdamState state;
  std::vector<Index> order(g.splits.train.begin(), g.splits.train.end());
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed = mix_seed(cfg.seed, epoch);
    Real train_loss = 0.0;
    if (!cfg.batch) {
      train_loss = step(params, state, cfg, full, g.features, g.labels, g.splits.train, epoch_seed, true);
    } else {
      std::mt19937_64 rng(epoch_seed);
      std::shuffle(order.begin(), order.end(), rng);
      std::size_t batches = 0;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch->batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch->batch_size);
        BatchSpec spec = *cfg.batch;
        spec.seed = mix_seed(epoch_seed, start);
        const std::span<const Index> targets(order.data() + start, end - start);
        const Subgraph sub = sample_subgraph(g, *merged, targets, spec);
        const CandidateSet cands =
            cfg.exact_subgraph ? restrict_candidates(full, sub.node_map)
                               : build_candidates(sub.graph, params.hyper.include_identity, params.hyper.epsilon);
        train_loss += step(params, state, cfg, cands, sub.graph.features, sub.graph.labels, sub.target_local,
                           mix_seed(spec.seed, 1), !cfg.exact_subgraph);
        ++batches;
      }
      train_loss /= static_cast<Real>(batches);
    }

    const Prediction pred = predict(full, g.features, params);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_loss;
    rec.valid_f1 = g.splits.valid.empty() ? micro_f1(pred.logits, g.labels, g.splits.train)
                                          : micro_f1(pred.logits, g.labels, g.splits.valid);
    rec.test_f1 = micro_f1(pred.logits, g.labels, g.splits.test);
    result.history.push_back(rec);
    if (!have_best || rec.valid_f1 > result.best_valid_f1) {
      have_best = true;
      result.best = params;
      result.best_epoch = epoch;
      result.best_valid_f1 = rec.valid_f1;
    }
  }
  result.last = std::move(params);
  return result;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "epoch,train_loss,valid_f1,test_f1\n";
  for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.valid_f1 << ',' << r.test_f1 << '\n';
}

}  // namespace mpf
