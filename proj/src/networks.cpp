#include "mpf/networks.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mpf/errors.hpp"

namespace mpf {

std::string to_string(ModelKind k) { return k == ModelKind::gtn ? "gtn" : "fastgtn"; }

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::concat: return "concat";
    case Aggregation::mean: return "mean";
    case Aggregation::sum: return "sum";
  }
  return "concat";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "gtn") return ModelKind::gtn;
  if (s == "fastgtn") return ModelKind::fastgtn;
  throw DomainError("unknown model kind '" + s + "'");
}

Aggregation parse_aggregation(const std::string& s) {
  if (s == "concat") return Aggregation::concat;
  if (s == "mean") return Aggregation::mean;
  if (s == "sum") return Aggregation::sum;
  throw DomainError("unknown aggregation '" + s + "'");
}

// ---------------------------------------------------------------------------
// ModelParams

std::size_t ModelParams::block_out_dim() const {
  return hyper.agg == Aggregation::concat ? hyper.C * hyper.hidden : hyper.hidden;
}

std::size_t ModelParams::block_in_dim(std::size_t l) const { return l == 0 ? in_dim : block_out_dim(); }

const SelectionWeights& ModelParams::fast_selection(std::size_t block, std::size_t step) const {
  return selection.at(block * hyper.K + step);
}

const DenseMatrix& ModelParams::fast_weight(std::size_t block, std::size_t channel) const {
  return gnn_weights.at(block * hyper.C + channel);
}

namespace {

template <class P, class Self>
std::vector<std::pair<std::string, P>> collect_tensors(Self& p) {
  std::vector<std::pair<std::string, P>> out;
  const bool fast = p.kind == ModelKind::fastgtn;
  for (std::size_t i = 0; i < p.selection.size(); ++i) {
    const std::size_t l = fast ? i / p.hyper.K : 0;
    const std::size_t k = fast ? i % p.hyper.K : i;
    out.emplace_back("selection.l" + std::to_string(l) + ".k" + std::to_string(k), &p.selection[i].logits);
  }
  for (std::size_t i = 0; i < p.gnn_weights.size(); ++i) {
    std::string name = fast ? "gnn.W" + std::to_string(i / p.hyper.C) + ".c" + std::to_string(i % p.hyper.C)
                            : "gnn.W" + std::to_string(i);
    out.emplace_back(std::move(name), &p.gnn_weights[i]);
  }
  out.emplace_back("classifier.W", &p.classifier_w);
  out.emplace_back("classifier.b", &p.classifier_b);
  for (std::size_t l = 0; l < p.nonlocal.size(); ++l) {
    out.emplace_back("nonlocal.l" + std::to_string(l) + ".proj", &p.nonlocal[l].proj_weights);
    out.emplace_back("nonlocal.l" + std::to_string(l) + ".bias", &p.nonlocal[l].proj_bias);
  }
  return out;
}

void expect_shape(const DenseMatrix& m, std::size_t r, std::size_t c, const std::string& what) {
  if (m.rows() != r || m.cols() != c) {
    throw ShapeError(what + ": expected " + std::to_string(r) + "x" + std::to_string(c) + ", got " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

}  // namespace

std::vector<std::pair<std::string, DenseMatrix*>> ModelParams::tensors() {
  return collect_tensors<DenseMatrix*>(*this);
}

std::vector<std::pair<std::string, const DenseMatrix*>> ModelParams::tensors() const {
  return collect_tensors<const DenseMatrix*>(*this);
}

void ModelParams::validate() const {
  const auto& h = hyper;
  if (h.K == 0 || h.C == 0 || h.L == 0 || h.hidden == 0) throw ShapeError("hyper: K, C, L and hidden must be >= 1");
  if (!(h.gamma >= 0.0 && h.gamma <= 1.0)) throw DomainError("hyper: gamma must lie in [0, 1]");
  if (!(h.epsilon >= 0.0)) throw DomainError("hyper: epsilon must be non-negative");
  if (kind == ModelKind::gtn && h.nonlocal_n > 0) throw ShapeError("non-local candidates require FastGTN");
  if (in_dim == 0 || n_classes == 0) throw ShapeError("model: input and class dimensions must be positive");
  if (candidate_names.empty()) throw ShapeError("model: no candidate adjacency matrices");

  const bool fast = kind == ModelKind::fastgtn;
  const std::size_t t = n_candidates() + (nonlocal_enabled() ? 1 : 0);
  const std::size_t n_sel = fast ? h.L * h.K : h.K;
  if (selection.size() != n_sel) throw ShapeError("model: wrong number of selection layers");
  for (const auto& s : selection) expect_shape(s.logits, h.C, t, "selection logits");

  const std::size_t n_w = fast ? h.L * h.C : h.L;
  if (gnn_weights.size() != n_w) throw ShapeError("model: wrong number of GNN weight matrices");
  for (std::size_t i = 0; i < n_w; ++i) {
    const std::size_t l = fast ? i / h.C : i;
    expect_shape(gnn_weights[i], block_in_dim(l), h.hidden, "gnn weight");
  }
  expect_shape(classifier_w, block_out_dim(), n_classes, "classifier weight");
  expect_shape(classifier_b, 1, n_classes, "classifier bias");

  if (nonlocal_enabled()) {
    if (nonlocal.size() != h.L) throw ShapeError("model: one non-local projector per block");
    for (const auto& nl : nonlocal) {
      if (!nl.enabled || nl.top_n == 0) throw DomainError("non-local: top_n must be >= 1");
      expect_shape(nl.proj_weights, h.hidden, nl.proj_dim, "non-local projection");
      expect_shape(nl.proj_bias, 1, nl.proj_dim, "non-local bias");
    }
  }
  for (const auto& [name, m] : tensors()) {
    if (!m->all_finite()) throw DomainError("model: tensor " + name + " has non-finite entries");
  }
}

std::vector<std::string> candidate_names_for(const HeteroGraph& g, bool include_identity) {
  std::vector<std::string> names = g.edge_type_names;
  if (include_identity) names.emplace_back(kIdentityName);
  return names;
}

ModelParams init_params(ModelKind kind, const Hyper& hyper, std::size_t in_dim, std::size_t n_classes,
                        std::vector<std::string> candidate_names, std::uint64_t seed) {
  ModelParams p;
  p.kind = kind;
  p.hyper = hyper;
  p.in_dim = in_dim;
  p.n_classes = n_classes;
  p.candidate_names = std::move(candidate_names);

  std::mt19937_64 rng(seed);
  auto uniform = [&rng](std::size_t rows, std::size_t cols) {
    const Real s = 1.0 / std::sqrt(static_cast<Real>(rows));
    std::uniform_real_distribution<Real> d(-s, s);
    DenseMatrix m(rows, cols);
    for (Real& v : m.values()) v = d(rng);
    return m;
  };

  const bool fast = kind == ModelKind::fastgtn;
  const bool nl = fast && hyper.nonlocal_n > 0;
  const std::size_t t = p.candidate_names.size() + (nl ? 1 : 0);
  const std::size_t n_sel = fast ? hyper.L * hyper.K : hyper.K;
  for (std::size_t i = 0; i < n_sel; ++i) {
    p.selection.push_back({DenseMatrix(hyper.C, t), fast ? i % hyper.K : i});
  }
  for (std::size_t l = 0; l < hyper.L; ++l) {
    const std::size_t reps = fast ? hyper.C : 1;
    for (std::size_t c = 0; c < reps; ++c) p.gnn_weights.push_back(uniform(p.block_in_dim(l), hyper.hidden));
  }
  p.classifier_w = uniform(p.block_out_dim(), n_classes);
  p.classifier_b = DenseMatrix(1, n_classes);
  if (nl) {
    for (std::size_t l = 0; l < hyper.L; ++l) {
      NonLocalConfig cfg;
      cfg.enabled = true;
      cfg.top_n = hyper.nonlocal_n;
      cfg.proj_dim = hyper.hidden;
      cfg.proj_weights = uniform(hyper.hidden, hyper.hidden);
      cfg.proj_bias = DenseMatrix(1, hyper.hidden);
      p.nonlocal.push_back(std::move(cfg));
    }
  }
  p.validate();
  return p;
}

ModelParams init_params(ModelKind kind, const Hyper& hyper, const HeteroGraph& g, std::uint64_t seed) {
  return init_params(kind, hyper, g.n_features(), g.n_classes, candidate_names_for(g, hyper.include_identity), seed);
}

Prediction Prediction::from_logits(DenseMatrix logits) {
  Prediction p;
  p.confidence = DenseMatrix(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto s = softmax(logits.row(i));
    std::copy(s.begin(), s.end(), p.confidence.row(i).begin());
  }
  p.logits = std::move(logits);
  return p;
}

// ---------------------------------------------------------------------------
// Tape-based forward

ParamVars bind_params(ad::Tape& tape, const ModelParams& p) {
  ParamVars v;
  for (const auto& s : p.selection) v.selection.push_back(tape.parameter(s.logits));
  for (const auto& w : p.gnn_weights) v.gnn_weights.push_back(tape.parameter(w));
  v.classifier_w = tape.parameter(p.classifier_w);
  v.classifier_b = tape.parameter(p.classifier_b);
  for (const auto& nl : p.nonlocal) {
    v.nonlocal_proj.push_back(tape.parameter(nl.proj_weights));
    v.nonlocal_bias.push_back(tape.parameter(nl.proj_bias));
  }
  return v;
}

ModelParams collect_gradients(const ModelParams& p, const ParamVars& vars) {
  ModelParams g = p;
  for (std::size_t i = 0; i < g.selection.size(); ++i) g.selection[i].logits = vars.selection[i].grad();
  for (std::size_t i = 0; i < g.gnn_weights.size(); ++i) g.gnn_weights[i] = vars.gnn_weights[i].grad();
  g.classifier_w = vars.classifier_w.grad();
  g.classifier_b = vars.classifier_b.grad();
  for (std::size_t l = 0; l < g.nonlocal.size(); ++l) {
    g.nonlocal[l].proj_weights = vars.nonlocal_proj[l].grad();
    g.nonlocal[l].proj_bias = vars.nonlocal_bias[l].grad();
  }
  return g;
}

namespace {

void check_inputs(const CandidateSet& cands, const DenseMatrix& x, const ModelParams& p, bool require_stochastic) {
  if (cands.size() != p.n_candidates()) {
    throw ShapeError("model expects " + std::to_string(p.n_candidates()) + " candidate matrices, got " +
                     std::to_string(cands.size()));
  }
  if (x.cols() != p.in_dim) throw ShapeError("feature dimension does not match the model");
  for (std::size_t t = 0; t < cands.size(); ++t) {
    const auto& m = cands.mats[t];
    if (!m.is_square() || m.rows() != x.rows()) throw ShapeError("candidate matrix does not match the node count");
    if (require_stochastic && !m.is_row_stochastic(1e-9)) {
      throw PreconditionError("candidate '" + cands.names[t] + "' is not row-stochastic");
    }
  }
}

class Dropout {
 public:
  Dropout(const ForwardOptions& o) : active_(o.training && o.dropout > 0.0), rate_(o.dropout), rng_(o.seed) {
    if (o.dropout < 0.0 || o.dropout >= 1.0) throw DomainError("dropout must lie in [0, 1)");
  }

  ad::Var apply(ad::Tape& t, const ad::Var& v) {
    if (!active_) return v;
    auto mask = std::make_shared<DenseMatrix>(v.dense().rows(), v.dense().cols());
    std::bernoulli_distribution keep(1.0 - rate_);
    const Real scale = 1.0 / (1.0 - rate_);
    for (Real& m : mask->values()) m = keep(rng_) ? scale : 0.0;
    return ad::mask_multiply(t, v, std::move(mask));
  }

 private:
  bool active_;
  Real rate_;
  std::mt19937_64 rng_;
};

ad::Var aggregate(ad::Tape& t, std::span<const ad::Var> parts, Aggregation agg) {
  if (parts.size() == 1) return parts[0];
  switch (agg) {
    case Aggregation::concat: return ad::concat_cols(t, parts);
    case Aggregation::mean: return ad::mean(t, parts);
    case Aggregation::sum: return ad::sum(t, parts);
  }
  return ad::concat_cols(t, parts);
}

ad::Var classify(ad::Tape& t, const ad::Var& z, const ParamVars& v) {
  return ad::add_row_bias(t, ad::matmul(t, z, v.classifier_w), v.classifier_b);
}

ad::Var gtn_logits(ad::Tape& t, std::span<const ad::Var> cands, const ad::Var& x, const ModelParams& p,
                   const ParamVars& v, Dropout& dropout, std::vector<SparseMatrix>* transformed) {
  const auto& h = p.hyper;
  std::vector<ad::Var> adj;
  for (std::size_t c = 0; c < h.C; ++c) {
    ad::Var a = ad::weighted_sum(t, cands, ad::softmax_row(t, v.selection[0], c));
    for (std::size_t k = 1; k < h.K; ++k) {
      a = ad::spmm(t, a, ad::weighted_sum(t, cands, ad::softmax_row(t, v.selection[k], c)));
      if (h.renormalize) a = ad::row_renormalize(t, a);
    }
    if (transformed) transformed->push_back(a.sparse());
    // Reassign so a non-recording tape frees each intermediate as soon as possible.
    a = ad::add_scaled_identity(t, a, h.gamma);
    a = ad::row_renormalize(t, a);
    adj.push_back(std::move(a));
  }
  ad::Var z = x;
  for (std::size_t l = 0; l < h.L; ++l) {
    const ad::Var zw = ad::matmul(t, z, v.gnn_weights[l]);
    std::vector<ad::Var> outs;
    for (std::size_t c = 0; c < h.C; ++c) outs.push_back(ad::spdm(t, adj[c], zw));
    z = dropout.apply(t, ad::relu(t, aggregate(t, outs, h.agg)));
  }
  return classify(t, z, v);
}

ad::Var fastgtn_logits(ad::Tape& t, std::span<const ad::Var> cands, const ad::Var& x, const ModelParams& p,
                       const ParamVars& v, Dropout& dropout) {
  const auto& h = p.hyper;
  ad::Var z = x;
  for (std::size_t l = 0; l < h.L; ++l) {
    std::vector<ad::Var> zw, cur;
    for (std::size_t c = 0; c < h.C; ++c) zw.push_back(ad::matmul(t, z, v.gnn_weights[l * h.C + c]));
    cur = zw;
    std::vector<ad::Var> step_cands(cands.begin(), cands.end());
    for (std::size_t k = 0; k < h.K; ++k) {
      if (p.nonlocal_enabled()) {
        const ad::Var hm = cur.size() == 1 ? cur[0] : ad::mean(t, cur);
        const ad::Var g =
            ad::tanh(t, ad::add_row_bias(t, ad::matmul(t, hm, v.nonlocal_proj[l]), v.nonlocal_bias[l]));
        step_cands.resize(cands.size());
        step_cands.push_back(ad::topn_affinity_softmax(t, g, p.nonlocal[l].top_n));
      }
      const ad::Var& logits = v.selection[l * h.K + k];
      for (std::size_t c = 0; c < h.C; ++c) {
        cur[c] = ad::spdm(t, ad::weighted_sum(t, step_cands, ad::softmax_row(t, logits, c)), cur[c]);
      }
    }
    std::vector<ad::Var> outs;
    for (std::size_t c = 0; c < h.C; ++c) outs.push_back(ad::lincomb(t, zw[c], h.gamma, cur[c], 1.0 - h.gamma));
    z = dropout.apply(t, ad::relu(t, aggregate(t, outs, h.agg)));
  }
  return classify(t, z, v);
}

}  // namespace

ad::Var model_logits(ad::Tape& tape, const CandidateSet& candidates, const DenseMatrix& features,
                     const ModelParams& p, const ParamVars& vars, const ForwardOptions& opts,
                     std::vector<SparseMatrix>* transformed) {
  p.validate();
  check_inputs(candidates, features, p, opts.require_stochastic);
  std::vector<ad::Var> cands;
  for (const auto& m : candidates.mats) cands.push_back(tape.constant(m));
  const ad::Var x = tape.constant(features);
  Dropout dropout(opts);
  if (p.kind == ModelKind::gtn) return gtn_logits(tape, cands, x, p, vars, dropout, transformed);
  return fastgtn_logits(tape, cands, x, p, vars, dropout);
}

Prediction predict(const CandidateSet& candidates, const DenseMatrix& features, const ModelParams& p) {
  ad::Tape tape(false);
  const ParamVars vars = bind_params(tape, p);
  return Prediction::from_logits(model_logits(tape, candidates, features, p, vars, {}).dense());
}

namespace {

CandidateSet candidates_for(const HeteroGraph& g, const ModelParams& p) {
  CandidateSet cands = build_candidates(g, p.hyper.include_identity, p.hyper.epsilon);
  if (cands.names != p.candidate_names) throw ShapeError("graph edge types do not match the model's candidates");
  return cands;
}

}  // namespace

std::pair<Prediction, std::vector<SparseMatrix>> gtn_forward(const HeteroGraph& g, const ModelParams& p) {
  if (p.kind != ModelKind::gtn) throw PreconditionError("gtn_forward: parameters are not GTN-shaped");
  const CandidateSet cands = candidates_for(g, p);
  ad::Tape tape(false);
  const ParamVars vars = bind_params(tape, p);
  std::vector<SparseMatrix> transformed;
  DenseMatrix logits = model_logits(tape, cands, g.features, p, vars, {}, &transformed).dense();
  return {Prediction::from_logits(std::move(logits)), std::move(transformed)};
}

Prediction fastgtn_forward(const HeteroGraph& g, const ModelParams& p) {
  if (p.kind != ModelKind::fastgtn) throw PreconditionError("fastgtn_forward: parameters are not FastGTN-shaped");
  return predict(candidates_for(g, p), g.features, p);
}

std::vector<SparseMatrix> gtn_transform(const CandidateSet& candidates, const ModelParams& p) {
  if (p.kind != ModelKind::gtn) throw PreconditionError("gtn_transform: parameters are not GTN-shaped");
  std::vector<SparseMatrix> out;
  for (std::size_t c = 0; c < p.hyper.C; ++c) {
    SparseMatrix a = soft_select(candidates, p.selection[0], c);
    for (std::size_t k = 1; k < p.hyper.K; ++k) {
      a = gt_layer_explicit(a, candidates, p.selection[k], c, p.hyper.renormalize);
    }
    out.push_back(std::move(a));
  }
  return out;
}

ModelParams transfer_gtn_to_fastgtn(const ModelParams& gtn) {
  if (gtn.kind != ModelKind::gtn) throw PreconditionError("transfer: source parameters are not GTN-shaped");
  gtn.validate();
  const auto& h = gtn.hyper;
  ModelParams f;
  f.kind = ModelKind::fastgtn;
  f.hyper = h;
  f.hyper.gamma = h.gamma / (1.0 + h.gamma);
  f.hyper.nonlocal_n = 0;
  f.in_dim = gtn.in_dim;
  f.n_classes = gtn.n_classes;
  f.candidate_names = gtn.candidate_names;
  for (std::size_t l = 0; l < h.L; ++l) {
    for (std::size_t k = 0; k < h.K; ++k) f.selection.push_back({gtn.selection[h.K - 1 - k].logits, k});
    for (std::size_t c = 0; c < h.C; ++c) f.gnn_weights.push_back(gtn.gnn_weights[l]);
  }
  f.classifier_w = gtn.classifier_w;
  f.classifier_b = gtn.classifier_b;
  f.validate();
  return f;
}

// ---------------------------------------------------------------------------
// Reference models

namespace {

DenseMatrix relu(DenseMatrix m) {
  for (Real& v : m.values()) v = std::max(v, 0.0);
  return m;
}

DenseMatrix apply_head(const DenseMatrix& z, const Classifier& head) {
  if (head.b.rows() != 1 || head.b.cols() != head.w.cols()) throw ShapeError("classifier bias must be 1 x classes");
  DenseMatrix out = matmul(z, head.w);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += head.b(0, j);
  return out;
}

}  // namespace

// D^{-1/2}(A + I)D^{-1/2}.
SparseMatrix symmetric_normalize(const SparseMatrix& a) {
  const SparseMatrix tilde = add_scaled_identity(a, 1.0);
  const auto deg = tilde.row_sums();
  Buffer<Real> vals(tilde.values().begin(), tilde.values().end());
  for (std::size_t i = 0; i < tilde.rows(); ++i) {
    const auto cols = tilde.row_cols(i);
    for (std::size_t q = 0; q < cols.size(); ++q) {
      const auto pos = static_cast<std::size_t>(tilde.row_offsets()[i]) + q;
      vals[pos] /= std::sqrt(deg[i]) * std::sqrt(deg[static_cast<std::size_t>(cols[q])]);
    }
  }
  return tilde.with_values(std::move(vals));
}

namespace {

DenseMatrix concat(std::span<const DenseMatrix> parts) {
  std::size_t cols = 0;
  for (const auto& p : parts) cols += p.cols();
  DenseMatrix out(parts.front().rows(), cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out(i, off + j) = p(i, j);
    off += p.cols();
  }
  return out;
}

}  // namespace

Prediction gcn_forward(const SparseMatrix& adjacency, const DenseMatrix& features, std::span<const DenseMatrix> weights,
                       const Classifier& head) {
  if (!adjacency.is_square() || adjacency.rows() != features.rows()) throw ShapeError("gcn: adjacency/feature mismatch");
  const SparseMatrix ahat = symmetric_normalize(adjacency);
  DenseMatrix z = features;
  for (const auto& w : weights) z = relu(spdm(ahat, matmul(z, w)));
  return Prediction::from_logits(apply_head(z, head));
}

Prediction mixhop_forward(const SparseMatrix& adjacency, const DenseMatrix& features,
                          std::span<const std::vector<DenseMatrix>> weights, std::span<const std::size_t> powers,
                          const Classifier& head) {
  if (!adjacency.is_square() || adjacency.rows() != features.rows()) {
    throw ShapeError("mixhop: adjacency/feature mismatch");
  }
  const SparseMatrix ahat = symmetric_normalize(adjacency);
  DenseMatrix z = features;
  for (const auto& layer : weights) {
    if (layer.size() != powers.size()) throw ShapeError("mixhop: one weight matrix per power");
    std::vector<DenseMatrix> parts;
    for (std::size_t j = 0; j < powers.size(); ++j) {
      DenseMatrix h = matmul(z, layer[j]);
      for (std::size_t s = 0; s < powers[j]; ++s) h = spdm(ahat, h);
      parts.push_back(relu(std::move(h)));
    }
    z = concat(parts);
  }
  return Prediction::from_logits(apply_head(z, head));
}

Prediction rgcn_forward(std::span<const SparseMatrix> adjacency, const DenseMatrix& features,
                        std::span<const RgcnLayer> layers, const Classifier& head) {
  std::vector<SparseMatrix> normed;
  for (const auto& a : adjacency) {
    if (!a.is_square() || a.rows() != features.rows()) throw ShapeError("rgcn: adjacency/feature mismatch");
    normed.push_back(row_normalize(a, 0.0));
  }
  DenseMatrix z = features;
  for (const auto& layer : layers) {
    if (layer.coefficients.rows() != normed.size() || layer.coefficients.cols() != layer.bases.size()) {
      throw ShapeError("rgcn: coefficients must be relations x bases");
    }
    DenseMatrix acc;
    for (std::size_t t = 0; t < normed.size(); ++t) {
      DenseMatrix w(layer.bases.front().rows(), layer.bases.front().cols());
      for (std::size_t b = 0; b < layer.bases.size(); ++b) {
        const auto src = layer.bases[b].values();
        auto dst = w.values();
        for (std::size_t q = 0; q < dst.size(); ++q) dst[q] += layer.coefficients(t, b) * src[q];
      }
      DenseMatrix term = spdm(normed[t], matmul(z, w));
      if (acc.empty()) {
        acc = std::move(term);
      } else {
        auto d = acc.values();
        const auto s = term.values();
        for (std::size_t q = 0; q < d.size(); ++q) d[q] += s[q];
      }
    }
    z = relu(std::move(acc));
  }
  return Prediction::from_logits(apply_head(z, head));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string encode_base64(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::uint32_t v = static_cast<std::uint32_t>(bytes[i]) << 16;
    const std::size_t n = std::min<std::size_t>(3, bytes.size() - i);
    if (n > 1) v |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
    if (n > 2) v |= bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += n > 1 ? kB64[(v >> 6) & 63] : '=';
    out += n > 2 ? kB64[v & 63] : '=';
  }
  return out;
}

std::vector<unsigned char> decode_base64(const std::string& s) {
  std::array<int, 256> map;
  map.fill(-1);
  for (int i = 0; i < 64; ++i) map[static_cast<unsigned char>(kB64[i])] = i;
  if (s.size() % 4 != 0) throw FormatError("checkpoint: base64 length is not a multiple of 4");
  std::vector<unsigned char> out;
  for (std::size_t i = 0; i < s.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char ch = s[i + j];
      int d = 0;
      if (ch == '=') {
        ++pad;
      } else {
        d = map[static_cast<unsigned char>(ch)];
        if (d < 0 || pad > 0) throw FormatError("checkpoint: invalid base64");
      }
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<unsigned char>(v >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>(v >> 8));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v));
  }
  return out;
}

std::string encode_tensor(const DenseMatrix& m) {
  std::vector<unsigned char> bytes;
  bytes.reserve(m.size() * 8);
  for (Real v : m.values()) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<unsigned char>(u >> (8 * b)));
  }
  return encode_base64(bytes);
}

void decode_tensor(const std::string& data, DenseMatrix& m, const std::string& name) {
  const auto bytes = decode_base64(data);
  if (bytes.size() != m.size() * 8) throw FormatError("checkpoint: tensor " + name + " has the wrong byte count");
  auto vals = m.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    std::memcpy(&vals[i], &u, 8);
  }
}

constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
  p.validate();
  nlohmann::json j;
  j["format"] = "mpf-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = to_string(p.kind);
  const auto& h = p.hyper;
  j["hyper"] = {{"K", h.K},
                {"C", h.C},
                {"L", h.L},
                {"hidden", h.hidden},
                {"gamma", h.gamma},
                {"agg", to_string(h.agg)},
                {"epsilon", h.epsilon},
                {"include_identity", h.include_identity},
                {"nonlocal_n", h.nonlocal_n},
                {"renormalize", h.renormalize}};
  j["in_dim"] = p.in_dim;
  j["n_classes"] = p.n_classes;
  j["candidates"] = p.candidate_names;
  auto& tensors = j["tensors"];
  tensors = nlohmann::json::object();
  for (const auto& [name, m] : p.tensors()) {
    tensors[name] = {{"shape", {m->rows(), m->cols()}}, {"dtype", "float64-le"}, {"data", encode_tensor(*m)}};
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.at("format") != "mpf-checkpoint") throw FormatError("not a checkpoint file");
    if (j.at("version").get<int>() != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
    const auto& jh = j.at("hyper");
    Hyper h;
    h.K = jh.at("K");
    h.C = jh.at("C");
    h.L = jh.at("L");
    h.hidden = jh.at("hidden");
    h.gamma = jh.at("gamma");
    h.agg = parse_aggregation(jh.at("agg"));
    h.epsilon = jh.at("epsilon");
    h.include_identity = jh.at("include_identity");
    h.nonlocal_n = jh.at("nonlocal_n");
    h.renormalize = jh.at("renormalize");
    ModelParams p = init_params(parse_model_kind(j.at("kind")), h, j.at("in_dim"), j.at("n_classes"),
                                j.at("candidates").get<std::vector<std::string>>(), 0);
    const auto& jt = j.at("tensors");
    const auto slots = p.tensors();
    if (jt.size() != slots.size()) throw FormatError("checkpoint: unexpected tensor count");
    for (const auto& [name, m] : slots) {
      const auto& e = jt.at(name);
      const auto shape = e.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2 || shape[0] != m->rows() || shape[1] != m->cols()) {
        throw FormatError("checkpoint: tensor " + name + " has a mismatched shape");
      }
      decode_tensor(e.at("data").get<std::string>(), *m, name);
    }
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace mpf
