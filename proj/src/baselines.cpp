#include "mpf/baselines.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <tuple>
#include <random>

#include <nlohmann/json.hpp>

#include "mpf/errors.hpp"

namespace mpf {

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::gcn: return "gcn";
    case BaselineKind::mixhop: return "mixhop";
    case BaselineKind::rgcn: return "rgcn";
  }
  return "?";
}

BaselineKind parse_baseline_kind(const std::string& s) {
  if (s == "gcn") return BaselineKind::gcn;
  if (s == "mixhop") return BaselineKind::mixhop;
  if (s == "rgcn") return BaselineKind::rgcn;
  throw DomainError("unknown baseline '" + s + "' (gcn, mixhop, rgcn)");
}

std::size_t BaselineParams::layer_in_dim(std::size_t l) const { return l == 0 ? in_dim : layer_out_dim(); }

std::size_t BaselineParams::layer_out_dim() const {
  return kind == BaselineKind::mixhop ? hidden * powers.size() : hidden;
}

namespace {

std::size_t weights_per_layer(const BaselineParams& p) {
  switch (p.kind) {
    case BaselineKind::gcn: return 1;
    case BaselineKind::mixhop: return p.powers.size();
    case BaselineKind::rgcn: return p.relations.size();
  }
  return 0;
}

std::string weight_name(const BaselineParams& p, std::size_t l, std::size_t j) {
  switch (p.kind) {
    case BaselineKind::gcn: return "gcn.W" + std::to_string(l);
    case BaselineKind::mixhop: return "mixhop.W" + std::to_string(l) + ".p" + std::to_string(j);
    case BaselineKind::rgcn: return "rgcn.W" + std::to_string(l) + ".r" + std::to_string(j);
  }
  return "?";
}

// Expected (name, rows, cols) of every tensor, in order.
std::vector<std::tuple<std::string, std::size_t, std::size_t>> layout(const BaselineParams& p) {
  std::vector<std::tuple<std::string, std::size_t, std::size_t>> out;
  for (std::size_t l = 0; l < p.layers; ++l) {
    for (std::size_t j = 0; j < weights_per_layer(p); ++j) out.emplace_back(weight_name(p, l, j), p.layer_in_dim(l), p.hidden);
  }
  out.emplace_back("classifier.W", p.layer_out_dim(), p.n_classes);
  out.emplace_back("classifier.b", 1, p.n_classes);
  return out;
}

}  // namespace

void BaselineParams::validate() const {
  if (hidden == 0 || layers == 0) throw ShapeError("baseline: hidden and layers must be >= 1");
  if (kind == BaselineKind::mixhop && powers.empty()) throw ShapeError("mixhop: no adjacency powers");
  if (kind == BaselineKind::rgcn && relations.empty()) throw ShapeError("rgcn: no relations");
  const auto expect = layout(*this);
  if (tensors.size() != expect.size()) throw ShapeError("baseline: wrong number of tensors");
  for (std::size_t i = 0; i < expect.size(); ++i) {
    const auto& [name, r, c] = expect[i];
    if (tensors[i].first != name) throw ShapeError("baseline: expected tensor " + name + ", got " + tensors[i].first);
    if (tensors[i].second.rows() != r || tensors[i].second.cols() != c) {
      throw ShapeError("baseline: tensor " + name + " must be " + std::to_string(r) + "x" + std::to_string(c));
    }
    if (!tensors[i].second.all_finite()) throw DomainError("baseline: tensor " + name + " is not finite");
  }
}

BaselineParams init_baseline(BaselineKind kind, const HeteroGraph& g, std::size_t hidden, std::size_t layers,
                             std::uint64_t seed) {
  BaselineParams p;
  p.kind = kind;
  p.in_dim = g.n_features();
  p.n_classes = g.n_classes;
  p.hidden = hidden;
  p.layers = layers;
  if (kind == BaselineKind::rgcn) {
    p.relations = g.edge_type_names;
    p.relations.emplace_back(kSelfRelation);
  }
  std::mt19937_64 rng(seed);
  for (const auto& [name, r, c] : layout(p)) {
    DenseMatrix m(r, c);
    if (name != "classifier.b") {
      const Real bound = 1.0 / std::sqrt(static_cast<Real>(r));
      std::uniform_real_distribution<Real> u(-bound, bound);
      for (Real& v : m.values()) v = u(rng);
    }
    p.tensors.emplace_back(name, std::move(m));
  }
  p.validate();
  return p;
}

BaselineInputs baseline_inputs(const HeteroGraph& g, const BaselineParams& p) {
  BaselineInputs in;
  if (p.kind == BaselineKind::rgcn) {
    if (p.relations.size() != g.n_edge_types() + 1) throw ShapeError("rgcn: relation count does not match the graph");
    for (const auto& a : g.adjacency) in.relations.push_back(row_normalize(a, 0.0));
    in.relations.push_back(SparseMatrix::identity(g.n_nodes));
  } else {
    in.ahat = symmetric_normalize(merge_for_sampling(g).union_matrix());
  }
  return in;
}

ad::Var baseline_logits(ad::Tape& t, const BaselineInputs& in, const DenseMatrix& features, const BaselineParams& p,
                        std::span<const ad::Var> leaves, const ForwardOptions& opts) {
  if (leaves.size() != p.tensors.size()) throw ShapeError("baseline: leaf count does not match tensors");
  if (features.cols() != p.in_dim) throw ShapeError("baseline: feature dimension does not match the model");
  if (opts.dropout < 0.0 || opts.dropout >= 1.0) throw DomainError("dropout must lie in [0, 1)");
  std::mt19937_64 rng(opts.seed);
  const bool drop = opts.training && opts.dropout > 0.0;
  const auto dropout = [&](const ad::Var& v) {
    if (!drop) return v;
    auto mask = std::make_shared<DenseMatrix>(v.dense().rows(), v.dense().cols());
    std::bernoulli_distribution keep(1.0 - opts.dropout);
    for (Real& m : mask->values()) m = keep(rng) ? 1.0 / (1.0 - opts.dropout) : 0.0;
    return ad::mask_multiply(t, v, std::move(mask));
  };

  const ad::Var ahat = p.kind == BaselineKind::rgcn ? ad::Var{} : t.constant(in.ahat);
  std::vector<ad::Var> rel;
  for (const auto& r : in.relations) rel.push_back(t.constant(r));

  ad::Var z = t.constant(features);
  std::size_t w = 0;
  for (std::size_t l = 0; l < p.layers; ++l) {
    std::vector<ad::Var> parts;
    switch (p.kind) {
      case BaselineKind::gcn:
        z = ad::relu(t, ad::spdm(t, ahat, ad::matmul(t, z, leaves[w++])));
        break;
      case BaselineKind::mixhop:
        for (std::size_t j = 0; j < p.powers.size(); ++j) {
          ad::Var h = ad::matmul(t, z, leaves[w++]);
          for (std::size_t s = 0; s < p.powers[j]; ++s) h = ad::spdm(t, ahat, h);
          parts.push_back(ad::relu(t, h));
        }
        z = ad::concat_cols(t, parts);
        break;
      case BaselineKind::rgcn:
        for (const auto& a : rel) parts.push_back(ad::spdm(t, a, ad::matmul(t, z, leaves[w++])));
        z = ad::relu(t, ad::sum(t, parts));
        break;
    }
    z = dropout(z);
  }
  return ad::add_row_bias(t, ad::matmul(t, z, leaves[w]), leaves[w + 1]);
}

namespace {

std::vector<ad::Var> bind(ad::Tape& t, const BaselineParams& p) {
  std::vector<ad::Var> v;
  for (const auto& [name, m] : p.tensors) v.push_back(t.parameter(m));
  return v;
}

}  // namespace

Prediction baseline_predict(const BaselineInputs& in, const DenseMatrix& features, const BaselineParams& p) {
  ad::Tape t(false);
  const auto leaves = bind(t, p);
  return Prediction::from_logits(baseline_logits(t, in, features, p, leaves, ForwardOptions{}).dense());
}

BaselineTrainResult train_baseline(const HeteroGraph& g, BaselineParams params, const TrainConfig& cfg) {
  params.validate();
  g.validate();
  if (g.labels.empty() || g.splits.train.empty()) throw PreconditionError("train: graph has no labelled train split");
  if (cfg.batch) throw PreconditionError("baseline models train full-batch only");
  BaselineTrainResult result;
  result.best = params;
  const BaselineInputs in = baseline_inputs(g, params);
  AdamState state;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    ad::Tape t;
    const auto leaves = bind(t, params);
    ForwardOptions opts;
    opts.training = true;
    opts.dropout = cfg.dropout;
    opts.seed = mix_seed(cfg.seed, epoch);
    const ad::Var loss = ad::cross_entropy(t, baseline_logits(t, in, g.features, params, leaves, opts), g.labels,
                                           g.splits.train);
    t.backward(loss);
    std::vector<DenseMatrix> grads;
    std::vector<DenseMatrix*> ps;
    std::vector<const DenseMatrix*> gs;
    std::vector<std::string> names;
    grads.reserve(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      grads.push_back(leaves[i].grad());
      ps.push_back(&params.tensors[i].second);
      names.push_back(params.tensors[i].first);
    }
    for (const auto& gm : grads) gs.push_back(&gm);
    adam_update(ps, gs, state, cfg.adam, names);

    const Prediction pred = baseline_predict(in, g.features, params);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss.dense()(0, 0);
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

void save_baseline(const BaselineParams& p, const std::filesystem::path& path) {
  p.validate();
  nlohmann::json j;
  j["format"] = "mpf-baseline";
  j["version"] = 1;
  j["kind"] = to_string(p.kind);
  j["in_dim"] = p.in_dim;
  j["n_classes"] = p.n_classes;
  j["hidden"] = p.hidden;
  j["layers"] = p.layers;
  j["powers"] = p.powers;
  j["relations"] = p.relations;
  j["tensors"] = nlohmann::json::object();
  for (const auto& [name, m] : p.tensors) {
    // nlohmann writes doubles in shortest round-trip form.
    j["tensors"][name] = {{"shape", {m.rows(), m.cols()}},
                          {"data", std::vector<Real>(m.values().begin(), m.values().end())}};
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << '\n';
}

BaselineParams load_baseline(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != "mpf-baseline" || j.at("version") != 1) throw FormatError(path.string() + ": not a baseline checkpoint");
    BaselineParams p;
    p.kind = parse_baseline_kind(j.at("kind"));
    p.in_dim = j.at("in_dim");
    p.n_classes = j.at("n_classes");
    p.hidden = j.at("hidden");
    p.layers = j.at("layers");
    p.powers = j.at("powers").get<std::vector<std::size_t>>();
    p.relations = j.at("relations").get<std::vector<std::string>>();
    for (const auto& [name, r, c] : layout(p)) {
      const auto& t = j.at("tensors").at(name);
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      const auto data = t.at("data").get<std::vector<Real>>();
      if (shape.size() != 2 || shape[0] != r || shape[1] != c || data.size() != r * c) {
        throw FormatError(path.string() + ": tensor " + name + " has the wrong shape");
      }
      DenseMatrix m(r, c);
      std::copy(data.begin(), data.end(), m.values().begin());
      p.tensors.emplace_back(name, std::move(m));
    }
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace mpf
