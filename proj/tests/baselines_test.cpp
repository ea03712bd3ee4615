#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "mpf/baselines.hpp"
#include "mpf/errors.hpp"
#include "model_support.hpp"

using namespace mpf;
using namespace mpf::testing;

namespace {

const DenseMatrix& tensor(const BaselineParams& p, const std::string& name) {
  for (const auto& [n, m] : p.tensors)
    if (n == name) return m;
  throw std::out_of_range(name);
}

Classifier head(const BaselineParams& p) { return {tensor(p, "classifier.W"), tensor(p, "classifier.b")}; }

Prediction predict(const HeteroGraph& g, const BaselineParams& p) {
  return baseline_predict(baseline_inputs(g, p), g.features, p);
}

}  // namespace

TEST(Baselines, GcnMatchesReferenceForward) {
  std::mt19937_64 rng(1);
  const HeteroGraph g = random_hetero_graph(30, 3, 2.0, 5, 3, rng);
  const BaselineParams p = init_baseline(BaselineKind::gcn, g, 6, 2, 3);
  const std::vector<DenseMatrix> ws{tensor(p, "gcn.W0"), tensor(p, "gcn.W1")};
  const auto ref = gcn_forward(merge_for_sampling(g).union_matrix(), g.features, ws, head(p));
  EXPECT_LE(max_abs_diff(ref.logits, predict(g, p).logits), 1e-10);
}

TEST(Baselines, MixHopMatchesReferenceForward) {
  std::mt19937_64 rng(2);
  const HeteroGraph g = random_hetero_graph(25, 2, 3.0, 4, 3, rng);
  const BaselineParams p = init_baseline(BaselineKind::mixhop, g, 5, 2, 4);
  std::vector<std::vector<DenseMatrix>> ws(2);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t j = 0; j < 3; ++j) ws[l].push_back(tensor(p, "mixhop.W" + std::to_string(l) + ".p" + std::to_string(j)));
  const auto ref = mixhop_forward(merge_for_sampling(g).union_matrix(), g.features, ws, p.powers, head(p));
  EXPECT_LE(max_abs_diff(ref.logits, predict(g, p).logits), 1e-10);
}

TEST(Baselines, RgcnMatchesReferenceWithIdentityCoefficients) {
  std::mt19937_64 rng(3);
  const HeteroGraph g = random_hetero_graph(20, 3, 2.0, 4, 2, rng);
  const BaselineParams p = init_baseline(BaselineKind::rgcn, g, 6, 2, 5);
  ASSERT_EQ(p.relations.back(), kSelfRelation);
  std::vector<SparseMatrix> raw(g.adjacency.begin(), g.adjacency.end());
  raw.push_back(SparseMatrix::identity(g.n_nodes));
  std::vector<RgcnLayer> layers(2);
  for (std::size_t l = 0; l < 2; ++l) {
    layers[l].coefficients = DenseMatrix::identity(raw.size());
    for (std::size_t r = 0; r < raw.size(); ++r)
      layers[l].bases.push_back(tensor(p, "rgcn.W" + std::to_string(l) + ".r" + std::to_string(r)));
  }
  const auto ref = rgcn_forward(raw, g.features, layers, head(p));
  EXPECT_LE(max_abs_diff(ref.logits, predict(g, p).logits), 1e-10);
}

TEST(Baselines, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  const HeteroGraph g = random_hetero_graph(8, 2, 2.0, 3, 2, rng);
  for (auto kind : {BaselineKind::gcn, BaselineKind::mixhop, BaselineKind::rgcn}) {
    BaselineParams p = init_baseline(kind, g, 3, 2, 6);
    const BaselineInputs in = baseline_inputs(g, p);
    const auto loss_of = [&](const BaselineParams& q) {
      ad::Tape t(false);
      std::vector<ad::Var> leaves;
      for (const auto& [n, m] : q.tensors) leaves.push_back(t.parameter(m));
      return ad::cross_entropy(t, baseline_logits(t, in, g.features, q, leaves, ForwardOptions{}), g.labels,
                               g.splits.train)
          .dense()(0, 0);
    };
    ad::Tape t;
    std::vector<ad::Var> leaves;
    for (const auto& [n, m] : p.tensors) leaves.push_back(t.parameter(m));
    const auto loss =
        ad::cross_entropy(t, baseline_logits(t, in, g.features, p, leaves, ForwardOptions{}), g.labels, g.splits.train);
    t.backward(loss);
    const double h = 1e-6;
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
      const DenseMatrix grad = leaves[i].grad();
      auto vals = p.tensors[i].second.values();
      for (std::size_t k = 0; k < vals.size(); ++k) {
        const double x0 = vals[k];
        vals[k] = x0 + h;
        const double up = loss_of(p);
        vals[k] = x0 - h;
        const double down = loss_of(p);
        vals[k] = x0;
        const double fd = (up - down) / (2 * h);
        EXPECT_NEAR(grad.values()[k], fd, 1e-6 * std::max(1.0, std::abs(fd)))
            << to_string(kind) << " " << p.tensors[i].first << "[" << k << "]";
      }
    }
  }
}

// Half of the toy's edges cross communities, so only the type-aware RGCN is
// expected to separate it; the union-graph models must still reduce the loss.
TEST(Baselines, TrainingReducesLossAndRgcnSeparatesToy) {
  const HeteroGraph g = separable_toy(60, 11);
  for (auto kind : {BaselineKind::gcn, BaselineKind::mixhop, BaselineKind::rgcn}) {
    TrainConfig cfg;
    cfg.epochs = 150;
    cfg.dropout = 0.0;
    cfg.adam.lr = 0.01;
    const auto r = train_baseline(g, init_baseline(kind, g, 16, 2, 1), cfg);
    ASSERT_EQ(r.history.size(), 150u);
    EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss) << to_string(kind);
    if (kind == BaselineKind::rgcn) EXPECT_GE(r.best_valid_f1, 0.9);
    EXPECT_GE(r.best_epoch, 1u);
  }
}

TEST(Baselines, SameSeedSameHistory) {
  const HeteroGraph g = separable_toy(40, 2);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.dropout = 0.5;
  cfg.seed = 9;
  const auto a = train_baseline(g, init_baseline(BaselineKind::mixhop, g, 8, 2, 1), cfg);
  const auto b = train_baseline(g, init_baseline(BaselineKind::mixhop, g, 8, 2, 1), cfg);
  for (std::size_t e = 0; e < 10; ++e) EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
}

TEST(Baselines, CheckpointRoundTripIsExact) {
  std::mt19937_64 rng(5);
  const HeteroGraph g = random_hetero_graph(12, 2, 2.0, 3, 2, rng);
  const auto path = std::filesystem::temp_directory_path() / "mpf_baseline.json";
  for (auto kind : {BaselineKind::gcn, BaselineKind::mixhop, BaselineKind::rgcn}) {
    const BaselineParams p = init_baseline(kind, g, 4, 2, 7);
    save_baseline(p, path);
    const BaselineParams q = load_baseline(path);
    EXPECT_EQ(q.kind, kind);
    EXPECT_EQ(q.relations, p.relations);
    ASSERT_EQ(q.tensors.size(), p.tensors.size());
    for (std::size_t i = 0; i < p.tensors.size(); ++i) EXPECT_EQ(max_abs_diff(p.tensors[i].second, q.tensors[i].second), 0.0);
  }
  std::filesystem::remove(path);
}

TEST(Baselines, Rejections) {
  std::mt19937_64 rng(6);
  const HeteroGraph g = random_hetero_graph(10, 2, 2.0, 3, 2, rng);
  EXPECT_THROW(parse_baseline_kind("gat"), DomainError);
  EXPECT_THROW(init_baseline(BaselineKind::gcn, g, 0, 2, 1), ShapeError);
  BaselineParams p = init_baseline(BaselineKind::rgcn, g, 4, 1, 1);
  p.tensors.pop_back();
  EXPECT_THROW(p.validate(), ShapeError);
  TrainConfig cfg;
  cfg.batch = BatchSpec{};
  EXPECT_THROW(train_baseline(g, init_baseline(BaselineKind::gcn, g, 4, 1, 1), cfg), PreconditionError);
  const auto path = std::filesystem::temp_directory_path() / "mpf_not_baseline.json";
  { std::ofstream(path) << "{\"format\":\"other\",\"version\":1}"; }
  EXPECT_THROW(load_baseline(path), FormatError);
  std::filesystem::remove(path);
}
