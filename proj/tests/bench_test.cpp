#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "mpf/bench.hpp"
#include "mpf/errors.hpp"
#include "mpf/memory.hpp"

using namespace mpf;

namespace {

std::vector<std::size_t> out_degrees(const SparseMatrix& a) {
  std::vector<std::size_t> d;
  for (std::size_t r = 0; r < a.rows(); ++r) d.push_back(a.row_cols(r).size());
  return d;
}

ModelParams small_gtn(const HeteroGraph& g, std::size_t K = 3) {
  Hyper h;
  h.K = K;
  h.C = 2;
  h.hidden = 8;
  return init_params(ModelKind::gtn, h, g, 1);
}

}  // namespace

TEST(Synth, SmallGraphDegreeAndValidity) {
  SynthSpec s;
  s.n = 10;
  s.n_types = 2;
  s.avg_degree = 2.0;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    s.seed = seed;
    const HeteroGraph g = synth_graph(s);
    g.validate();
    ASSERT_EQ(g.n_edge_types(), 2u);
    for (const auto& a : g.adjacency) {
      total += static_cast<double>(a.nnz());
      for (std::size_t r = 0; r < 10; ++r) EXPECT_EQ(a.find(r, r), -1) << "self loop";
    }
  }
  // The scale accounts for the n - 1 degree cap, so the mean nnz per type is n * deg = 20.
  EXPECT_NEAR(total / 400.0, 20.0, 0.5);
}

TEST(Synth, SameSeedSameGraph) {
  SynthSpec s;
  s.n = 300;
  s.seed = 42;
  const HeteroGraph a = synth_graph(s), b = synth_graph(s);
  ASSERT_EQ(a.adjacency.size(), b.adjacency.size());
  for (std::size_t t = 0; t < a.adjacency.size(); ++t) EXPECT_EQ(a.adjacency[t], b.adjacency[t]);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.splits.train, b.splits.train);
  EXPECT_EQ(a.features.values()[7], b.features.values()[7]);
  s.seed = 43;
  EXPECT_FALSE(synth_graph(s).adjacency[0] == a.adjacency[0]);
}

TEST(Synth, TailExponentMatchesTarget) {
  for (double target : {2.3, 2.5, 3.0}) {
    SynthSpec s;
    s.n = 100000;
    s.n_types = 1;
    s.avg_degree = 5.0;
    s.exponent = target;
    s.features = 1;
    s.seed = 7;
    const HeteroGraph g = synth_graph(s);
    const auto deg = out_degrees(g.adjacency[0]);
    EXPECT_NEAR(fit_tail_exponent(deg, 10), target, 0.3) << "target " << target;
  }
}

TEST(Synth, FitRecoversKnownSample) {
  // Degrees from a continuous Pareto(alpha = 2.5, xm = 9.5) by inverse CDF at
  // evenly spaced quantiles, rounded to the nearest integer. Every bin from 10
  // up is then whole, which is the model the discrete MLE assumes.
  std::vector<std::size_t> d;
  for (int i = 1; i <= 20000; ++i) {
    const double u = (i - 0.5) / 20000.0;
    d.push_back(static_cast<std::size_t>(std::llround(9.5 * std::pow(u, -1.0 / 1.5))));
  }
  EXPECT_NEAR(fit_tail_exponent(d, 10), 2.5, 0.05);
  EXPECT_THROW(fit_tail_exponent(std::vector<std::size_t>{1, 2}, 10), DomainError);
}

TEST(Synth, RejectsDegenerateSpecs) {
  SynthSpec s;
  s.n = 1;
  EXPECT_THROW(synth_graph(s), DomainError);
  s.n = 10;
  s.exponent = 2.0;
  EXPECT_THROW(synth_graph(s), DomainError);
  s.exponent = 2.5;
  s.avg_degree = 0.0;
  EXPECT_THROW(synth_graph(s), DomainError);
}

TEST(Synth, ParseSpec) {
  const SynthSpec s = parse_synth("n=5000 types=3,deg=4.5 exp=2.2 feat=8 classes=4 seed=9");
  EXPECT_EQ(s.n, 5000u);
  EXPECT_EQ(s.n_types, 3u);
  EXPECT_DOUBLE_EQ(s.avg_degree, 4.5);
  EXPECT_DOUBLE_EQ(s.exponent, 2.2);
  EXPECT_EQ(s.features, 8u);
  EXPECT_EQ(s.classes, 4u);
  EXPECT_EQ(s.seed, 9u);
  EXPECT_EQ(parse_synth("").n, SynthSpec{}.n);
  EXPECT_THROW(parse_synth("n=abc"), DomainError);
  EXPECT_THROW(parse_synth("n=-3"), DomainError);
  EXPECT_THROW(parse_synth("size=3"), DomainError);
  EXPECT_THROW(parse_synth("n"), DomainError);
}

TEST(Stats, LogLogSlope) {
  const std::vector<double> x{1, 10, 100}, y{3, 300, 30000};
  EXPECT_NEAR(loglog_slope(x, y), 2.0, 1e-12);
  EXPECT_THROW(loglog_slope(std::vector<double>{1}, std::vector<double>{1}), ShapeError);
  EXPECT_THROW(loglog_slope(std::vector<double>{1, 2}, std::vector<double>{0, 1}), DomainError);
}

TEST(Bench, TinyGraphBothSucceedAndAgree) {
  SynthSpec s;
  s.n = 50;
  const HeteroGraph g = synth_graph(s);
  const BenchComparison r = bench_compare(g, small_gtn(g), BenchOptions{});
  ASSERT_TRUE(r.gtn.ok());
  ASSERT_TRUE(r.fast.ok());
  EXPECT_LE(r.conf_diff, 1e-10);
  EXPECT_EQ(r.gtn.reps, 3u);
  ASSERT_EQ(r.gtn.phases.size(), 1u);
  EXPECT_EQ(r.gtn.phases[0].samples_ms.size(), 3u);
  EXPECT_GT(r.gtn.peak_bytes, 0u);
  EXPECT_GT(r.fast.peak_bytes, 0u);
  EXPECT_TRUE(std::isfinite(r.speedup()));
  EXPECT_EQ(r.gtn.model, "gtn");
  EXPECT_EQ(r.fast.model, "fastgtn");
}

TEST(Bench, TrainingModeReportsAllPhases) {
  SynthSpec s;
  s.n = 60;
  const HeteroGraph g = synth_graph(s);
  BenchOptions o;
  o.mode = BenchMode::training;
  const BenchComparison r = bench_compare(g, small_gtn(g, 2), o);
  for (const auto* res : {&r.gtn, &r.fast}) {
    ASSERT_TRUE(res->ok());
    ASSERT_NE(res->phase("backward"), nullptr);
    ASSERT_NE(res->phase("total"), nullptr);
    EXPECT_GE(res->phase("total")->median_ms, res->phase("forward")->median_ms);
  }
  EXPECT_LE(r.conf_diff, 1e-10);
}

TEST(Bench, ExplicitOutOfMemoryIsAReportedRow) {
  SynthSpec s;
  s.n = 400;
  s.avg_degree = 6;
  const HeteroGraph g = synth_graph(s);
  BenchOptions o;
  o.memory_limit = MemoryAccountant::instance().current_bytes() + 64 * 1024;
  const BenchComparison r = bench_compare(g, small_gtn(g), o);
  EXPECT_EQ(r.gtn.status, "oom");
  EXPECT_TRUE(r.fast.ok());
  EXPECT_TRUE(std::isnan(r.conf_diff));
  EXPECT_TRUE(std::isnan(r.speedup()));
  EXPECT_EQ(MemoryAccountant::instance().limit(), 0u);

  const auto dir = std::filesystem::temp_directory_path() / "mpf_bench_oom";
  std::filesystem::create_directories(dir);
  write_bench_csv({r}, dir / "bench.csv");
  std::ifstream in(dir / "bench.csv");
  std::string header, gtn_row, fast_row;
  std::getline(in, header);
  std::getline(in, gtn_row);
  std::getline(in, fast_row);
  EXPECT_EQ(header.rfind("model,n,k,c,phase,ms_median,peak_bytes,conf_diff", 0), 0u);
  EXPECT_EQ(gtn_row.rfind("gtn,400,3,2,forward,nan,", 0), 0u) << gtn_row;
  EXPECT_NE(gtn_row.find(",oom"), std::string::npos);
  EXPECT_EQ(fast_row.rfind("fastgtn,400,3,2,forward,", 0), 0u);
  std::filesystem::remove_all(dir);
}

TEST(Bench, PreconditionsAndUnstableFlag) {
  SynthSpec s;
  s.n = 30;
  const HeteroGraph g = synth_graph(s);
  BenchOptions o;
  o.reps = 2;
  EXPECT_THROW(bench_compare(g, small_gtn(g), o), DomainError);
  o.reps = 3;
  Hyper h;
  h.hidden = 4;
  EXPECT_THROW(bench_compare(g, init_params(ModelKind::fastgtn, h, g, 0), o), PreconditionError);
  // An infinite threshold never flags a row.
  o.unstable_iqr = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(bench_compare(g, small_gtn(g), o).gtn.phases[0].unstable);
}

TEST(Bench, SweepJsonSummary) {
  SweepSpec sw;
  sw.sizes = {40, 80};
  sw.hyper.K = 2;
  sw.hyper.hidden = 4;
  const auto rows = bench_sweep(sw);
  ASSERT_EQ(rows.size(), 2u);
  const auto path = std::filesystem::temp_directory_path() / "mpf_bench_summary.json";
  write_bench_json(rows, path);
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  ASSERT_EQ(j["rows"].size(), 2u);
  EXPECT_EQ(j["rows"][1]["n"], 80);
  EXPECT_TRUE(j["rows"][0]["conf_diff"].get<double>() <= 1e-10);
  EXPECT_TRUE(j.contains("speedup_monotone_in_n"));
  EXPECT_EQ(j["rows"][0]["gtn"]["phases"]["forward"]["samples_ms"].size(), 3u);
  std::filesystem::remove(path);
}
