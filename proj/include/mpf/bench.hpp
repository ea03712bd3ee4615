#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mpf/hetgraph.hpp"
#include "mpf/networks.hpp"

namespace mpf {

// ---------------------------------------------------------------------------
// Synthetic graphs

struct SynthSpec {
  std::size_t n = 1000;
  std::size_t n_types = 3;
  Real avg_degree = 3.0;  // mean out-degree per edge type
  Real exponent = 2.5;    // out-degree tail P(d) ~ d^-exponent, must exceed 2
  std::size_t features = 16;
  std::size_t classes = 3;
  std::uint64_t seed = 0;
};

// Parses "n=5000 types=3 deg=4 exp=2.5 feat=16 classes=3 seed=1"; any
// subset, separated by spaces or commas. Throws DomainError.
SynthSpec parse_synth(const std::string& text);

// Out-degrees drawn from a Pareto law with the requested mean, rounded
// stochastically; targets uniform without self loops. One node type, dense
// uniform features, random labels, shuffled 60/20/20 splits.
HeteroGraph synth_graph(const SynthSpec& spec);

// Discrete power-law MLE of the tail exponent over values >= d_min.
Real fit_tail_exponent(std::span<const std::size_t> degrees, std::size_t d_min);

// Least-squares slope of log(y) against log(x).
Real loglog_slope(std::span<const Real> x, std::span<const Real> y);

// ---------------------------------------------------------------------------
// Explicit vs implicit comparison

enum class BenchMode { inference, training };

struct PhaseStat {
  std::string phase;  // forward, backward or total
  std::vector<Real> samples_ms;
  Real median_ms = 0.0;
  Real iqr_ratio = 0.0;  // interquartile range over median
  bool unstable = false;
};

struct BenchResult {
  std::string model;
  std::size_t n = 0, k = 0, c = 0;
  std::string status = "ok";  // ok, oom, or error: <message>
  std::vector<PhaseStat> phases;
  std::size_t peak_bytes = 0;  // transient tracked bytes above the inputs, max over reps
  std::size_t reps = 0;
  std::size_t threads = 1;

  bool ok() const noexcept { return status == "ok"; }
  const PhaseStat* phase(const std::string& name) const;
};

struct BenchOptions {
  BenchMode mode = BenchMode::inference;
  std::size_t reps = 3;
  std::size_t warmup = 1;
  std::size_t memory_limit = 0;  // explicit side only; 0 = unlimited
  Real unstable_iqr = 0.25;
};

struct BenchComparison {
  BenchResult gtn;
  BenchResult fast;
  Real conf_diff = 0.0;  // NaN unless both pipelines completed

  Real speedup(const std::string& phase = "forward") const;  // NaN unless both completed
  Real memory_ratio() const;
};

// Runs the GTN described by `p` and its transferred FastGTN on g.
BenchComparison bench_compare(const HeteroGraph& g, const ModelParams& p, const BenchOptions& opts);

struct SweepSpec {
  std::vector<std::size_t> sizes{1000, 5000, 20000};
  SynthSpec synth;  // n is overwritten per size
  Hyper hyper;
  BenchOptions options;
  std::uint64_t param_seed = 0;
};

std::vector<BenchComparison> bench_sweep(const SweepSpec& spec);

// Columns model,n,k,c,phase,ms_median,peak_bytes,conf_diff, then
// iqr_ratio,unstable,status.
void write_bench_csv(const std::vector<BenchComparison>& rows, const std::filesystem::path& path);
void write_bench_json(const std::vector<BenchComparison>& rows, const std::filesystem::path& path);

}  // namespace mpf
