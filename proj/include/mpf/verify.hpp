#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpf/bench.hpp"

namespace mpf::verify {

// Outcome of one numbered check against independent oracles.
struct CheckResult {
  int id = 0;
  std::string name;
  std::string status = "FAIL";  // PASS, FAIL or SKIP
  Real metric = 0.0;            // worst observed deviation or ratio, see detail
  Real tolerance = 0.0;
  Real seconds = 0.0;
  std::string detail;

  bool passed() const noexcept { return status == "PASS"; }
  bool failed() const noexcept { return status == "FAIL"; }
};

struct Options {
  bool quick = false;  // smaller instance counts, no sweep
  std::uint64_t seed = 2024;
  std::optional<std::filesystem::path> cora_dir;  // check 9 is skipped without it
  std::optional<std::filesystem::path> out_dir;   // sweep CSV/JSON land here when set
};

// GTN and parameter-transferred FastGTN confidences on random configurations.
CheckResult exactness(const Options& o);
// Closure of row-stochastic matrices under products and the self-loop degree.
CheckResult stochastic_products(const Options& o);
// Stacked explicit layers against brute-force type-sequence enumeration.
CheckResult metapath_decomposition(const Options& o);
// FastGTN special cases equal to GCN, MixHop and RGCN.
CheckResult reductions(const Options& o);
// Central finite differences on FastGTN with non-local candidates.
CheckResult gradients(const Options& o);
// Synthetic sweep of time and transient memory, explicit vs implicit.
CheckResult efficiency(const Options& o);
// Row budget, stochasticity and tie-breaking of the non-local adjacency.
CheckResult nonlocal_contract(const Options& o);
// Exact-subgraph forward and membership of sampled typed edges.
CheckResult minibatch_fidelity(const Options& o);
// GTN on a Cora-format directory: test micro-F1 within 200 epochs.
CheckResult dataset_reproduction(const Options& o);
// Hop ratio formulas on hand-set attention and completeness of reports.
CheckResult interpretation(const Options& o);

inline constexpr int kChecks = 10;
inline constexpr int kQuickChecks[] = {1, 2, 3, 4, 5, 7, 8, 10};

CheckResult run_check(int id, const Options& o);
std::vector<CheckResult> run_checks(std::span<const int> ids, const Options& o);

// Settings of the efficiency sweep.
SweepSpec default_sweep(std::uint64_t seed);

// "PASS  1 exactness  metric=... tol=... 1.2s  detail"
std::string format_line(const CheckResult& r);

}  // namespace mpf::verify
