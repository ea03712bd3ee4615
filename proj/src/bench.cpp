#include "mpf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "mpf/errors.hpp"
#include "mpf/memory.hpp"
#include "mpf/parallel.hpp"

namespace mpf {

namespace {

constexpr Real kNaN = std::numeric_limits<Real>::quiet_NaN();

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    x = std::stoull(v, &pos);
  } catch (const std::logic_error&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') throw DomainError("synth: " + key + " expects a count, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

Real parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  Real x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::logic_error&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || !std::isfinite(x)) {
    throw DomainError("synth: " + key + " expects a number, got '" + v + "'");
  }
  return x;
}

// E[min(X, cap)] for X ~ Pareto(xm, a): xm + xm^(a-1) (cap^(2-a) - xm^(2-a)) / (2 - a).
Real capped_pareto_mean(Real xm, Real a, Real cap) {
  if (xm >= cap) return cap;
  return xm + std::pow(xm, a - 1.0) * (std::pow(cap, 2.0 - a) - std::pow(xm, 2.0 - a)) / (2.0 - a);
}

// Scale whose capped mean is `mean`; the capped mean is increasing in xm.
Real pareto_scale_for_mean(Real mean, Real a, Real cap) {
  Real lo = 0.0, hi = mean;
  for (int it = 0; it < 200; ++it) {
    const Real mid = 0.5 * (lo + hi);
    (capped_pareto_mean(mid, a, cap) < mean ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SynthSpec parse_synth(const std::string& text) {
  SynthSpec s;
  std::string norm = text;
  std::replace(norm.begin(), norm.end(), ',', ' ');
  std::istringstream in(norm);
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw DomainError("synth: expected key=value, got '" + tok + "'");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "n") s.n = parse_count(key, val);
    else if (key == "types") s.n_types = parse_count(key, val);
    else if (key == "deg") s.avg_degree = parse_real(key, val);
    else if (key == "exp") s.exponent = parse_real(key, val);
    else if (key == "feat") s.features = parse_count(key, val);
    else if (key == "classes") s.classes = parse_count(key, val);
    else if (key == "seed") s.seed = parse_count(key, val);
    else throw DomainError("synth: unknown key '" + key + "' (n, types, deg, exp, feat, classes, seed)");
  }
  return s;
}

HeteroGraph synth_graph(const SynthSpec& s) {
  if (s.n < 2) throw DomainError("synth: n must be >= 2");
  if (s.n_types == 0) throw DomainError("synth: types must be >= 1");
  if (!(s.avg_degree > 0.0)) throw DomainError("synth: deg must be positive");
  if (!(s.exponent > 2.0)) throw DomainError("synth: exp must exceed 2 for a finite mean degree");
  if (s.classes == 0 || s.features == 0) throw DomainError("synth: feat and classes must be >= 1");

  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  const Real cap = static_cast<Real>(s.n - 1);
  if (s.avg_degree > cap) throw DomainError("synth: deg exceeds n - 1");
  const Real xm = pareto_scale_for_mean(s.avg_degree, s.exponent, cap);

  HeteroGraph g;
  g.n_nodes = s.n;
  g.node_type_of.assign(s.n, 0);
  g.node_type_names = {"node"};
  g.target_node_type = 0;
  g.n_classes = s.classes;
  std::vector<Triplet> trip;
  std::unordered_set<Index> picked;
  for (std::size_t t = 0; t < s.n_types; ++t) {
    trip.clear();
    for (std::size_t i = 0; i < s.n; ++i) {
      // 1 - u keeps the draw in (0, 1].
      const Real x = std::min(cap, xm * std::pow(1.0 - unit(rng), -1.0 / (s.exponent - 1.0)));
      const Real fl = std::floor(x);
      const auto d = static_cast<std::size_t>(fl) + (unit(rng) < x - fl ? 1 : 0);
      // Floyd's sampling of d distinct targets from the n - 1 other nodes.
      picked.clear();
      const std::size_t pool = s.n - 1;
      for (std::size_t j = pool - std::min(d, pool); j < pool; ++j) {
        const auto r = static_cast<Index>(std::uniform_int_distribution<std::size_t>(0, j)(rng));
        if (!picked.insert(r).second) picked.insert(static_cast<Index>(j));
      }
      for (Index r : picked) {
        const Index col = r >= static_cast<Index>(i) ? r + 1 : r;
        trip.push_back({static_cast<Index>(i), col, 1.0});
      }
    }
    g.adjacency.push_back(SparseMatrix::from_triplets(s.n, s.n, trip));
    g.edge_type_names.push_back("r" + std::to_string(t));
    g.edge_endpoints.push_back({0, 0});
  }

  g.features = DenseMatrix(s.n, s.features);
  std::uniform_real_distribution<Real> feat(-1.0, 1.0);
  for (Real& v : g.features.values()) v = feat(rng);
  std::uniform_int_distribution<int> label(0, static_cast<int>(s.classes) - 1);
  g.labels.resize(s.n);
  for (int& y : g.labels) y = label(rng);
  std::vector<Index> order(s.n);
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = s.n * 6 / 10, n_valid = s.n * 2 / 10;
  g.splits.train.assign(order.begin(), order.begin() + n_train);
  g.splits.valid.assign(order.begin() + n_train, order.begin() + n_train + n_valid);
  g.splits.test.assign(order.begin() + n_train + n_valid, order.end());
  for (auto* split : {&g.splits.train, &g.splits.valid, &g.splits.test}) std::sort(split->begin(), split->end());
  return g;
}

Real fit_tail_exponent(std::span<const std::size_t> degrees, std::size_t d_min) {
  if (d_min < 1) throw DomainError("fit_tail_exponent: d_min must be >= 1");
  Real sum = 0.0;
  std::size_t m = 0;
  const Real base = static_cast<Real>(d_min) - 0.5;
  for (std::size_t d : degrees) {
    if (d < d_min) continue;
    sum += std::log(static_cast<Real>(d) / base);
    ++m;
  }
  if (m == 0 || sum <= 0.0) throw DomainError("fit_tail_exponent: no values in the tail");
  return 1.0 + static_cast<Real>(m) / sum;
}

Real loglog_slope(std::span<const Real> x, std::span<const Real> y) {
  if (x.size() != y.size() || x.size() < 2) throw ShapeError("loglog_slope: need two or more paired points");
  Real mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw DomainError("loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<Real>(x.size());
  my /= static_cast<Real>(x.size());
  Real sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw DomainError("loglog_slope: x values are all equal");
  return sxy / sxx;
}

// ---------------------------------------------------------------------------

const PhaseStat* BenchResult::phase(const std::string& name) const {
  for (const auto& p : phases) {
    if (p.phase == name) return &p;
  }
  return nullptr;
}

Real BenchComparison::speedup(const std::string& phase) const {
  if (!gtn.ok() || !fast.ok()) return kNaN;
  const auto* a = gtn.phase(phase);
  const auto* b = fast.phase(phase);
  if (!a || !b || b->median_ms <= 0) return kNaN;
  return a->median_ms / b->median_ms;
}

Real BenchComparison::memory_ratio() const {
  if (!gtn.ok() || !fast.ok() || fast.peak_bytes == 0) return kNaN;
  return static_cast<Real>(gtn.peak_bytes) / static_cast<Real>(fast.peak_bytes);
}

namespace {

using Clock = std::chrono::steady_clock;

Real elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<Real, std::milli>(Clock::now() - since).count();
}

// Linear-interpolated quantile of sorted data.
Real quantile(const std::vector<Real>& sorted, Real q) {
  const Real pos = q * static_cast<Real>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<Real>(lo)) * (sorted[hi] - sorted[lo]);
}

PhaseStat summarize(std::string name, std::vector<Real> samples, Real unstable_iqr) {
  PhaseStat s;
  s.phase = std::move(name);
  s.samples_ms = samples;
  std::sort(samples.begin(), samples.end());
  s.median_ms = quantile(samples, 0.5);
  const Real iqr = quantile(samples, 0.75) - quantile(samples, 0.25);
  s.iqr_ratio = s.median_ms > 0 ? iqr / s.median_ms : 0.0;
  s.unstable = s.iqr_ratio >= unstable_iqr;
  return s;
}

struct RunOutput {
  BenchResult result;
  DenseMatrix confidence;
};

RunOutput run_pipeline(const std::string& name, const CandidateSet& cands, const HeteroGraph& g, const ModelParams& p,
                       const BenchOptions& opts, std::size_t limit) {
  RunOutput out;
  BenchResult& r = out.result;
  r.model = name;
  r.n = g.n_nodes;
  r.k = p.hyper.K;
  r.c = p.hyper.C;
  r.reps = opts.reps;
  r.threads = thread_count();
  std::vector<Real> fwd, bwd, total;
  std::size_t peak = 0;
  try {
    MemoryLimitScope cap(limit);
    for (std::size_t rep = 0; rep < opts.warmup + opts.reps; ++rep) {
      PeakScope scope;
      const auto t0 = Clock::now();
      Real f_ms = 0, b_ms = 0;
      if (opts.mode == BenchMode::inference) {
        Prediction pred = predict(cands, g.features, p);
        f_ms = elapsed_ms(t0);
        if (rep + 1 == opts.warmup + opts.reps) out.confidence = std::move(pred.confidence);
      } else {
        ad::Tape tape;
        const ParamVars vars = bind_params(tape, p);
        const ad::Var logits = model_logits(tape, cands, g.features, p, vars, ForwardOptions{});
        const ad::Var l = ad::cross_entropy(tape, logits, g.labels, g.splits.train);
        f_ms = elapsed_ms(t0);
        const auto t1 = Clock::now();
        tape.backward(l);
        b_ms = elapsed_ms(t1);
        if (rep + 1 == opts.warmup + opts.reps) out.confidence = Prediction::from_logits(logits.dense()).confidence;
      }
      const Real all = elapsed_ms(t0);
      if (rep < opts.warmup) continue;
      fwd.push_back(f_ms);
      bwd.push_back(b_ms);
      total.push_back(all);
      peak = std::max(peak, scope.peak_extra_bytes());
    }
  } catch (const std::bad_alloc&) {
    r.status = "oom";
    r.peak_bytes = limit;
    return out;
  }
  r.peak_bytes = peak;
  r.phases.push_back(summarize("forward", fwd, opts.unstable_iqr));
  if (opts.mode == BenchMode::training) {
    r.phases.push_back(summarize("backward", bwd, opts.unstable_iqr));
    r.phases.push_back(summarize("total", total, opts.unstable_iqr));
  }
  return out;
}

}  // namespace

BenchComparison bench_compare(const HeteroGraph& g, const ModelParams& p, const BenchOptions& opts) {
  if (p.kind != ModelKind::gtn) throw PreconditionError("bench_compare expects GTN parameters");
  if (opts.reps < 3) throw DomainError("bench_compare: at least 3 repetitions are required");
  if (opts.mode == BenchMode::training && g.splits.train.empty()) {
    throw PreconditionError("bench_compare: training mode needs a train split");
  }
  const ModelParams fast = transfer_gtn_to_fastgtn(p);
  const CandidateSet cands = build_candidates(g, p.hyper.include_identity, p.hyper.epsilon);

  BenchComparison cmp;
  RunOutput a = run_pipeline("gtn", cands, g, p, opts, opts.memory_limit);
  RunOutput b = run_pipeline("fastgtn", cands, g, fast, opts, 0);
  cmp.gtn = std::move(a.result);
  cmp.fast = std::move(b.result);
  cmp.conf_diff = kNaN;
  if (cmp.gtn.ok() && cmp.fast.ok()) {
    Real d = 0.0;
    for (std::size_t q = 0; q < a.confidence.size(); ++q) {
      d = std::max(d, std::abs(a.confidence.values()[q] - b.confidence.values()[q]));
    }
    cmp.conf_diff = d;
  }
  return cmp;
}

std::vector<BenchComparison> bench_sweep(const SweepSpec& spec) {
  std::vector<BenchComparison> out;
  for (std::size_t n : spec.sizes) {
    SynthSpec s = spec.synth;
    s.n = n;
    const HeteroGraph g = synth_graph(s);
    const ModelParams p = init_params(ModelKind::gtn, spec.hyper, g, spec.param_seed);
    out.push_back(bench_compare(g, p, spec.options));
  }
  return out;
}

namespace {

void write_rows(std::ostream& out, const BenchResult& r, Real conf_diff) {
  const auto num = [](Real v) {
    std::ostringstream s;
    s.precision(17);
    if (std::isnan(v)) s << "nan";
    else s << v;
    return s.str();
  };
  if (r.phases.empty()) {
    out << r.model << ',' << r.n << ',' << r.k << ',' << r.c << ",forward,nan," << r.peak_bytes << ','
        << num(conf_diff) << ",nan,0," << r.status << '\n';
    return;
  }
  for (const auto& ph : r.phases) {
    out << r.model << ',' << r.n << ',' << r.k << ',' << r.c << ',' << ph.phase << ',' << num(ph.median_ms) << ','
        << r.peak_bytes << ',' << num(conf_diff) << ',' << num(ph.iqr_ratio) << ',' << (ph.unstable ? 1 : 0) << ','
        << r.status << '\n';
  }
}

nlohmann::json to_json(const BenchResult& r) {
  nlohmann::json j;
  j["model"] = r.model;
  j["n"] = r.n;
  j["k"] = r.k;
  j["c"] = r.c;
  j["status"] = r.status;
  j["peak_bytes"] = r.peak_bytes;
  j["reps"] = r.reps;
  j["threads"] = r.threads;
  for (const auto& ph : r.phases) {
    j["phases"][ph.phase] = {{"ms_median", ph.median_ms},
                             {"samples_ms", ph.samples_ms},
                             {"iqr_ratio", ph.iqr_ratio},
                             {"unstable", ph.unstable}};
  }
  return j;
}

nlohmann::json finite_or_null(Real v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

void write_bench_csv(const std::vector<BenchComparison>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "model,n,k,c,phase,ms_median,peak_bytes,conf_diff,iqr_ratio,unstable,status\n";
  for (const auto& r : rows) {
    write_rows(out, r.gtn, r.conf_diff);
    write_rows(out, r.fast, r.conf_diff);
  }
}

void write_bench_json(const std::vector<BenchComparison>& rows, const std::filesystem::path& path) {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  std::vector<Real> ns, speed;
  for (const auto& r : rows) {
    j["rows"].push_back({{"n", r.gtn.n},
                         {"gtn", to_json(r.gtn)},
                         {"fastgtn", to_json(r.fast)},
                         {"conf_diff", finite_or_null(r.conf_diff)},
                         {"speedup", finite_or_null(r.speedup())},
                         {"memory_ratio", finite_or_null(r.memory_ratio())}});
    ns.push_back(static_cast<Real>(r.gtn.n));
    speed.push_back(r.speedup());
  }
  bool monotone = rows.size() >= 2;
  for (std::size_t i = 1; i < speed.size(); ++i) monotone = monotone && ns[i] > ns[i - 1] && speed[i] > speed[i - 1];
  j["speedup_monotone_in_n"] = monotone;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace mpf
