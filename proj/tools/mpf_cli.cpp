// mpf: train, evaluate, transform, interpret, bench and verify over the library.
// Exit codes: 0 ok, 1 runtime failure, 2 usage error, 3 verification failure.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mpf/baselines.hpp"
#include "mpf/bench.hpp"
#include "mpf/errors.hpp"
#include "mpf/hetgraph.hpp"
#include "mpf/interpret.hpp"
#include "mpf/networks.hpp"
#include "mpf/parallel.hpp"
#include "mpf/train.hpp"
#include "mpf/verify.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mpf;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command;
  std::string data;
  std::string synth;
  std::string model = "gtn";
  std::size_t epochs = 100;
  double lr = 5e-3;
  double dropout = 0.5;
  std::size_t layers = 1;
  std::size_t channels = 2;
  std::size_t gt_layers = 2;
  std::size_t hidden = 64;
  double gamma = 0.5;
  std::size_t nonlocal_n = 0;
  double epsilon = 1e-6;
  std::string agg = "concat";
  bool no_identity = false;
  std::size_t batch_size = 0;
  std::vector<std::size_t> fanout{10, 10};
  std::string sampler = "neighborhood";
  bool exact_subgraph = false;
  std::uint64_t seed = 0;
  std::string out = "mpf_out";
  // evaluate, transform, interpret
  std::string checkpoint;
  std::size_t channel = 0;
  std::size_t block = 0;
  std::size_t top_k = 10;
  bool between_targets = false;
  // bench
  std::size_t k = 0;
  std::size_t reps = 3;
  std::size_t warmup = 1;
  std::string mode = "inference";
  std::vector<std::size_t> sweep;
  double memory_limit_mb = 0.0;
  // verify
  bool quick = false;
  std::string cora;
  std::vector<int> only;
};

json config_json(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  j["data"] = c.data;
  j["synth"] = c.synth;
  j["model"] = c.model;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr;
  j["dropout"] = c.dropout;
  j["layers"] = c.layers;
  j["channels"] = c.channels;
  j["gt_layers"] = c.gt_layers;
  j["hidden"] = c.hidden;
  j["gamma"] = c.gamma;
  j["nonlocal_n"] = c.nonlocal_n;
  j["epsilon"] = c.epsilon;
  j["agg"] = c.agg;
  j["identity"] = !c.no_identity;
  j["batch_size"] = c.batch_size;
  j["fanout"] = c.fanout;
  j["sampler"] = c.sampler;
  j["exact_subgraph"] = c.exact_subgraph;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["checkpoint"] = c.checkpoint;
  j["channel"] = c.channel;
  j["block"] = c.block;
  j["top_k"] = c.top_k;
  j["between_targets"] = c.between_targets;
  j["k"] = c.k;
  j["reps"] = c.reps;
  j["warmup"] = c.warmup;
  j["mode"] = c.mode;
  j["sweep"] = c.sweep;
  j["memory_limit_mb"] = c.memory_limit_mb;
  j["quick"] = c.quick;
  j["cora"] = c.cora;
  j["only"] = c.only;
  return j;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_manifest(const RunConfig& c, const std::vector<std::string>& argv, int exit_code, const json& outputs,
                    const std::string& error) {
  json m;
  m["tool"] = "mpf";
  m["argv"] = argv;
  m["config"] = config_json(c);
  m["seed"] = c.seed;
  m["versions"] = {{"mpf", MPF_VERSION},
                   {"compiler", __VERSION__},
                   {"cxx_standard", __cplusplus},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"cli11", CLI11_VERSION}};
  m["threads"] = thread_count();
  m["finished_utc"] = utc_now();
  m["exit_code"] = exit_code;
  m["outputs"] = outputs;
  if (!error.empty()) m["error"] = error;
  write_json(m, fs::path(c.out) / "manifest.json");
}

// ---------------------------------------------------------------------------
// Shared setup

bool is_transformer(const std::string& model) { return model == "gtn" || model == "fastgtn"; }

HeteroGraph load_data(const RunConfig& c) {
  if (c.data.empty() == c.synth.empty()) throw UsageError("give exactly one of --data or --synth");
  if (!c.data.empty()) {
    std::vector<std::string> warnings;
    HeteroGraph g = load_graph(c.data, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    return g;
  }
  SynthSpec s = parse_synth(c.synth);
  if (c.synth.find("seed=") == std::string::npos) s.seed = c.seed;
  return synth_graph(s);
}

Hyper hyper_of(const RunConfig& c) {
  Hyper h;
  h.K = c.gt_layers;
  h.C = c.channels;
  h.L = c.layers;
  h.hidden = c.hidden;
  h.gamma = c.gamma;
  h.agg = parse_aggregation(c.agg);
  h.epsilon = c.epsilon;
  h.include_identity = !c.no_identity;
  h.nonlocal_n = c.nonlocal_n;
  return h;
}

std::string checkpoint_format(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  try {
    return json::parse(in).at("format").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// GTN/FastGTN parameters from --checkpoint, or freshly initialized from the flags.
ModelParams transformer_params(const RunConfig& c, const HeteroGraph& g) {
  if (!c.checkpoint.empty()) return load_checkpoint(c.checkpoint);
  if (!is_transformer(c.model)) throw UsageError("--model must be gtn or fastgtn here");
  return init_params(parse_model_kind(c.model), hyper_of(c), g, c.seed);
}

CandidateSet candidates_for(const HeteroGraph& g, const ModelParams& p) {
  CandidateSet cands = build_candidates(g, p.hyper.include_identity, p.hyper.epsilon);
  if (cands.names != p.candidate_names) throw ShapeError("the graph's edge types do not match the model");
  return cands;
}

json split_metrics(const Prediction& pred, const HeteroGraph& g) {
  json j;
  const std::pair<const char*, const std::vector<Index>*> splits[] = {
      {"train", &g.splits.train}, {"valid", &g.splits.valid}, {"test", &g.splits.test}};
  for (const auto& [name, nodes] : splits) {
    if (nodes->empty()) continue;
    j[name] = {{"loss", loss(pred, g.labels, *nodes)}, {"micro_f1", micro_f1(pred.logits, g.labels, *nodes)},
               {"nodes", nodes->size()}};
  }
  return j;
}

void write_predictions(const Prediction& pred, const HeteroGraph& g, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "node,label,predicted,confidence\n";
  for (std::size_t i = 0; i < pred.logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < pred.logits.cols(); ++c)
      if (pred.logits(i, c) > pred.logits(i, best)) best = c;
    out << i << ',' << (g.labels.empty() ? kUnlabeled : g.labels[i]) << ',' << best << ','
        << pred.confidence(i, best) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Subcommands

json cmd_train(const RunConfig& c) {
  const HeteroGraph g = load_data(c);
  const fs::path out(c.out);
  TrainConfig tc;
  tc.epochs = c.epochs;
  tc.adam.lr = c.lr;
  tc.dropout = c.dropout;
  tc.seed = c.seed;
  tc.exact_subgraph = c.exact_subgraph;
  if (c.batch_size > 0) {
    BatchSpec b;
    b.batch_size = c.batch_size;
    b.fanout = c.fanout;
    b.sampler = c.sampler == "layerwise" ? Sampler::layerwise : Sampler::neighborhood;
    tc.batch = b;
  }
  json m;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  if (is_transformer(c.model)) {
    const TrainResult r = train(g, init_params(parse_model_kind(c.model), hyper_of(c), g, c.seed), tc);
    save_checkpoint(r.best, out / "model.json");
    m = split_metrics(predict(candidates_for(g, r.best), g.features, r.best), g);
    history = r.history;
    best_epoch = r.best_epoch;
  } else {
    const BaselineParams init = init_baseline(parse_baseline_kind(c.model), g, c.hidden, c.layers, c.seed);
    const BaselineTrainResult r = train_baseline(g, init, tc);
    save_baseline(r.best, out / "model.json");
    m = split_metrics(baseline_predict(baseline_inputs(g, r.best), g.features, r.best), g);
    history = r.history;
    best_epoch = r.best_epoch;
  }
  write_history_csv(history, out / "history.csv");
  m["best_epoch"] = best_epoch;
  m["epochs"] = history.size();
  write_json(m, out / "metrics.json");
  if (m.contains("test")) {
    std::cout << "best epoch " << best_epoch << ", test micro-F1 " << m["test"]["micro_f1"].get<double>() << '\n';
  }
  return {"model.json", "history.csv", "metrics.json"};
}

json cmd_evaluate(const RunConfig& c) {
  if (c.checkpoint.empty()) throw UsageError("evaluate needs --checkpoint");
  const HeteroGraph g = load_data(c);
  Prediction pred;
  if (checkpoint_format(c.checkpoint) == "mpf-baseline") {
    const BaselineParams p = load_baseline(c.checkpoint);
    pred = baseline_predict(baseline_inputs(g, p), g.features, p);
  } else {
    const ModelParams p = load_checkpoint(c.checkpoint);
    pred = predict(candidates_for(g, p), g.features, p);
  }
  const fs::path out(c.out);
  const json m = split_metrics(pred, g);
  write_json(m, out / "metrics.json");
  write_predictions(pred, g, out / "predictions.csv");
  std::cout << m.dump(2) << '\n';
  return {"metrics.json", "predictions.csv"};
}

json cmd_transform(const RunConfig& c) {
  const HeteroGraph g = load_data(c);
  const ModelParams p = transformer_params(c, g);
  if (p.kind != ModelKind::gtn) throw PreconditionError("transform materializes GTN meta-path graphs; use a gtn model");
  const auto mats = gtn_transform(candidates_for(g, p), p);
  const fs::path out(c.out);
  json files = json::array(), summary = json::array();
  for (std::size_t ch = 0; ch < mats.size(); ++ch) {
    const std::string name = "transform_c" + std::to_string(ch) + ".csv";
    std::ofstream f(out / name);
    if (!f) throw std::runtime_error("cannot write " + (out / name).string());
    f.precision(17);
    f << "row,col,value\n";
    const SparseMatrix& a = mats[ch];
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const auto cols = a.row_cols(r);
      const auto vals = a.row_values(r);
      for (std::size_t q = 0; q < cols.size(); ++q) f << r << ',' << cols[q] << ',' << vals[q] << '\n';
    }
    files.push_back(name);
    summary.push_back({{"channel", ch}, {"nnz", a.nnz()}, {"row_stochastic", a.is_row_stochastic(1e-9)}});
    std::cout << "channel " << ch << ": " << a.nnz() << " nonzeros\n";
  }
  write_json(summary, out / "transform.json");
  files.push_back("transform.json");
  return files;
}

json cmd_interpret(const RunConfig& c) {
  const HeteroGraph g = load_data(c);
  const ModelParams p = transformer_params(c, g);
  std::optional<EndpointFilter> filter;
  if (c.between_targets) filter = between_targets(g, p);
  const MetaPathReport rep = rank_metapaths(p, c.channel, c.top_k, filter ? &*filter : nullptr, c.block);
  const fs::path out(c.out);
  const auto seq = [](const MetaPathEntry& e) {
    std::string s;
    for (std::size_t i = 0; i < e.type_sequence.size(); ++i) s += (i ? "-" : "") + e.type_sequence[i];
    return s.empty() ? std::string("(self)") : s;
  };
  {
    std::ofstream f(out / "metapaths.csv");
    if (!f) throw std::runtime_error("cannot write metapaths.csv");
    f.precision(17);
    f << "rank,metapath,length,score\n";
    for (std::size_t i = 0; i < rep.entries.size(); ++i)
      f << i + 1 << ',' << seq(rep.entries[i]) << ',' << rep.entries[i].length << ',' << rep.entries[i].score << '\n';
  }
  std::ostringstream text;
  text << "Top meta-paths, channel " << c.channel << (c.between_targets ? " (between target nodes)" : "") << '\n';
  for (std::size_t i = 0; i < rep.entries.size(); ++i)
    text << std::setw(3) << i + 1 << ".  " << std::left << std::setw(24) << seq(rep.entries[i]) << std::right
         << std::fixed << std::setprecision(6) << rep.entries[i].score << '\n';
  if (!rep.hop_ratios.empty()) {
    text << "Hop ratios:";
    for (std::size_t h = 0; h < rep.hop_ratios.size(); ++h) text << ' ' << h << ':' << rep.hop_ratios[h];
    text << '\n';
  }
  {
    std::ofstream f(out / "metapaths.txt");
    f << text.str();
  }
  std::cout << text.str();
  write_attention_csv(attention_table(p), out / "attention.csv");
  write_json({{"candidates", rep.candidates}, {"hop_ratios", rep.hop_ratios}, {"raw_total", rep.raw_total}},
             out / "interpret.json");
  return {"metapaths.csv", "metapaths.txt", "attention.csv", "interpret.json"};
}

json cmd_bench(const RunConfig& c) {
  Hyper h = hyper_of(c);
  if (c.k > 0) h.K = c.k;
  BenchOptions o;
  o.mode = c.mode == "training" ? BenchMode::training : BenchMode::inference;
  o.reps = c.reps;
  o.warmup = c.warmup;
  o.memory_limit = static_cast<std::size_t>(c.memory_limit_mb * 1024.0 * 1024.0);
  std::vector<BenchComparison> rows;
  if (!c.sweep.empty()) {
    if (!c.data.empty()) throw UsageError("--sweep needs --synth");
    SweepSpec s;
    s.sizes = c.sweep;
    s.synth = parse_synth(c.synth);
    if (c.synth.find("seed=") == std::string::npos) s.synth.seed = c.seed;
    s.hyper = h;
    s.options = o;
    s.param_seed = c.seed;
    rows = bench_sweep(s);
  } else {
    const HeteroGraph g = load_data(c);
    rows.push_back(bench_compare(g, init_params(ModelKind::gtn, h, g, c.seed), o));
  }
  const fs::path out(c.out);
  write_bench_csv(rows, out / "bench.csv");
  write_bench_json(rows, out / "bench.json");
  bool inexact = false;
  for (const auto& r : rows) {
    std::cout << "n=" << r.gtn.n << "  gtn " << r.gtn.status << "  fastgtn " << r.fast.status << "  speedup "
              << r.speedup() << "x  memory " << r.memory_ratio() << "x  conf_diff " << r.conf_diff << '\n';
    inexact = inexact || (r.gtn.ok() && r.fast.ok() && !(r.conf_diff <= 1e-10));
  }
  if (inexact) throw VerificationFailure("GTN and FastGTN confidences differ by more than 1e-10");
  return {"bench.csv", "bench.json"};
}

json cmd_verify(const RunConfig& c) {
  verify::Options o;
  o.quick = c.quick;
  o.seed = c.seed == 0 ? o.seed : c.seed;
  if (!c.cora.empty()) o.cora_dir = c.cora;
  else if (const char* d = std::getenv("MPF_CORA_DIR"); d && *d) o.cora_dir = d;
  o.out_dir = c.out;
  std::vector<int> ids = c.only;
  if (ids.empty()) {
    if (c.quick) ids.assign(std::begin(verify::kQuickChecks), std::end(verify::kQuickChecks));
    else
      for (int id = 1; id <= verify::kChecks; ++id) ids.push_back(id);
  }
  json results = json::array();
  int failed = 0;
  for (int id : ids) {
    if (id < 1 || id > verify::kChecks) throw UsageError("no check numbered " + std::to_string(id));
    const auto r = verify::run_checks(std::vector<int>{id}, o).front();
    std::cout << verify::format_line(r) << std::endl;
    failed += r.failed();
    results.push_back({{"id", r.id}, {"name", r.name}, {"status", r.status}, {"metric", r.metric},
                       {"tolerance", r.tolerance}, {"seconds", r.seconds}, {"detail", r.detail}});
  }
  write_json(results, fs::path(c.out) / "verify.json");
  if (failed) throw VerificationFailure(std::to_string(failed) + " check(s) failed");
  return {"verify.json"};
}

void add_data_options(CLI::App* sub, RunConfig& c) {
  auto* data = sub->add_option("--data", c.data, "Dataset directory (read only)");
  auto* synth = sub->add_option("--synth", c.synth, "Synthetic graph, e.g. \"n=5000 types=3 deg=4\"");
  data->excludes(synth);
}

void add_model_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--model", c.model, "gtn, fastgtn, gcn, mixhop or rgcn")
      ->check(CLI::IsMember({"gtn", "fastgtn", "gcn", "mixhop", "rgcn"}));
  sub->add_option("--layers", c.layers, "GNN layers (GTN) or blocks (FastGTN)")->check(CLI::PositiveNumber);
  sub->add_option("--channels", c.channels, "Channels C")->check(CLI::PositiveNumber);
  sub->add_option("--gt-layers", c.gt_layers, "Selections per chain K (longest meta-path)")->check(CLI::PositiveNumber);
  sub->add_option("--hidden", c.hidden, "Hidden width")->check(CLI::PositiveNumber);
  sub->add_option("--gamma", c.gamma, "GTN self-loop weight, FastGTN residual coefficient")->check(CLI::Range(0.0, 1e6));
  sub->add_option("--nonlocal-n", c.nonlocal_n, "Non-local neighbours per row, 0 disables (FastGTN)");
  sub->add_option("--epsilon", c.epsilon, "Self-loop weight for empty rows")->check(CLI::Range(0.0, 1e6));
  sub->add_option("--agg", c.agg, "Channel aggregation")->check(CLI::IsMember({"concat", "mean", "sum"}));
  sub->add_flag("--no-identity", c.no_identity, "Leave I out of the candidates");
  sub->add_option("--seed", c.seed, "Seed for initialization, dropout, sampling and synthetic data");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph transformer networks with exact implicit meta-path transforms"};
  app.set_version_flag("--version", std::string(MPF_VERSION));
  app.require_subcommand(1);
  RunConfig c;

  auto* train = app.add_subcommand("train", "Train a model; writes model.json, history.csv, metrics.json");
  add_data_options(train, c);
  add_model_options(train, c);
  train->add_option("--epochs", c.epochs, "Training epochs");
  train->add_option("--lr", c.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  train->add_option("--dropout", c.dropout, "Dropout rate in [0, 1)")->check(CLI::Range(0.0, 0.999999));
  train->add_option("--batch-size", c.batch_size, "Targets per mini-batch, 0 trains full-batch");
  train->add_option("--fanout", c.fanout, "Per-hop fanout, comma separated")->delimiter(',');
  train->add_option("--sampler", c.sampler, "Mini-batch sampler")->check(CLI::IsMember({"neighborhood", "layerwise"}));
  train->add_flag("--exact-subgraph", c.exact_subgraph, "Feed subgraphs the full graph's normalized candidates");

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on every split");
  add_data_options(evaluate, c);
  evaluate->add_option("--checkpoint", c.checkpoint, "Model file from train")->required()->check(CLI::ExistingFile);

  auto* transform = app.add_subcommand("transform", "Write the GTN meta-path adjacency of every channel");
  add_data_options(transform, c);
  add_model_options(transform, c);
  transform->add_option("--checkpoint", c.checkpoint, "GTN model file; fresh parameters when absent")
      ->check(CLI::ExistingFile);

  auto* interpret = app.add_subcommand("interpret", "Rank meta-paths and export attention");
  add_data_options(interpret, c);
  add_model_options(interpret, c);
  interpret->add_option("--checkpoint", c.checkpoint, "GTN or FastGTN model file")->check(CLI::ExistingFile);
  interpret->add_option("--channel", c.channel, "Channel to report");
  interpret->add_option("--block", c.block, "FastGTN block to report");
  interpret->add_option("--top-k", c.top_k, "Meta-paths to keep")->check(CLI::PositiveNumber);
  interpret->add_flag("--between-targets", c.between_targets, "Keep paths between target-type nodes");

  auto* bench = app.add_subcommand("bench", "Time and memory of explicit GTN against FastGTN");
  add_data_options(bench, c);
  add_model_options(bench, c);
  bench->add_option("--k", c.k, "Selections per chain (overrides --gt-layers)");
  bench->add_option("--reps", c.reps, "Timed repetitions, at least 3")->check(CLI::Range(3, 1000000));
  bench->add_option("--warmup", c.warmup, "Untimed warm-up runs");
  bench->add_option("--mode", c.mode, "What to time")->check(CLI::IsMember({"inference", "training"}));
  bench->add_option("--sweep", c.sweep, "Graph sizes, comma separated (with --synth)")->delimiter(',');
  bench->add_option("--memory-limit-mb", c.memory_limit_mb, "Soft cap on explicit-side memory, 0 = none");

  auto* verify_cmd = app.add_subcommand("verify", "Run the numbered equivalence and contract checks");
  verify_cmd->add_flag("--quick", c.quick, "Smaller instances, no sweep and no dataset run");
  verify_cmd->add_option("--cora", c.cora, "Cora-format directory for the dataset check")->check(CLI::ExistingDirectory);
  verify_cmd->add_option("--only", c.only, "Check numbers, comma separated")->delimiter(',');
  verify_cmd->add_option("--seed", c.seed, "Seed of the random instances");

  for (auto* sub : {train, evaluate, transform, interpret, bench, verify_cmd})
    sub->add_option("--out", c.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  c.command = app.get_subcommands().front()->get_name();
  const std::vector<std::string> args(argv, argv + argc);

  int code = 0;
  json outputs = json::array();
  std::string error;
  try {
    fs::create_directories(c.out);
    if (c.command == "train") outputs = cmd_train(c);
    else if (c.command == "evaluate") outputs = cmd_evaluate(c);
    else if (c.command == "transform") outputs = cmd_transform(c);
    else if (c.command == "interpret") outputs = cmd_interpret(c);
    else if (c.command == "bench") outputs = cmd_bench(c);
    else outputs = cmd_verify(c);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nRun with --help for usage.\n";
    code = 2;
    error = e.what();
  } catch (const VerificationFailure& e) {
    std::cerr << "verification failed: " << e.what() << '\n';
    code = 3;
    error = e.what();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = 1;
    error = e.what();
  }
  try {
    if (fs::is_directory(c.out)) write_manifest(c, args, code, outputs, error);
  } catch (const std::exception& e) {
    std::cerr << "error: cannot write manifest: " << e.what() << '\n';
    if (code == 0) code = 1;
  }
  return code;
}
