#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jcl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace jcl;

namespace {

// ---------------------------------------------------------------------------
// Flat key = value run configuration. One registry drives parsing, flag
// overrides and the effective-config echo, so a typo'd key is always an error
// and the echoed file always round-trips.

struct RunConfig {
  uint32_t sets = 16;
  uint32_t ways = 4;
  uint64_t block_bytes = 64;
  uint64_t page_bytes = 4096;
  uint32_t prefetch_degree = 1;
  bool prefetch_on_miss_only = false;

  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  uint64_t history_len = 16;
  double vocab_fraction = 0.5;
  uint64_t pair_window = 16;
  uint32_t pair_negatives = 4;
  uint64_t pair_seed = 1;

  uint64_t embed_dim = 32;
  uint64_t hidden_dim = 64;
  uint64_t ctx_dim = 8;
  uint64_t shared_dim = 32;
  uint64_t proj_dim = 32;
  double tau = 0.1;
  double lambda_r = 1.0;
  double lambda_p = 1.0;

  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t batch_size = 32;
  uint32_t max_epochs = 50;
  uint32_t patience = 5;
  double pretrain_lr = 2e-2;
  uint64_t pretrain_epochs = 16;
  uint64_t pretrain_batch_groups = 32;
  bool finetune = false;

  uint64_t seed = 1;
};

uint64_t parse_u64(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("invalid value for " + key + ": " + v);
  return out;
}

double parse_f64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size())
    throw ConfigError("invalid value for " + key + ": " + v);
  return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("invalid value for " + key + ": " + v);
}

std::string fmt_f64(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct KeyDef {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
KeyDef int_key(const std::string& name, T RunConfig::* f) {
  return {name,
          [f](const RunConfig& c) { return std::to_string(c.*f); },
          [f, name](RunConfig& c, const std::string& v) {
            c.*f = static_cast<T>(parse_u64(name, v));
          }};
}

KeyDef dbl_key(const std::string& name, double RunConfig::* f) {
  return {name, [f](const RunConfig& c) { return fmt_f64(c.*f); },
          [f, name](RunConfig& c, const std::string& v) {
            c.*f = parse_f64(name, v);
          }};
}

KeyDef bool_key(const std::string& name, bool RunConfig::* f) {
  return {name,
          [f](const RunConfig& c) { return c.*f ? "true" : "false"; },
          [f, name](RunConfig& c, const std::string& v) {
            c.*f = parse_bool(name, v);
          }};
}

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      int_key("sets", &RunConfig::sets),
      int_key("ways", &RunConfig::ways),
      int_key("block_bytes", &RunConfig::block_bytes),
      int_key("page_bytes", &RunConfig::page_bytes),
      int_key("prefetch_degree", &RunConfig::prefetch_degree),
      bool_key("prefetch_on_miss_only", &RunConfig::prefetch_on_miss_only),
      dbl_key("train_fraction", &RunConfig::train_fraction),
      dbl_key("val_fraction", &RunConfig::val_fraction),
      dbl_key("test_fraction", &RunConfig::test_fraction),
      int_key("history_len", &RunConfig::history_len),
      dbl_key("vocab_fraction", &RunConfig::vocab_fraction),
      int_key("pair_window", &RunConfig::pair_window),
      int_key("pair_negatives", &RunConfig::pair_negatives),
      int_key("pair_seed", &RunConfig::pair_seed),
      int_key("embed_dim", &RunConfig::embed_dim),
      int_key("hidden_dim", &RunConfig::hidden_dim),
      int_key("ctx_dim", &RunConfig::ctx_dim),
      int_key("shared_dim", &RunConfig::shared_dim),
      int_key("proj_dim", &RunConfig::proj_dim),
      dbl_key("tau", &RunConfig::tau),
      dbl_key("lambda_r", &RunConfig::lambda_r),
      dbl_key("lambda_p", &RunConfig::lambda_p),
      dbl_key("lr", &RunConfig::lr),
      dbl_key("beta1", &RunConfig::beta1),
      dbl_key("beta2", &RunConfig::beta2),
      dbl_key("adam_eps", &RunConfig::adam_eps),
      int_key("batch_size", &RunConfig::batch_size),
      int_key("max_epochs", &RunConfig::max_epochs),
      int_key("patience", &RunConfig::patience),
      dbl_key("pretrain_lr", &RunConfig::pretrain_lr),
      int_key("pretrain_epochs", &RunConfig::pretrain_epochs),
      int_key("pretrain_batch_groups", &RunConfig::pretrain_batch_groups),
      bool_key("finetune", &RunConfig::finetune),
      int_key("seed", &RunConfig::seed),
  };
  return defs;
}

void apply_key(RunConfig& c, const std::string& key, const std::string& value) {
  for (const KeyDef& d : key_defs()) {
    if (d.name == key) {
      d.set(c, value);
      return;
    }
  }
  throw ConfigError("unknown config key: " + key);
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void parse_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    apply_key(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void apply_overrides(RunConfig& c, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got: " + s);
    apply_key(c, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
}

// Every key in registry order, one per line.
std::string echo_config(const RunConfig& c) {
  std::string out;
  for (const KeyDef& d : key_defs()) out += d.name + " = " + d.get(c) + "\n";
  return out;
}

// Digest over everything except the seed: replicates of one configuration
// share it, the -s<seed> suffix separates them.
std::string config_digest(const RunConfig& c) {
  std::string text;
  for (const KeyDef& d : key_defs())
    if (d.name != "seed") text += d.name + " = " + d.get(c) + "\n";
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

BlockGeometry geometry_of(const RunConfig& c) {
  BlockGeometry g;
  g.block_size_bytes = c.block_bytes;
  g.page_size_bytes = c.page_bytes;
  return g;
}

CacheConfig cache_of(const RunConfig& c) {
  CacheConfig cc;
  cc.num_sets = c.sets;
  cc.associativity = c.ways;
  cc.geometry = geometry_of(c);
  cc.prefetch_degree = c.prefetch_degree;
  cc.prefetch_on_miss_only = c.prefetch_on_miss_only;
  return cc;
}

DatasetConfig dataset_of(const RunConfig& c) {
  DatasetConfig d;
  d.split = {c.train_fraction, c.val_fraction, c.test_fraction};
  d.history_len = c.history_len;
  d.vocab_fraction = c.vocab_fraction;
  d.pair_window = c.pair_window;
  d.pair_negatives = c.pair_negatives;
  d.pair_seed = c.pair_seed;
  return d;
}

ModelConfig model_of(const RunConfig& c) {
  ModelConfig m;
  m.history_len = c.history_len;
  m.embed_dim = c.embed_dim;
  m.hidden_dim = c.hidden_dim;
  m.ctx_dim = c.ctx_dim;
  m.shared_dim = c.shared_dim;
  m.proj_dim = c.proj_dim;
  m.tau = c.tau;
  m.lambda_r = c.lambda_r;
  m.lambda_p = c.lambda_p;
  return m;
}

TrainConfig traincfg_of(const RunConfig& c) {
  TrainConfig t;
  t.adam = {c.lr, c.beta1, c.beta2, c.adam_eps};
  t.batch_size = c.batch_size;
  t.max_epochs = c.max_epochs;
  t.patience = c.patience;
  t.pretrain_adam = {c.pretrain_lr, c.beta1, c.beta2, c.adam_eps};
  t.pretrain_epochs = c.pretrain_epochs;
  t.pretrain_batch_groups = c.pretrain_batch_groups;
  t.finetune = c.finetune;
  return t;
}

// ---------------------------------------------------------------------------
// File plumbing.

void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw DataError("cannot write " + tmp.string());
    f << content;
    if (!f.good()) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<LabeledInsertion> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels file: " + path);
  return parse_labels_csv(in);
}

std::string vocab_to_string(const Vocab& v) {
  std::string out;
  for (uint32_t id = 2; id < v.size(); ++id) {
    if (id > 2) out += ',';
    out += std::to_string(v.value_of(id));
  }
  return out;
}

Vocab vocab_from_string(const std::string& s) {
  Vocab v;
  v.values = {0, 0};
  size_t at = 0;
  while (at < s.size()) {
    size_t comma = s.find(',', at);
    if (comma == std::string::npos) comma = s.size();
    uint64_t value = parse_u64("vocab", s.substr(at, comma - at));
    v.ids[value] = v.size();
    v.values.push_back(value);
    at = comma + 1;
  }
  return v;
}

const std::string& meta_at(const nn::MetaMap& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end())
    throw DataError("checkpoint is missing metadata key: " + key);
  return it->second;
}

std::string trace_display_name(const std::string& flag,
                               const std::string& trace_path) {
  if (!flag.empty()) return flag;
  return fs::path(trace_path).stem().string();
}

void write_eval_report(const fs::path& path, const std::string& mode,
                       const std::string& trace, const EvalReport& r) {
  std::ostringstream body;
  export_eval_csv(r, body);
  std::string text = body.str();
  size_t nl = text.find('\n');
  std::string out = "mode,trace," + text.substr(0, nl + 1) + mode + ',' +
                    trace + ',' + text.substr(nl + 1);
  write_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Commands.

struct GenArgs {
  std::string kind;
  GenParams params;
  uint64_t seed = 1;
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  WorkloadKind kind = workload_kind_from_name(a.kind);
  Trace t = gen_synthetic(kind, a.params, a.seed);
  std::ostringstream body;
  serialize_trace(t, body);
  write_atomic(a.out, body.str());
  std::string sidecar;
  sidecar += "kind = " + a.kind + "\n";
  sidecar += "length = " + std::to_string(a.params.length) + "\n";
  sidecar += "working_set = " + std::to_string(a.params.working_set) + "\n";
  sidecar += "stride = " + std::to_string(a.params.stride) + "\n";
  sidecar += "phases = " + std::to_string(a.params.phases) + "\n";
  sidecar += "phase_len = " + std::to_string(a.params.phase_len) + "\n";
  sidecar += "seed = " + std::to_string(a.seed) + "\n";
  write_atomic(a.out + ".params", sidecar);
  std::cout << "out " << a.out << "\n";
  std::cout << "accesses " << t.size() << "\n";
  return 0;
}

struct LabelArgs {
  std::string trace;
  RunConfig rc;
  std::string out;
};

int cmd_label(const LabelArgs& a) {
  Trace t = load_trace_file(a.trace, geometry_of(a.rc));
  CacheConfig cc = cache_of(a.rc);
  cc.validate();
  BeladyResult r = belady_simulate(t, cc);
  std::ostringstream body;
  export_labels_csv(r.labels, body);
  write_atomic(a.out, body.str());
  size_t friendly = 0;
  for (const LabeledInsertion& l : r.labels)
    friendly += l.label == CacheLabel::CacheFriendly;
  double n = double(r.labels.empty() ? 1 : r.labels.size());
  char buf[64];
  std::cout << "accesses " << t.size() << "\n";
  std::cout << "hits " << r.hits << "\n";
  std::cout << "misses " << r.misses << "\n";
  std::cout << "insertions " << r.labels.size() << "\n";
  std::snprintf(buf, sizeof buf, "%.6f", double(friendly) / n);
  std::cout << "friendly_fraction " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.6f",
                double(r.labels.size() - friendly) / n);
  std::cout << "averse_fraction " << buf << "\n";
  return 0;
}

struct SimArgs {
  std::string trace;
  RunConfig rc;
  std::string policy = "lru";
  std::string prefetcher = "none";
  std::string checkpoint;
  std::string labels;
  std::string out;
};

int cmd_simulate(const SimArgs& a) {
  CacheConfig cc = cache_of(a.rc);
  cc.validate();
  Trace t = load_trace_file(a.trace, cc.geometry);

  std::vector<LabeledInsertion> oracle_labels;
  std::unique_ptr<ReplacementPolicy> policy;
  if (a.policy == "lru") {
    policy = std::make_unique<LruPolicy>();
  } else if (a.policy == "mru") {
    policy = std::make_unique<MruEvictPolicy>();
  } else if (a.policy == "oracle") {
    if (a.labels.empty())
      throw ConfigError("--policy oracle requires --labels");
    oracle_labels = load_labels(a.labels);
    policy = std::make_unique<OracleLabelPolicy>(oracle_labels);
  } else if (a.policy == "model") {
    if (a.checkpoint.empty())
      throw ConfigError("--policy model requires --checkpoint");
    auto [store, meta] = nn::load_checkpoint_file(a.checkpoint);
    ModelKind kind;
    ModelConfig mc = config_from_meta(meta, &kind);
    if (kind == ModelKind::BaselinePf) kind = ModelKind::BaselineRepl;
    BlockGeometry g;
    g.block_size_bytes = parse_u64("geometry", meta_at(meta, "geometry.block_bytes"));
    g.page_size_bytes = parse_u64("geometry", meta_at(meta, "geometry.page_bytes"));
    policy = std::make_unique<ModelPolicy>(
        std::move(store), mc, kind, vocab_from_string(meta_at(meta, "vocab.pc")),
        vocab_from_string(meta_at(meta, "vocab.page")), g);
  } else {
    throw ConfigError("unknown policy: " + a.policy);
  }

  std::unique_ptr<Prefetcher> prefetcher;
  if (a.prefetcher == "stride")
    prefetcher = std::make_unique<StridePrefetcher>(cc.prefetch_degree);
  else if (a.prefetcher == "next-line")
    prefetcher = std::make_unique<NextLinePrefetcher>(cc.prefetch_degree);
  else if (a.prefetcher != "none")
    throw ConfigError("unknown prefetcher: " + a.prefetcher);

  SimResult r = simulate(t, cc, *policy, prefetcher.get());
  if (!a.out.empty()) {
    std::ostringstream body;
    export_events_csv(r, body);
    write_atomic(a.out, body.str());
  }
  char buf[64];
  std::cout << "accesses " << t.size() << "\n";
  std::cout << "policy " << policy->name() << "\n";
  std::cout << "demand_hits " << r.demand_hits << "\n";
  std::cout << "demand_misses " << r.demand_misses << "\n";
  std::cout << "prefetch_issued " << r.prefetch_issued << "\n";
  std::cout << "prefetch_useful " << r.prefetch_useful << "\n";
  std::snprintf(buf, sizeof buf, "%.6f", useful_prefetch_ratio(r));
  std::cout << "useful_ratio " << buf << "\n";
  return 0;
}

struct TrainArgs {
  std::string trace;
  std::string labels;
  std::string mode;
  RunConfig rc;
  std::string name;
  std::string out;
};

int cmd_train(const TrainArgs& a) {
  TrainMode mode = train_mode_from_name(a.mode);
  CacheConfig cc = cache_of(a.rc);
  cc.validate();
  Trace trace = load_trace_file(a.trace, cc.geometry);
  std::vector<LabeledInsertion> labels = load_labels(a.labels);

  LruPolicy lru;
  SimResult sim = simulate(trace, cc, lru);
  Dataset data = build_dataset(sim.events, labels, cc.geometry, dataset_of(a.rc));
  ModelConfig mc = model_of(a.rc);
  bind_vocab(mc, data);

  std::string digest = config_digest(a.rc);
  TrainResult r = train_model(mode, data, mc, traincfg_of(a.rc), a.rc.seed);
  EvalReport er = evaluate_accuracy(r.params, mc, mode, data.samples.test,
                                    a.rc.seed, digest);

  std::string trace_name = trace_display_name(a.name, a.trace);
  fs::path run_dir =
      fs::path(a.out) / (digest + "-s" + std::to_string(a.rc.seed));
  fs::create_directories(run_dir);

  write_atomic(run_dir / "config.txt", echo_config(a.rc));

  nn::MetaMap meta = r.meta;
  meta["data.train_fraction"] = fmt_f64(a.rc.train_fraction);
  meta["data.val_fraction"] = fmt_f64(a.rc.val_fraction);
  meta["data.test_fraction"] = fmt_f64(a.rc.test_fraction);
  meta["data.vocab_fraction"] = fmt_f64(a.rc.vocab_fraction);
  meta["data.pair_window"] = std::to_string(a.rc.pair_window);
  meta["data.pair_negatives"] = std::to_string(a.rc.pair_negatives);
  meta["data.pair_seed"] = std::to_string(a.rc.pair_seed);
  meta["cache.sets"] = std::to_string(a.rc.sets);
  meta["cache.ways"] = std::to_string(a.rc.ways);
  meta["geometry.block_bytes"] = std::to_string(a.rc.block_bytes);
  meta["geometry.page_bytes"] = std::to_string(a.rc.page_bytes);
  meta["vocab.pc"] = vocab_to_string(data.pc_vocab);
  meta["vocab.page"] = vocab_to_string(data.page_vocab);
  meta["run.digest"] = digest;
  meta["run.trace"] = trace_name;
  std::ostringstream ck;
  nn::save_checkpoint(r.params, meta, ck);
  write_atomic(run_dir / "checkpoint.bin", ck.str());

  std::ostringstream hist;
  export_history_csv(r.history, hist);
  write_atomic(run_dir / "history.csv", hist.str());

  write_eval_report(run_dir / "eval.csv", a.mode, trace_name, er);

  if (!r.pretrain_curve.empty()) {
    std::ostringstream curve;
    curve << "epoch,loss\n";
    for (size_t i = 0; i < r.pretrain_curve.size(); ++i) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.6f", r.pretrain_curve[i]);
      curve << i << ',' << buf << '\n';
    }
    write_atomic(run_dir / "pretrain_curve.csv", curve.str());
  }

  char buf[64];
  std::cout << "run_dir " << run_dir.string() << "\n";
  std::cout << "mode " << a.mode << "\n";
  std::cout << "epochs " << r.history.size() << "\n";
  std::cout << "best_epoch " << r.best_epoch << "\n";
  std::snprintf(buf, sizeof buf, "%.6f", r.best_val_accuracy);
  std::cout << "best_val_accuracy " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.6f", er.accuracy);
  std::cout << "test_accuracy " << buf << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string trace;
  std::string labels;
  std::string name;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  auto [store, meta] = nn::load_checkpoint_file(a.checkpoint);
  ModelKind kind;
  ModelConfig mc = config_from_meta(meta, &kind);
  TrainMode mode = train_mode_from_name(meta_at(meta, "train.mode"));

  BlockGeometry g;
  g.block_size_bytes =
      parse_u64("geometry", meta_at(meta, "geometry.block_bytes"));
  g.page_size_bytes =
      parse_u64("geometry", meta_at(meta, "geometry.page_bytes"));
  CacheConfig cc;
  cc.num_sets =
      static_cast<uint32_t>(parse_u64("cache", meta_at(meta, "cache.sets")));
  cc.associativity =
      static_cast<uint32_t>(parse_u64("cache", meta_at(meta, "cache.ways")));
  cc.geometry = g;
  cc.validate();

  Trace trace = load_trace_file(a.trace, g);
  std::vector<LabeledInsertion> labels = load_labels(a.labels);
  LruPolicy lru;
  SimResult sim = simulate(trace, cc, lru);

  Vocab pc_vocab = vocab_from_string(meta_at(meta, "vocab.pc"));
  Vocab page_vocab = vocab_from_string(meta_at(meta, "vocab.page"));
  std::vector<AlignedSample> aligned = extract_aligned_samples(
      sim.events, labels, pc_vocab, page_vocab, g, mc.history_len);
  SplitSpec spec{parse_f64("meta", meta_at(meta, "data.train_fraction")),
                 parse_f64("meta", meta_at(meta, "data.val_fraction")),
                 parse_f64("meta", meta_at(meta, "data.test_fraction"))};
  Split<AlignedSample> split =
      split_dataset(std::span<const AlignedSample>(aligned), spec);

  uint64_t seed = parse_u64("meta", meta_at(meta, "train.seed"));
  EvalReport er = evaluate_accuracy(store, mc, mode, split.test, seed,
                                    meta_at(meta, "run.digest"));
  std::string trace_name = trace_display_name(a.name, a.trace);
  write_eval_report(a.out, train_mode_name(mode), trace_name, er);

  char buf[64];
  std::cout << "mode " << train_mode_name(mode) << "\n";
  std::cout << "trace " << trace_name << "\n";
  std::cout << "test_total " << er.total << "\n";
  std::snprintf(buf, sizeof buf, "%.6f", er.accuracy);
  std::cout << "accuracy " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.6f", er.oov_rate);
  std::cout << "oov_rate " << buf << "\n";
  return 0;
}

struct ReportArgs {
  std::vector<std::string> reports;
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  struct Row {
    TrainMode mode;
    std::string trace;
    double accuracy;
  };
  std::vector<Row> rows;
  for (const std::string& path : a.reports) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open report: " + path);
    std::string header;
    if (!std::getline(in, header) ||
        header.rfind("mode,trace,accuracy", 0) != 0)
      throw DataError(path + ": expected a mode,trace,accuracy,... header");
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      size_t c1 = line.find(',');
      size_t c2 = line.find(',', c1 + 1);
      size_t c3 = line.find(',', c2 + 1);
      if (c1 == std::string::npos || c2 == std::string::npos)
        throw DataError(path + ": malformed row: " + line);
      if (c3 == std::string::npos) c3 = line.size();
      Row row;
      row.mode = train_mode_from_name(line.substr(0, c1));
      row.trace = line.substr(c1 + 1, c2 - c1 - 1);
      row.accuracy = parse_f64("accuracy", line.substr(c2 + 1, c3 - c2 - 1));
      rows.push_back(std::move(row));
    }
  }
  if (rows.empty()) throw DataError("no report rows found");

  std::vector<TrainMode> modes;
  std::vector<std::string> traces;
  for (const Row& r : rows) {
    if (std::find(modes.begin(), modes.end(), r.mode) == modes.end())
      modes.push_back(r.mode);
    if (std::find(traces.begin(), traces.end(), r.trace) == traces.end())
      traces.push_back(r.trace);
  }
  std::sort(modes.begin(), modes.end());

  AblationTable t;
  t.modes = modes;
  t.trace_names = traces;
  t.cells.assign(modes.size(), std::vector<AblationCell>(traces.size()));
  std::set<std::pair<size_t, size_t>> filled;
  for (const Row& r : rows) {
    size_t mi = size_t(std::find(modes.begin(), modes.end(), r.mode) -
                       modes.begin());
    size_t ti = size_t(std::find(traces.begin(), traces.end(), r.trace) -
                       traces.begin());
    if (!filled.insert({mi, ti}).second)
      throw DataError("duplicate report cell: " +
                      std::string(train_mode_name(r.mode)) + " on " + r.trace);
    t.cells[mi][ti].median_accuracy = r.accuracy;
    t.cells[mi][ti].per_seed = {r.accuracy};
  }
  std::string missing;
  for (size_t mi = 0; mi < modes.size(); ++mi)
    for (size_t ti = 0; ti < traces.size(); ++ti)
      if (!filled.count({mi, ti}))
        missing += std::string(missing.empty() ? "" : ", ") +
                   train_mode_name(modes[mi]) + " lacks " + traces[ti];
  if (!missing.empty())
    throw DataError("report trace sets disagree: " + missing);

  std::string md = ablation_markdown(t);
  std::cout << md;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_atomic(fs::path(a.out) / "report.md", md);
    std::ostringstream csv;
    export_ablation_csv(t, csv);
    write_atomic(fs::path(a.out) / "report.csv", csv.str());
  }
  return 0;
}

void add_cache_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--sets", rc.sets, "number of cache sets");
  cmd->add_option("--ways", rc.ways, "associativity");
  cmd->add_option("--block-bytes", rc.block_bytes, "cache block size");
  cmd->add_option("--page-bytes", rc.page_bytes, "page size");
  cmd->add_option("--prefetch-degree", rc.prefetch_degree,
                  "prefetch fills per trigger");
  cmd->add_flag("--prefetch-on-miss-only", rc.prefetch_on_miss_only,
                "prefetcher observes only demand misses");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trace-driven cache replacement + prefetching laboratory"};
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* cgen = app.add_subcommand("gen", "generate a synthetic trace");
  cgen->add_option("--kind", gen.kind, "loop|stream|stride|mixed|coupled")
      ->required();
  cgen->add_option("--length", gen.params.length, "accesses to emit");
  cgen->add_option("--working-set", gen.params.working_set,
                   "loop region size in blocks");
  cgen->add_option("--stride", gen.params.stride, "block stride");
  cgen->add_option("--phases", gen.params.phases, "phase count");
  cgen->add_option("--phase-len", gen.params.phase_len, "accesses per phase");
  cgen->add_option("--seed", gen.seed, "generator seed");
  cgen->add_option("-o,--out", gen.out, "trace CSV path")->required();

  LabelArgs label;
  CLI::App* clabel =
      app.add_subcommand("label", "compute offline-optimal labels");
  clabel->add_option("--trace", label.trace, "trace CSV")->required();
  add_cache_flags(clabel, label.rc);
  clabel->add_option("-o,--out", label.out, "labels CSV path")->required();

  SimArgs sim;
  CLI::App* csim = app.add_subcommand("simulate", "run a trace through the cache");
  csim->add_option("--trace", sim.trace, "trace CSV")->required();
  add_cache_flags(csim, sim.rc);
  csim->add_option("--policy", sim.policy, "lru|mru|oracle|model");
  csim->add_option("--prefetcher", sim.prefetcher, "none|stride|next-line");
  csim->add_option("--checkpoint", sim.checkpoint, "model checkpoint");
  csim->add_option("--labels", sim.labels, "labels CSV for --policy oracle");
  csim->add_option("-o,--out", sim.out, "events CSV path");

  TrainArgs train;
  std::vector<std::string> overrides;
  std::string config_path;
  uint64_t seed_flag = 0;
  CLI::App* ctrain = app.add_subcommand("train", "train one regime end to end");
  ctrain->add_option("--trace", train.trace, "trace CSV")->required();
  ctrain->add_option("--labels", train.labels, "labels CSV")->required();
  ctrain->add_option("--mode", train.mode, "baseline|joint|contrastive")
      ->required();
  ctrain->add_option("--config", config_path, "flat key = value config file");
  ctrain->add_option("--set", overrides, "override: key=value");
  CLI::Option* oseed = ctrain->add_option("--seed", seed_flag, "run seed");
  ctrain->add_option("--name", train.name, "trace name in reports");
  ctrain->add_option("-o,--out", train.out, "parent output directory")
      ->required();

  EvalArgs eval;
  CLI::App* ceval =
      app.add_subcommand("eval", "evaluate a checkpoint on a labeled trace");
  ceval->add_option("--checkpoint", eval.checkpoint, "checkpoint file")
      ->required();
  ceval->add_option("--trace", eval.trace, "trace CSV")->required();
  ceval->add_option("--labels", eval.labels, "labels CSV")->required();
  ceval->add_option("--name", eval.name, "trace name in reports");
  ceval->add_option("-o,--out", eval.out, "eval CSV path")->required();

  ReportArgs report;
  CLI::App* creport =
      app.add_subcommand("report", "combine eval reports into a table");
  creport->add_option("reports", report.reports, "eval CSV files")
      ->required();
  creport->add_option("-o,--out", report.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cgen->parsed()) return cmd_gen(gen);
    if (clabel->parsed()) return cmd_label(label);
    if (csim->parsed()) return cmd_simulate(sim);
    if (ctrain->parsed()) {
      if (!config_path.empty()) parse_config_file(train.rc, config_path);
      apply_overrides(train.rc, overrides);
      if (oseed->count() > 0) train.rc.seed = seed_flag;
      return cmd_train(train);
    }
    if (ceval->parsed()) return cmd_eval(eval);
    if (creport->parsed()) return cmd_report(report);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
