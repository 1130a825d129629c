#include "jcl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "jcl/rng.hpp"

namespace jcl {

using nn::Tape;

SplitSizes split_sizes(size_t n, const SplitSpec& spec) {
  if (spec.train_fraction <= 0.0 || spec.val_fraction <= 0.0 ||
      spec.test_fraction <= 0.0)
    throw ConfigError("split fractions must be positive");
  double sum = spec.train_fraction + spec.val_fraction + spec.test_fraction;
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
  if (n < 5)
    throw DataError("need at least 5 samples to split, got " +
                    std::to_string(n));
  SplitSizes s;
  // The nudge keeps exact products like 0.6 * 10 from flooring to 5.
  s.train = static_cast<size_t>(spec.train_fraction * double(n) + 1e-9);
  s.val = static_cast<size_t>(spec.val_fraction * double(n) + 1e-9);
  s.test = n - s.train - s.val;
  if (s.train == 0 || s.val == 0 || s.test == 0)
    throw DataError("split leaves an empty subset");
  return s;
}

Dataset build_dataset(std::span<const CacheEvent> events,
                      std::span<const LabeledInsertion> labels,
                      const BlockGeometry& geometry, const DatasetConfig& cfg) {
  if (cfg.history_len == 0) throw ConfigError("history_len must be >= 1");
  if (!(cfg.vocab_fraction > 0.0 && cfg.vocab_fraction <= 1.0))
    throw ConfigError("vocab_fraction must be in (0, 1]");
  geometry.validate();
  SplitSizes sizes = split_sizes(labels.size(), cfg.split);

  // Demand position of the first validation label; everything the model may
  // tune on lives strictly before it.
  uint64_t boundary = labels[sizes.train].trace_position;
  size_t vocab_demand = std::max<size_t>(
      1, static_cast<size_t>(double(boundary) * cfg.vocab_fraction + 1e-9));
  size_t prefix_end = 0;
  for (size_t i = 0, seen = 0; i < events.size() && seen < vocab_demand; ++i) {
    if (events[i].is_demand()) ++seen;
    prefix_end = i + 1;
  }
  std::span<const CacheEvent> prefix = events.subspan(0, prefix_end);

  Dataset out;
  out.geometry = geometry;
  out.history_len = cfg.history_len;
  out.pc_vocab = build_vocab(prefix, VocabField::PC, geometry);
  out.page_vocab = build_vocab(prefix, VocabField::Page, geometry);

  std::vector<AlignedSample> aligned = extract_aligned_samples(
      events, labels, out.pc_vocab, out.page_vocab, geometry, cfg.history_len);
  out.samples.train.assign(aligned.begin(), aligned.begin() + sizes.train);
  out.samples.val.assign(aligned.begin() + sizes.train,
                         aligned.begin() + sizes.train + sizes.val);
  out.samples.test.assign(aligned.begin() + sizes.train + sizes.val,
                          aligned.end());

  std::vector<ReplacementSample> repl_train;
  repl_train.reserve(sizes.train);
  for (const AlignedSample& s : out.samples.train) repl_train.push_back(s.repl);
  std::vector<PrefetchSample> pf_all = extract_prefetch_samples(
      events, out.pc_vocab, out.page_vocab, geometry, cfg.history_len);
  std::vector<PrefetchSample> pf_train;
  for (PrefetchSample& s : pf_all)
    if (s.event_index < boundary) pf_train.push_back(std::move(s));
  out.train_pairs = make_pairs(repl_train, pf_train, cfg.pair_window,
                               cfg.pair_negatives, cfg.pair_seed);
  return out;
}

void bind_vocab(ModelConfig& cfg, const Dataset& data) {
  cfg.history_len = data.history_len;
  cfg.pc_vocab = data.pc_vocab.size();
  cfg.page_vocab = data.page_vocab.size();
  cfg.offset_classes = static_cast<uint32_t>(data.geometry.blocks_per_page());
}

const char* train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::Baseline: return "baseline";
    case TrainMode::Joint: return "joint";
    case TrainMode::Contrastive: return "contrastive";
  }
  return "?";
}

TrainMode train_mode_from_name(const std::string& name) {
  if (name == "baseline") return TrainMode::Baseline;
  if (name == "joint") return TrainMode::Joint;
  if (name == "contrastive") return TrainMode::Contrastive;
  throw ConfigError("unknown train mode: " + name);
}

namespace {

ModelKind kind_of(TrainMode m) {
  switch (m) {
    case TrainMode::Baseline: return ModelKind::BaselineRepl;
    case TrainMode::Joint: return ModelKind::Joint;
    case TrainMode::Contrastive: return ModelKind::Contrastive;
  }
  return ModelKind::BaselineRepl;
}

// Distinct init stream for the prefetch half of the baseline regime.
constexpr uint64_t kPfSeedSalt = 0x9e3779b97f4a7c15ull;

void build_params(nn::ParamStore& store, const ModelConfig& cfg,
                  TrainMode mode, uint64_t seed) {
  if (mode == TrainMode::Baseline) {
    add_model_params(store, cfg, ModelKind::BaselineRepl, seed);
    add_model_params(store, cfg, ModelKind::BaselinePf, seed ^ kPfSeedSalt);
  } else {
    add_model_params(store, cfg, kind_of(mode), seed);
  }
}

double predict_friendly(nn::ParamStore& store, const ModelConfig& cfg,
                        TrainMode mode, const AlignedSample& s) {
  switch (mode) {
    case TrainMode::Baseline: return replacement_forward(store, cfg, s.repl);
    case TrainMode::Joint:
      return joint_forward(store, cfg, s.repl, s.pf).p_friendly;
    case TrainMode::Contrastive:
      return contrastive_forward(store, cfg, s.repl, s.pf).p_friendly;
  }
  return 0.0;
}

double val_accuracy_of(nn::ParamStore& store, const ModelConfig& cfg,
                       TrainMode mode, std::span<const AlignedSample> val) {
  size_t correct = 0;
  for (const AlignedSample& s : val) {
    bool friendly = predict_friendly(store, cfg, mode, s) >= 0.5;
    if (friendly == (s.repl.label == CacheLabel::CacheFriendly)) ++correct;
  }
  return double(correct) / double(val.size());
}

struct BaselineLosses {
  double repl = 0.0;
  double pf = 0.0;
  size_t pf_items = 0;
};

// One optimizer step over both independent baseline models; their parameters
// are disjoint, so the summed loss updates each exactly as separate steps
// sharing the step counter would.
BaselineLosses baseline_train_step(nn::ParamStore& store, nn::Adam& opt,
                                   const ModelConfig& cfg,
                                   std::span<const AlignedSample> batch) {
  std::vector<ReplacementSample> rb;
  std::vector<PrefetchSample> pb;
  rb.reserve(batch.size());
  for (const AlignedSample& s : batch) {
    rb.push_back(s.repl);
    if (s.has_target) pb.push_back(s.pf);
  }
  Tape tape;
  store.zero_grads();
  Tape::Id repl = replacement_batch_loss(tape, store, cfg, rb);
  BaselineLosses out;
  out.pf_items = pb.size();
  Tape::Id total = repl;
  Tape::Id pf = repl;
  if (!pb.empty()) {
    pf = prefetch_batch_loss(tape, store, cfg, pb);
    std::vector<Tape::Id> terms{repl, pf};
    total = tape.sum_scalars(terms, 1.0);
  }
  tape.backward(total);
  opt.step(store);
  out.repl = tape.scalar(repl);
  out.pf = pb.empty() ? 0.0 : tape.scalar(pf);
  return out;
}

std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

const std::string& meta_str(const nn::MetaMap& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw ConfigError("resume state missing key: " + key);
  return it->second;
}

uint64_t meta_u64(const nn::MetaMap& m, const std::string& key) {
  return std::stoull(meta_str(m, key));
}

size_t argmax(std::span<const double> v) {
  return size_t(std::max_element(v.begin(), v.end()) - v.begin());
}

double ratio(size_t num, size_t den) { return den ? double(num) / den : 0.0; }

bool has_oov(const AlignedSample& s) {
  auto any_oov = [](const std::vector<uint32_t>& toks) {
    return std::find(toks.begin(), toks.end(), Vocab::kOovId) != toks.end();
  };
  return any_oov(s.repl.pc_history) || any_oov(s.pf.pc_history) ||
         any_oov(s.pf.page_history);
}

void write_fixed(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  out << buf;
}

}  // namespace

TrainResult train_model(TrainMode mode, const Dataset& data,
                        const ModelConfig& mcfg, const TrainConfig& tcfg,
                        uint64_t seed, const TrainState* resume,
                        const std::function<void(const TrainState&)>& on_epoch) {
  mcfg.validate();
  if (tcfg.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (tcfg.max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
  if (tcfg.patience == 0) throw ConfigError("patience must be >= 1");
  if (data.samples.train.empty()) throw DataError("training split is empty");
  if (data.samples.val.empty()) throw DataError("validation split is empty");

  ModelKind kind = kind_of(mode);
  nn::MetaMap arch = model_meta(mcfg, kind);

  TrainResult out;
  out.kind = kind;

  nn::ParamStore store;
  build_params(store, mcfg, mode, seed);
  nn::ParamStore best = store.clone_values();

  nn::Adam opt(tcfg.adam);
  if (mode == TrainMode::Contrastive) {
    if (tcfg.finetune) {
      opt.add_lr_scale("enc_", 0.1);
      opt.add_lr_scale("proj_", 0.1);
    } else {
      opt.set_trainable_prefixes({"head_"});
    }
  }

  uint32_t next_epoch = 1;
  uint32_t patience_left = tcfg.patience;
  uint32_t best_epoch = 0;
  double best_val = -1.0;

  if (resume) {
    const nn::MetaMap& m = resume->second;
    auto want = [&](const std::string& key, const std::string& v) {
      auto it = m.find(key);
      if (it == m.end() || it->second != v)
        throw ConfigError("resume state disagrees on " + key);
    };
    for (const auto& [key, v] : arch) want(key, v);
    want("train.mode", train_mode_name(mode));
    want("train.seed", std::to_string(seed));
    want("train.patience", std::to_string(tcfg.patience));
    for (auto& e : store.entries()) {
      if (!resume->first.contains(e.name))
        throw ConfigError("resume state missing parameter " + e.name);
      e.value = resume->first.value(e.name);
    }
    for (auto& e : best.entries()) {
      if (!resume->first.contains("best." + e.name))
        throw ConfigError("resume state missing snapshot of " + e.name);
      e.value = resume->first.value("best." + e.name);
    }
    opt.import_state(resume->first);
    opt.set_step_count(meta_u64(m, "train.step"));
    next_epoch = uint32_t(meta_u64(m, "train.epoch")) + 1;
    patience_left = uint32_t(meta_u64(m, "train.patience_left"));
    best_epoch = uint32_t(meta_u64(m, "train.best_epoch"));
    best_val = std::strtod(meta_str(m, "train.best_val").c_str(), nullptr);
  } else if (mode == TrainMode::Contrastive) {
    if (data.train_pairs.empty())
      throw DataError("contrastive training needs pairs in the train region");
    PretrainResult pre = contrastive_pretrain(
        store, mcfg, data.train_pairs, tcfg.pretrain_adam, tcfg.pretrain_epochs,
        tcfg.pretrain_batch_groups, seed);
    out.pretrain_curve = std::move(pre.loss_curve);
  }

  const std::vector<AlignedSample>& train = data.samples.train;
  const size_t n_train = train.size();

  auto run_meta = [&](uint32_t epoch, bool finished) {
    nn::MetaMap meta = arch;
    meta["train.mode"] = train_mode_name(mode);
    meta["train.seed"] = std::to_string(seed);
    meta["train.patience"] = std::to_string(tcfg.patience);
    meta["train.epoch"] = std::to_string(epoch);
    meta["train.step"] = std::to_string(opt.step_count());
    meta["train.patience_left"] = std::to_string(patience_left);
    meta["train.best_epoch"] = std::to_string(best_epoch);
    meta["train.best_val"] = hex_double(best_val);
    meta["train.finished"] = finished ? "1" : "0";
    return meta;
  };

  uint32_t last_epoch = next_epoch - 1;
  for (uint32_t epoch = next_epoch;
       epoch <= tcfg.max_epochs && patience_left > 0; ++epoch) {
    last_epoch = epoch;
    // The order is re-derived from scratch each epoch so a resumed run
    // shuffles identically without replaying earlier epochs.
    std::vector<size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed ^ epoch);
    deterministic_shuffle(order, rng);

    double repl_sum = 0.0;
    double pf_sum = 0.0;
    double total_sum = 0.0;
    size_t pf_count = 0;
    for (size_t at = 0; at < n_train; at += tcfg.batch_size) {
      size_t n = std::min(tcfg.batch_size, n_train - at);
      std::vector<AlignedSample> batch;
      batch.reserve(n);
      for (size_t i = 0; i < n; ++i) batch.push_back(train[order[at + i]]);
      if (mode == TrainMode::Baseline) {
        BaselineLosses bl = baseline_train_step(store, opt, mcfg, batch);
        repl_sum += bl.repl * double(n);
        pf_sum += bl.pf * double(bl.pf_items);
        pf_count += bl.pf_items;
        total_sum += (bl.repl + bl.pf) * double(n);
      } else {
        JointLosses parts = joint_train_step(store, opt, mcfg, batch, kind);
        size_t m = size_t(std::count_if(
            batch.begin(), batch.end(),
            [](const AlignedSample& a) { return a.has_target; }));
        repl_sum += parts.repl * double(n);
        pf_sum += (parts.page + parts.offset) * double(m);
        pf_count += m;
        total_sum += parts.total * double(n);
      }
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.repl_loss = repl_sum / double(n_train);
    em.pf_loss = pf_count ? pf_sum / double(pf_count) : 0.0;
    em.train_loss = total_sum / double(n_train);
    em.val_accuracy = val_accuracy_of(store, mcfg, mode, data.samples.val);

    if (em.val_accuracy > best_val) {
      best_val = em.val_accuracy;
      best_epoch = epoch;
      best = store.clone_values();
      patience_left = tcfg.patience;
    } else {
      --patience_left;
    }
    out.history.push_back(em);

    if (on_epoch) {
      bool finished = patience_left == 0 || epoch == tcfg.max_epochs;
      nn::ParamStore img = store.clone_values();
      for (const auto& e : best.entries()) {
        nn::Tensor& t = img.add("best." + e.name, e.value.shape);
        t.data = e.value.data;
      }
      opt.export_state(img);
      on_epoch(TrainState{std::move(img), run_meta(epoch, finished)});
    }
  }

  out.params = std::move(best);
  out.best_epoch = best_epoch;
  out.best_val_accuracy = best_val;
  out.meta = run_meta(last_epoch, true);
  return out;
}

EvalReport evaluate_accuracy(nn::ParamStore& store, const ModelConfig& cfg,
                             TrainMode mode,
                             std::span<const AlignedSample> test,
                             uint64_t seed, const std::string& config_digest) {
  if (test.empty()) throw DataError("test split is empty");
  EvalReport r;
  r.total = test.size();
  r.seed = seed;
  r.config_digest = config_digest;

  size_t tp = 0, fp = 0, tn = 0, fn = 0, oov = 0, page_ok = 0, off_ok = 0;
  for (const AlignedSample& s : test) {
    double p = 0.0;
    std::vector<double> page;
    std::vector<double> offset;
    switch (mode) {
      case TrainMode::Baseline: {
        p = replacement_forward(store, cfg, s.repl);
        if (s.has_target) {
          PrefetchDists d = prefetch_forward(store, cfg, s.pf);
          page = std::move(d.page);
          offset = std::move(d.offset);
        }
        break;
      }
      case TrainMode::Joint:
      case TrainMode::Contrastive: {
        JointOut o = mode == TrainMode::Joint
                         ? joint_forward(store, cfg, s.repl, s.pf)
                         : contrastive_forward(store, cfg, s.repl, s.pf);
        p = o.p_friendly;
        page = std::move(o.page);
        offset = std::move(o.offset);
        break;
      }
    }
    bool pred_friendly = p >= 0.5;
    bool actual_friendly = s.repl.label == CacheLabel::CacheFriendly;
    if (pred_friendly && actual_friendly) ++tp;
    if (pred_friendly && !actual_friendly) ++fp;
    if (!pred_friendly && actual_friendly) ++fn;
    if (!pred_friendly && !actual_friendly) ++tn;
    if (has_oov(s)) ++oov;
    if (s.has_target) {
      ++r.prefetch_total;
      if (argmax(page) == s.pf.target_page) ++page_ok;
      if (argmax(offset) == s.pf.target_offset) ++off_ok;
    }
  }

  r.accuracy = ratio(tp + tn, r.total);
  r.precision_friendly = ratio(tp, tp + fp);
  r.recall_friendly = ratio(tp, tp + fn);
  r.precision_averse = ratio(tn, tn + fn);
  r.recall_averse = ratio(tn, tn + fp);
  r.friendly_count = tp + fn;
  r.averse_count = tn + fp;
  r.predicted_friendly = tp + fp;
  r.predicted_averse = tn + fn;
  r.oov_rate = ratio(oov, r.total);
  r.page_accuracy = ratio(page_ok, r.prefetch_total);
  r.offset_accuracy = ratio(off_ok, r.prefetch_total);
  return r;
}

void export_eval_csv(const EvalReport& r, std::ostream& out) {
  out << "accuracy,precision_friendly,recall_friendly,precision_averse,"
         "recall_averse,total,friendly,averse,predicted_friendly,"
         "predicted_averse,oov_rate,page_accuracy,offset_accuracy,"
         "prefetch_total,seed,config_digest\n";
  write_fixed(out, r.accuracy);
  out << ',';
  write_fixed(out, r.precision_friendly);
  out << ',';
  write_fixed(out, r.recall_friendly);
  out << ',';
  write_fixed(out, r.precision_averse);
  out << ',';
  write_fixed(out, r.recall_averse);
  out << ',' << r.total << ',' << r.friendly_count << ',' << r.averse_count
      << ',' << r.predicted_friendly << ',' << r.predicted_averse << ',';
  write_fixed(out, r.oov_rate);
  out << ',';
  write_fixed(out, r.page_accuracy);
  out << ',';
  write_fixed(out, r.offset_accuracy);
  out << ',' << r.prefetch_total << ',' << r.seed << ',' << r.config_digest
      << '\n';
}

void export_history_csv(std::span<const EpochMetrics> history,
                        std::ostream& out) {
  out << "epoch,train_loss,repl_loss,pf_loss,val_accuracy\n";
  for (const EpochMetrics& m : history) {
    out << m.epoch << ',';
    write_fixed(out, m.train_loss);
    out << ',';
    write_fixed(out, m.repl_loss);
    out << ',';
    write_fixed(out, m.pf_loss);
    out << ',';
    write_fixed(out, m.val_accuracy);
    out << '\n';
  }
}

uint32_t averse_first_victim(std::span<const CacheLineState> lines,
                             const std::vector<bool>& averse) {
  bool found = false;
  uint32_t victim = 0;
  uint64_t oldest = 0;
  for (uint32_t w = 0; w < lines.size(); ++w) {
    if (!lines[w].valid || w >= averse.size() || !averse[w]) continue;
    if (!found || lines[w].last_touch < oldest) {
      found = true;
      victim = w;
      oldest = lines[w].last_touch;
    }
  }
  return found ? victim : lru_choose_victim(lines);
}

ModelPolicy::ModelPolicy(nn::ParamStore params, ModelConfig cfg,
                         ModelKind kind, Vocab pc_vocab, Vocab page_vocab,
                         BlockGeometry geometry)
    : params_(std::move(params)),
      cfg_(cfg),
      kind_(kind),
      pc_vocab_(std::move(pc_vocab)),
      page_vocab_(std::move(page_vocab)),
      geometry_(geometry) {
  if (kind_ == ModelKind::BaselinePf)
    throw ConfigError("the prefetch-only architecture has no replacement head");
  cfg_.validate();
  geometry_.validate();
}

void ModelPolicy::on_access(const CacheEvent& e) {
  PageOffset po = page_and_offset(e.block, geometry_);
  pc_hist_.push_back(pc_vocab_.token_of(e.pc));
  page_hist_.push_back(page_vocab_.token_of(po.page));
  off_hist_.push_back(static_cast<uint32_t>(po.offset) + 2);
  while (pc_hist_.size() > cfg_.history_len) {
    pc_hist_.pop_front();
    page_hist_.pop_front();
    off_hist_.pop_front();
  }
}

namespace {

void fill_history(std::vector<uint32_t>& dst, const std::deque<uint32_t>& src,
                  size_t len) {
  dst.assign(len, Vocab::kPadId);
  std::copy(src.begin(), src.end(), dst.begin() + (len - src.size()));
}

}  // namespace

double ModelPolicy::predict(const CacheEvent& e) {
  ReplacementSample rs;
  fill_history(rs.pc_history, pc_hist_, cfg_.history_len);
  rs.context = make_context(e);
  rs.set_index = e.set_index;
  rs.event_index = e.event_index;
  if (kind_ == ModelKind::BaselineRepl)
    return replacement_forward(params_, cfg_, rs);
  PrefetchSample ps;
  fill_history(ps.pc_history, pc_hist_, cfg_.history_len);
  fill_history(ps.page_history, page_hist_, cfg_.history_len);
  fill_history(ps.offset_history, off_hist_, cfg_.history_len);
  ps.set_index = e.set_index;
  ps.event_index = e.event_index;
  if (kind_ == ModelKind::Joint)
    return joint_forward(params_, cfg_, rs, ps).p_friendly;
  return contrastive_forward(params_, cfg_, rs, ps).p_friendly;
}

void ModelPolicy::on_insert(uint32_t set, uint32_t way, const CacheLineState&,
                            const CacheEvent& e) {
  if (set >= averse_.size()) averse_.resize(set + 1);
  if (way >= averse_[set].size()) averse_[set].resize(way + 1, false);
  averse_[set][way] = predict(e) < 0.5;
}

uint32_t ModelPolicy::choose_victim(std::span<const CacheLineState> lines,
                                    const CacheEvent& insertion) {
  uint32_t set = insertion.set_index;
  if (set >= averse_.size()) averse_.resize(set + 1);
  if (averse_[set].size() < lines.size()) averse_[set].resize(lines.size());
  return averse_first_victim(lines, averse_[set]);
}

std::string ModelPolicy::name() const {
  return std::string("model-") + model_kind_name(kind_);
}

OracleLabelPolicy::OracleLabelPolicy(std::span<const LabeledInsertion> labels) {
  for (const LabeledInsertion& l : labels) {
    by_position_[l.trace_position] = l.label;
    by_block_[l.block].push_back({l.trace_position, l.label});
  }
  for (auto& [block, v] : by_block_) std::sort(v.begin(), v.end());
}

void OracleLabelPolicy::on_access(const CacheEvent&) { ++demand_pos_; }

void OracleLabelPolicy::on_insert(uint32_t set, uint32_t way,
                                  const CacheLineState&, const CacheEvent& e) {
  if (set >= averse_.size()) averse_.resize(set + 1);
  if (way >= averse_[set].size()) averse_[set].resize(way + 1, false);
  uint64_t pos = demand_pos_ == 0 ? 0 : demand_pos_ - 1;
  CacheLabel label = CacheLabel::CacheFriendly;
  bool have = false;
  if (e.is_demand()) {
    auto it = by_position_.find(pos);
    if (it != by_position_.end()) {
      label = it->second;
      have = true;
    }
  }
  if (!have) {
    auto bit = by_block_.find(e.block);
    if (bit != by_block_.end()) {
      const auto& v = bit->second;
      auto it = std::lower_bound(
          v.begin(), v.end(), pos,
          [](const std::pair<uint64_t, CacheLabel>& a, uint64_t p) {
            return a.first < p;
          });
      if (it != v.begin()) label = std::prev(it)->second;
    }
  }
  averse_[set][way] = label == CacheLabel::CacheAverse;
}

uint32_t OracleLabelPolicy::choose_victim(std::span<const CacheLineState> lines,
                                          const CacheEvent& insertion) {
  uint32_t set = insertion.set_index;
  if (set >= averse_.size()) averse_.resize(set + 1);
  if (averse_[set].size() < lines.size()) averse_[set].resize(lines.size());
  return averse_first_victim(lines, averse_[set]);
}

std::string OracleLabelPolicy::name() const { return "oracle-labels"; }

AblationTable run_ablation(std::span<const AblationInput> traces,
                           const DatasetConfig& dcfg,
                           const ModelConfig& base_cfg,
                           const TrainConfig& tcfg,
                           std::span<const uint64_t> seeds) {
  if (traces.empty()) throw ConfigError("ablation needs at least one trace");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  AblationTable t;
  t.modes = {TrainMode::Baseline, TrainMode::Joint, TrainMode::Contrastive};
  t.seeds.assign(seeds.begin(), seeds.end());
  t.cells.assign(t.modes.size(), std::vector<AblationCell>(traces.size()));
  for (size_t ti = 0; ti < traces.size(); ++ti) {
    const AblationInput& in = traces[ti];
    t.trace_names.push_back(in.name);
    LruPolicy lru;
    SimResult sim = simulate(in.trace, in.cache, lru);
    BeladyResult oracle = belady_simulate(in.trace, in.cache);
    Dataset data =
        build_dataset(sim.events, oracle.labels, in.cache.geometry, dcfg);
    ModelConfig cfg = base_cfg;
    bind_vocab(cfg, data);
    for (size_t mi = 0; mi < t.modes.size(); ++mi) {
      AblationCell& cell = t.cells[mi][ti];
      for (uint64_t seed : seeds) {
        TrainResult r = train_model(t.modes[mi], data, cfg, tcfg, seed);
        EvalReport er = evaluate_accuracy(r.params, cfg, t.modes[mi],
                                          data.samples.test, seed, "");
        cell.per_seed.push_back(er.accuracy);
      }
      cell.median_accuracy = median_of(cell.per_seed);
    }
  }
  return t;
}

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", v * 100.0);
  return buf;
}

}  // namespace

std::string ablation_markdown(const AblationTable& t) {
  std::ostringstream out;
  out << "| mode |";
  for (const std::string& n : t.trace_names) out << ' ' << n << " |";
  out << "\n|---|";
  for (size_t c = 0; c < t.trace_names.size(); ++c) out << "---|";
  out << '\n';
  std::vector<std::string> best(t.trace_names.size());
  for (size_t c = 0; c < t.trace_names.size(); ++c) {
    double mx = 0.0;
    for (size_t r = 0; r < t.modes.size(); ++r)
      mx = std::max(mx, t.cells[r][c].median_accuracy);
    best[c] = percent(mx);
  }
  for (size_t r = 0; r < t.modes.size(); ++r) {
    out << "| " << train_mode_name(t.modes[r]) << " |";
    for (size_t c = 0; c < t.trace_names.size(); ++c) {
      std::string s = percent(t.cells[r][c].median_accuracy);
      if (s == best[c]) s = "**" + s + "**";
      out << ' ' << s << " |";
    }
    out << '\n';
  }
  return out.str();
}

void export_ablation_csv(const AblationTable& t, std::ostream& out) {
  out << "mode";
  for (const std::string& n : t.trace_names) out << ',' << n;
  out << '\n';
  for (size_t r = 0; r < t.modes.size(); ++r) {
    out << train_mode_name(t.modes[r]);
    for (size_t c = 0; c < t.trace_names.size(); ++c) {
      out << ',';
      write_fixed(out, t.cells[r][c].median_accuracy);
    }
    out << '\n';
  }
}

void export_ablation_seeds_csv(const AblationTable& t, std::ostream& out) {
  out << "trace,mode,seed,accuracy\n";
  for (size_t c = 0; c < t.trace_names.size(); ++c)
    for (size_t r = 0; r < t.modes.size(); ++r)
      for (size_t si = 0; si < t.seeds.size(); ++si) {
        out << t.trace_names[c] << ',' << train_mode_name(t.modes[r]) << ','
            << t.seeds[si] << ',';
        write_fixed(out, t.cells[r][c].per_seed[si]);
        out << '\n';
      }
}

double median_of(std::vector<double> values) {
  if (values.empty()) throw DataError("median of an empty list");
  std::sort(values.begin(), values.end());
  size_t mid = values.size() / 2;
  if (values.size() % 2) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace jcl
