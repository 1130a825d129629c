#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "jcl/cachesim.hpp"
#include "jcl/error.hpp"
#include "jcl/features.hpp"
#include "jcl/models.hpp"
#include "jcl/nn/adam.hpp"
#include "jcl/nn/checkpoint.hpp"
#include "jcl/oracle.hpp"

namespace jcl {

struct SplitSpec {
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
};

struct SplitSizes {
  size_t train = 0;
  size_t val = 0;
  size_t test = 0;
};

// Chronological floor rule: train = floor(train_fraction*n), val =
// floor(val_fraction*n), test = remainder. Throws DataError when n < 5.
SplitSizes split_sizes(size_t n, const SplitSpec& spec = {});

template <typename T>
struct Split {
  std::vector<T> train;
  std::vector<T> val;
  std::vector<T> test;
};

template <typename T>
Split<T> split_dataset(std::span<const T> samples, const SplitSpec& spec = {}) {
  SplitSizes s = split_sizes(samples.size(), spec);
  Split<T> out;
  out.train.assign(samples.begin(), samples.begin() + s.train);
  out.val.assign(samples.begin() + s.train, samples.begin() + s.train + s.val);
  out.test.assign(samples.begin() + s.train + s.val, samples.end());
  return out;
}

struct DatasetConfig {
  SplitSpec split;
  size_t history_len = 16;
  // Vocabularies come from this leading fraction of the train region's demand
  // events, so the rest of training sees out-of-vocabulary tokens.
  double vocab_fraction = 0.5;
  uint64_t pair_window = 16;
  uint32_t pair_negatives = 4;
  uint64_t pair_seed = 1;
};

struct Dataset {
  Vocab pc_vocab;
  Vocab page_vocab;
  BlockGeometry geometry;
  size_t history_len = 0;
  Split<AlignedSample> samples;          // one per label, chronological
  std::vector<PairSample> train_pairs;   // built entirely inside the train region
};

// Splits the labels chronologically FIRST, then builds vocabularies from the
// leading train-region events and contrastive pairs inside the train region
// only, so no held-out window ever serves as a training negative.
Dataset build_dataset(std::span<const CacheEvent> events,
                      std::span<const LabeledInsertion> labels,
                      const BlockGeometry& geometry, const DatasetConfig& cfg);

// Fills the vocabulary-dependent model dimensions from the dataset.
void bind_vocab(ModelConfig& cfg, const Dataset& data);

enum class TrainMode : uint8_t { Baseline, Joint, Contrastive };

const char* train_mode_name(TrainMode m);
TrainMode train_mode_from_name(const std::string& name);

struct TrainConfig {
  nn::AdamConfig adam{.lr = 3e-3};
  size_t batch_size = 32;
  uint32_t max_epochs = 50;
  uint32_t patience = 5;
  // Contrastive stage 1.
  nn::AdamConfig pretrain_adam{.lr = 2e-2};
  size_t pretrain_epochs = 16;
  size_t pretrain_batch_groups = 32;
  // Stage 2 default freezes encoders+projections; finetune unlocks them at
  // one tenth of the head learning rate.
  bool finetune = false;
};

struct EpochMetrics {
  uint32_t epoch = 0;        // 1-based
  double train_loss = 0.0;   // sample-weighted mean of the total objective
  double repl_loss = 0.0;    // binary cross-entropy component
  double pf_loss = 0.0;      // page+offset cross-entropy component, 0 if none
  double val_accuracy = 0.0; // replacement decision accuracy on the val split
};

struct TrainResult {
  ModelKind kind = ModelKind::BaselineRepl;
  nn::ParamStore params;     // best-validation snapshot
  nn::MetaMap meta;          // architecture + finished run state
  std::vector<EpochMetrics> history;   // epochs run in this call
  std::vector<double> pretrain_curve;  // contrastive stage 1, else empty
  uint32_t best_epoch = 0;
  double best_val_accuracy = 0.0;
};

// Resume image: current params, best.<name> snapshot entries and opt.m./opt.v.
// moment entries, with train.* progress keys in the meta.
using TrainState = std::pair<nn::ParamStore, nn::MetaMap>;

// Trains one regime end to end. Baseline trains the two independent baseline
// models in lockstep (disjoint parameters, shared schedule); Joint trains the
// shared-encoder model; Contrastive runs stage-1 pretraining on the dataset's
// train pairs and then stage 2 under the freeze rule. Early stopping watches
// validation replacement accuracy: a strictly greater value resets patience,
// and training ends after `patience` stale epochs or `max_epochs` total.
// Identical inputs produce bitwise-identical metrics; `resume` continues a
// run step-for-step from an `on_epoch` state image. Throws DataError on an
// empty train or val split, ConfigError on a resume state that disagrees
// with the requested run.
TrainResult train_model(
    TrainMode mode, const Dataset& data, const ModelConfig& mcfg,
    const TrainConfig& tcfg, uint64_t seed, const TrainState* resume = nullptr,
    const std::function<void(const TrainState&)>& on_epoch = {});

struct EvalReport {
  double accuracy = 0.0;
  double precision_friendly = 0.0;
  double recall_friendly = 0.0;
  double precision_averse = 0.0;
  double recall_averse = 0.0;
  size_t total = 0;
  size_t friendly_count = 0;  // actual labels
  size_t averse_count = 0;
  size_t predicted_friendly = 0;
  size_t predicted_averse = 0;
  // Fraction of samples with an out-of-vocabulary pc or page token.
  double oov_rate = 0.0;
  double page_accuracy = 0.0;    // top-1 over samples with targets
  double offset_accuracy = 0.0;
  size_t prefetch_total = 0;
  uint64_t seed = 0;
  std::string config_digest;
};

// Replacement decisions at threshold 0.5 against oracle labels, plus top-1
// prefetch accuracy from the mode's prefetch head. Zero-denominator
// precision/recall report 0. Throws DataError on an empty test set.
EvalReport evaluate_accuracy(nn::ParamStore& store, const ModelConfig& cfg,
                             TrainMode mode,
                             std::span<const AlignedSample> test,
                             uint64_t seed, const std::string& config_digest);

// Single-row CSV with a header line.
void export_eval_csv(const EvalReport& report, std::ostream& out);
// CSV: epoch,train_loss,repl_loss,pf_loss,val_accuracy
void export_history_csv(std::span<const EpochMetrics> history,
                        std::ostream& out);

// Deploys a replacement-capable checkpoint as a live policy. Demand accesses
// advance the token histories; each insertion is classified once (threshold
// 0.5) and the label rides with the line. Victims: least recently used among
// predicted-averse lines, else plain LRU — a model predicting friendly
// everywhere reproduces LRU exactly. Throws ConfigError when the architecture
// has no replacement head.
class ModelPolicy final : public ReplacementPolicy {
 public:
  ModelPolicy(nn::ParamStore params, ModelConfig cfg, ModelKind kind,
              Vocab pc_vocab, Vocab page_vocab, BlockGeometry geometry);

  uint32_t choose_victim(std::span<const CacheLineState> lines,
                         const CacheEvent& insertion) override;
  void on_access(const CacheEvent& e) override;
  void on_insert(uint32_t set, uint32_t way, const CacheLineState& line,
                 const CacheEvent& e) override;
  std::string name() const override;

 private:
  double predict(const CacheEvent& e);

  nn::ParamStore params_;
  ModelConfig cfg_;
  ModelKind kind_;
  Vocab pc_vocab_;
  Vocab page_vocab_;
  BlockGeometry geometry_;
  std::deque<uint32_t> pc_hist_;
  std::deque<uint32_t> page_hist_;
  std::deque<uint32_t> off_hist_;
  std::vector<std::vector<bool>> averse_;  // [set][way] predicted labels
};

// Replays oracle labels as the predictions: a demand insertion looks up the
// label at its demand position, falls back to the block's most recent earlier
// label, then to friendly. Victim rule identical to ModelPolicy.
class OracleLabelPolicy final : public ReplacementPolicy {
 public:
  explicit OracleLabelPolicy(std::span<const LabeledInsertion> labels);

  uint32_t choose_victim(std::span<const CacheLineState> lines,
                         const CacheEvent& insertion) override;
  void on_access(const CacheEvent& e) override;
  void on_insert(uint32_t set, uint32_t way, const CacheLineState& line,
                 const CacheEvent& e) override;
  std::string name() const override;

 private:
  std::unordered_map<uint64_t, CacheLabel> by_position_;
  std::unordered_map<uint64_t, std::vector<std::pair<uint64_t, CacheLabel>>>
      by_block_;  // position-sorted
  std::vector<std::vector<bool>> averse_;
  uint64_t demand_pos_ = 0;
};

// Least recently used among flagged ways, else LRU over all; shared victim
// rule of the label-driven policies.
uint32_t averse_first_victim(std::span<const CacheLineState> lines,
                             const std::vector<bool>& averse);

struct AblationInput {
  std::string name;
  Trace trace;
  CacheConfig cache;
};

struct AblationCell {
  double median_accuracy = 0.0;
  std::vector<double> per_seed;  // in input seed order
};

struct AblationTable {
  std::vector<TrainMode> modes;          // rows
  std::vector<std::string> trace_names;  // columns
  std::vector<std::vector<AblationCell>> cells;  // [mode][trace]
  std::vector<uint64_t> seeds;
};

// Full comparison: for every trace, one dataset; for every (mode, seed), one
// training run evaluated on the test split; cells report the median accuracy
// over seeds. Throws ConfigError on empty traces or seeds.
AblationTable run_ablation(std::span<const AblationInput> traces,
                           const DatasetConfig& dcfg,
                           const ModelConfig& base_cfg,
                           const TrainConfig& tcfg,
                           std::span<const uint64_t> seeds);

// Markdown table, mode rows by trace columns, accuracy as percent with two
// decimals; the best cell per column is bold, ties all bold.
std::string ablation_markdown(const AblationTable& table);
// Medians, same shape: header `mode,<trace...>`, one row per mode.
void export_ablation_csv(const AblationTable& table, std::ostream& out);
// Long form: trace,mode,seed,accuracy.
void export_ablation_seeds_csv(const AblationTable& table, std::ostream& out);

// Middle element, or mean of the two middles. Throws DataError when empty.
double median_of(std::vector<double> values);

}  // namespace jcl
