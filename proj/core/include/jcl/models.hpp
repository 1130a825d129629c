#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jcl/features.hpp"
#include "jcl/nn/adam.hpp"
#include "jcl/nn/checkpoint.hpp"
#include "jcl/nn/tape.hpp"
#include "jcl/nn/tensor.hpp"

namespace jcl {

enum class ModelKind : uint8_t { BaselineRepl, BaselinePf, Joint, Contrastive };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

struct ModelConfig {
  size_t history_len = 16;  // H, tokens per history
  size_t embed_dim = 32;    // width of every embedding table
  size_t hidden_dim = 64;   // LSTM hidden width
  size_t ctx_dim = 8;       // context projection width
  size_t shared_dim = 32;   // joint shared embedding width
  size_t proj_dim = 32;     // contrastive projection width
  double tau = 0.1;         // InfoNCE temperature
  double lambda_r = 1.0;    // replacement loss weight
  double lambda_p = 1.0;    // prefetch loss weight
  uint32_t pc_vocab = 0;    // embedding rows, must cover sample tokens
  uint32_t page_vocab = 0;
  uint32_t offset_classes = 64;  // blocks per page; table adds pad/oov rows

  size_t cache_encoder_dim() const { return hidden_dim + ctx_dim; }
  size_t pf_encoder_dim() const { return hidden_dim; }
  // Concatenated encoder outputs, the input of contrastive stage-2 heads.
  size_t concat_dim() const { return cache_encoder_dim() + pf_encoder_dim(); }

  void validate() const;  // throws ConfigError
};

// Adds all parameters for the architecture under fixed name prefixes:
// enc_r.* (cache encoder), enc_p.* (prefetch encoder), shared.* (joint),
// proj_r./proj_p. (contrastive projections), head_r./head_page./head_off.
// Projections start bias-dominated (constant bias, small weights) so that
// initial pair similarities are nearly uniform and the first-epoch InfoNCE
// loss sits at ln(negatives+1).
void add_model_params(nn::ParamStore& store, const ModelConfig& cfg,
                      ModelKind kind, uint64_t seed);

// PC-history LSTM concatenated with the projected context vector.
nn::Tape::Id encode_replacement(nn::Tape& tape, nn::ParamStore& store,
                                const ModelConfig& cfg,
                                const ReplacementSample& s);
// LSTM over per-step concat of pc/page/offset embeddings.
nn::Tape::Id encode_prefetch(nn::Tape& tape, nn::ParamStore& store,
                             const ModelConfig& cfg, const PrefetchSample& s);

// Probability the insertion is cache-friendly; decision threshold is 0.5.
double replacement_forward(nn::ParamStore& store, const ModelConfig& cfg,
                           const ReplacementSample& s);

struct PrefetchDists {
  std::vector<double> page;    // over page tokens
  std::vector<double> offset;  // over raw offsets
};

PrefetchDists prefetch_forward(nn::ParamStore& store, const ModelConfig& cfg,
                               const PrefetchSample& s);

struct JointOut {
  double p_friendly = 0.0;
  std::vector<double> page;
  std::vector<double> offset;
};

// Joint wiring: heads read tanh(shared W [cache_out ++ pf_out]). Throws
// DataError when the two views are not time-aligned.
JointOut joint_forward(nn::ParamStore& store, const ModelConfig& cfg,
                       const ReplacementSample& rs, const PrefetchSample& ps);

// Contrastive stage-2 wiring: heads read the concatenated encoder outputs.
JointOut contrastive_forward(nn::ParamStore& store, const ModelConfig& cfg,
                             const ReplacementSample& rs,
                             const PrefetchSample& ps);

// Mean binary cross-entropy over the batch. Throws DataError on empty input.
nn::Tape::Id replacement_batch_loss(nn::Tape& tape, nn::ParamStore& store,
                                    const ModelConfig& cfg,
                                    std::span<const ReplacementSample> batch);

// Mean (page + offset) cross-entropy over the batch.
nn::Tape::Id prefetch_batch_loss(nn::Tape& tape, nn::ParamStore& store,
                                 const ModelConfig& cfg,
                                 std::span<const PrefetchSample> batch);

struct JointLosses {
  double repl = 0.0;    // mean bce
  double page = 0.0;    // mean page xent over items with targets
  double offset = 0.0;  // mean offset xent over items with targets
  double total = 0.0;
};

// lambda_r * bce + lambda_p * (page + offset xent); items without targets
// contribute only the replacement term. kind selects Joint or Contrastive
// head wiring.
nn::Tape::Id joint_batch_loss(nn::Tape& tape, nn::ParamStore& store,
                              const ModelConfig& cfg,
                              std::span<const AlignedSample> batch,
                              ModelKind kind, JointLosses* parts = nullptr);

// Mean InfoNCE over groups: anchor = projected cache encoding of the
// positive's replacement sample, candidates = projected prefetch encodings
// of the positive and its negatives. Groups without negatives are skipped;
// throws DataError when none remain.
nn::Tape::Id contrastive_batch_loss(nn::Tape& tape, nn::ParamStore& store,
                                    const ModelConfig& cfg,
                                    std::span<const PairSample> pairs,
                                    std::span<const PairGroup> groups);

double replacement_train_step(nn::ParamStore& store, nn::Adam& opt,
                              const ModelConfig& cfg,
                              std::span<const ReplacementSample> batch);
JointLosses prefetch_train_step(nn::ParamStore& store, nn::Adam& opt,
                                const ModelConfig& cfg,
                                std::span<const PrefetchSample> batch);
JointLosses joint_train_step(nn::ParamStore& store, nn::Adam& opt,
                             const ModelConfig& cfg,
                             std::span<const AlignedSample> batch,
                             ModelKind kind);

struct PretrainResult {
  // [0] is the pre-update loss over all groups; one entry per epoch after.
  std::vector<double> loss_curve;
};

// Stage 1: trains enc_* and proj_* only, Adam over shuffled group batches
// (order reseeded per epoch from seed ^ epoch). Throws ConfigError when the
// pair list has no positives.
PretrainResult contrastive_pretrain(nn::ParamStore& store,
                                    const ModelConfig& cfg,
                                    std::span<const PairSample> pairs,
                                    const nn::AdamConfig& opt_cfg,
                                    size_t epochs, size_t batch_groups,
                                    uint64_t seed);

struct PairCosines {
  double mean_positive = 0.0;
  double mean_negative = 0.0;
};

// Mean projected cosine similarity by pair polarity (no training).
PairCosines pair_cosine_stats(nn::ParamStore& store, const ModelConfig& cfg,
                              std::span<const PairSample> pairs);

// Checkpoint meta entries for the architecture + hyperparameters.
nn::MetaMap model_meta(const ModelConfig& cfg, ModelKind kind);
ModelConfig config_from_meta(const nn::MetaMap& meta, ModelKind* kind);

}  // namespace jcl
