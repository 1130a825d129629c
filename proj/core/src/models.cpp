#include "jcl/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "jcl/error.hpp"
#include "jcl/nn/layers.hpp"
#include "jcl/rng.hpp"

namespace jcl {

using nn::Tape;

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::BaselineRepl: return "baseline_repl";
    case ModelKind::BaselinePf: return "baseline_pf";
    case ModelKind::Joint: return "joint";
    case ModelKind::Contrastive: return "contrastive";
  }
  return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "baseline_repl") return ModelKind::BaselineRepl;
  if (name == "baseline_pf") return ModelKind::BaselinePf;
  if (name == "joint") return ModelKind::Joint;
  if (name == "contrastive") return ModelKind::Contrastive;
  throw ConfigError("unknown model kind: " + name);
}

void ModelConfig::validate() const {
  if (history_len < 1) throw ConfigError("history_len must be >= 1");
  if (embed_dim < 1 || hidden_dim < 1 || ctx_dim < 1 || shared_dim < 1 ||
      proj_dim < 1)
    throw ConfigError("model dims must be >= 1");
  if (tau <= 0.0) throw ConfigError("tau must be positive");
  if (lambda_r < 0.0 || lambda_p < 0.0)
    throw ConfigError("loss weights must be >= 0");
  if (pc_vocab < 2 || page_vocab < 2)
    throw ConfigError("vocab sizes must include the reserved ids");
  if (offset_classes < 1) throw ConfigError("offset_classes must be >= 1");
}

namespace {

bool has_cache_encoder(ModelKind k) { return k != ModelKind::BaselinePf; }
bool has_pf_encoder(ModelKind k) { return k != ModelKind::BaselineRepl; }

size_t head_input_dim(const ModelConfig& cfg, ModelKind kind) {
  switch (kind) {
    case ModelKind::BaselineRepl: return cfg.cache_encoder_dim();
    case ModelKind::BaselinePf: return cfg.pf_encoder_dim();
    case ModelKind::Joint: return cfg.shared_dim;
    case ModelKind::Contrastive: return cfg.concat_dim();
  }
  return 0;
}

void add_projection(nn::ParamStore& store, const std::string& prefix,
                    size_t out, size_t in, nn::InitSeq& init) {
  nn::Tensor& w = store.add(prefix + ".W", {out, in});
  nn::init_uniform(w, 0.05 / std::sqrt(static_cast<double>(in)), init.next());
  nn::Tensor& b = store.add(prefix + ".b", {out});
  double c = nn::round_f32(1.0 / std::sqrt(static_cast<double>(out)));
  std::fill(b.data.begin(), b.data.end(), c);
}

void check_aligned(const ReplacementSample& rs, const PrefetchSample& ps) {
  if (rs.event_index != ps.event_index)
    throw DataError("misaligned sample views: replacement at " +
                    std::to_string(rs.event_index) + ", prefetch at " +
                    std::to_string(ps.event_index));
}

Tape::Id replacement_prob_node(Tape& tape, nn::ParamStore& store,
                               const ModelConfig& cfg, ModelKind kind,
                               Tape::Id head_input) {
  return tape.sigmoid(nn::dense(tape, store, "head_r", head_input, 1,
                                head_input_dim(cfg, kind)));
}

struct HeadIds {
  Tape::Id p_friendly;
  Tape::Id page_logits;
  Tape::Id offset_logits;
};

HeadIds policy_heads(Tape& tape, nn::ParamStore& store, const ModelConfig& cfg,
                     ModelKind kind, Tape::Id head_input) {
  size_t in = head_input_dim(cfg, kind);
  HeadIds h;
  h.p_friendly = replacement_prob_node(tape, store, cfg, kind, head_input);
  h.page_logits =
      nn::dense(tape, store, "head_page", head_input, cfg.page_vocab, in);
  h.offset_logits =
      nn::dense(tape, store, "head_off", head_input, cfg.offset_classes, in);
  return h;
}

Tape::Id shared_embedding(Tape& tape, nn::ParamStore& store,
                          const ModelConfig& cfg, Tape::Id cache_out,
                          Tape::Id pf_out) {
  std::vector<Tape::Id> parts = {cache_out, pf_out};
  return tape.tanh(nn::dense(tape, store, "shared", tape.concat(parts),
                             cfg.shared_dim, cfg.concat_dim()));
}

Tape::Id head_input_for(Tape& tape, nn::ParamStore& store,
                        const ModelConfig& cfg, ModelKind kind,
                        const ReplacementSample& rs,
                        const PrefetchSample& ps) {
  check_aligned(rs, ps);
  Tape::Id cache_out = encode_replacement(tape, store, cfg, rs);
  Tape::Id pf_out = encode_prefetch(tape, store, cfg, ps);
  if (kind == ModelKind::Joint)
    return shared_embedding(tape, store, cfg, cache_out, pf_out);
  std::vector<Tape::Id> parts = {cache_out, pf_out};
  return tape.concat(parts);
}

JointOut joint_like_forward(nn::ParamStore& store, const ModelConfig& cfg,
                            ModelKind kind, const ReplacementSample& rs,
                            const PrefetchSample& ps) {
  Tape tape;
  Tape::Id x = head_input_for(tape, store, cfg, kind, rs, ps);
  HeadIds h = policy_heads(tape, store, cfg, kind, x);
  JointOut out;
  out.p_friendly = tape.scalar(h.p_friendly);
  out.page = nn::softmax(tape.value(h.page_logits));
  out.offset = nn::softmax(tape.value(h.offset_logits));
  return out;
}

}  // namespace

void add_model_params(nn::ParamStore& store, const ModelConfig& cfg,
                      ModelKind kind, uint64_t seed) {
  cfg.validate();
  nn::InitSeq init{seed};
  if (has_cache_encoder(kind)) {
    nn::add_embedding(store, "enc_r.pc_emb", cfg.pc_vocab, cfg.embed_dim,
                      init);
    nn::add_lstm2(store, "enc_r.lstm", cfg.embed_dim, cfg.hidden_dim, init);
    nn::add_dense(store, "enc_r.ctx", cfg.ctx_dim, kContextDim, init);
  }
  if (has_pf_encoder(kind)) {
    nn::add_embedding(store, "enc_p.pc_emb", cfg.pc_vocab, cfg.embed_dim,
                      init);
    nn::add_embedding(store, "enc_p.page_emb", cfg.page_vocab, cfg.embed_dim,
                      init);
    nn::add_embedding(store, "enc_p.off_emb", cfg.offset_classes + 2,
                      cfg.embed_dim, init);
    nn::add_lstm2(store, "enc_p.lstm", 3 * cfg.embed_dim, cfg.hidden_dim,
                  init);
  }
  if (kind == ModelKind::Joint)
    nn::add_dense(store, "shared", cfg.shared_dim, cfg.concat_dim(), init);
  if (kind == ModelKind::Contrastive) {
    add_projection(store, "proj_r", cfg.proj_dim, cfg.cache_encoder_dim(),
                   init);
    add_projection(store, "proj_p", cfg.proj_dim, cfg.pf_encoder_dim(), init);
  }
  size_t head_in = head_input_dim(cfg, kind);
  if (kind != ModelKind::BaselinePf)
    nn::add_dense(store, "head_r", 1, head_in, init);
  if (kind != ModelKind::BaselineRepl) {
    nn::add_dense(store, "head_page", cfg.page_vocab, head_in, init);
    nn::add_dense(store, "head_off", cfg.offset_classes, head_in, init);
  }
}

nn::Tape::Id encode_replacement(Tape& tape, nn::ParamStore& store,
                                const ModelConfig& cfg,
                                const ReplacementSample& s) {
  if (s.pc_history.size() != cfg.history_len)
    throw ShapeError("pc history length mismatch");
  if (s.context.size() != kContextDim)
    throw ShapeError("context length mismatch");
  auto xs = nn::embed_sequence(tape, store, "enc_r.pc_emb", s.pc_history);
  nn::LstmOut enc = nn::lstm2(tape, store, "enc_r.lstm", xs, cfg.embed_dim,
                              cfg.hidden_dim);
  Tape::Id ctx = tape.tanh(nn::dense(tape, store, "enc_r.ctx",
                                     tape.input(s.context), cfg.ctx_dim,
                                     kContextDim));
  std::vector<Tape::Id> parts = {enc.last, ctx};
  return tape.concat(parts);
}

nn::Tape::Id encode_prefetch(Tape& tape, nn::ParamStore& store,
                             const ModelConfig& cfg, const PrefetchSample& s) {
  size_t h = cfg.history_len;
  if (s.pc_history.size() != h || s.page_history.size() != h ||
      s.offset_history.size() != h)
    throw ShapeError("prefetch history length mismatch");
  auto pcs = nn::embed_sequence(tape, store, "enc_p.pc_emb", s.pc_history);
  auto pages =
      nn::embed_sequence(tape, store, "enc_p.page_emb", s.page_history);
  auto offs =
      nn::embed_sequence(tape, store, "enc_p.off_emb", s.offset_history);
  std::vector<Tape::Id> steps(h);
  for (size_t i = 0; i < h; ++i) {
    std::vector<Tape::Id> parts = {pcs[i], pages[i], offs[i]};
    steps[i] = tape.concat(parts);
  }
  return nn::lstm2(tape, store, "enc_p.lstm", steps, 3 * cfg.embed_dim,
                   cfg.hidden_dim)
      .last;
}

double replacement_forward(nn::ParamStore& store, const ModelConfig& cfg,
                           const ReplacementSample& s) {
  Tape tape;
  Tape::Id enc = encode_replacement(tape, store, cfg, s);
  return tape.scalar(replacement_prob_node(tape, store, cfg,
                                           ModelKind::BaselineRepl, enc));
}

PrefetchDists prefetch_forward(nn::ParamStore& store, const ModelConfig& cfg,
                               const PrefetchSample& s) {
  Tape tape;
  Tape::Id enc = encode_prefetch(tape, store, cfg, s);
  size_t in = cfg.pf_encoder_dim();
  Tape::Id page =
      nn::dense(tape, store, "head_page", enc, cfg.page_vocab, in);
  Tape::Id off =
      nn::dense(tape, store, "head_off", enc, cfg.offset_classes, in);
  return {nn::softmax(tape.value(page)), nn::softmax(tape.value(off))};
}

JointOut joint_forward(nn::ParamStore& store, const ModelConfig& cfg,
                       const ReplacementSample& rs, const PrefetchSample& ps) {
  return joint_like_forward(store, cfg, ModelKind::Joint, rs, ps);
}

JointOut contrastive_forward(nn::ParamStore& store, const ModelConfig& cfg,
                             const ReplacementSample& rs,
                             const PrefetchSample& ps) {
  return joint_like_forward(store, cfg, ModelKind::Contrastive, rs, ps);
}

nn::Tape::Id replacement_batch_loss(Tape& tape, nn::ParamStore& store,
                                    const ModelConfig& cfg,
                                    std::span<const ReplacementSample> batch) {
  if (batch.empty()) throw DataError("empty batch");
  std::vector<Tape::Id> losses;
  losses.reserve(batch.size());
  for (const ReplacementSample& s : batch) {
    Tape::Id enc = encode_replacement(tape, store, cfg, s);
    Tape::Id p =
        replacement_prob_node(tape, store, cfg, ModelKind::BaselineRepl, enc);
    losses.push_back(
        tape.bce(p, s.label == CacheLabel::CacheFriendly ? 1.0 : 0.0));
  }
  return tape.sum_scalars(losses, 1.0 / static_cast<double>(losses.size()));
}

nn::Tape::Id prefetch_batch_loss(Tape& tape, nn::ParamStore& store,
                                 const ModelConfig& cfg,
                                 std::span<const PrefetchSample> batch) {
  if (batch.empty()) throw DataError("empty batch");
  std::vector<Tape::Id> losses;
  losses.reserve(2 * batch.size());
  size_t in = cfg.pf_encoder_dim();
  for (const PrefetchSample& s : batch) {
    Tape::Id enc = encode_prefetch(tape, store, cfg, s);
    Tape::Id page =
        nn::dense(tape, store, "head_page", enc, cfg.page_vocab, in);
    Tape::Id off =
        nn::dense(tape, store, "head_off", enc, cfg.offset_classes, in);
    losses.push_back(tape.softmax_xent(page, s.target_page));
    losses.push_back(tape.softmax_xent(off, s.target_offset));
  }
  return tape.sum_scalars(losses, 1.0 / static_cast<double>(batch.size()));
}

nn::Tape::Id joint_batch_loss(Tape& tape, nn::ParamStore& store,
                              const ModelConfig& cfg,
                              std::span<const AlignedSample> batch,
                              ModelKind kind, JointLosses* parts) {
  if (batch.empty()) throw DataError("empty batch");
  if (kind != ModelKind::Joint && kind != ModelKind::Contrastive)
    throw ConfigError("joint_batch_loss needs a joint or contrastive model");
  std::vector<Tape::Id> repl_losses, page_losses, off_losses;
  for (const AlignedSample& a : batch) {
    Tape::Id x = head_input_for(tape, store, cfg, kind, a.repl, a.pf);
    Tape::Id p = replacement_prob_node(tape, store, cfg, kind, x);
    repl_losses.push_back(
        tape.bce(p, a.repl.label == CacheLabel::CacheFriendly ? 1.0 : 0.0));
    if (a.has_target && cfg.lambda_p != 0.0) {
      size_t in = head_input_dim(cfg, kind);
      Tape::Id page =
          nn::dense(tape, store, "head_page", x, cfg.page_vocab, in);
      Tape::Id off =
          nn::dense(tape, store, "head_off", x, cfg.offset_classes, in);
      page_losses.push_back(tape.softmax_xent(page, a.pf.target_page));
      off_losses.push_back(tape.softmax_xent(off, a.pf.target_offset));
    }
  }
  auto mean_value = [&](const std::vector<Tape::Id>& ids) {
    double sum = 0.0;
    for (Tape::Id id : ids) sum += tape.scalar(id);
    return ids.empty() ? 0.0 : sum / static_cast<double>(ids.size());
  };
  std::vector<Tape::Id> terms;
  terms.push_back(tape.sum_scalars(
      repl_losses, cfg.lambda_r / static_cast<double>(repl_losses.size())));
  if (!page_losses.empty()) {
    double c = cfg.lambda_p / static_cast<double>(page_losses.size());
    terms.push_back(tape.sum_scalars(page_losses, c));
    terms.push_back(tape.sum_scalars(off_losses, c));
  }
  Tape::Id total = tape.sum_scalars(terms, 1.0);
  if (parts) {
    parts->repl = mean_value(repl_losses);
    parts->page = mean_value(page_losses);
    parts->offset = mean_value(off_losses);
    parts->total = tape.scalar(total);
  }
  return total;
}

nn::Tape::Id contrastive_batch_loss(Tape& tape, nn::ParamStore& store,
                                    const ModelConfig& cfg,
                                    std::span<const PairSample> pairs,
                                    std::span<const PairGroup> groups) {
  std::vector<Tape::Id> losses;
  for (const PairGroup& g : groups) {
    if (g.negatives.empty()) continue;
    const PairSample& pos = pairs[g.positive];
    Tape::Id anchor = nn::dense(
        tape, store, "proj_r",
        encode_replacement(tape, store, cfg, pos.replacement_features),
        cfg.proj_dim, cfg.cache_encoder_dim());
    auto project_pf = [&](const PrefetchSample& s) {
      return nn::dense(tape, store, "proj_p",
                       encode_prefetch(tape, store, cfg, s), cfg.proj_dim,
                       cfg.pf_encoder_dim());
    };
    Tape::Id positive = project_pf(pos.prefetch_features);
    std::vector<Tape::Id> negs;
    negs.reserve(g.negatives.size());
    for (size_t n : g.negatives)
      negs.push_back(project_pf(pairs[n].prefetch_features));
    losses.push_back(tape.info_nce(anchor, positive, negs, cfg.tau));
  }
  if (losses.empty())
    throw DataError("no contrastive groups with negatives in batch");
  return tape.sum_scalars(losses, 1.0 / static_cast<double>(losses.size()));
}

double replacement_train_step(nn::ParamStore& store, nn::Adam& opt,
                              const ModelConfig& cfg,
                              std::span<const ReplacementSample> batch) {
  Tape tape;
  store.zero_grads();
  Tape::Id loss = replacement_batch_loss(tape, store, cfg, batch);
  tape.backward(loss);
  opt.step(store);
  return tape.scalar(loss);
}

JointLosses prefetch_train_step(nn::ParamStore& store, nn::Adam& opt,
                                const ModelConfig& cfg,
                                std::span<const PrefetchSample> batch) {
  Tape tape;
  store.zero_grads();
  Tape::Id loss = prefetch_batch_loss(tape, store, cfg, batch);
  tape.backward(loss);
  opt.step(store);
  JointLosses out;
  out.total = tape.scalar(loss);
  return out;
}

JointLosses joint_train_step(nn::ParamStore& store, nn::Adam& opt,
                             const ModelConfig& cfg,
                             std::span<const AlignedSample> batch,
                             ModelKind kind) {
  Tape tape;
  store.zero_grads();
  JointLosses parts;
  Tape::Id loss = joint_batch_loss(tape, store, cfg, batch, kind, &parts);
  tape.backward(loss);
  opt.step(store);
  return parts;
}

PretrainResult contrastive_pretrain(nn::ParamStore& store,
                                    const ModelConfig& cfg,
                                    std::span<const PairSample> pairs,
                                    const nn::AdamConfig& opt_cfg,
                                    size_t epochs, size_t batch_groups,
                                    uint64_t seed) {
  if (batch_groups == 0) throw ConfigError("batch_groups must be >= 1");
  auto groups = group_pairs(pairs);
  std::erase_if(groups,
                [](const PairGroup& g) { return g.negatives.empty(); });
  if (groups.empty())
    throw ConfigError("contrastive pretraining needs positive pairs");

  nn::Adam opt(opt_cfg);
  opt.set_trainable_prefixes({"enc_", "proj_"});

  PretrainResult result;
  {
    double sum = 0.0;
    for (size_t at = 0; at < groups.size(); at += batch_groups) {
      size_t n = std::min(batch_groups, groups.size() - at);
      std::span<const PairGroup> batch(groups.data() + at, n);
      Tape tape;
      sum += tape.scalar(contrastive_batch_loss(tape, store, cfg, pairs,
                                                batch)) *
             static_cast<double>(n);
    }
    result.loss_curve.push_back(sum / static_cast<double>(groups.size()));
  }

  std::vector<size_t> order(groups.size());
  std::iota(order.begin(), order.end(), 0);
  for (size_t epoch = 1; epoch <= epochs; ++epoch) {
    std::mt19937_64 rng(seed ^ epoch);
    deterministic_shuffle(order, rng);
    double sum = 0.0;
    for (size_t at = 0; at < order.size(); at += batch_groups) {
      size_t n = std::min(batch_groups, order.size() - at);
      std::vector<PairGroup> batch;
      batch.reserve(n);
      for (size_t i = 0; i < n; ++i) batch.push_back(groups[order[at + i]]);
      Tape tape;
      store.zero_grads();
      Tape::Id loss = contrastive_batch_loss(tape, store, cfg, pairs, batch);
      tape.backward(loss);
      opt.step(store);
      sum += tape.scalar(loss) * static_cast<double>(n);
    }
    result.loss_curve.push_back(sum / static_cast<double>(order.size()));
  }
  return result;
}

PairCosines pair_cosine_stats(nn::ParamStore& store, const ModelConfig& cfg,
                              std::span<const PairSample> pairs) {
  double pos_sum = 0.0, neg_sum = 0.0;
  size_t pos_n = 0, neg_n = 0;
  for (const PairSample& p : pairs) {
    Tape tape;
    Tape::Id anchor = nn::dense(
        tape, store, "proj_r",
        encode_replacement(tape, store, cfg, p.replacement_features),
        cfg.proj_dim, cfg.cache_encoder_dim());
    Tape::Id other = nn::dense(
        tape, store, "proj_p",
        encode_prefetch(tape, store, cfg, p.prefetch_features), cfg.proj_dim,
        cfg.pf_encoder_dim());
    double c = tape.scalar(tape.cosine(anchor, other));
    if (p.is_positive) {
      pos_sum += c;
      ++pos_n;
    } else {
      neg_sum += c;
      ++neg_n;
    }
  }
  PairCosines out;
  if (pos_n) out.mean_positive = pos_sum / static_cast<double>(pos_n);
  if (neg_n) out.mean_negative = neg_sum / static_cast<double>(neg_n);
  return out;
}

nn::MetaMap model_meta(const ModelConfig& cfg, ModelKind kind) {
  nn::MetaMap meta;
  meta["model_kind"] = model_kind_name(kind);
  meta["history_len"] = std::to_string(cfg.history_len);
  meta["embed_dim"] = std::to_string(cfg.embed_dim);
  meta["hidden_dim"] = std::to_string(cfg.hidden_dim);
  meta["ctx_dim"] = std::to_string(cfg.ctx_dim);
  meta["shared_dim"] = std::to_string(cfg.shared_dim);
  meta["proj_dim"] = std::to_string(cfg.proj_dim);
  meta["tau"] = std::to_string(cfg.tau);
  meta["lambda_r"] = std::to_string(cfg.lambda_r);
  meta["lambda_p"] = std::to_string(cfg.lambda_p);
  meta["pc_vocab"] = std::to_string(cfg.pc_vocab);
  meta["page_vocab"] = std::to_string(cfg.page_vocab);
  meta["offset_classes"] = std::to_string(cfg.offset_classes);
  return meta;
}

namespace {

const std::string& meta_at(const nn::MetaMap& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end())
    throw DataError("checkpoint meta missing key: " + key);
  return it->second;
}

}  // namespace

ModelConfig config_from_meta(const nn::MetaMap& meta, ModelKind* kind) {
  ModelConfig cfg;
  if (kind) *kind = model_kind_from_name(meta_at(meta, "model_kind"));
  cfg.history_len = std::stoull(meta_at(meta, "history_len"));
  cfg.embed_dim = std::stoull(meta_at(meta, "embed_dim"));
  cfg.hidden_dim = std::stoull(meta_at(meta, "hidden_dim"));
  cfg.ctx_dim = std::stoull(meta_at(meta, "ctx_dim"));
  cfg.shared_dim = std::stoull(meta_at(meta, "shared_dim"));
  cfg.proj_dim = std::stoull(meta_at(meta, "proj_dim"));
  cfg.tau = std::stod(meta_at(meta, "tau"));
  cfg.lambda_r = std::stod(meta_at(meta, "lambda_r"));
  cfg.lambda_p = std::stod(meta_at(meta, "lambda_p"));
  cfg.pc_vocab = static_cast<uint32_t>(std::stoul(meta_at(meta, "pc_vocab")));
  cfg.page_vocab =
      static_cast<uint32_t>(std::stoul(meta_at(meta, "page_vocab")));
  cfg.offset_classes =
      static_cast<uint32_t>(std::stoul(meta_at(meta, "offset_classes")));
  cfg.validate();
  return cfg;
}

}  // namespace jcl
