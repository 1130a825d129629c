#include <benchmark/benchmark.h>

#include <random>

#include "jcl/models.hpp"

namespace {

jcl::ModelConfig bench_config() {
  jcl::ModelConfig cfg;
  cfg.history_len = 8;
  cfg.embed_dim = 16;
  cfg.hidden_dim = 32;
  cfg.ctx_dim = 8;
  cfg.shared_dim = 16;
  cfg.proj_dim = 16;
  cfg.pc_vocab = 64;
  cfg.page_vocab = 128;
  cfg.offset_classes = 64;
  return cfg;
}

std::vector<jcl::ReplacementSample> repl_batch(const jcl::ModelConfig& cfg,
                                               size_t n) {
  std::mt19937_64 rng(7);
  std::vector<jcl::ReplacementSample> out(n);
  for (size_t i = 0; i < n; ++i) {
    jcl::ReplacementSample& s = out[i];
    s.pc_history.resize(cfg.history_len);
    for (auto& t : s.pc_history) t = 2 + rng() % (cfg.pc_vocab - 2);
    s.context = {double(rng() % 64), double(int(rng() % 17) - 8), 0, 1, 0, 0, 0};
    s.label = rng() % 2 ? jcl::CacheLabel::CacheFriendly
                        : jcl::CacheLabel::CacheAverse;
    s.insertion_id = i;
    s.event_index = i;
  }
  return out;
}

std::vector<jcl::AlignedSample> joint_batch(const jcl::ModelConfig& cfg,
                                            size_t n) {
  std::mt19937_64 rng(9);
  std::vector<jcl::ReplacementSample> rb = repl_batch(cfg, n);
  std::vector<jcl::AlignedSample> out(n);
  for (size_t i = 0; i < n; ++i) {
    jcl::AlignedSample& a = out[i];
    a.repl = rb[i];
    a.pf.pc_history = rb[i].pc_history;
    a.pf.page_history.resize(cfg.history_len);
    a.pf.offset_history.resize(cfg.history_len);
    for (auto& t : a.pf.page_history) t = 2 + rng() % (cfg.page_vocab - 2);
    for (auto& t : a.pf.offset_history) t = 2 + rng() % cfg.offset_classes;
    a.pf.target_page = 2 + rng() % (cfg.page_vocab - 2);
    a.pf.target_offset = rng() % cfg.offset_classes;
    a.pf.event_index = rb[i].event_index;
    a.has_target = true;
  }
  return out;
}

// Recurrent encoder + head, forward only.
void BM_ReplacementForward(benchmark::State& state) {
  jcl::ModelConfig cfg = bench_config();
  jcl::nn::ParamStore store;
  jcl::add_model_params(store, cfg, jcl::ModelKind::BaselineRepl, 1);
  auto batch = repl_batch(cfg, static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    jcl::nn::Tape tape;
    auto loss = jcl::replacement_batch_loss(tape, store, cfg, batch);
    benchmark::DoNotOptimize(tape.scalar(loss));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ReplacementForward)->Arg(8)->Arg(32);

// Recurrent encoder + head, forward and reverse sweep.
void BM_ReplacementForwardBackward(benchmark::State& state) {
  jcl::ModelConfig cfg = bench_config();
  jcl::nn::ParamStore store;
  jcl::add_model_params(store, cfg, jcl::ModelKind::BaselineRepl, 1);
  auto batch = repl_batch(cfg, static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    store.zero_grads();
    jcl::nn::Tape tape;
    auto loss = jcl::replacement_batch_loss(tape, store, cfg, batch);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.scalar(loss));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ReplacementForwardBackward)->Arg(8)->Arg(32);

// Both encoders, shared trunk, and all three heads with a full Adam step.
void BM_JointTrainStep(benchmark::State& state) {
  jcl::ModelConfig cfg = bench_config();
  jcl::nn::ParamStore store;
  jcl::add_model_params(store, cfg, jcl::ModelKind::Joint, 1);
  jcl::nn::Adam opt({.lr = 1e-3});
  auto batch = joint_batch(cfg, static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        jcl::joint_train_step(store, opt, cfg, batch, jcl::ModelKind::Joint));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_JointTrainStep)->Arg(8)->Arg(32);

}  // namespace
