#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jcl/nn/tape.hpp"
#include "jcl/nn/tensor.hpp"

namespace jcl::nn {

// Deterministic per-tensor seed stream: same base seed and creation order
// produce identical initializations.
struct InitSeq {
  uint64_t base;
  uint64_t counter = 0;
  uint64_t next() { return base ^ (0x9E3779B97F4A7C15ull * ++counter); }
};

// prefix.W [out,in] uniform(±1/sqrt(in)), prefix.b [out] zeros.
void add_dense(ParamStore& store, const std::string& prefix, size_t out,
               size_t in, InitSeq& init);
Tape::Id dense(Tape& tape, ParamStore& store, const std::string& prefix,
               Tape::Id x, size_t out, size_t in);

// name [V,D] uniform(±1/sqrt(D)).
void add_embedding(ParamStore& store, const std::string& name, size_t vocab,
                   size_t dim, InitSeq& init);
std::vector<Tape::Id> embed_sequence(Tape& tape, ParamStore& store,
                                     const std::string& name,
                                     std::span<const uint32_t> ids);

// Gate params prefix.{Wi,Ui,bi,Wf,Uf,bf,Wo,Uo,bo,Wg,Ug,bg}; forget bias
// starts at 1, the other biases at 0.
void add_lstm_layer(ParamStore& store, const std::string& prefix, size_t in,
                    size_t hidden, InitSeq& init);

struct LstmOut {
  Tape::Id last;                  // hidden after the final step (zeros if empty)
  std::vector<Tape::Id> hidden;   // one per step
};

// Standard LSTM recurrence from zero initial hidden/cell state:
// i,f,o = sigmoid(Wx+Uh+b), g = tanh(Wx+Uh+b), c = f*c + i*g, h = o*tanh(c).
LstmOut lstm_layer(Tape& tape, ParamStore& store, const std::string& prefix,
                   std::span<const Tape::Id> inputs, size_t in, size_t hidden);

// Two stacked layers under prefix.l1 / prefix.l2; layer 2 consumes layer 1's
// hidden sequence.
void add_lstm2(ParamStore& store, const std::string& prefix, size_t in,
               size_t hidden, InitSeq& init);
LstmOut lstm2(Tape& tape, ParamStore& store, const std::string& prefix,
              std::span<const Tape::Id> inputs, size_t in, size_t hidden);

}  // namespace jcl::nn
