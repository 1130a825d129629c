#include "jcl/nn/layers.hpp"

#include <cmath>

namespace jcl::nn {

void add_dense(ParamStore& store, const std::string& prefix, size_t out,
               size_t in, InitSeq& init) {
  Tensor& w = store.add(prefix + ".W", {out, in});
  init_uniform(w, 1.0 / std::sqrt(static_cast<double>(in)), init.next());
  store.add(prefix + ".b", {out});
}

Tape::Id dense(Tape& tape, ParamStore& store, const std::string& prefix,
               Tape::Id x, size_t out, size_t in) {
  Tape::Id w = tape.param(store, prefix + ".W");
  Tape::Id b = tape.param(store, prefix + ".b");
  return tape.add(tape.matvec(w, x, out, in), b);
}

void add_embedding(ParamStore& store, const std::string& name, size_t vocab,
                   size_t dim, InitSeq& init) {
  Tensor& t = store.add(name, {vocab, dim});
  init_uniform(t, 1.0 / std::sqrt(static_cast<double>(dim)), init.next());
}

std::vector<Tape::Id> embed_sequence(Tape& tape, ParamStore& store,
                                     const std::string& name,
                                     std::span<const uint32_t> ids) {
  std::vector<Tape::Id> out;
  out.reserve(ids.size());
  for (uint32_t id : ids) out.push_back(tape.embedding_row(store, name, id));
  return out;
}

namespace {

const char* kGates[4] = {"i", "f", "o", "g"};

}  // namespace

void add_lstm_layer(ParamStore& store, const std::string& prefix, size_t in,
                    size_t hidden, InitSeq& init) {
  double wb = 1.0 / std::sqrt(static_cast<double>(in));
  double ub = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (const char* g : kGates) {
    Tensor& w = store.add(prefix + ".W" + g, {hidden, in});
    init_uniform(w, wb, init.next());
    Tensor& u = store.add(prefix + ".U" + g, {hidden, hidden});
    init_uniform(u, ub, init.next());
    Tensor& b = store.add(prefix + ".b" + g, {hidden});
    if (g[0] == 'f') std::fill(b.data.begin(), b.data.end(), 1.0);
  }
}

LstmOut lstm_layer(Tape& tape, ParamStore& store, const std::string& prefix,
                   std::span<const Tape::Id> inputs, size_t in, size_t hidden) {
  LstmOut out;
  if (inputs.empty()) {
    out.last = tape.zeros(hidden);
    return out;
  }
  Tape::Id W[4], U[4], B[4];
  for (int g = 0; g < 4; ++g) {
    W[g] = tape.param(store, prefix + ".W" + kGates[g]);
    U[g] = tape.param(store, prefix + ".U" + kGates[g]);
    B[g] = tape.param(store, prefix + ".b" + kGates[g]);
  }
  Tape::Id h = tape.zeros(hidden);
  Tape::Id c = tape.zeros(hidden);
  for (Tape::Id x : inputs) {
    auto gate = [&](int g) {
      return tape.add(tape.add(tape.matvec(W[g], x, hidden, in),
                               tape.matvec(U[g], h, hidden, hidden)),
                      B[g]);
    };
    Tape::Id i = tape.sigmoid(gate(0));
    Tape::Id f = tape.sigmoid(gate(1));
    Tape::Id o = tape.sigmoid(gate(2));
    Tape::Id g = tape.tanh(gate(3));
    c = tape.add(tape.hadamard(f, c), tape.hadamard(i, g));
    h = tape.hadamard(o, tape.tanh(c));
    out.hidden.push_back(h);
  }
  out.last = h;
  return out;
}

void add_lstm2(ParamStore& store, const std::string& prefix, size_t in,
               size_t hidden, InitSeq& init) {
  add_lstm_layer(store, prefix + ".l1", in, hidden, init);
  add_lstm_layer(store, prefix + ".l2", hidden, hidden, init);
}

LstmOut lstm2(Tape& tape, ParamStore& store, const std::string& prefix,
              std::span<const Tape::Id> inputs, size_t in, size_t hidden) {
  LstmOut l1 = lstm_layer(tape, store, prefix + ".l1", inputs, in, hidden);
  return lstm_layer(tape, store, prefix + ".l2", l1.hidden, hidden, hidden);
}

}  // namespace jcl::nn
