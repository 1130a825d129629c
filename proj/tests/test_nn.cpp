#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "jcl/error.hpp"
#include "jcl/nn/adam.hpp"
#include "jcl/nn/checkpoint.hpp"
#include "jcl/nn/gradcheck.hpp"
#include "jcl/nn/layers.hpp"
#include "jcl/nn/tape.hpp"
#include "jcl/nn/tensor.hpp"

using namespace jcl;
using namespace jcl::nn;

TEST_CASE("param store basics") {
  ParamStore s;
  Tensor& w = s.add("w", {2, 3});
  CHECK(w.numel() == 6);
  CHECK(s.contains("w"));
  CHECK_FALSE(s.contains("nope"));
  CHECK_THROWS_AS(s.add("w", {1}), ShapeError);
  CHECK_THROWS_AS(s.value("nope"), ShapeError);
  s.grad("w").data[0] = 5.0;
  s.zero_grads();
  CHECK(s.grad("w").data[0] == 0.0);
}

TEST_CASE("init is float32 representable and seeded") {
  Tensor a({100});
  Tensor b({100});
  init_uniform(a, 0.5, 42);
  init_uniform(b, 0.5, 42);
  CHECK(a.data == b.data);
  for (double x : a.data) CHECK(x == round_f32(x));
  init_uniform(b, 0.5, 43);
  CHECK(a.data != b.data);
}

TEST_CASE("embedding rows look up and bounds-check") {
  ParamStore s;
  Tensor& t = s.add("emb", {4, 2});
  for (size_t i = 0; i < 8; ++i) t.data[i] = static_cast<double>(i);
  Tape tape;
  std::vector<uint32_t> ids = {2, 0};
  auto rows = embed_sequence(tape, s, "emb", ids);
  REQUIRE(rows.size() == 2);
  CHECK(tape.value(rows[0]) == std::vector<double>{4.0, 5.0});
  CHECK(tape.value(rows[1]) == std::vector<double>{0.0, 1.0});
  std::vector<uint32_t> empty;
  CHECK(embed_sequence(tape, s, "emb", empty).empty());
  CHECK_THROWS_AS(tape.embedding_row(s, "emb", 4), BoundsError);
}

TEST_CASE("bce closed forms") {
  Tape t;
  CHECK(t.scalar(t.bce(t.input({0.5}), 1.0)) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(t.scalar(t.bce(t.input({1.0 - 1e-7}), 1.0)) ==
        doctest::Approx(1e-7).epsilon(1e-3));
  CHECK(t.scalar(t.bce(t.input({0.9}), 0.0)) ==
        doctest::Approx(-std::log(0.1)).epsilon(1e-12));
  // clamping keeps the loss finite at the endpoints
  CHECK(std::isfinite(t.scalar(t.bce(t.input({0.0}), 1.0))));
  CHECK(std::isfinite(t.scalar(t.bce(t.input({1.0}), 0.0))));
}

TEST_CASE("softmax_xent closed forms") {
  Tape t;
  CHECK(t.scalar(t.softmax_xent(t.input({2.0, 2.0, 2.0, 2.0}), 1)) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(t.scalar(t.softmax_xent(t.input({1000.0, 0.0, 0.0}), 0)) ==
        doctest::Approx(0.0).epsilon(1e-9));
  CHECK(t.scalar(t.softmax_xent(t.input({1.0, 0.0}), 0)) ==
        doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
  CHECK_THROWS_AS(t.softmax_xent(t.input({1.0, 0.0}), 2), BoundsError);
}

TEST_CASE("softmax sums to one and stays positive") {
  std::vector<double> logits = {5.0, -3.0, 900.0, 0.1};
  auto p = softmax(logits);
  double sum = 0.0;
  for (double v : p) {
    CHECK(v > 0.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("info_nce closed forms") {
  Tape t;
  auto a = t.input({1.0, 0.0});
  auto p = t.input({2.0, 0.0});   // cos(a,p)=1
  auto n = t.input({0.0, 3.0});   // cos(a,n)=0
  std::vector<Tape::Id> negs = {n};
  CHECK(t.scalar(t.info_nce(a, p, negs, 1.0)) ==
        doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));

  auto same = t.input({0.3, -0.4});
  std::vector<Tape::Id> three = {same, same, same};
  CHECK(t.scalar(t.info_nce(same, same, three, 0.1)) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  auto anti = t.input({-1.0, 0.0});
  std::vector<Tape::Id> apart = {anti, anti, anti};
  CHECK(t.scalar(t.info_nce(a, p, apart, 0.05)) ==
        doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("info_nce is invariant to positive rescaling (cosine)") {
  auto loss_at = [](double s) {
    Tape t;
    auto a = t.input({0.5 * s, -0.2 * s, 0.1 * s});
    auto p = t.input({0.4 * s, 0.3 * s, -0.2 * s});
    auto n1 = t.input({-0.1 * s, 0.9 * s, 0.2 * s});
    auto n2 = t.input({0.7 * s, 0.1 * s, 0.6 * s});
    std::vector<Tape::Id> negs = {n1, n2};
    return t.scalar(t.info_nce(a, p, negs, 0.1));
  };
  CHECK(loss_at(1.0) == doctest::Approx(loss_at(7.5)).epsilon(1e-9));
}

TEST_CASE("cosine rejects zero-norm inputs") {
  Tape t;
  auto z = t.input({0.0, 0.0});
  auto v = t.input({1.0, 2.0});
  CHECK_THROWS_AS(t.cosine(z, v), DataError);
}

TEST_CASE("backward on a linear scalar") {
  ParamStore s;
  s.add("w", {1}).data[0] = 2.0;
  Tape t;
  auto w = t.param(s, "w");
  auto x = t.input({3.0});
  auto loss = t.dot(w, x);
  t.backward(loss);
  CHECK(s.grad("w").data[0] == 3.0);
}

TEST_CASE("parameters off the loss path get zero gradient") {
  ParamStore s;
  s.add("used", {1}).data[0] = 1.5;
  s.add("unused", {3});
  Tape t;
  auto w = t.param(s, "used");
  auto loss = t.scale(w, 4.0);
  t.backward(loss);
  CHECK(s.grad("used").data[0] == 4.0);
  for (double g : s.grad("unused").data) CHECK(g == 0.0);
}

TEST_CASE("zero-parameter lstm is a fixed point at zero") {
  ParamStore s;
  InitSeq init{1};
  add_lstm2(s, "lstm", 3, 4, init);
  for (auto& e : s.entries()) std::fill(e.value.data.begin(), e.value.data.end(), 0.0);
  Tape t;
  std::vector<Tape::Id> xs = {t.input({1.0, -2.0, 0.5}), t.input({0.3, 0.9, -1.0})};
  LstmOut out = lstm2(t, s, "lstm", xs, 3, 4);
  for (Tape::Id h : out.hidden) {
    for (double v : t.value(h)) CHECK(v == 0.0);
  }
  for (double v : t.value(out.last)) CHECK(v == 0.0);
}

TEST_CASE("empty sequence yields the zero initial state") {
  ParamStore s;
  InitSeq init{2};
  add_lstm2(s, "lstm", 3, 4, init);
  Tape t;
  std::vector<Tape::Id> xs;
  LstmOut out = lstm2(t, s, "lstm", xs, 3, 4);
  CHECK(out.hidden.empty());
  CHECK(t.value(out.last) == std::vector<double>(4, 0.0));
}

namespace {

// Gradient check for every op class in one composed graph.
double op_soup_loss(ParamStore& s, bool with_grad) {
  Tape t;
  auto w1 = t.param(s, "w1");
  auto b1 = t.param(s, "b1");
  auto emb = t.embedding_row(s, "emb", 1);
  auto x = t.input({0.3, -0.7, 0.2});
  auto lin = t.add(t.matvec(w1, x, 4, 3), b1);
  auto sig = t.sigmoid(lin);
  auto th = t.tanh(lin);
  auto had = t.hadamard(sig, th);
  std::vector<Tape::Id> parts = {had, emb};
  auto cat = t.concat(parts);
  auto sc = t.scale(cat, 1.3);
  auto d = t.sub(sc, t.input(std::vector<double>(t.size(sc), 0.1)));
  auto cosv = t.cosine(d, t.input({0.5, -0.2, 0.8, 0.1, 0.4, -0.6, 0.2, 0.3}));
  auto sm = t.softmax_xent(t.scale(d, 0.7), 2);
  auto p = t.sigmoid(t.dot(d, t.input(std::vector<double>(t.size(d), 0.25))));
  auto b = t.bce(p, 1.0);
  std::vector<Tape::Id> losses = {cosv, sm, b};
  auto loss = t.sum_scalars(losses, 0.5);
  if (with_grad) t.backward(loss);
  return t.scalar(loss);
}

}  // namespace

TEST_CASE("blanket gradient check over all op types") {
  ParamStore s;
  InitSeq init{7};
  Tensor& w1 = s.add("w1", {4, 3});
  init_uniform(w1, 0.6, init.next());
  Tensor& b1 = s.add("b1", {4});
  init_uniform(b1, 0.4, init.next());
  add_embedding(s, "emb", 3, 4, init);
  double err = grad_check([&](bool g) { return op_soup_loss(s, g); }, s);
  CHECK(err < 1e-6);
}

TEST_CASE("2-layer lstm with bce head passes gradient check") {
  for (uint64_t seed : {11ull, 12ull, 13ull, 14ull, 15ull}) {
    ParamStore s;
    InitSeq init{seed};
    add_embedding(s, "emb", 5, 3, init);
    add_lstm2(s, "lstm", 3, 4, init);
    add_dense(s, "head", 1, 4, init);
    // Sum over several sequences so every recurrent weight carries a
    // resolvable gradient; lone short sequences leave some coordinates
    // near the 1e-8 denominator floor where central differences are all
    // roundoff.
    std::vector<std::pair<std::vector<uint32_t>, double>> batch = {
        {{1, 4, 0, 2, 3}, 1.0},
        {{4, 3, 2, 1, 4}, 0.0},
        {{2, 2, 1, 3, 0}, 1.0},
    };
    auto fn = [&](bool with_grad) {
      Tape t;
      std::vector<Tape::Id> losses;
      for (const auto& [ids, target] : batch) {
        auto xs = embed_sequence(t, s, "emb", ids);
        LstmOut out = lstm2(t, s, "lstm", xs, 3, 4);
        auto p = t.sigmoid(dense(t, s, "head", out.last, 1, 4));
        losses.push_back(t.bce(p, target));
      }
      auto loss = t.sum_scalars(losses, 1.0);
      if (with_grad) t.backward(loss);
      return t.scalar(loss);
    };
    double err = grad_check(fn, s, 1e-4, 50, seed);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("info_nce through projections passes gradient check") {
  ParamStore s;
  InitSeq init{21};
  add_dense(s, "pa", 3, 4, init);
  add_dense(s, "pb", 3, 4, init);
  auto fn = [&](bool with_grad) {
    Tape t;
    auto a = dense(t, s, "pa", t.input({0.4, -0.3, 0.8, 0.2}), 3, 4);
    auto p = dense(t, s, "pb", t.input({0.1, 0.5, -0.6, 0.9}), 3, 4);
    auto n1 = dense(t, s, "pb", t.input({-0.2, 0.7, 0.3, -0.5}), 3, 4);
    auto n2 = dense(t, s, "pb", t.input({0.6, 0.1, -0.4, 0.3}), 3, 4);
    std::vector<Tape::Id> negs = {n1, n2};
    auto loss = t.info_nce(a, p, negs, 0.1);
    if (with_grad) t.backward(loss);
    return t.scalar(loss);
  };
  CHECK(grad_check(fn, s) < 1e-4);
}

TEST_CASE("corrupted gradients are detected") {
  ParamStore s;
  s.add("w", {2});
  s.value("w").data = {0.5, -0.8};
  auto fn = [&](bool with_grad) {
    Tape t;
    auto w = t.param(s, "w");
    auto loss = t.dot(w, t.input({1.0, 2.0}));
    if (with_grad) {
      t.backward(loss);
      for (double& g : s.grad("w").data) g *= 2.0;  // fault injection
    }
    return t.scalar(loss);
  };
  CHECK(grad_check(fn, s) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("adam leaves params unchanged on zero gradients") {
  ParamStore s;
  s.add("w", {3}).data = {1.0, -2.0, 3.0};
  Adam opt;
  opt.step(s);
  CHECK(s.value("w").data == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("adam first step magnitude is the learning rate") {
  ParamStore s;
  s.add("w", {1}).data[0] = 0.0;
  s.grad("w").data[0] = 1.0;
  AdamConfig cfg;
  cfg.lr = 0.001;
  Adam opt(cfg);
  opt.step(s);
  // mhat = 1, vhat = 1: step = lr / (1 + eps)
  CHECK(s.value("w").data[0] ==
        doctest::Approx(-0.001).epsilon(1e-4));
  CHECK(s.value("w").data[0] == round_f32(s.value("w").data[0]));
}

TEST_CASE("adam is deterministic") {
  auto run = [] {
    ParamStore s;
    InitSeq init{5};
    add_dense(s, "d", 4, 4, init);
    Adam opt;
    for (int step = 0; step < 20; ++step) {
      s.zero_grads();
      Tape t;
      auto y = dense(t, s, "d", t.input({1.0, -0.5, 0.3, 0.7}), 4, 4);
      auto loss = t.dot(y, y);
      t.backward(loss);
      opt.step(s);
    }
    return s.value("d.W").data;
  };
  CHECK(run() == run());
}

TEST_CASE("adam trainable prefixes freeze everything else") {
  ParamStore s;
  s.add("enc.w", {1}).data[0] = 1.0;
  s.add("head.w", {1}).data[0] = 1.0;
  s.grad("enc.w").data[0] = 1.0;
  s.grad("head.w").data[0] = 1.0;
  Adam opt;
  opt.set_trainable_prefixes({"head."});
  opt.step(s);
  CHECK(s.value("enc.w").data[0] == 1.0);
  CHECK(s.value("head.w").data[0] != 1.0);
}

TEST_CASE("adam lr scaling by prefix") {
  ParamStore s;
  s.add("enc.w", {1}).data[0] = 0.0;
  s.add("head.w", {1}).data[0] = 0.0;
  s.grad("enc.w").data[0] = 1.0;
  s.grad("head.w").data[0] = 1.0;
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam opt(cfg);
  opt.add_lr_scale("enc.", 0.1);
  opt.step(s);
  CHECK(s.value("enc.w").data[0] == doctest::Approx(-0.001).epsilon(1e-4));
  CHECK(s.value("head.w").data[0] == doctest::Approx(-0.01).epsilon(1e-4));
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  ParamStore s;
  InitSeq init{9};
  add_dense(s, "enc.d", 5, 7, init);
  add_embedding(s, "emb", 11, 3, init);
  MetaMap meta = {{"model_kind", "baseline_repl"}, {"H", "16"}, {"seed", "9"}};
  std::stringstream buf;
  save_checkpoint(s, meta, buf);
  auto [loaded, meta2] = load_checkpoint(buf);
  CHECK(meta2 == meta);
  REQUIRE(loaded.size() == s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    CHECK(loaded.entries()[i].name == s.entries()[i].name);
    CHECK(loaded.entries()[i].value.shape == s.entries()[i].value.shape);
    CHECK(loaded.entries()[i].value.data == s.entries()[i].value.data);
  }
  // byte-identical on re-save
  std::stringstream buf2;
  save_checkpoint(loaded, meta2, buf2);
  CHECK(buf.str() == buf2.str());
}

TEST_CASE("checkpoint rejects bad magic, version, truncation") {
  ParamStore s;
  s.add("w", {2}).data = {1.0, 2.0};
  std::stringstream buf;
  save_checkpoint(s, {}, buf);
  std::string bytes = buf.str();

  std::istringstream bad_magic("XXXX" + bytes.substr(4));
  CHECK_THROWS_WITH_AS(load_checkpoint(bad_magic), "bad magic at offset 0",
                       FormatError);

  std::string vbytes = bytes;
  vbytes[4] = 9;
  std::istringstream bad_version(vbytes);
  CHECK_THROWS_WITH_AS(load_checkpoint(bad_version),
                       "unsupported checkpoint version 9 at offset 4",
                       FormatError);

  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(truncated), FormatError);
}

TEST_CASE("optimizer state export/import resumes training exactly") {
  auto make_store = [] {
    ParamStore s;
    InitSeq init{33};
    add_dense(s, "d", 3, 3, init);
    return s;
  };
  auto one_step = [](ParamStore& s, Adam& opt) {
    s.zero_grads();
    Tape t;
    auto y = dense(t, s, "d", t.input({0.9, -0.1, 0.4}), 3, 3);
    auto loss = t.dot(y, y);
    t.backward(loss);
    opt.step(s);
  };

  ParamStore a = make_store();
  Adam opta;
  for (int i = 0; i < 10; ++i) one_step(a, opta);

  ParamStore b = make_store();
  Adam optb;
  for (int i = 0; i < 5; ++i) one_step(b, optb);
  ParamStore sink = b.clone_values();
  optb.export_state(sink);
  MetaMap meta = {{"step", std::to_string(optb.step_count())}};
  std::stringstream buf;
  save_checkpoint(sink, meta, buf);

  auto [loaded, meta2] = load_checkpoint(buf);
  ParamStore c;
  for (const auto& e : loaded.entries()) {
    if (e.name.rfind("opt.", 0) == 0) continue;
    c.add(e.name, e.value.shape).data = e.value.data;
  }
  Adam optc;
  optc.import_state(loaded);
  optc.set_step_count(std::stoull(meta2.at("step")));
  for (int i = 0; i < 5; ++i) one_step(c, optc);

  CHECK(a.value("d.W").data == c.value("d.W").data);
  CHECK(a.value("d.b").data == c.value("d.b").data);
}
