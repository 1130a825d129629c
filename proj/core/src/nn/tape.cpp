#include "jcl/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "jcl/error.hpp"

namespace jcl::nn {

Tape::Id Tape::push(std::vector<double> val, std::function<void(Tape&)> back) {
  Node n;
  n.grad.assign(val.size(), 0.0);
  n.val = std::move(val);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

double Tape::scalar(Id id) const {
  if (nodes_[id].val.size() != 1) throw ShapeError("node is not a scalar");
  return nodes_[id].val[0];
}

Tape::Id Tape::input(std::vector<double> value) {
  return push(std::move(value), {});
}

Tape::Id Tape::zeros(size_t n) { return push(std::vector<double>(n, 0.0), {}); }

Tape::Id Tape::param(ParamStore& store, const std::string& name) {
  const Tensor& t = store.value(name);
  Id id = push(t.data, {});
  ParamStore* sp = &store;
  std::string pname = name;
  nodes_[id].back = [id, sp, pname](Tape& tape) {
    auto& g = sp->grad(pname).data;
    const auto& dg = tape.node(id).grad;
    for (size_t i = 0; i < g.size(); ++i) g[i] += dg[i];
  };
  return id;
}

Tape::Id Tape::embedding_row(ParamStore& store, const std::string& table,
                             size_t row) {
  const Tensor& t = store.value(table);
  if (t.shape.size() != 2) throw ShapeError(table + " is not a table");
  if (row >= t.shape[0]) {
    throw BoundsError("embedding id " + std::to_string(row) +
                      " out of range for " + table + " with " +
                      std::to_string(t.shape[0]) + " rows");
  }
  size_t d = t.shape[1];
  std::vector<double> v(t.data.begin() + row * d, t.data.begin() + (row + 1) * d);
  Id id = push(std::move(v), {});
  ParamStore* sp = &store;
  std::string tname = table;
  nodes_[id].back = [id, sp, tname, row, d](Tape& tape) {
    auto& g = sp->grad(tname).data;
    const auto& dg = tape.node(id).grad;
    for (size_t i = 0; i < d; ++i) g[row * d + i] += dg[i];
  };
  return id;
}

Tape::Id Tape::matvec(Id w, Id x, size_t rows, size_t cols) {
  if (nodes_[w].val.size() != rows * cols)
    throw ShapeError("matvec: weight size mismatch");
  if (nodes_[x].val.size() != cols)
    throw ShapeError("matvec: input size mismatch");
  const auto& wv = nodes_[w].val;
  const auto& xv = nodes_[x].val;
  std::vector<double> y(rows, 0.0);
  for (size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* wrow = wv.data() + r * cols;
    for (size_t c = 0; c < cols; ++c) acc += wrow[c] * xv[c];
    y[r] = acc;
  }
  Id id = push(std::move(y), {});
  nodes_[id].back = [id, w, x, rows, cols](Tape& tape) {
    const auto& dy = tape.node(id).grad;
    const auto& wv = tape.node(w).val;
    const auto& xv = tape.node(x).val;
    auto& dw = tape.node(w).grad;
    auto& dx = tape.node(x).grad;
    for (size_t r = 0; r < rows; ++r) {
      double g = dy[r];
      if (g == 0.0) continue;
      const double* wrow = wv.data() + r * cols;
      double* dwrow = dw.data() + r * cols;
      for (size_t c = 0; c < cols; ++c) {
        dwrow[c] += g * xv[c];
        dx[c] += g * wrow[c];
      }
    }
  };
  return id;
}

Tape::Id Tape::add(Id a, Id b) {
  if (nodes_[a].val.size() != nodes_[b].val.size())
    throw ShapeError("add: size mismatch");
  std::vector<double> y(nodes_[a].val.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = nodes_[a].val[i] + nodes_[b].val[i];
  Id id = push(std::move(y), {});
  nodes_[id].back = [id, a, b](Tape& tape) {
    const auto& dy = tape.node(id).grad;
    for (size_t i = 0; i < dy.size(); ++i) {
      tape.node(a).grad[i] += dy[i];
      tape.node(b).grad[i] += dy[i];
    }
  };
  return id;
}

Tape::Id Tape::sub(Id a, Id b) {
  if (nodes_[a].val.size() != nodes_[b].val.size())
    throw ShapeError("sub: size mismatch");
  std::vector<double> y(nodes_[a].val.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = nodes_[a].val[i] - nodes_[b].val[i];
  Id id = push(std::move(y), {});
  nodes_[id].back = [id, a, b](Tape& tape) {
    const auto& dy = tape.node(id).grad;
    for (size_t i = 0; i < dy.size(); ++i) {
      tape.node(a).grad[i] += dy[i];
      tape.node(b).grad[i] -= dy[i];
    }
  };
  return id;
}

Tape::Id Tape::hadamard(Id a, Id b) {
  if (nodes_[a].val.size() != nodes_[b].val.size())
    throw ShapeError("hadamard: size mismatch");
  std::vector<double> y(nodes_[a].val.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = nodes_[a].val[i] * nodes_[b].val[i];
  Id id = push(std::move(y), {});
  nodes_[id].back = [id, a, b](Tape& tape) {
    const auto& dy = tape.node(id).grad;
    const auto& av = tape.node(a).val;
    const auto& bv = tape.node(b).val;
    for (size_t i = 0; i < dy.size(); ++i) {
      tape.node(a).grad[i] += dy[i] * bv[i];
      tape.node(b).grad[i] += dy[i] * av[i];
    }
  };
  return id;
}

Tape::Id Tape::scale(Id a, double c) {
  std::vector<double> y(nodes_[a].val.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = nodes_[a].val[i] * c;
  Id id = push(std::move(y), {});
  nodes_[id].back = [id, a, c](Tape& tape) {
    const auto& dy = tape.node(id).grad;
    for (size_t i = 0; i < dy.size(); ++i) tape.node(a).grad[i] += c * dy[i];
  };
  return id;
}

Tape::Id Tape::sigmoid(Id a) {
  std::vector<double> y(nodes_[a].val.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-nodes_[a].val[i]));
  Id id = push(std::move(y), {});
  nodes_[id].back = [id, a](Tape& tape) {
    const auto& dy = tape.node(id).grad;
    const auto& yv = tape.node(id).val;
    for (size_t i = 0; i < dy.size(); ++i)
      tape.node(a).grad[i] += dy[i] * yv[i] * (1.0 - yv[i]);
  };
  return id;
}

Tape::Id Tape::tanh(Id a) {
  std::vector<double> y(nodes_[a].val.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(nodes_[a].val[i]);
  Id id = push(std::move(y), {});
  nodes_[id].back = [id, a](Tape& tape) {
    const auto& dy = tape.node(id).grad;
    const auto& yv = tape.node(id).val;
    for (size_t i = 0; i < dy.size(); ++i)
      tape.node(a).grad[i] += dy[i] * (1.0 - yv[i] * yv[i]);
  };
  return id;
}

Tape::Id Tape::concat(std::span<const Id> parts) {
  std::vector<double> y;
  for (Id p : parts) y.insert(y.end(), nodes_[p].val.begin(), nodes_[p].val.end());
  Id id = push(std::move(y), {});
  std::vector<Id> ps(parts.begin(), parts.end());
  nodes_[id].back = [id, ps](Tape& tape) {
    const auto& dy = tape.node(id).grad;
    size_t off = 0;
    for (Id p : ps) {
      auto& dp = tape.node(p).grad;
      for (size_t i = 0; i < dp.size(); ++i) dp[i] += dy[off + i];
      off += dp.size();
    }
  };
  return id;
}

Tape::Id Tape::dot(Id a, Id b) {
  if (nodes_[a].val.size() != nodes_[b].val.size())
    throw ShapeError("dot: size mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < nodes_[a].val.size(); ++i)
    acc += nodes_[a].val[i] * nodes_[b].val[i];
  Id id = push({acc}, {});
  nodes_[id].back = [id, a, b](Tape& tape) {
    double g = tape.node(id).grad[0];
    const auto& av = tape.node(a).val;
    const auto& bv = tape.node(b).val;
    for (size_t i = 0; i < av.size(); ++i) {
      tape.node(a).grad[i] += g * bv[i];
      tape.node(b).grad[i] += g * av[i];
    }
  };
  return id;
}

Tape::Id Tape::cosine(Id a, Id b) {
  const auto& av = nodes_[a].val;
  const auto& bv = nodes_[b].val;
  if (av.size() != bv.size()) throw ShapeError("cosine: size mismatch");
  double dotv = 0.0, na2 = 0.0, nb2 = 0.0;
  for (size_t i = 0; i < av.size(); ++i) {
    dotv += av[i] * bv[i];
    na2 += av[i] * av[i];
    nb2 += bv[i] * bv[i];
  }
  double na = std::sqrt(na2), nb = std::sqrt(nb2);
  if (na < 1e-30 || nb < 1e-30)
    throw DataError("zero-norm vector in cosine similarity");
  double c = dotv / (na * nb);
  Id id = push({c}, {});
  nodes_[id].back = [id, a, b, na, nb, c](Tape& tape) {
    double g = tape.node(id).grad[0];
    const auto& av = tape.node(a).val;
    const auto& bv = tape.node(b).val;
    for (size_t i = 0; i < av.size(); ++i) {
      tape.node(a).grad[i] += g * (bv[i] / (na * nb) - c * av[i] / (na * na));
      tape.node(b).grad[i] += g * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
    }
  };
  return id;
}

Tape::Id Tape::sum_scalars(std::span<const Id> scalars, double coef) {
  double acc = 0.0;
  for (Id s : scalars) {
    if (nodes_[s].val.size() != 1) throw ShapeError("sum_scalars: non-scalar");
    acc += nodes_[s].val[0];
  }
  Id id = push({acc * coef}, {});
  std::vector<Id> ss(scalars.begin(), scalars.end());
  nodes_[id].back = [id, ss, coef](Tape& tape) {
    double g = tape.node(id).grad[0] * coef;
    for (Id s : ss) tape.node(s).grad[0] += g;
  };
  return id;
}

Tape::Id Tape::bce(Id p, double y) {
  if (nodes_[p].val.size() != 1) throw ShapeError("bce: p must be scalar");
  constexpr double kEps = 1e-7;
  double raw = nodes_[p].val[0];
  double pc = std::clamp(raw, kEps, 1.0 - kEps);
  bool clamped = raw != pc;
  double loss = -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
  Id id = push({loss}, {});
  nodes_[id].back = [id, p, y, pc, clamped](Tape& tape) {
    if (clamped) return;  // flat outside the clamp range
    double g = tape.node(id).grad[0];
    tape.node(p).grad[0] += g * (-y / pc + (1.0 - y) / (1.0 - pc));
  };
  return id;
}

Tape::Id Tape::softmax_xent(Id logits, size_t target) {
  const auto& lv = nodes_[logits].val;
  if (target >= lv.size())
    throw BoundsError("softmax_xent: target " + std::to_string(target) +
                      " out of range for " + std::to_string(lv.size()) +
                      " classes");
  std::vector<double> probs = softmax(lv);
  double m = *std::max_element(lv.begin(), lv.end());
  double z = 0.0;
  for (double v : lv) z += std::exp(v - m);
  double loss = std::log(z) - (lv[target] - m);
  Id id = push({loss}, {});
  nodes_[id].back = [id, logits, target, probs](Tape& tape) {
    double g = tape.node(id).grad[0];
    auto& dl = tape.node(logits).grad;
    for (size_t i = 0; i < dl.size(); ++i) {
      dl[i] += g * (probs[i] - (i == target ? 1.0 : 0.0));
    }
  };
  return id;
}

Tape::Id Tape::info_nce(Id anchor, Id positive, std::span<const Id> negatives,
                        double tau) {
  if (negatives.empty()) throw ShapeError("info_nce: needs >= 1 negative");
  if (tau <= 0.0) throw ConfigError("info_nce: tau must be positive");
  std::vector<Id> sims;
  sims.push_back(scale(cosine(anchor, positive), 1.0 / tau));
  for (Id n : negatives) sims.push_back(scale(cosine(anchor, n), 1.0 / tau));
  return softmax_xent(concat(sims), 0);
}

void Tape::backward(Id loss) {
  if (nodes_[loss].val.size() != 1)
    throw ShapeError("backward: loss must be scalar");
  nodes_[loss].grad[0] = 1.0;
  for (size_t i = loss + 1; i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back(*this);
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (double& v : out) v = std::max(v / z, 1e-300);
  return out;
}

}  // namespace jcl::nn
