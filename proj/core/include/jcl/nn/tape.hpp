#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "jcl/nn/tensor.hpp"

namespace jcl::nn {

// Reverse-mode autodiff tape over vector-valued nodes. Ops only consume
// earlier node ids, so reverse creation order is a valid topological order.
// Parameter leaves accumulate their gradients directly into the ParamStore,
// which must outlive the tape.
class Tape {
 public:
  using Id = uint32_t;

  Id input(std::vector<double> value);
  Id zeros(size_t n);
  Id param(ParamStore& store, const std::string& name);
  // Row `row` of a [V, D] table; id bounds are checked against V.
  Id embedding_row(ParamStore& store, const std::string& table, size_t row);

  // y = W x with W a flattened row-major [rows, cols] node.
  Id matvec(Id w, Id x, size_t rows, size_t cols);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id hadamard(Id a, Id b);
  Id scale(Id a, double c);
  Id sigmoid(Id a);
  Id tanh(Id a);
  Id concat(std::span<const Id> parts);
  Id dot(Id a, Id b);
  Id cosine(Id a, Id b);  // throws DataError on a zero-norm input
  Id sum_scalars(std::span<const Id> scalars, double coef);

  // -[y ln p + (1-y) ln(1-p)], p clamped to [1e-7, 1-1e-7].
  Id bce(Id p, double y);
  // -log softmax(logits)[target], max-subtracted.
  Id softmax_xent(Id logits, size_t target);
  // InfoNCE: softmax cross-entropy over [cos(a,p), cos(a,n_0), ...] / tau
  // with target 0.
  Id info_nce(Id anchor, Id positive, std::span<const Id> negatives,
              double tau);

  void backward(Id loss);

  const std::vector<double>& value(Id id) const { return nodes_[id].val; }
  const std::vector<double>& grad_of(Id id) const { return nodes_[id].grad; }
  double scalar(Id id) const;
  size_t size(Id id) const { return nodes_[id].val.size(); }

 private:
  struct Node {
    std::vector<double> val;
    std::vector<double> grad;
    std::function<void(Tape&)> back;  // empty for leaves without params
  };
  std::vector<Node> nodes_;

  Id push(std::vector<double> val, std::function<void(Tape&)> back);
  Node& node(Id id) { return nodes_[id]; }
};

// Softmax probabilities (pure, no tape); strictly positive, sums to 1.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace jcl::nn
