#include "jcl/nn/tensor.hpp"

#include <random>

#include "jcl/error.hpp"

namespace jcl::nn {

Tensor::Tensor(std::vector<size_t> s) : shape(std::move(s)) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  data.assign(n, 0.0);
}

double round_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

void round_tensor_f32(Tensor& t) {
  for (double& x : t.data) x = round_f32(x);
}

Tensor& ParamStore::add(const std::string& name, std::vector<size_t> shape) {
  if (index_.count(name)) throw ShapeError("duplicate parameter: " + name);
  index_[name] = entries_.size();
  Entry e;
  e.name = name;
  e.value = Tensor(shape);
  e.grad = Tensor(std::move(shape));
  entries_.push_back(std::move(e));
  return entries_.back().value;
}

bool ParamStore::contains(const std::string& name) const {
  return index_.count(name) > 0;
}

size_t ParamStore::lookup(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("unknown parameter: " + name);
  return it->second;
}

Tensor& ParamStore::value(const std::string& name) {
  return entries_[lookup(name)].value;
}

const Tensor& ParamStore::value(const std::string& name) const {
  return entries_[lookup(name)].value;
}

Tensor& ParamStore::grad(const std::string& name) {
  return entries_[lookup(name)].grad;
}

void ParamStore::zero_grads() {
  for (Entry& e : entries_) {
    std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
  }
}

void ParamStore::round_values_f32() {
  for (Entry& e : entries_) round_tensor_f32(e.value);
}

ParamStore ParamStore::clone_values() const {
  ParamStore out;
  for (const Entry& e : entries_) {
    out.add(e.name, e.value.shape);
    out.value(e.name).data = e.value.data;
  }
  return out;
}

void init_uniform(Tensor& t, double bound, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& x : t.data) x = round_f32(dist(rng));
}

}  // namespace jcl::nn
