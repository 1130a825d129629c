#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace jcl::nn {

// Dense row-major tensor. Values are held as doubles; persistent state is
// rounded to float32-representable values (see ParamStore) so checkpoints
// are lossless while all arithmetic runs in 64-bit.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s);

  size_t numel() const { return data.size(); }
  size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(size_t r, size_t c) { return data[r * cols() + c]; }
  double at(size_t r, size_t c) const { return data[r * cols() + c]; }

  bool operator==(const Tensor&) const = default;
};

double round_f32(double x);
void round_tensor_f32(Tensor& t);

// Named parameters in insertion order, each with a same-shape grad buffer.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };

  // Throws ShapeError on duplicate names. Initial values are rounded to
  // float32 representables.
  Tensor& add(const std::string& name, std::vector<size_t> shape);
  bool contains(const std::string& name) const;
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);

  void zero_grads();
  void round_values_f32();

  size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  // Deep copy of values only (grads zeroed).
  ParamStore clone_values() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;

  size_t lookup(const std::string& name) const;
};

// Seeded uniform(-bound, bound) fill, rounded to float32 representables.
void init_uniform(Tensor& t, double bound, uint64_t seed);

}  // namespace jcl::nn
