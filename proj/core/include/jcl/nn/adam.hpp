#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "jcl/nn/tensor.hpp"

namespace jcl::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Parameter values and moment buffers are rounded
// to float32 representables after every step so that checkpoints are
// lossless and resumed training is bit-exact.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Restricts updates to params whose name starts with one of the prefixes;
  // empty list (default) trains everything.
  void set_trainable_prefixes(std::vector<std::string> prefixes);
  // Scales lr for params under `prefix` (longest matching prefix wins).
  void add_lr_scale(const std::string& prefix, double scale);

  void step(ParamStore& store);
  uint64_t step_count() const { return t_; }
  void set_step_count(uint64_t t) { t_ = t; }

  // Moment buffers as opt.m.<name> / opt.v.<name> entries for checkpointing.
  void export_state(ParamStore& sink) const;
  void import_state(const ParamStore& source);

  bool trainable(const std::string& name) const;

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  AdamConfig cfg_;
  uint64_t t_ = 0;
  std::unordered_map<std::string, Moments> moments_;
  std::vector<std::string> prefixes_;
  std::vector<std::pair<std::string, double>> lr_scales_;

  double lr_for(const std::string& name) const;
};

}  // namespace jcl::nn
