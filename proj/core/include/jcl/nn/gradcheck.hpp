#pragma once

#include <cstdint>
#include <functional>

#include "jcl/nn/tensor.hpp"

namespace jcl::nn {

// Central-difference verification of analytic gradients. `loss_fn(true)` must
// run forward+backward (accumulating gradients into `store`); `loss_fn(false)`
// must run a pure forward and return the loss. Parameters with more than
// `max_coords` coordinates are spot-checked on a seeded sample. All arithmetic
// stays in 64-bit; nothing is rounded to float32 here.
// Returns max over checked coordinates of |a-n| / max(|a|,|n|,1e-8).
double grad_check(const std::function<double(bool)>& loss_fn,
                  ParamStore& store, double eps = 1e-5,
                  size_t max_coords = 50, uint64_t seed = 0);

}  // namespace jcl::nn
