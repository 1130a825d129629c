#include "jcl/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace jcl::nn {

double grad_check(const std::function<double(bool)>& loss_fn,
                  ParamStore& store, double eps, size_t max_coords,
                  uint64_t seed) {
  store.zero_grads();
  loss_fn(true);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(store.size());
  for (const auto& e : store.entries()) analytic.push_back(e.grad.data);

  double max_rel = 0.0;
  for (size_t p = 0; p < store.size(); ++p) {
    auto& e = store.entries()[p];
    size_t n = e.value.numel();
    std::vector<size_t> coords;
    if (n <= max_coords) {
      coords.resize(n);
      for (size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      std::mt19937_64 rng(seed ^ (0x100000001B3ull * (p + 1)));
      std::uniform_int_distribution<size_t> dist(0, n - 1);
      while (coords.size() < max_coords) {
        size_t c = dist(rng);
        if (std::find(coords.begin(), coords.end(), c) == coords.end())
          coords.push_back(c);
      }
    }
    for (size_t c : coords) {
      double saved = e.value.data[c];
      e.value.data[c] = saved + eps;
      double lp = loss_fn(false);
      e.value.data[c] = saved - eps;
      double lm = loss_fn(false);
      e.value.data[c] = saved;
      double numeric = (lp - lm) / (2.0 * eps);
      double a = analytic[p][c];
      double rel = std::abs(a - numeric) /
                   std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace jcl::nn
