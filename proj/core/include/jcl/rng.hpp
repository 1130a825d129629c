#pragma once

#include <cstddef>
#include <random>
#include <utility>
#include <vector>

namespace jcl {

// Fisher-Yates with explicit 64-bit draws: identical results on every
// standard library, unlike std::shuffle.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[static_cast<size_t>(rng() % i)]);
}

}  // namespace jcl
