#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "jcl/cachesim.hpp"
#include "jcl/trace.hpp"

namespace jcl {

// next_use[i] = smallest j > i with block[j] == block[i], or kNoNextUse.
inline constexpr uint64_t kNoNextUse = std::numeric_limits<uint64_t>::max();

std::vector<uint64_t> next_use_scan(const std::vector<uint64_t>& blocks);

enum class CacheLabel : uint8_t { CacheAverse = 0, CacheFriendly = 1 };

const char* cache_label_name(CacheLabel l);
CacheLabel parse_cache_label(const std::string& s);

struct LabeledInsertion {
  uint64_t insertion_id = 0;
  uint64_t trace_position = 0;
  uint64_t block = 0;
  uint64_t pc = 0;
  uint32_t set_index = 0;
  CacheLabel label = CacheLabel::CacheAverse;
};

struct EvictionDecision {
  uint64_t trace_position = 0;  // position of the miss forcing the eviction
  uint32_t set_index = 0;
  uint32_t way = 0;
  uint64_t victim_block = 0;
};

struct BeladyResult {
  uint64_t hits = 0;
  uint64_t misses = 0;
  std::vector<EvictionDecision> evictions;
  std::vector<LabeledInsertion> labels;  // one per insertion, in trace order
};

// Offline MIN replay over the demand stream: on a full-set miss the resident
// line with the farthest next use is evicted (no future use counts as
// farthest, ties to the lowest way). Each insertion is labeled CacheFriendly
// iff the line takes at least one hit before eviction or trace end.
BeladyResult belady_simulate(const Trace& trace, const CacheConfig& config);

// Maximum hits over all eviction policies, by exhaustive search decomposed
// per set. Refuses traces longer than 14 accesses or associativity above 3.
uint64_t brute_force_optimal(const Trace& trace, const CacheConfig& config);

// CSV: insertion_id,position,block,pc,set,label
void export_labels_csv(const std::vector<LabeledInsertion>& labels,
                       std::ostream& out);
std::vector<LabeledInsertion> parse_labels_csv(std::istream& in);

}  // namespace jcl
