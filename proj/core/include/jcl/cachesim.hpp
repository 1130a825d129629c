#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "jcl/trace.hpp"

namespace jcl {

struct CacheConfig {
  uint32_t num_sets = 16;      // power of two; set index = block mod num_sets
  uint32_t associativity = 4;  // ways >= 1
  BlockGeometry geometry;
  uint32_t prefetch_degree = 1;  // max prefetch fills per trigger
  // The prefetcher observes every demand access by default; set to true to
  // restrict observation to demand misses.
  bool prefetch_on_miss_only = false;

  void validate() const;
  uint32_t set_of(uint64_t block) const {
    return static_cast<uint32_t>(block & (num_sets - 1));
  }
};

struct CacheLineState {
  uint64_t block = 0;
  bool valid = false;
  uint64_t last_touch = 0;  // monotone event counter
  bool inserted_by_prefetch = false;
  bool saw_demand_hit = false;
  uint64_t insertion_id = 0;
};

enum class MissType : uint8_t { Hit, DemandMiss, PrefetchFill, PrefetchHit };

const char* miss_type_name(MissType m);

// State snapshot logged at every tag lookup (demand access or prefetch fill).
struct CacheEvent {
  uint64_t event_index = 0;
  uint64_t cycle = 0;
  uint64_t block = 0;
  uint64_t pc = 0;
  uint16_t core_id = 0;
  MissType miss_type = MissType::Hit;
  int32_t stride_id = 0;  // last observed block stride for this PC, in [-8,8]
  uint32_t set_index = 0;
  bool is_insertion = false;
  uint64_t insertion_id = 0;  // meaningful iff is_insertion

  bool is_demand() const { return miss_type != MissType::PrefetchFill; }
};

struct SimResult {
  uint64_t demand_hits = 0;
  uint64_t demand_misses = 0;
  uint64_t prefetch_issued = 0;
  uint64_t prefetch_useful = 0;
  std::vector<CacheEvent> events;
  std::vector<std::vector<CacheLineState>> final_sets;  // [set][way]
};

class ReplacementPolicy {
 public:
  virtual ~ReplacementPolicy() = default;
  // Called only when every way of the set is valid; returns the way to evict.
  virtual uint32_t choose_victim(std::span<const CacheLineState> lines,
                                 const CacheEvent& insertion) = 0;
  // Called once per demand access, before any fill.
  virtual void on_access(const CacheEvent&) {}
  virtual void on_hit(uint32_t /*set*/, uint32_t /*way*/,
                      const CacheLineState&) {}
  virtual void on_insert(uint32_t /*set*/, uint32_t /*way*/,
                         const CacheLineState&, const CacheEvent&) {}
  virtual std::string name() const = 0;
};

class Prefetcher {
 public:
  virtual ~Prefetcher() = default;
  // Observes a demand access and returns candidate blocks to fill.
  virtual std::vector<uint64_t> observe(const MemoryAccess& access,
                                        uint64_t block) = 0;
  virtual std::string name() const = 0;
};

// Way with the minimum last_touch; ties broken by lowest way index.
uint32_t lru_choose_victim(std::span<const CacheLineState> lines);

class LruPolicy final : public ReplacementPolicy {
 public:
  uint32_t choose_victim(std::span<const CacheLineState> lines,
                         const CacheEvent&) override {
    return lru_choose_victim(lines);
  }
  std::string name() const override { return "lru"; }
};

// Evicts the most recently touched line; exists as a sanity lower bound.
class MruEvictPolicy final : public ReplacementPolicy {
 public:
  uint32_t choose_victim(std::span<const CacheLineState> lines,
                         const CacheEvent&) override;
  std::string name() const override { return "mru-evict"; }
};

// Emits [block+s, ..., block+degree*s] once the same nonzero stride s is
// observed twice in a row for a PC.
class StridePrefetcher final : public Prefetcher {
 public:
  explicit StridePrefetcher(uint32_t degree) : degree_(degree) {}
  std::vector<uint64_t> observe(const MemoryAccess& access,
                                uint64_t block) override;
  std::string name() const override { return "stride"; }

 private:
  struct PcHistory {
    uint64_t last_block = 0;
    int64_t last_stride = 0;
    bool has_block = false;
    bool has_stride = false;
  };
  uint32_t degree_;
  std::vector<std::pair<uint64_t, PcHistory>> history_;  // small, linear scan
};

class NextLinePrefetcher final : public Prefetcher {
 public:
  explicit NextLinePrefetcher(uint32_t degree) : degree_(degree) {}
  std::vector<uint64_t> observe(const MemoryAccess&, uint64_t block) override;
  std::string name() const override { return "next-line"; }

 private:
  uint32_t degree_;
};

// Runs the trace through a set-associative cache. Every demand access and
// every prefetch fill yields exactly one CacheEvent; candidates already
// resident or duplicated within a trigger are dropped. Deterministic.
// Throws SimFault when the policy returns an out-of-range way.
SimResult simulate(const Trace& trace, const CacheConfig& config,
                   ReplacementPolicy& policy, Prefetcher* prefetcher = nullptr);

// useful / issued; 0 when nothing was issued.
double useful_prefetch_ratio(const SimResult& result);

// CSV: event,cycle,block,pc,core,miss_type,stride,set,is_insertion,insertion_id
void export_events_csv(const SimResult& result, std::ostream& out);

}  // namespace jcl
