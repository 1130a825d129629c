#include "jcl/cachesim.hpp"

#include <algorithm>
#include <ostream>
#include <unordered_map>

#include "jcl/error.hpp"

namespace jcl {
namespace {

bool is_pow2(uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

int32_t clamp_stride(int64_t s) {
  return static_cast<int32_t>(std::clamp<int64_t>(s, -8, 8));
}

}  // namespace

void CacheConfig::validate() const {
  if (!is_pow2(num_sets)) {
    throw ConfigError("num_sets must be a power of two");
  }
  if (associativity < 1) {
    throw ConfigError("associativity must be >= 1");
  }
  geometry.validate();
}

const char* miss_type_name(MissType m) {
  switch (m) {
    case MissType::Hit: return "hit";
    case MissType::DemandMiss: return "demand_miss";
    case MissType::PrefetchFill: return "prefetch_fill";
    case MissType::PrefetchHit: return "prefetch_hit";
  }
  throw SimFault("unreachable miss type");
}

uint32_t lru_choose_victim(std::span<const CacheLineState> lines) {
  uint32_t victim = 0;
  for (uint32_t w = 1; w < lines.size(); ++w) {
    if (lines[w].last_touch < lines[victim].last_touch) victim = w;
  }
  return victim;
}

uint32_t MruEvictPolicy::choose_victim(std::span<const CacheLineState> lines,
                                       const CacheEvent&) {
  uint32_t victim = 0;
  for (uint32_t w = 1; w < lines.size(); ++w) {
    if (lines[w].last_touch > lines[victim].last_touch) victim = w;
  }
  return victim;
}

std::vector<uint64_t> StridePrefetcher::observe(const MemoryAccess& access,
                                                uint64_t block) {
  PcHistory* h = nullptr;
  for (auto& [pc, hist] : history_) {
    if (pc == access.pc) {
      h = &hist;
      break;
    }
  }
  if (h == nullptr) {
    history_.emplace_back(access.pc, PcHistory{});
    h = &history_.back().second;
  }

  std::vector<uint64_t> out;
  if (h->has_block) {
    int64_t stride = static_cast<int64_t>(block) -
                     static_cast<int64_t>(h->last_block);
    if (h->has_stride && stride != 0 && stride == h->last_stride) {
      out.reserve(degree_);
      for (uint32_t d = 1; d <= degree_; ++d) {
        out.push_back(static_cast<uint64_t>(static_cast<int64_t>(block) +
                                            stride * static_cast<int64_t>(d)));
      }
    }
    h->last_stride = stride;
    h->has_stride = true;
  }
  h->last_block = block;
  h->has_block = true;
  return out;
}

std::vector<uint64_t> NextLinePrefetcher::observe(const MemoryAccess&,
                                                  uint64_t block) {
  std::vector<uint64_t> out;
  out.reserve(degree_);
  for (uint32_t d = 1; d <= degree_; ++d) out.push_back(block + d);
  return out;
}

namespace {

struct SimState {
  std::vector<std::vector<CacheLineState>> sets;
  uint64_t touch_counter = 0;
  uint64_t next_insertion_id = 0;

  int find_way(uint32_t set, uint64_t block) const {
    const auto& lines = sets[set];
    for (uint32_t w = 0; w < lines.size(); ++w) {
      if (lines[w].valid && lines[w].block == block) return static_cast<int>(w);
    }
    return -1;
  }
};

// Fills `block` into its set, evicting via the policy when full.
void fill_line(SimState& st, const CacheConfig& config,
               ReplacementPolicy& policy, CacheEvent& ev, bool by_prefetch,
               SimResult& result) {
  auto& lines = st.sets[ev.set_index];
  int way = -1;
  for (uint32_t w = 0; w < lines.size(); ++w) {
    if (!lines[w].valid) {
      way = static_cast<int>(w);
      break;
    }
  }
  if (way < 0) {
    uint32_t chosen = policy.choose_victim(lines, ev);
    if (chosen >= config.associativity) {
      throw SimFault("policy returned out-of-range way at event " +
                     std::to_string(ev.event_index));
    }
    way = static_cast<int>(chosen);
  }
  ev.is_insertion = true;
  ev.insertion_id = st.next_insertion_id++;
  CacheLineState& line = lines[way];
  line.block = ev.block;
  line.valid = true;
  line.last_touch = ++st.touch_counter;
  line.inserted_by_prefetch = by_prefetch;
  line.saw_demand_hit = false;
  line.insertion_id = ev.insertion_id;
  policy.on_insert(ev.set_index, static_cast<uint32_t>(way), line, ev);
  result.events.push_back(ev);
}

}  // namespace

SimResult simulate(const Trace& trace, const CacheConfig& config,
                   ReplacementPolicy& policy, Prefetcher* prefetcher) {
  config.validate();
  SimResult result;
  SimState st;
  st.sets.assign(config.num_sets,
                 std::vector<CacheLineState>(config.associativity));

  std::unordered_map<uint64_t, uint64_t> last_block_by_pc;
  uint64_t event_index = 0;

  for (const MemoryAccess& access : trace.accesses) {
    uint64_t block = block_of(access.address, config.geometry);
    uint32_t set = config.set_of(block);

    CacheEvent ev;
    ev.event_index = event_index++;
    ev.cycle = access.cycle;
    ev.block = block;
    ev.pc = access.pc;
    ev.core_id = access.core_id;
    ev.set_index = set;
    auto it = last_block_by_pc.find(access.pc);
    if (it != last_block_by_pc.end()) {
      ev.stride_id = clamp_stride(static_cast<int64_t>(block) -
                                  static_cast<int64_t>(it->second));
      it->second = block;
    } else {
      last_block_by_pc.emplace(access.pc, block);
    }

    int way = st.find_way(set, block);
    bool missed = way < 0;
    if (!missed) {
      CacheLineState& line = st.sets[set][way];
      bool first_hit_on_prefetch = line.inserted_by_prefetch &&
                                   !line.saw_demand_hit;
      ev.miss_type = first_hit_on_prefetch ? MissType::PrefetchHit
                                           : MissType::Hit;
      if (first_hit_on_prefetch) ++result.prefetch_useful;
      line.saw_demand_hit = true;
      line.last_touch = ++st.touch_counter;
      ++result.demand_hits;
      policy.on_access(ev);
      policy.on_hit(set, static_cast<uint32_t>(way), line);
      result.events.push_back(ev);
    } else {
      ev.miss_type = MissType::DemandMiss;
      ++result.demand_misses;
      policy.on_access(ev);
      fill_line(st, config, policy, ev, /*by_prefetch=*/false, result);
    }

    if (prefetcher != nullptr && (!config.prefetch_on_miss_only || missed)) {
      std::vector<uint64_t> candidates = prefetcher->observe(access, block);
      std::vector<uint64_t> accepted;
      for (uint64_t cand : candidates) {
        if (accepted.size() >= config.prefetch_degree) break;
        if (std::find(accepted.begin(), accepted.end(), cand) !=
            accepted.end()) {
          continue;  // duplicate in flight
        }
        uint32_t cset = config.set_of(cand);
        if (st.find_way(cset, cand) >= 0) continue;  // already resident
        accepted.push_back(cand);
        ++result.prefetch_issued;
        CacheEvent pev;
        pev.event_index = event_index++;
        pev.cycle = access.cycle;
        pev.block = cand;
        pev.pc = access.pc;  // prefetches inherit the trigger's PC
        pev.core_id = access.core_id;
        pev.miss_type = MissType::PrefetchFill;
        pev.stride_id = ev.stride_id;
        pev.set_index = cset;
        fill_line(st, config, policy, pev, /*by_prefetch=*/true, result);
      }
    }
  }

  result.final_sets = std::move(st.sets);
  return result;
}

double useful_prefetch_ratio(const SimResult& result) {
  if (result.prefetch_issued == 0) return 0.0;
  return static_cast<double>(result.prefetch_useful) /
         static_cast<double>(result.prefetch_issued);
}

void export_events_csv(const SimResult& result, std::ostream& out) {
  out << "event,cycle,block,pc,core,miss_type,stride,set,is_insertion,"
         "insertion_id\n";
  for (const CacheEvent& ev : result.events) {
    out << ev.event_index << ',' << ev.cycle << ',' << ev.block << ",0x"
        << std::hex << ev.pc << std::dec << ',' << ev.core_id << ','
        << miss_type_name(ev.miss_type) << ',' << ev.stride_id << ','
        << ev.set_index << ',' << (ev.is_insertion ? 1 : 0) << ',';
    if (ev.is_insertion) out << ev.insertion_id;
    out << '\n';
  }
}

}  // namespace jcl
