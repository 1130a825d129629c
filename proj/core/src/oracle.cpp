#include "jcl/oracle.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "jcl/error.hpp"

namespace jcl {

std::vector<uint64_t> next_use_scan(const std::vector<uint64_t>& blocks) {
  std::vector<uint64_t> next(blocks.size(), kNoNextUse);
  std::unordered_map<uint64_t, uint64_t> last_seen;
  for (size_t i = blocks.size(); i-- > 0;) {
    auto it = last_seen.find(blocks[i]);
    if (it != last_seen.end()) next[i] = it->second;
    last_seen[blocks[i]] = i;
  }
  return next;
}

const char* cache_label_name(CacheLabel l) {
  return l == CacheLabel::CacheFriendly ? "friendly" : "averse";
}

CacheLabel parse_cache_label(const std::string& s) {
  if (s == "friendly") return CacheLabel::CacheFriendly;
  if (s == "averse") return CacheLabel::CacheAverse;
  throw ParseError("unknown cache label '" + s + "'");
}

namespace {

struct MinLine {
  uint64_t block = 0;
  bool valid = false;
  uint64_t next_use = kNoNextUse;
  size_t label_slot = 0;  // index into BeladyResult::labels
  bool hit_since_fill = false;
};

}  // namespace

BeladyResult belady_simulate(const Trace& trace, const CacheConfig& config) {
  config.validate();
  std::vector<uint64_t> blocks;
  blocks.reserve(trace.size());
  for (const MemoryAccess& a : trace.accesses) {
    blocks.push_back(block_of(a.address, config.geometry));
  }
  std::vector<uint64_t> next_use = next_use_scan(blocks);

  BeladyResult result;
  std::vector<std::vector<MinLine>> sets(
      config.num_sets, std::vector<MinLine>(config.associativity));

  auto settle_label = [&result](MinLine& line) {
    if (line.hit_since_fill) {
      result.labels[line.label_slot].label = CacheLabel::CacheFriendly;
    }
  };

  for (uint64_t pos = 0; pos < blocks.size(); ++pos) {
    uint64_t block = blocks[pos];
    uint32_t set = config.set_of(block);
    auto& lines = sets[set];

    int way = -1;
    for (uint32_t w = 0; w < lines.size(); ++w) {
      if (lines[w].valid && lines[w].block == block) {
        way = static_cast<int>(w);
        break;
      }
    }
    if (way >= 0) {
      ++result.hits;
      lines[way].next_use = next_use[pos];
      lines[way].hit_since_fill = true;
      continue;
    }

    ++result.misses;
    int slot = -1;
    for (uint32_t w = 0; w < lines.size(); ++w) {
      if (!lines[w].valid) {
        slot = static_cast<int>(w);
        break;
      }
    }
    if (slot < 0) {
      // Farthest next use wins; kNoNextUse is +inf; ties keep the lowest way.
      uint32_t victim = 0;
      for (uint32_t w = 1; w < lines.size(); ++w) {
        if (lines[w].next_use > lines[victim].next_use) victim = w;
      }
      settle_label(lines[victim]);
      result.evictions.push_back(EvictionDecision{
          pos, set, victim, lines[victim].block});
      slot = static_cast<int>(victim);
    }

    LabeledInsertion ins;
    ins.insertion_id = result.labels.size();
    ins.trace_position = pos;
    ins.block = block;
    ins.pc = trace.accesses[pos].pc;
    ins.set_index = set;
    ins.label = CacheLabel::CacheAverse;
    result.labels.push_back(ins);

    MinLine& line = lines[slot];
    line.block = block;
    line.valid = true;
    line.next_use = next_use[pos];
    line.label_slot = result.labels.size() - 1;
    line.hit_since_fill = false;
  }

  for (auto& lines : sets) {
    for (MinLine& line : lines) {
      if (line.valid) settle_label(line);
    }
  }
  return result;
}

namespace {

uint64_t best_hits(const std::vector<uint64_t>& seq, size_t i,
                   std::vector<uint64_t>& resident, uint32_t assoc) {
  if (i == seq.size()) return 0;
  uint64_t block = seq[i];
  auto it = std::find(resident.begin(), resident.end(), block);
  if (it != resident.end()) return 1 + best_hits(seq, i + 1, resident, assoc);
  if (resident.size() < assoc) {
    resident.push_back(block);
    uint64_t h = best_hits(seq, i + 1, resident, assoc);
    resident.pop_back();
    return h;
  }
  uint64_t best = 0;
  for (size_t v = 0; v < resident.size(); ++v) {
    uint64_t saved = resident[v];
    resident[v] = block;
    best = std::max(best, best_hits(seq, i + 1, resident, assoc));
    resident[v] = saved;
  }
  return best;
}

}  // namespace

uint64_t brute_force_optimal(const Trace& trace, const CacheConfig& config) {
  config.validate();
  if (trace.size() > 14) {
    throw BoundsError("brute_force_optimal refuses traces longer than 14 "
                      "accesses (got " + std::to_string(trace.size()) + ")");
  }
  if (config.associativity > 3) {
    throw BoundsError("brute_force_optimal refuses associativity above 3 "
                      "(got " + std::to_string(config.associativity) + ")");
  }
  // Sets never interact, so search each set's subsequence independently.
  std::vector<std::vector<uint64_t>> per_set(config.num_sets);
  for (const MemoryAccess& a : trace.accesses) {
    uint64_t block = block_of(a.address, config.geometry);
    per_set[config.set_of(block)].push_back(block);
  }
  uint64_t total = 0;
  for (const auto& seq : per_set) {
    if (seq.empty()) continue;
    std::vector<uint64_t> resident;
    resident.reserve(config.associativity);
    total += best_hits(seq, 0, resident, config.associativity);
  }
  return total;
}

void export_labels_csv(const std::vector<LabeledInsertion>& labels,
                       std::ostream& out) {
  out << "insertion_id,position,block,pc,set,label\n";
  for (const LabeledInsertion& l : labels) {
    out << l.insertion_id << ',' << l.trace_position << ',' << l.block
        << ",0x" << std::hex << l.pc << std::dec << ',' << l.set_index << ','
        << cache_label_name(l.label) << '\n';
  }
}

namespace {

uint64_t parse_field_u64(const std::string& s, size_t line_no) {
  uint64_t value = 0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    begin += 2;
    base = 16;
  }
  auto [ptr, ec] = std::from_chars(begin, end, value, base);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("malformed number '" + s + "' at line " +
                     std::to_string(line_no));
  }
  return value;
}

}  // namespace

std::vector<LabeledInsertion> parse_labels_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "insertion_id,position,block,pc,set,label") {
    throw FormatError("missing labels header");
  }
  std::vector<LabeledInsertion> out;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (f.size() != 6) {
      throw ParseError("expected 6 fields at line " + std::to_string(line_no));
    }
    LabeledInsertion l;
    l.insertion_id = parse_field_u64(f[0], line_no);
    l.trace_position = parse_field_u64(f[1], line_no);
    l.block = parse_field_u64(f[2], line_no);
    l.pc = parse_field_u64(f[3], line_no);
    l.set_index = static_cast<uint32_t>(parse_field_u64(f[4], line_no));
    l.label = parse_cache_label(f[5]);
    out.push_back(l);
  }
  return out;
}

}  // namespace jcl
