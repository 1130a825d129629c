#include "jcl/trace.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "jcl/error.hpp"

namespace jcl {

namespace {

bool is_pow2(uint64_t x) { return x != 0 && (x & (x - 1)) == 0; }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

uint64_t parse_u64(const std::string& s, bool allow_hex, size_t line,
                   size_t column) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  int base = 10;
  if (allow_hex && s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    first += 2;
    base = 16;
  }
  uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(first, last, value, base);
  if (ec != std::errc() || ptr != last || first == last) {
    throw ParseError("malformed number '" + s + "' at line " +
                     std::to_string(line) + ", column " +
                     std::to_string(column));
  }
  return value;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

void BlockGeometry::validate() const {
  if (!is_pow2(block_size_bytes))
    throw ConfigError("block_size_bytes must be a power of two");
  if (!is_pow2(page_size_bytes))
    throw ConfigError("page_size_bytes must be a power of two");
  if (page_size_bytes % block_size_bytes != 0 ||
      page_size_bytes < block_size_bytes)
    throw ConfigError("page_size_bytes must be a multiple of block_size_bytes");
}

uint64_t block_of(uint64_t address, const BlockGeometry& g) {
  return address / g.block_size_bytes;
}

PageOffset page_and_offset(uint64_t block, const BlockGeometry& g) {
  const uint64_t bpp = g.blocks_per_page();
  return PageOffset{block / bpp, block % bpp};
}

Trace parse_trace(std::istream& in, const BlockGeometry& g,
                  std::string source_name) {
  g.validate();
  Trace t;
  t.source_name = std::move(source_name);

  std::string line;
  if (!std::getline(in, line))
    throw ParseError("empty input: missing header at line 1");
  if (strip_cr(line) != "cycle,core,pc,addr,kind")
    throw ParseError("bad header at line 1: expected cycle,core,pc,addr,kind");

  size_t lineno = 1;
  uint64_t prev_cycle = 0;
  bool have_prev = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 5)
      throw ParseError("expected 5 fields at line " + std::to_string(lineno));
    MemoryAccess a;
    a.cycle = parse_u64(fields[0], false, lineno, 1);
    a.core_id = static_cast<uint16_t>(parse_u64(fields[1], false, lineno, 2));
    a.pc = parse_u64(fields[2], true, lineno, 3);
    a.address = parse_u64(fields[3], true, lineno, 4);
    if (fields[4] == "load") {
      a.kind = AccessKind::Load;
    } else if (fields[4] == "store") {
      a.kind = AccessKind::Store;
    } else {
      throw ParseError("unknown kind at line " + std::to_string(lineno));
    }
    if (have_prev && a.cycle < prev_cycle)
      throw ParseError("non-monotonic cycle at line " + std::to_string(lineno));
    prev_cycle = a.cycle;
    have_prev = true;
    t.accesses.push_back(a);
  }
  return t;
}

Trace load_trace_file(const std::string& path, const BlockGeometry& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open trace file: " + path);
  return parse_trace(in, g, path);
}

void serialize_trace(const Trace& t, std::ostream& out) {
  out << "cycle,core,pc,addr,kind\n";
  char buf[32];
  for (const auto& a : t.accesses) {
    out << a.cycle << ',' << a.core_id << ',';
    std::snprintf(buf, sizeof(buf), "0x%llx",
                  static_cast<unsigned long long>(a.pc));
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "0x%llx",
                  static_cast<unsigned long long>(a.address));
    out << buf << ',' << (a.kind == AccessKind::Load ? "load" : "store")
        << '\n';
  }
}

void write_trace_file(const Trace& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open output file: " + path);
  serialize_trace(t, out);
}

const char* workload_kind_name(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::Loop: return "loop";
    case WorkloadKind::Stream: return "stream";
    case WorkloadKind::Stride: return "stride";
    case WorkloadKind::Mixed: return "mixed";
    case WorkloadKind::Coupled: return "coupled";
  }
  return "?";
}

WorkloadKind workload_kind_from_name(const std::string& name) {
  if (name == "loop") return WorkloadKind::Loop;
  if (name == "stream") return WorkloadKind::Stream;
  if (name == "stride") return WorkloadKind::Stride;
  if (name == "mixed") return WorkloadKind::Mixed;
  if (name == "coupled") return WorkloadKind::Coupled;
  throw ConfigError("unknown workload kind: " + name);
}

namespace {

constexpr uint64_t kBlockBytes = 64;
constexpr uint64_t kSharedPc = 0x400000;
constexpr uint64_t kLoopPc = 0x400100;
constexpr uint64_t kStreamPc = 0x400200;
constexpr uint64_t kFirstCycle = 100;

// Coupled loop region: 8 consecutive blocks inside one page.
constexpr uint64_t kCoupledLoopBlocks = 8;
constexpr uint64_t kCoupledLoopBase = 8 * 64;       // page 8, offsets 0..7
constexpr uint64_t kCoupledStreamBase = 1ull << 20;  // far from the loop page

MemoryAccess make_access(uint64_t cycle, uint64_t pc, uint64_t block) {
  MemoryAccess a;
  a.cycle = cycle;
  a.core_id = 0;
  a.pc = pc;
  a.address = block * kBlockBytes;
  a.kind = AccessKind::Load;
  return a;
}

Trace gen_loop(const GenParams& p, uint64_t /*seed*/) {
  if (p.working_set < 1) throw ConfigError("loop: working_set must be >= 1");
  if (p.length < p.working_set)
    throw ConfigError("loop: length must be >= working_set");
  Trace t;
  for (uint64_t i = 0; i < p.length; ++i)
    t.accesses.push_back(make_access(kFirstCycle + i, kLoopPc,
                                     i % p.working_set));
  return t;
}

Trace gen_stream(const GenParams& p, uint64_t /*seed*/) {
  if (p.length < 1) throw ConfigError("stream: length must be >= 1");
  Trace t;
  for (uint64_t i = 0; i < p.length; ++i)
    t.accesses.push_back(make_access(kFirstCycle + i, kStreamPc, i));
  return t;
}

Trace gen_stride(const GenParams& p, uint64_t /*seed*/) {
  if (p.length < 1) throw ConfigError("stride: length must be >= 1");
  if (p.stride == 0) throw ConfigError("stride: stride must be nonzero");
  Trace t;
  const uint64_t base =
      p.stride < 0 ? p.length * static_cast<uint64_t>(-p.stride) : 0;
  for (uint64_t i = 0; i < p.length; ++i) {
    uint64_t block = base + static_cast<uint64_t>(static_cast<int64_t>(i) *
                                                  p.stride);
    t.accesses.push_back(make_access(kFirstCycle + i, kLoopPc, block));
  }
  return t;
}

// Two PCs with opposite behavior: one loops over a small region, one streams.
Trace gen_mixed(const GenParams& p, uint64_t seed) {
  if (p.working_set < 1) throw ConfigError("mixed: working_set must be >= 1");
  if (p.length < 1) throw ConfigError("mixed: length must be >= 1");
  std::mt19937_64 rng(seed);
  Trace t;
  uint64_t loop_cursor = 0;
  uint64_t stream_cursor = 1ull << 16;
  for (uint64_t i = 0; i < p.length; ++i) {
    if (rng() % 2 == 0) {
      t.accesses.push_back(
          make_access(kFirstCycle + i, kLoopPc, loop_cursor % p.working_set));
      ++loop_cursor;
    } else {
      t.accesses.push_back(
          make_access(kFirstCycle + i, kStreamPc, stream_cursor++));
    }
  }
  return t;
}

Trace gen_coupled(const GenParams& p, uint64_t seed) {
  if (p.phases < 1) throw ConfigError("coupled: phases must be >= 1");
  if (p.phase_len < 1) throw ConfigError("coupled: phase_len must be >= 1");
  std::mt19937_64 rng(seed);
  Trace t;
  uint64_t cycle = kFirstCycle;
  uint64_t stream_cursor = kCoupledStreamBase;
  for (uint64_t phase = 0; phase < p.phases; ++phase) {
    const bool looping = (phase % 2 == 0);
    if (looping) {
      for (uint64_t i = 0; i < p.phase_len; ++i) {
        uint64_t block = kCoupledLoopBase + rng() % kCoupledLoopBlocks;
        t.accesses.push_back(make_access(cycle++, kSharedPc, block));
      }
    } else {
      // Fresh blocks visited in permuted order so the stride stream looks
      // like the loop phase's and only the page stream reveals the phase.
      std::vector<uint64_t> window(p.phase_len);
      std::iota(window.begin(), window.end(), stream_cursor);
      std::shuffle(window.begin(), window.end(), rng);
      stream_cursor += p.phase_len;
      for (uint64_t block : window)
        t.accesses.push_back(make_access(cycle++, kSharedPc, block));
    }
  }
  return t;
}

}  // namespace

Trace gen_synthetic(WorkloadKind kind, const GenParams& p, uint64_t seed) {
  Trace t;
  switch (kind) {
    case WorkloadKind::Loop: t = gen_loop(p, seed); break;
    case WorkloadKind::Stream: t = gen_stream(p, seed); break;
    case WorkloadKind::Stride: t = gen_stride(p, seed); break;
    case WorkloadKind::Mixed: t = gen_mixed(p, seed); break;
    case WorkloadKind::Coupled: t = gen_coupled(p, seed); break;
  }
  t.source_name = workload_kind_name(kind);
  return t;
}

}  // namespace jcl
