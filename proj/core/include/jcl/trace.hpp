#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace jcl {

enum class AccessKind : uint8_t { Load, Store };

// One demand access from a trace.
struct MemoryAccess {
  uint64_t cycle = 0;
  uint16_t core_id = 0;
  uint64_t pc = 0;
  uint64_t address = 0;  // physical byte address
  AccessKind kind = AccessKind::Load;

  bool operator==(const MemoryAccess&) const = default;
};

struct BlockGeometry {
  uint64_t block_size_bytes = 64;
  uint64_t page_size_bytes = 4096;

  uint64_t blocks_per_page() const { return page_size_bytes / block_size_bytes; }

  // Throws ConfigError unless both sizes are powers of two and the page is a
  // multiple of the block size.
  void validate() const;
};

struct Trace {
  std::vector<MemoryAccess> accesses;
  std::string source_name;

  size_t size() const { return accesses.size(); }
};

// Block number of a byte address: address / block_size.
uint64_t block_of(uint64_t address, const BlockGeometry& g);

struct PageOffset {
  uint64_t page = 0;
  uint64_t offset = 0;  // block index within the page

  bool operator==(const PageOffset&) const = default;
};

// Decomposes a block number into (page, offset-in-blocks).
PageOffset page_and_offset(uint64_t block, const BlockGeometry& g);

// Parses CSV with header `cycle,core,pc,addr,kind`. pc/addr accept decimal or
// 0x-prefixed hex; kind is `load` or `store`. Throws ParseError naming the
// offending line (and column for malformed fields); cycles must be
// non-decreasing.
Trace parse_trace(std::istream& in, const BlockGeometry& g,
                  std::string source_name = "");
Trace load_trace_file(const std::string& path, const BlockGeometry& g);

// Writes the same CSV dialect parse_trace reads (pc/addr in hex, LF endings).
void serialize_trace(const Trace& t, std::ostream& out);
void write_trace_file(const Trace& t, const std::string& path);

enum class WorkloadKind { Loop, Stream, Stride, Mixed, Coupled };

const char* workload_kind_name(WorkloadKind k);
WorkloadKind workload_kind_from_name(const std::string& name);

struct GenParams {
  uint64_t length = 0;       // Loop, Stream, Stride, Mixed
  uint64_t working_set = 0;  // Loop, Mixed: loop-region size in blocks
  int64_t stride = 1;        // Stride: block stride per access
  uint64_t phases = 0;       // Coupled
  uint64_t phase_len = 0;    // Coupled
};

// Deterministic synthetic workloads; identical arguments produce identical
// traces. Throws ConfigError on invalid params for the kind.
//
// Coupled alternates loop phases over a fixed 8-block region (one page) with
// streaming phases over fresh blocks visited in seeded permutation order.
// Every access is issued by one shared PC, so reuse behavior is visible in
// the page stream but not in the PC stream.
Trace gen_synthetic(WorkloadKind kind, const GenParams& p, uint64_t seed);

}  // namespace jcl
