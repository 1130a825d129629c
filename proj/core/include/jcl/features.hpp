#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include "jcl/cachesim.hpp"
#include "jcl/oracle.hpp"
#include "jcl/trace.hpp"

namespace jcl {

enum class VocabField : uint8_t { PC, Page };

// Token table over one event field. Ids are dense in [0, size); 0 and 1 are
// reserved for padding and out-of-vocabulary values, real tokens start at 2.
struct Vocab {
  static constexpr uint32_t kPadId = 0;
  static constexpr uint32_t kOovId = 1;

  std::unordered_map<uint64_t, uint32_t> ids;  // value -> token id
  std::vector<uint64_t> values;  // token id -> value; entries 0 and 1 hold 0

  uint32_t size() const { return static_cast<uint32_t>(values.size()); }
  uint32_t token_of(uint64_t value) const;  // kOovId when absent
  uint64_t value_of(uint32_t id) const;     // throws BoundsError past size
};

// One id per distinct field value in first-appearance order. Pages derive
// from event blocks via the geometry. Throws DataError on empty input.
Vocab build_vocab(std::span<const CacheEvent> events, VocabField field,
                  const BlockGeometry& g);

inline constexpr size_t kContextDim = 7;

// (set_index, stride_id, miss-type one-hot in enum order, core_id).
std::vector<double> make_context(const CacheEvent& e);

struct ReplacementSample {
  std::vector<uint32_t> pc_history;  // exactly H tokens, left-padded
  std::vector<double> context;       // kContextDim entries
  CacheLabel label = CacheLabel::CacheAverse;
  uint64_t insertion_id = 0;
  uint64_t event_index = 0;  // position in the demand stream
  uint32_t set_index = 0;
};

struct PrefetchSample {
  std::vector<uint32_t> pc_history;      // exactly H tokens
  std::vector<uint32_t> page_history;    // exactly H tokens
  std::vector<uint32_t> offset_history;  // offset + 2, reserving pad/oov ids
  uint32_t target_page = 0;   // page token of the next demand access
  uint32_t target_offset = 0;  // raw offset in [0, blocks_per_page)
  uint64_t event_index = 0;    // demand index of the last history event
  uint32_t set_index = 0;      // set of the last history event's block
};

// One sample per label, in label order. A label's trace position indexes the
// demand events (prefetch fills are skipped); pc_history holds the tokens of
// the H most recent demand PCs at that position, the position's own PC last,
// left-padded with kPadId. Throws DataError when a label's position or block
// disagrees with the events, ConfigError when history_len is zero.
std::vector<ReplacementSample> extract_replacement_samples(
    std::span<const CacheEvent> events,
    std::span<const LabeledInsertion> labels, const Vocab& pc_vocab,
    size_t history_len);

// One sample per demand index i in [H-1, n-2]: histories cover demand events
// i-H+1..i and the target is demand event i+1. Traces shorter than H+1
// demand events yield no samples.
std::vector<PrefetchSample> extract_prefetch_samples(
    std::span<const CacheEvent> events, const Vocab& pc_vocab,
    const Vocab& page_vocab, const BlockGeometry& g, size_t history_len);

// A labeled insertion's replacement features plus the prefetch-side view of
// the same moment: histories ending at the insertion's demand position.
struct AlignedSample {
  ReplacementSample repl;
  PrefetchSample pf;        // target fields meaningful iff has_target
  bool has_target = false;  // false only for a label at the final position
};

// One aligned sample per label, validated like extract_replacement_samples.
// Early positions left-pad all histories with kPadId.
std::vector<AlignedSample> extract_aligned_samples(
    std::span<const CacheEvent> events,
    std::span<const LabeledInsertion> labels, const Vocab& pc_vocab,
    const Vocab& page_vocab, const BlockGeometry& g, size_t history_len);

struct PairSample {
  ReplacementSample replacement_features;  // label ignored by consumers
  PrefetchSample prefetch_features;        // targets ignored by consumers
  bool is_positive = false;
};

// Emits a positive pair for every (prefetch sample at demand index i,
// replacement sample at demand index j) with 0 < j - i <= window and equal
// set_index, each followed by `negatives` re-pairings of the same replacement
// sample with prefetch samples drawn uniformly from outside the window (any
// set). Output order and draws are invariant to input order and deterministic
// under the seed; a positive with no sample outside the window gets none.
std::vector<PairSample> make_pairs(std::span<const ReplacementSample> repl,
                                   std::span<const PrefetchSample> pf,
                                   uint64_t window, uint32_t negatives,
                                   uint64_t seed);

// Indices into a make_pairs output: one positive and its trailing negatives.
struct PairGroup {
  size_t positive = 0;
  std::vector<size_t> negatives;
};

// Splits a make_pairs list into groups. Throws DataError when the list does
// not start with a positive or a negative's replacement sample differs from
// its group's.
std::vector<PairGroup> group_pairs(std::span<const PairSample> pairs);

// CSV: pair_id,pos,repl_ref,pf_ref where repl_ref is the replacement
// insertion id and pf_ref the prefetch sample's demand index.
void export_pairs_csv(std::span<const PairSample> pairs, std::ostream& out);

// Audit exports; histories are space-separated token ids inside one field.
void export_replacement_samples_csv(std::span<const ReplacementSample> samples,
                                    std::ostream& out);
void export_prefetch_samples_csv(std::span<const PrefetchSample> samples,
                                 std::ostream& out);

}  // namespace jcl
