#include "jcl/features.hpp"

#include <algorithm>
#include <ostream>
#include <random>
#include <string>
#include <tuple>

#include "jcl/error.hpp"

namespace jcl {

uint32_t Vocab::token_of(uint64_t value) const {
  auto it = ids.find(value);
  return it == ids.end() ? kOovId : it->second;
}

uint64_t Vocab::value_of(uint32_t id) const {
  if (id >= values.size())
    throw BoundsError("vocab id " + std::to_string(id) + " out of range for " +
                      std::to_string(values.size()) + " tokens");
  return values[id];
}

Vocab build_vocab(std::span<const CacheEvent> events, VocabField field,
                  const BlockGeometry& g) {
  if (events.empty()) throw DataError("build_vocab: empty event list");
  Vocab v;
  v.values = {0, 0};
  for (const CacheEvent& e : events) {
    uint64_t value = field == VocabField::PC ? e.pc : page_and_offset(e.block, g).page;
    if (v.ids.emplace(value, v.size()).second) v.values.push_back(value);
  }
  return v;
}

std::vector<double> make_context(const CacheEvent& e) {
  std::vector<double> c(kContextDim, 0.0);
  c[0] = static_cast<double>(e.set_index);
  c[1] = static_cast<double>(e.stride_id);
  c[2 + static_cast<size_t>(e.miss_type)] = 1.0;
  c[6] = static_cast<double>(e.core_id);
  return c;
}

namespace {

std::vector<const CacheEvent*> demand_events(std::span<const CacheEvent> events) {
  std::vector<const CacheEvent*> out;
  out.reserve(events.size());
  for (const CacheEvent& e : events)
    if (e.is_demand()) out.push_back(&e);
  return out;
}

// Tokens of positions max(0, pos-H+1)..pos, left-padded to H.
std::vector<uint32_t> history_at(const std::vector<const CacheEvent*>& demand,
                                 uint64_t pos, size_t h,
                                 const Vocab& vocab, VocabField field,
                                 const BlockGeometry& g) {
  std::vector<uint32_t> out(h, Vocab::kPadId);
  uint64_t first = pos + 1 >= h ? pos + 1 - h : 0;
  for (uint64_t p = first; p <= pos; ++p) {
    const CacheEvent& e = *demand[p];
    uint64_t value =
        field == VocabField::PC ? e.pc : page_and_offset(e.block, g).page;
    out[h - 1 - (pos - p)] = vocab.token_of(value);
  }
  return out;
}

}  // namespace

namespace {

const CacheEvent& joined_event(const std::vector<const CacheEvent*>& demand,
                               const LabeledInsertion& l) {
  if (l.trace_position >= demand.size())
    throw DataError("label position " + std::to_string(l.trace_position) +
                    " out of range for " + std::to_string(demand.size()) +
                    " demand events");
  const CacheEvent& e = *demand[l.trace_position];
  if (e.block != l.block)
    throw DataError("label at position " + std::to_string(l.trace_position) +
                    " expects block " + std::to_string(l.block) +
                    " but event has " + std::to_string(e.block));
  return e;
}

ReplacementSample repl_sample_at(const std::vector<const CacheEvent*>& demand,
                                 const LabeledInsertion& l,
                                 const CacheEvent& e, const Vocab& pc_vocab,
                                 size_t h) {
  ReplacementSample s;
  s.pc_history = history_at(demand, l.trace_position, h, pc_vocab,
                            VocabField::PC, BlockGeometry{});
  s.context = make_context(e);
  s.label = l.label;
  s.insertion_id = l.insertion_id;
  s.event_index = l.trace_position;
  s.set_index = e.set_index;
  return s;
}

}  // namespace

std::vector<ReplacementSample> extract_replacement_samples(
    std::span<const CacheEvent> events,
    std::span<const LabeledInsertion> labels, const Vocab& pc_vocab,
    size_t history_len) {
  if (history_len == 0) throw ConfigError("history length must be positive");
  auto demand = demand_events(events);
  std::vector<ReplacementSample> out;
  out.reserve(labels.size());
  for (const LabeledInsertion& l : labels) {
    const CacheEvent& e = joined_event(demand, l);
    out.push_back(repl_sample_at(demand, l, e, pc_vocab, history_len));
  }
  return out;
}

std::vector<AlignedSample> extract_aligned_samples(
    std::span<const CacheEvent> events,
    std::span<const LabeledInsertion> labels, const Vocab& pc_vocab,
    const Vocab& page_vocab, const BlockGeometry& g, size_t history_len) {
  if (history_len == 0) throw ConfigError("history length must be positive");
  auto demand = demand_events(events);
  std::vector<AlignedSample> out;
  out.reserve(labels.size());
  for (const LabeledInsertion& l : labels) {
    const CacheEvent& e = joined_event(demand, l);
    AlignedSample a;
    a.repl = repl_sample_at(demand, l, e, pc_vocab, history_len);
    uint64_t j = l.trace_position;
    a.pf.pc_history = a.repl.pc_history;
    a.pf.page_history =
        history_at(demand, j, history_len, page_vocab, VocabField::Page, g);
    a.pf.offset_history.assign(history_len, Vocab::kPadId);
    uint64_t first = j + 1 >= history_len ? j + 1 - history_len : 0;
    for (uint64_t p = first; p <= j; ++p)
      a.pf.offset_history[history_len - 1 - (j - p)] =
          static_cast<uint32_t>(page_and_offset(demand[p]->block, g).offset) +
          2;
    a.pf.event_index = j;
    a.pf.set_index = e.set_index;
    a.has_target = j + 1 < demand.size();
    if (a.has_target) {
      PageOffset next = page_and_offset(demand[j + 1]->block, g);
      a.pf.target_page = page_vocab.token_of(next.page);
      a.pf.target_offset = static_cast<uint32_t>(next.offset);
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<PrefetchSample> extract_prefetch_samples(
    std::span<const CacheEvent> events, const Vocab& pc_vocab,
    const Vocab& page_vocab, const BlockGeometry& g, size_t history_len) {
  if (history_len == 0) throw ConfigError("history length must be positive");
  auto demand = demand_events(events);
  std::vector<PrefetchSample> out;
  if (demand.size() < history_len + 1) return out;
  for (uint64_t i = history_len - 1; i + 1 < demand.size(); ++i) {
    PrefetchSample s;
    s.pc_history = history_at(demand, i, history_len, pc_vocab,
                              VocabField::PC, g);
    s.page_history = history_at(demand, i, history_len, page_vocab,
                                VocabField::Page, g);
    s.offset_history.resize(history_len);
    for (size_t k = 0; k < history_len; ++k) {
      uint64_t p = i + 1 + k - history_len;
      s.offset_history[k] =
          static_cast<uint32_t>(page_and_offset(demand[p]->block, g).offset) + 2;
    }
    PageOffset next = page_and_offset(demand[i + 1]->block, g);
    s.target_page = page_vocab.token_of(next.page);
    s.target_offset = static_cast<uint32_t>(next.offset);
    s.event_index = i;
    s.set_index = demand[i]->set_index;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<PairSample> make_pairs(std::span<const ReplacementSample> repl,
                                   std::span<const PrefetchSample> pf,
                                   uint64_t window, uint32_t negatives,
                                   uint64_t seed) {
  std::vector<const ReplacementSample*> rs;
  for (const auto& r : repl) rs.push_back(&r);
  std::vector<const PrefetchSample*> ps;
  for (const auto& p : pf) ps.push_back(&p);
  std::sort(rs.begin(), rs.end(), [](auto* a, auto* b) {
    return std::tie(a->event_index, a->insertion_id) <
           std::tie(b->event_index, b->insertion_id);
  });
  std::sort(ps.begin(), ps.end(),
            [](auto* a, auto* b) { return a->event_index < b->event_index; });

  std::mt19937_64 rng(seed);
  std::vector<PairSample> out;
  for (const ReplacementSample* r : rs) {
    uint64_t j = r->event_index;
    uint64_t lo = j > window ? j - window : 0;  // positives need i in [lo, j)
    auto begin = std::lower_bound(
        ps.begin(), ps.end(), lo,
        [](const PrefetchSample* p, uint64_t v) { return p->event_index < v; });
    auto end = std::lower_bound(
        ps.begin(), ps.end(), j,
        [](const PrefetchSample* p, uint64_t v) { return p->event_index < v; });
    size_t left = static_cast<size_t>(begin - ps.begin());
    size_t right = static_cast<size_t>(ps.end() - end);
    for (auto it = begin; it != end; ++it) {
      if ((*it)->set_index != r->set_index) continue;
      out.push_back({*r, **it, true});
      size_t eligible = left + right;
      for (uint32_t n = 0; n < negatives && eligible > 0; ++n) {
        size_t pick = static_cast<size_t>(rng() % eligible);
        const PrefetchSample* neg =
            pick < left ? ps[pick] : *(end + (pick - left));
        out.push_back({*r, *neg, false});
      }
    }
  }
  return out;
}

std::vector<PairGroup> group_pairs(std::span<const PairSample> pairs) {
  std::vector<PairGroup> out;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].is_positive) {
      out.push_back({i, {}});
    } else {
      if (out.empty())
        throw DataError("pair list must start with a positive pair");
      const PairSample& pos = pairs[out.back().positive];
      if (pairs[i].replacement_features.insertion_id !=
          pos.replacement_features.insertion_id)
        throw DataError("negative pair " + std::to_string(i) +
                        " re-pairs a different replacement sample");
      out.back().negatives.push_back(i);
    }
  }
  return out;
}

void export_pairs_csv(std::span<const PairSample> pairs, std::ostream& out) {
  out << "pair_id,pos,repl_ref,pf_ref\n";
  for (size_t i = 0; i < pairs.size(); ++i) {
    const PairSample& p = pairs[i];
    out << i << ',' << (p.is_positive ? 1 : 0) << ','
        << p.replacement_features.insertion_id << ','
        << p.prefetch_features.event_index << '\n';
  }
}

namespace {

void write_tokens(std::ostream& out, const std::vector<uint32_t>& toks) {
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) out << ' ';
    out << toks[i];
  }
}

}  // namespace

void export_replacement_samples_csv(std::span<const ReplacementSample> samples,
                                    std::ostream& out) {
  out << "insertion_id,position,set,label,pc_history,context\n";
  for (const ReplacementSample& s : samples) {
    out << s.insertion_id << ',' << s.event_index << ',' << s.set_index << ','
        << cache_label_name(s.label) << ',';
    write_tokens(out, s.pc_history);
    out << ',';
    for (size_t i = 0; i < s.context.size(); ++i) {
      if (i) out << ' ';
      out << s.context[i];
    }
    out << '\n';
  }
}

void export_prefetch_samples_csv(std::span<const PrefetchSample> samples,
                                 std::ostream& out) {
  out << "position,set,target_page,target_offset,pc_history,page_history,"
         "offset_history\n";
  for (const PrefetchSample& s : samples) {
    out << s.event_index << ',' << s.set_index << ',' << s.target_page << ','
        << s.target_offset << ',';
    write_tokens(out, s.pc_history);
    out << ',';
    write_tokens(out, s.page_history);
    out << ',';
    write_tokens(out, s.offset_history);
    out << '\n';
  }
}

}  // namespace jcl
