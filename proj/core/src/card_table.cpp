#include "gangc/card_table.hpp"

#include <algorithm>
#include <cassert>

#include "gangc/heap_layout.hpp"
#include "gangc/object.hpp"

namespace gangc {

void CardTable::clear_all() { std::fill(cards_.begin(), cards_.end(), 0); }
void CardTable::dirty_all() { std::fill(cards_.begin(), cards_.end(), 1); }

std::size_t CardTable::dirty_count() const {
  return static_cast<std::size_t>(std::count(cards_.begin(), cards_.end(), 1));
}

namespace {

// First object whose extent overlaps `lo` within a walkable chunk, found via
// the start table and a short forward walk.
Addr first_covering(const HeapLayout& layout, const ObjectAccess& access, Addr chunk_base,
                    Addr chunk_top, Addr lo) {
  Addr cursor = chunk_base;
  if (lo > chunk_base) {
    auto hint = layout.start_table().last_start_at_or_before(lo, chunk_base);
    if (hint) cursor = *hint;
  }
  while (cursor < chunk_top) {
    const std::size_t size = access.size(cursor);
    assert(size >= kHeaderBytes);
    if (cursor + size > lo) return cursor;
    cursor += size;
  }
  return chunk_top;
}

}  // namespace

std::vector<DirtyRange> CardTable::scan_dirty_ranges(const HeapLayout& layout,
                                                     const ObjectAccess& access, AddrRange space,
                                                     bool clear) {
  std::vector<DirtyRange> out;
  if (space.empty()) return out;
  std::vector<HeapLayout::Chunk> chunks;
  layout.old_chunks_in(space, chunks);
  if (chunks.empty()) return out;

  const std::size_t first_card = index_of(std::max(space.base, base_));
  const std::size_t last_card = index_of(space.end - 1);

  std::size_t i = first_card;
  while (i <= last_card) {
    if (!cards_[i]) {
      ++i;
      continue;
    }
    std::size_t run_end = i;
    while (run_end + 1 <= last_card && cards_[run_end + 1]) ++run_end;
    const Addr run_lo = base_ + i * kCardBytes;
    const Addr run_hi = base_ + (run_end + 1) * kCardBytes;
    if (clear) std::fill(cards_.begin() + i, cards_.begin() + run_end + 1, 0);

    for (const auto& chunk : chunks) {
      const Addr lo = std::max(run_lo, chunk.base);
      const Addr hi = std::min(run_hi, chunk.top);
      if (lo >= hi) continue;
      Addr first = first_covering(layout, access, chunk.base, chunk.top, lo);
      if (first >= hi) continue;
      // Extend to the end of the last object starting before hi.
      Addr cursor = first;
      Addr end = first;
      while (cursor < hi && cursor < chunk.top) {
        end = cursor + access.size(cursor);
        cursor = end;
      }
      out.push_back({first, std::min(end, chunk.top)});
    }
    i = run_end + 1;
  }
  return out;
}

}  // namespace gangc
