#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

#include "gangc/address.hpp"

namespace gangc {

class HeapLayout;
class ObjectAccess;

struct DirtyRange {
  Addr first_object_start;
  Addr last_object_end;
};

// One byte per kCardBytes granule over the old generation. Mutator stores
// dirty unconditionally; scanning adjusts dirty runs to object boundaries
// per space so a run never crosses into dead space between bda-spaces.
class CardTable {
 public:
  CardTable(Addr old_base, Addr old_end)
      : base_(old_base), cards_((old_end - old_base + kCardBytes - 1) / kCardBytes, 0) {}

  Addr base() const { return base_; }
  std::size_t card_count() const { return cards_.size(); }

  void dirty_on_store(Addr field_addr) {
    std::atomic_ref<std::uint8_t> cell(cards_[index_of(field_addr)]);
    cell.store(1, std::memory_order_relaxed);
  }

  bool is_dirty(Addr addr) const { return cards_[index_of(addr)] != 0; }
  std::size_t dirty_count() const;

  void clear_all();
  void dirty_all();
  // End of a full collection: drop the table if the young generation is
  // empty, otherwise conservatively dirty everything.
  void clean_or_invalidate(bool young_empty) {
    if (young_empty)
      clear_all();
    else
      dirty_all();
  }

  // Dirty-card runs intersected with one space's walkable chunks, adjusted
  // to the start of the first and the end of the last overlapping object.
  // When `clear` is set, scanned cards are cleared (the caller re-dirties
  // survivors through the store barrier).
  std::vector<DirtyRange> scan_dirty_ranges(const HeapLayout& layout, const ObjectAccess& access,
                                            AddrRange space, bool clear = false);

 private:
  std::size_t index_of(Addr a) const { return (a - base_) / kCardBytes; }

  Addr base_;
  std::vector<std::uint8_t> cards_;
};

}  // namespace gangc
