#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "gangc/address.hpp"
#include "gangc/config.hpp"
#include "gangc/object.hpp"

namespace gangc {

// Estimated footprint of one storage-instance collection:
//   (h + NF*f) * CS + DL * CS * (h + DNF*f)
std::uint64_t estimate_container_bytes(const BdaConfig& config);

// ceil(estimate / CF), rounded up to a region multiple (minimum one region).
std::uint64_t segment_size_bytes(const BdaConfig& config);

enum class SpaceKind : std::uint8_t {
  kUnmapped = 0,
  kEden,
  kFrom,
  kTo,
  kOldNonBda,
  kBdaSpace,
};

struct LocateResult {
  SpaceKind kind = SpaceKind::kUnmapped;
  std::int32_t bda_space = -1;
  std::int32_t container = -1;
  std::int32_t segment = -1;
};

struct SegmentRecord {
  std::uint32_t space = 0;     // owning bda-space index
  std::int32_t slot = -1;      // slot index within the space; -1 when spilled
  Addr base = 0;
  Addr top = 0;                // allocation cursor; objects live in [base, top)
  std::int32_t owner = -1;     // container id; -1 while pooled
  std::int32_t next = -1;      // chain link within the owning container

  bool pooled() const { return owner < 0; }
  bool spilled() const { return slot < 0; }
};

struct ContainerRecord {
  std::uint32_t space = 0;
  Addr parent = kNullAddr;     // storage instance address; collectors keep it current
  std::int32_t head = -1;
  std::int32_t tail = -1;
  bool degraded = false;       // gang promotion fell back to the non-bda space
  bool dead = false;
};

struct BdaSpaceInfo {
  std::uint32_t index = 0;
  AddrRange range;
  std::uint32_t slot_count = 0;
  std::uint32_t formatted_slots = 0;       // carve high-water mark, in slots
  std::vector<std::int32_t> pool;          // LIFO free list of pooled segments
  std::vector<std::int32_t> containers;    // creation order
  std::uint64_t spilled_bytes = 0;

  Addr slot_base(std::uint32_t slot, std::uint64_t seg_bytes) const {
    return range.base + std::uint64_t{slot} * seg_bytes;
  }
};

// Maps object-start addresses at kStartBlockBytes granularity so card
// scanning can find the first object overlapping an arbitrary old-gen
// address without walking a whole space.
class ObjectStartTable {
 public:
  void reset(AddrRange covered);
  void record_start(Addr a);
  void clear_blocks(Addr lo, Addr hi);
  // First recorded start in [lo, hi), or nullopt.
  std::optional<Addr> first_start_in(Addr lo, Addr hi) const;
  // Latest recorded start in [floor, a], or nullopt.
  std::optional<Addr> last_start_at_or_before(Addr a, Addr floor) const;

 private:
  static constexpr std::uint16_t kNone = 0xffff;
  AddrRange covered_;
  std::vector<std::uint16_t> first_offset_;
};

// Owns the arena and the whole heap geometry: young spaces, the old non-bda
// space, bda-spaces carved into fixed-size segment slots, the segment pool,
// and the region map backing locate().
class HeapLayout {
 public:
  explicit HeapLayout(const RuntimeOptions& options);

  Arena& arena() { return arena_; }
  const Arena& arena() const { return arena_; }

  // --- geometry ---------------------------------------------------------
  AddrRange eden() const { return eden_; }
  AddrRange from_space() const { return from_is_a_ ? surv_a_ : surv_b_; }
  AddrRange to_space() const { return from_is_a_ ? surv_b_ : surv_a_; }
  AddrRange old_non_bda() const { return old_plain_; }
  AddrRange old_generation() const { return {old_plain_.base, heap_end_}; }
  Addr heap_end() const { return heap_end_; }

  bool in_young(Addr a) const { return a >= eden_.base && a < old_plain_.base; }
  bool in_old(Addr a) const { return a >= old_plain_.base && a < heap_end_; }

  Addr eden_top() const { return eden_top_.load(std::memory_order_relaxed); }
  Addr from_top() const { return from_is_a_ ? surv_a_top_ : surv_b_top_; }
  Addr to_top() const { return from_is_a_ ? surv_b_top_ : surv_a_top_; }
  Addr old_plain_top() const { return old_plain_top_.load(std::memory_order_relaxed); }

  std::size_t bda_space_count() const { return bda_spaces_.size(); }
  const BdaSpaceInfo& bda_space(std::uint32_t i) const { return bda_spaces_[i]; }
  Addr bda_space_top(std::uint32_t i) const {
    return bda_spaces_[i].slot_base(bda_spaces_[i].formatted_slots, segment_bytes_);
  }
  std::uint64_t segment_bytes() const { return segment_bytes_; }

  // The old generation's externally visible top: the last bda-space's top
  // when bda-spaces exist, otherwise the non-bda top.
  Addr old_visible_top() const;

  // --- mutator-side carving (thread-safe bump) --------------------------
  std::optional<Addr> carve_eden(std::size_t bytes);
  void reset_eden() { eden_top_.store(eden_.base, std::memory_order_relaxed); }

  // --- GC-side carving ---------------------------------------------------
  std::optional<Addr> carve_to_space(std::size_t bytes);
  void reset_to_space();
  void reset_from_space();
  void swap_survivors() { from_is_a_ = !from_is_a_; }
  void set_from_top(Addr a) { (from_is_a_ ? surv_a_top_ : surv_b_top_) = a; }

  // Region-multiple extents only; keeps the non-bda top region-aligned.
  std::optional<Addr> carve_old_plain(std::size_t bytes);
  void set_old_plain_top(Addr a);

  // --- segments & containers --------------------------------------------
  // Pool, fresh slot, or spill into the non-bda space, in that order.
  std::optional<std::int32_t> allocate_segment(std::uint32_t space, std::int32_t container);
  void release_segment(std::int32_t seg_id);

  std::int32_t create_container(std::uint32_t space, Addr parent);
  void append_segment(std::int32_t container, std::int32_t seg_id);

  SegmentRecord& segment(std::int32_t id) { return segments_[id]; }
  const SegmentRecord& segment(std::int32_t id) const { return segments_[id]; }
  std::size_t segment_count() const { return segments_.size(); }
  ContainerRecord& container(std::int32_t id) { return containers_[id]; }
  const ContainerRecord& container(std::int32_t id) const { return containers_[id]; }
  std::size_t container_count() const { return containers_.size(); }

  // Full-GC segment transfer happens in two passes so one segment's old
  // extent can become another's new extent: unbind all, then bind all.
  void unbind_segment_extent(std::int32_t seg_id);
  void bind_segment_extent(std::int32_t seg_id, std::int32_t new_slot, Addr new_base);
  void set_formatted_slots(std::uint32_t space, std::uint32_t formatted);
  void clear_pool(std::uint32_t space);
  void pool_segment(std::int32_t seg_id);

  // --- classification ----------------------------------------------------
  LocateResult locate(Addr a) const;

  // --- walking -----------------------------------------------------------
  // Walkable chunks of the old generation: [bottom, top) runs of the
  // non-bda space (with spilled-segment extents replaced by their live
  // prefix) and [base, top) of every owned bda segment.
  struct Chunk {
    Addr base;
    Addr top;
    std::int32_t segment;  // -1 for plain non-bda runs
  };
  void old_chunks_in(AddrRange clamp, std::vector<Chunk>& out) const;
  void old_chunks(std::vector<Chunk>& out) const;

  ObjectStartTable& start_table() { return start_table_; }
  const ObjectStartTable& start_table() const { return start_table_; }

  void dump_geometry(std::ostream& os) const;

  std::uint64_t spilled_bytes_total() const;

  // Variable-size dead padding keeping carved extents walkable.
  void write_filler_raw(Addr a, std::size_t bytes);

 private:
  std::optional<Addr> carve(std::atomic<Addr>& top, Addr limit, std::size_t bytes);
  void set_region_kind(Addr lo, Addr hi, std::uint32_t code);
  std::uint32_t region_code(Addr a) const { return region_map_[a / kRegionBytes]; }

  static constexpr std::uint32_t kKindMask = 7;
  enum : std::uint32_t {
    kRegUnmapped = 0,
    kRegEden = 1,
    kRegSurvA = 2,
    kRegSurvB = 3,
    kRegOldPlain = 4,
    kRegBdaRaw = 5,   // payload: bda-space index
    kRegSegment = 6,  // payload: segment id
  };

  Arena arena_;
  Addr heap_end_ = 0;
  AddrRange eden_, surv_a_, surv_b_, old_plain_;
  std::atomic<Addr> eden_top_;
  Addr surv_a_top_, surv_b_top_;
  std::atomic<Addr> old_plain_top_;
  bool from_is_a_ = true;

  std::uint64_t segment_bytes_ = 0;
  std::vector<BdaSpaceInfo> bda_spaces_;
  // Deques keep records addressable while GC workers append concurrently.
  std::deque<SegmentRecord> segments_;
  std::deque<ContainerRecord> containers_;
  std::vector<std::uint32_t> region_map_;
  ObjectStartTable start_table_;
  mutable std::mutex geometry_mutex_;
};

}  // namespace gangc
