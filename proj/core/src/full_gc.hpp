#pragma once

#include <cstdint>
#include <vector>

#include "gangc/address.hpp"
#include "gangc/gc_stats.hpp"

namespace gangc {

class Runtime;

// Input to bda-space slot packing: one row per surviving segment.
struct SegmentPackInput {
  std::int32_t seg_id = -1;
  std::int32_t container = -1;
  std::uint32_t chain_index = 0;  // position along the container chain
  std::int32_t slot = -1;         // current slot; -1 when spilled
  Addr base = 0;                  // current extent base
};

struct SegmentPackResult {
  std::int32_t seg_id = -1;
  std::int32_t new_slot = -1;  // -1: stays where it is (spill island)
};

// Packs surviving segments toward the bottom of their space: containers
// ordered by the lowest extent base among their surviving segments, chain
// order within a container. In-space segments are placed first so they can
// never lose their slot to a transferred spill; spills take the remaining
// free slots and any excess stays spilled.
std::vector<SegmentPackResult> plan_segment_packing(std::vector<SegmentPackInput> inputs,
                                                    std::uint32_t slot_count);

// Stop-the-world mark-compact over the whole heap in four phases: parallel
// marking, single-threaded summary, parallel region compaction with the
// container guard, and cleanup (tops, pools, card table).
class FullCollector {
 public:
  explicit FullCollector(Runtime& rt) : rt_(rt) {}
  GcStats collect();

 private:
  Runtime& rt_;
};

}  // namespace gangc
