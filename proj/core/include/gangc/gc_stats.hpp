#pragma once

#include <cstdint>
#include <vector>

namespace gangc {

enum class GcKind : std::uint8_t { kMinor, kFull };

struct GcStats {
  GcKind kind = GcKind::kMinor;
  std::uint64_t sequence = 0;
  std::uint64_t pause_ns = 0;

  // minor collection
  std::uint64_t bytes_copied = 0;
  std::uint64_t objects_copied = 0;
  std::uint64_t objects_promoted = 0;   // copies that landed in the old generation
  std::uint64_t containers_created = 0;
  std::uint64_t queue_entries_live = 0;
  std::uint64_t queue_entries_dead = 0;
  std::uint64_t gang_copied_objects = 0;
  bool gang_degraded = false;

  // full collection
  std::uint64_t mark_ns = 0;
  std::uint64_t summary_ns = 0;
  std::uint64_t compact_ns = 0;
  std::uint64_t cleanup_ns = 0;
  std::uint64_t marked_objects = 0;
  std::uint64_t live_bytes = 0;
  std::uint64_t regions_moved = 0;
  std::uint64_t segments_released = 0;
  std::uint64_t segments_transferred = 0;
  std::uint64_t evicted_objects = 0;
};

struct GcCounters {
  std::uint64_t minor_collections = 0;
  std::uint64_t full_collections = 0;
  std::uint64_t total_pause_ns = 0;
  std::uint64_t bytes_allocated = 0;
  std::uint64_t objects_allocated = 0;
};

}  // namespace gangc
