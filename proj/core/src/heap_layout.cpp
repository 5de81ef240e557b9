#include "gangc/heap_layout.hpp"

#include <algorithm>
#include <cassert>
#include <ostream>
#include <stdexcept>

namespace gangc {

std::uint64_t estimate_container_bytes(const BdaConfig& config) {
  const std::uint64_t node = kHeaderBytes + std::uint64_t{config.node_fields} * kRefBytes;
  const std::uint64_t element = kHeaderBytes + std::uint64_t{config.default_node_fields} * kRefBytes;
  return node * config.container_size +
         std::uint64_t{config.delegation_level} * config.container_size * element;
}

std::uint64_t segment_size_bytes(const BdaConfig& config) {
  const std::uint64_t estimate = estimate_container_bytes(config);
  const std::uint64_t per_segment = (estimate + config.container_fraction - 1) / config.container_fraction;
  const std::uint64_t rounded = align_up(std::max<std::uint64_t>(per_segment, 1), kRegionBytes);
  return rounded;
}

// ---------------------------------------------------------------------------
// ObjectStartTable

void ObjectStartTable::reset(AddrRange covered) {
  covered_ = covered;
  first_offset_.assign((covered.bytes() + kStartBlockBytes - 1) / kStartBlockBytes, kNone);
}

void ObjectStartTable::record_start(Addr a) {
  assert(covered_.contains(a));
  const std::size_t idx = (a - covered_.base) / kStartBlockBytes;
  const auto off = static_cast<std::uint16_t>((a - covered_.base) % kStartBlockBytes);
  std::atomic_ref<std::uint16_t> cell(first_offset_[idx]);
  std::uint16_t cur = cell.load(std::memory_order_relaxed);
  while (off < cur && !cell.compare_exchange_weak(cur, off, std::memory_order_relaxed)) {
  }
}

void ObjectStartTable::clear_blocks(Addr lo, Addr hi) {
  assert(lo % kStartBlockBytes == 0 && hi % kStartBlockBytes == 0);
  lo = std::max(lo, covered_.base);
  hi = std::min(hi, covered_.end);
  if (lo >= hi) return;
  std::size_t first = (lo - covered_.base) / kStartBlockBytes;
  std::size_t last = (hi - covered_.base) / kStartBlockBytes;
  std::fill(first_offset_.begin() + first, first_offset_.begin() + last, kNone);
}

std::optional<Addr> ObjectStartTable::last_start_at_or_before(Addr a, Addr floor) const {
  if (!covered_.contains(a) || floor > a) return std::nullopt;
  const std::size_t lo_block = (std::max(floor, covered_.base) - covered_.base) / kStartBlockBytes;
  std::size_t idx = (a - covered_.base) / kStartBlockBytes;
  for (;; --idx) {
    if (first_offset_[idx] != kNone) {
      Addr start = covered_.base + idx * kStartBlockBytes + first_offset_[idx];
      if (start <= a && start >= floor) return start;
      // The block's first start lies past `a`; keep scanning backwards.
    }
    if (idx == lo_block) break;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// HeapLayout

HeapLayout::HeapLayout(const RuntimeOptions& options)
    : arena_(align_down(options.heap_bytes, kRegionBytes)) {
  options.validate();
  const Addr total = align_down(options.heap_bytes, kRegionBytes);
  heap_end_ = total;

  // One guard region up front keeps offset 0 out of every space.
  const Addr young_base = kRegionBytes;
  const auto young_bytes = align_down<Addr>(
      static_cast<Addr>(static_cast<double>(total) * options.young_fraction), kRegionBytes);
  auto eden_bytes = align_down<Addr>(
      static_cast<Addr>(static_cast<double>(young_bytes) * options.eden_fraction), kRegionBytes);
  auto survivor_bytes = align_down<Addr>((young_bytes - eden_bytes) / 2, kRegionBytes);
  if (survivor_bytes < kRegionBytes) survivor_bytes = kRegionBytes;
  if (eden_bytes < kRegionBytes) eden_bytes = kRegionBytes;

  eden_ = {young_base, young_base + eden_bytes};
  surv_a_ = {eden_.end, eden_.end + survivor_bytes};
  surv_b_ = {surv_a_.end, surv_a_.end + survivor_bytes};

  const Addr old_base = surv_b_.end;
  if (old_base + 4 * kRegionBytes > total)
    throw ConfigError("heap too small for the requested young fraction");
  const Addr old_bytes = total - old_base;

  std::uint64_t per_space = 0;
  std::size_t space_count = 0;
  if (options.bda_active()) {
    space_count = options.bda.classes.size();
    segment_bytes_ = segment_size_bytes(options.bda);
    const auto bda_total = align_down<Addr>(
        static_cast<Addr>(static_cast<double>(old_bytes) * options.bda.bda_ratio), kRegionBytes);
    per_space = align_down<Addr>(bda_total / space_count, kRegionBytes);
    if (per_space < segment_bytes_)
      throw ConfigError("bda-space smaller than one segment; lower container_size or raise bda_ratio");
  }

  old_plain_ = {old_base, total - per_space * space_count};
  for (std::size_t i = 0; i < space_count; ++i) {
    BdaSpaceInfo info;
    info.index = static_cast<std::uint32_t>(i);
    info.range = {old_plain_.end + i * per_space, old_plain_.end + (i + 1) * per_space};
    info.slot_count = static_cast<std::uint32_t>(per_space / segment_bytes_);
    bda_spaces_.push_back(std::move(info));
  }

  eden_top_.store(eden_.base, std::memory_order_relaxed);
  surv_a_top_ = surv_a_.base;
  surv_b_top_ = surv_b_.base;
  old_plain_top_.store(old_plain_.base, std::memory_order_relaxed);

  region_map_.assign(total / kRegionBytes, kRegUnmapped);
  set_region_kind(eden_.base, eden_.end, kRegEden);
  set_region_kind(surv_a_.base, surv_a_.end, kRegSurvA);
  set_region_kind(surv_b_.base, surv_b_.end, kRegSurvB);
  set_region_kind(old_plain_.base, old_plain_.end, kRegOldPlain);
  for (const auto& s : bda_spaces_)
    set_region_kind(s.range.base, s.range.end, kRegBdaRaw | (s.index << 3));

  start_table_.reset(old_generation());
}

void HeapLayout::set_region_kind(Addr lo, Addr hi, std::uint32_t code) {
  for (Addr r = lo / kRegionBytes; r < (hi + kRegionBytes - 1) / kRegionBytes; ++r)
    region_map_[r] = code;
}

Addr HeapLayout::old_visible_top() const {
  if (!bda_spaces_.empty()) return bda_space_top(static_cast<std::uint32_t>(bda_spaces_.size() - 1));
  return old_plain_top();
}

std::optional<Addr> HeapLayout::carve(std::atomic<Addr>& top, Addr limit, std::size_t bytes) {
  Addr cur = top.load(std::memory_order_relaxed);
  while (true) {
    if (cur + bytes > limit) return std::nullopt;
    if (top.compare_exchange_weak(cur, cur + bytes, std::memory_order_relaxed)) return cur;
  }
}

std::optional<Addr> HeapLayout::carve_eden(std::size_t bytes) {
  return carve(eden_top_, eden_.end, bytes);
}

std::optional<Addr> HeapLayout::carve_to_space(std::size_t bytes) {
  std::lock_guard lock(geometry_mutex_);
  Addr& top = from_is_a_ ? surv_b_top_ : surv_a_top_;
  const AddrRange range = to_space();
  if (top + bytes > range.end) return std::nullopt;
  Addr out = top;
  top += bytes;
  return out;
}

void HeapLayout::reset_to_space() { (from_is_a_ ? surv_b_top_ : surv_a_top_) = to_space().base; }
void HeapLayout::reset_from_space() { (from_is_a_ ? surv_a_top_ : surv_b_top_) = from_space().base; }

std::optional<Addr> HeapLayout::carve_old_plain(std::size_t bytes) {
  assert(bytes % kRegionBytes == 0);
  return carve(old_plain_top_, old_plain_.end, bytes);
}

void HeapLayout::set_old_plain_top(Addr a) {
  assert(a % kRegionBytes == 0);
  old_plain_top_.store(a, std::memory_order_relaxed);
}

std::optional<std::int32_t> HeapLayout::allocate_segment(std::uint32_t space, std::int32_t container) {
  std::lock_guard lock(geometry_mutex_);
  BdaSpaceInfo& info = bda_spaces_.at(space);
  std::int32_t id = -1;
  if (!info.pool.empty()) {
    id = info.pool.back();
    info.pool.pop_back();
    SegmentRecord& seg = segments_[id];
    assert(seg.pooled() && seg.top == seg.base);
  } else if (info.formatted_slots < info.slot_count) {
    const std::uint32_t slot = info.formatted_slots++;
    SegmentRecord seg;
    seg.space = space;
    seg.slot = static_cast<std::int32_t>(slot);
    seg.base = seg.top = info.slot_base(slot, segment_bytes_);
    id = static_cast<std::int32_t>(segments_.size());
    segments_.push_back(seg);
    set_region_kind(seg.base, seg.base + segment_bytes_, kRegSegment | (static_cast<std::uint32_t>(id) << 3));
  } else {
    // Spill into the non-bda space; the segment keeps its container identity.
    auto base = carve_old_plain(segment_bytes_);
    if (!base) return std::nullopt;
    SegmentRecord seg;
    seg.space = space;
    seg.slot = -1;
    seg.base = seg.top = *base;
    id = static_cast<std::int32_t>(segments_.size());
    segments_.push_back(seg);
    set_region_kind(seg.base, seg.base + segment_bytes_, kRegSegment | (static_cast<std::uint32_t>(id) << 3));
    info.spilled_bytes += segment_bytes_;
  }
  segments_[id].owner = container;
  segments_[id].next = -1;
  if (container >= 0) {
    ContainerRecord& c = containers_.at(container);
    if (c.tail >= 0)
      segments_[c.tail].next = id;
    else
      c.head = id;
    c.tail = id;
  }
  return id;
}

void HeapLayout::release_segment(std::int32_t seg_id) {
  std::lock_guard lock(geometry_mutex_);
  SegmentRecord& seg = segments_.at(seg_id);
  if (seg.owner < 0) throw std::logic_error("release_segment: segment is not owned");
  ContainerRecord& c = containers_.at(seg.owner);
  // Unlink from the chain.
  if (c.head == seg_id) {
    c.head = seg.next;
    if (c.tail == seg_id) c.tail = -1;
  } else {
    std::int32_t prev = c.head;
    while (prev >= 0 && segments_[prev].next != seg_id) prev = segments_[prev].next;
    assert(prev >= 0 && "segment not on its owner's chain");
    segments_[prev].next = seg.next;
    if (c.tail == seg_id) c.tail = prev;
  }
  seg.owner = -1;
  seg.next = -1;
  start_table_.clear_blocks(seg.base, seg.base + segment_bytes_);
  if (seg.slot >= 0) {
    seg.top = seg.base;
    bda_spaces_[seg.space].pool.push_back(seg_id);
  } else {
    // A released spill extent turns back into plain non-bda filler.
    set_region_kind(seg.base, seg.base + segment_bytes_, kRegOldPlain);
    bda_spaces_[seg.space].spilled_bytes -= segment_bytes_;
    write_filler_raw(seg.base, segment_bytes_);
    seg.top = seg.base;
    seg.slot = -2;  // dead record
  }
}

std::int32_t HeapLayout::create_container(std::uint32_t space, Addr parent) {
  std::lock_guard lock(geometry_mutex_);
  ContainerRecord c;
  c.space = space;
  c.parent = parent;
  const auto id = static_cast<std::int32_t>(containers_.size());
  containers_.push_back(c);
  bda_spaces_.at(space).containers.push_back(id);
  return id;
}

void HeapLayout::append_segment(std::int32_t container, std::int32_t seg_id) {
  std::lock_guard lock(geometry_mutex_);
  ContainerRecord& c = containers_.at(container);
  SegmentRecord& seg = segments_.at(seg_id);
  seg.owner = container;
  seg.next = -1;
  if (c.tail >= 0)
    segments_[c.tail].next = seg_id;
  else
    c.head = seg_id;
  c.tail = seg_id;
}

void HeapLayout::unbind_segment_extent(std::int32_t seg_id) {
  SegmentRecord& seg = segments_.at(seg_id);
  if (seg.slot < 0) {
    bda_spaces_[seg.space].spilled_bytes -= segment_bytes_;
    set_region_kind(seg.base, seg.base + segment_bytes_, kRegOldPlain);
  } else {
    set_region_kind(seg.base, seg.base + segment_bytes_, kRegBdaRaw | (seg.space << 3));
  }
}

void HeapLayout::bind_segment_extent(std::int32_t seg_id, std::int32_t new_slot, Addr new_base) {
  SegmentRecord& seg = segments_.at(seg_id);
  const Addr used = seg.top - seg.base;
  seg.slot = new_slot;
  seg.base = new_base;
  seg.top = new_base + used;
  set_region_kind(seg.base, seg.base + segment_bytes_,
                  kRegSegment | (static_cast<std::uint32_t>(seg_id) << 3));
}

void HeapLayout::set_formatted_slots(std::uint32_t space, std::uint32_t formatted) {
  bda_spaces_.at(space).formatted_slots = formatted;
}

void HeapLayout::clear_pool(std::uint32_t space) { bda_spaces_.at(space).pool.clear(); }

void HeapLayout::pool_segment(std::int32_t seg_id) {
  SegmentRecord& seg = segments_.at(seg_id);
  assert(seg.owner < 0 && seg.slot >= 0);
  seg.top = seg.base;
  bda_spaces_[seg.space].pool.push_back(seg_id);
}

LocateResult HeapLayout::locate(Addr a) const {
  LocateResult r;
  if (a >= heap_end_) return r;
  const std::uint32_t code = region_code(a);
  const std::uint32_t payload = code >> 3;
  switch (code & kKindMask) {
    case kRegEden:
      r.kind = SpaceKind::kEden;
      break;
    case kRegSurvA:
      r.kind = from_is_a_ ? SpaceKind::kFrom : SpaceKind::kTo;
      break;
    case kRegSurvB:
      r.kind = from_is_a_ ? SpaceKind::kTo : SpaceKind::kFrom;
      break;
    case kRegOldPlain:
      r.kind = SpaceKind::kOldNonBda;
      break;
    case kRegBdaRaw:
      r.kind = SpaceKind::kBdaSpace;
      r.bda_space = static_cast<std::int32_t>(payload);
      break;
    case kRegSegment: {
      const SegmentRecord& seg = segments_[payload];
      r.kind = SpaceKind::kBdaSpace;
      r.bda_space = static_cast<std::int32_t>(seg.space);
      r.segment = static_cast<std::int32_t>(payload);
      r.container = seg.owner;
      break;
    }
    default:
      break;
  }
  return r;
}

void HeapLayout::old_chunks_in(AddrRange clamp, std::vector<Chunk>& out) const {
  const AddrRange old = old_generation();
  Addr lo = std::max(clamp.base, old.base);
  const Addr hi = std::min(clamp.end, old.end);
  lo = align_down(lo, kRegionBytes);
  Addr plain_run_base = kNullAddr;
  const Addr plain_top = old_plain_top();

  auto flush_plain = [&](Addr run_end) {
    if (plain_run_base == kNullAddr) return;
    Addr top = std::min(run_end, plain_top);
    Addr base = std::max(plain_run_base, clamp.base);
    top = std::min(top, clamp.end);
    if (base < top) out.push_back({base, top, -1});
    plain_run_base = kNullAddr;
  };

  Addr r = lo;
  while (r < hi) {
    const std::uint32_t code = region_code(r);
    const std::uint32_t kind = code & kKindMask;
    if (kind == kRegOldPlain) {
      if (plain_run_base == kNullAddr) plain_run_base = r;
      r += kRegionBytes;
      continue;
    }
    flush_plain(r);
    if (kind == kRegSegment) {
      const SegmentRecord& seg = segments_[code >> 3];
      Addr base = std::max(seg.base, clamp.base);
      Addr top = std::min(seg.top, clamp.end);
      if (seg.owner >= 0 && base < top)
        out.push_back({base, top, static_cast<std::int32_t>(code >> 3)});
      r = seg.base + segment_bytes_;
    } else {
      r += kRegionBytes;
    }
  }
  flush_plain(hi);
}

void HeapLayout::old_chunks(std::vector<Chunk>& out) const {
  old_chunks_in({old_plain_.base, heap_end_}, out);
}

std::uint64_t HeapLayout::spilled_bytes_total() const {
  std::uint64_t total = 0;
  for (const auto& s : bda_spaces_) total += s.spilled_bytes;
  return total;
}

void HeapLayout::dump_geometry(std::ostream& os) const {
  auto line = [&](const char* name, AddrRange r, Addr top) {
    os << name << " [0x" << std::hex << r.base << ",0x" << r.end << ") top=0x" << top << std::dec
       << " used=" << (top - r.base) << "\n";
  };
  line("eden      ", eden_, eden_top());
  line("from      ", from_space(), from_top());
  line("to        ", to_space(), to_top());
  line("old-nonbda", old_plain_, old_plain_top());
  for (const auto& s : bda_spaces_) {
    os << "bda-space " << s.index << " [0x" << std::hex << s.range.base << ",0x" << s.range.end
       << ") top=0x" << bda_space_top(s.index) << std::dec << " slots=" << s.slot_count
       << " formatted=" << s.formatted_slots << " pooled=" << s.pool.size()
       << " spilled_bytes=" << s.spilled_bytes << "\n";
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const SegmentRecord& seg = segments_[i];
      if (seg.space != s.index || seg.slot == -2) continue;
      os << "  segment " << i << " slot=" << seg.slot << " [0x" << std::hex << seg.base << ",0x"
         << (seg.base + segment_bytes_) << ") top=0x" << seg.top << std::dec
         << " owner=" << seg.owner << " next=" << seg.next << (seg.spilled() ? " spilled" : "")
         << "\n";
    }
  }
  os << "old visible top=0x" << std::hex << old_visible_top() << std::dec << "\n";
}

void HeapLayout::write_filler_raw(Addr a, std::size_t bytes) {
  if (bytes == 0) return;
  write_filler(arena_, a, bytes);
  if (in_old(a)) start_table_.record_start(a);
}

}  // namespace gangc
