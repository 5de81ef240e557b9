#include "young_gc.hpp"

#include <atomic>
#include <cassert>
#include <chrono>
#include <vector>

#include "full_gc.hpp"
#include "gangc/runtime.hpp"
#include "workqueue.hpp"

namespace gangc {

namespace {

using Clock = std::chrono::steady_clock;

struct Plab {
  Addr cursor = 0;
  Addr end = 0;
};

struct WorkerState {
  Plab to_plab;
  Plab old_plab;
  std::uint64_t bytes_copied = 0;
  std::uint64_t objects_copied = 0;
  std::uint64_t objects_promoted = 0;
  std::uint64_t gang_copied = 0;
  std::uint64_t premarked_bytes = 0;
  std::vector<std::uint64_t*> pending_slots;  // gang fields beyond DL
};

struct GangState {
  std::int32_t container = -1;
  std::int32_t current_segment = -1;
  std::uint32_t space = 0;
  bool degraded = false;
};

// The evacuation sources this cycle: eden and from-space. To-space copies
// are young but must never be treated as copy sources.
struct SourceRanges {
  AddrRange eden;
  Addr eden_top;
  AddrRange from;
  Addr from_top;

  bool contains(Addr a) const {
    return (a >= eden.base && a < eden.end) || (a >= from.base && a < from.end);
  }
};

class MinorGcImpl {
 public:
  explicit MinorGcImpl(Runtime& rt)
      : rt_(rt),
        layout_(rt.layout()),
        acc_(rt.access()),
        opts_(rt.options()),
        workers_(*rt.workers_),
        work_(workers_.size()),
        states_(workers_.size()) {
    sources_.eden = layout_.eden();
    sources_.eden_top = layout_.eden_top();
    sources_.from = layout_.from_space();
    sources_.from_top = layout_.from_top();
  }

  GcStats run() {
    const auto t0 = Clock::now();
    stats_.kind = GcKind::kMinor;
    stats_.sequence = rt_.next_gc_sequence();
    rt_.retire_all_tlabs();

    collect_card_slots();
    rt_.collect_root_slots(root_slots_);
    premark();

    if (!capacity_sufficient()) {
      clear_young_marks();
      FullCollector full(rt_);
      GcStats out = full.collect();
      return out;
    }

    drain_reference_queue();
    evacuate();
    finish();

    stats_.pause_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
    rt_.record_stats(stats_);
    return stats_;
  }

 private:
  // --- roots ---------------------------------------------------------------

  void collect_card_slots() {
    auto scan_space = [&](AddrRange range) {
      auto ranges = rt_.card_table().scan_dirty_ranges(layout_, acc_, range, /*clear=*/true);
      for (const auto& r : ranges) {
        Addr p = r.first_object_start;
        while (p < r.last_object_end) {
          const std::size_t size = acc_.size(p);
          if (!acc_.is_filler(p)) {
            const ClassDescriptor& d = acc_.descriptor(p);
            for (std::uint32_t i = 0; i < d.ref_field_count; ++i) {
              const Addr field = acc_.ref_field_addr(p, i);
              const Addr target = layout_.arena().load_word(field);
              if (target != kNullAddr && sources_.contains(target))
                root_slots_.push_back(reinterpret_cast<std::uint64_t*>(layout_.arena().raw(field)));
            }
          }
          p += size;
        }
      }
    };
    scan_space(layout_.old_non_bda());
    for (std::uint32_t i = 0; i < layout_.bda_space_count(); ++i)
      scan_space(layout_.bda_space(i).range);
  }

  // --- premark ---------------------------------------------------------------
  // Reachability over the young sources only; gives exact live bytes for the
  // capacity check and lets dead queued roots be discarded.

  void premark() {
    WorkSet<Addr> mark_work(workers_.size());
    for (std::size_t i = 0; i < root_slots_.size(); ++i) {
      const Addr v = *root_slots_[i];
      if (v != kNullAddr && sources_.contains(v) && acc_.try_mark_atomic(v))
        mark_work.push(static_cast<unsigned>(i % workers_.size()), v);
    }
    workers_.run([&](unsigned w) {
      WorkerState& ws = states_[w];
      mark_work.drain(w, [&](Addr obj) {
        ws.premarked_bytes += acc_.size(obj);
        const ClassDescriptor& d = acc_.descriptor(obj);
        for (std::uint32_t i = 0; i < d.ref_field_count; ++i) {
          const Addr t = acc_.load_ref(obj, i);
          if (t != kNullAddr && sources_.contains(t) && acc_.try_mark_atomic(t))
            mark_work.push(w, t);
        }
      });
    });
    for (const auto& ws : states_) live_young_bytes_ += ws.premarked_bytes;
  }

  void clear_young_marks() {
    auto clear_walk = [&](Addr base, Addr top) {
      Addr p = base;
      while (p < top) {
        if (!acc_.is_filler(p) && acc_.marked(p)) acc_.clear_mark(p);
        p += acc_.size(p);
      }
    };
    clear_walk(sources_.eden.base, sources_.eden_top);
    clear_walk(sources_.from.base, sources_.from_top);
  }

  bool capacity_sufficient() const {
    const std::uint64_t to_free = layout_.to_space().bytes();
    const std::uint64_t old_free = layout_.old_non_bda().end - layout_.old_plain_top();
    const std::uint64_t slack =
        workers_.size() * (opts_.plab_bytes + opts_.survivor_plab_bytes) * 2 + kRegionBytes;
    return live_young_bytes_ + slack <= to_free + old_free;
  }

  // --- gang promotion ----------------------------------------------------------

  void drain_reference_queue() {
    std::vector<ReferenceQueueEntry> entries;
    rt_.collect_reference_queues(entries);
    if (entries.empty()) return;
    if (!opts_.bda_active()) return;  // entries cannot exist, but stay safe

    std::atomic<std::size_t> next{0};
    workers_.run([&](unsigned w) {
      for (;;) {
        const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= entries.size()) return;
        const ReferenceQueueEntry& e = entries[i];
        assert(sources_.contains(e.root) && "queued root must still be in the young sources");
        if (!acc_.marked(e.root)) {
          dead_entries_.fetch_add(1, std::memory_order_relaxed);
          continue;
        }
        live_entries_.fetch_add(1, std::memory_order_relaxed);
        gang_promote(w, e);
      }
    });
    stats_.queue_entries_live = live_entries_.load();
    stats_.queue_entries_dead = dead_entries_.load();
  }

  void gang_promote(unsigned w, const ReferenceQueueEntry& entry) {
    // A root already claimed by another gang keeps its first placement.
    if (acc_.forwarding_acquire(entry.root) != kNullAddr) return;

    GangState gang;
    gang.space = entry.target_space;
    gang.container = layout_.create_container(entry.target_space, kNullAddr);
    containers_created_.fetch_add(1, std::memory_order_relaxed);

    bool won = false;
    const Addr root_dest = gang_copy(w, gang, entry.root, &won);
    if (!won) {
      // Lost the root to a racing gang; this container stays empty and dies.
      layout_.container(gang.container).dead = true;
      return;
    }
    layout_.container(gang.container).parent = root_dest;
    layout_.container(gang.container).degraded = gang.degraded;

    const std::uint32_t depth_limit = opts_.gang_full_closure ? 0xffffffffu : opts_.bda.delegation_level;
    std::vector<std::pair<Addr, std::uint32_t>> stack;
    stack.emplace_back(root_dest, 0);
    while (!stack.empty()) {
      auto [obj, depth] = stack.back();
      stack.pop_back();
      const ClassDescriptor& d = acc_.descriptor(obj);
      for (std::uint32_t i = 0; i < d.ref_field_count; ++i) {
        const Addr t = acc_.load_ref(obj, i);
        if (t == kNullAddr || !sources_.contains(t)) continue;
        if (const Addr fwd = acc_.forwarding_acquire(t); fwd != kNullAddr) {
          update_slot(slot_ptr(obj, i), fwd);
          continue;
        }
        if (depth < depth_limit) {
          bool child_won = false;
          const Addr dest = gang_copy(w, gang, t, &child_won);
          update_slot(slot_ptr(obj, i), dest);
          if (child_won) stack.emplace_back(dest, depth + 1);
        } else {
          states_[w].pending_slots.push_back(slot_ptr(obj, i));
        }
      }
    }
    if (gang.degraded) stats_.gang_degraded = true;
  }

  // Copies one gang member into the container's segments, falling back to
  // ordinary old-space promotion once segment allocation fails.
  Addr gang_copy(unsigned w, GangState& gang, Addr obj, bool* won) {
    assert(acc_.marked(obj));
    const std::size_t size = acc_.size(obj);
    Addr dest = kNullAddr;
    bool seg_alloc = false;
    if (!gang.degraded) {
      dest = gang_alloc(gang, size);
      seg_alloc = dest != kNullAddr;
      if (!seg_alloc) gang.degraded = true;
    }
    if (!seg_alloc) {
      dest = alloc_old(w, size);
      if (dest == kNullAddr) throw OutOfMemoryError("gang promotion fallback exhausted the old generation");
    }
    layout_.arena().copy(dest, obj, size);
    finish_copy_header(dest, obj, acc_.age(obj));
    const Addr winner = acc_.install_forwarding(obj, dest, won);
    if (!*won) {
      rollback(w, gang, dest, size, seg_alloc);
      return winner;
    }
    layout_.start_table().record_start(dest);
    WorkerState& ws = states_[w];
    ws.bytes_copied += size;
    ws.objects_copied += 1;
    ws.objects_promoted += 1;
    ws.gang_copied += 1;
    return dest;
  }

  Addr gang_alloc(GangState& gang, std::size_t size) {
    if (size > layout_.segment_bytes()) return kNullAddr;
    if (gang.current_segment >= 0) {
      SegmentRecord& seg = layout_.segment(gang.current_segment);
      if (seg.top + size <= seg.base + layout_.segment_bytes()) {
        const Addr a = seg.top;
        seg.top += size;
        return a;
      }
    }
    auto next = layout_.allocate_segment(gang.space, gang.container);
    if (!next) return kNullAddr;
    gang.current_segment = *next;
    SegmentRecord& seg = layout_.segment(*next);
    const Addr a = seg.top;
    seg.top += size;
    return a;
  }

  // --- general evacuation ---------------------------------------------------

  void evacuate() {
    WorkSet<std::uint64_t*> work(workers_.size());
    std::size_t lane = 0;
    for (auto* slot : root_slots_) work.push(static_cast<unsigned>(lane++ % workers_.size()), slot);
    for (auto& ws : states_) {
      for (auto* slot : ws.pending_slots) work.push(static_cast<unsigned>(lane++ % workers_.size()), slot);
      ws.pending_slots.clear();
    }
    workers_.run([&](unsigned w) {
      work.drain(w, [&](std::uint64_t* slot) { process_slot(w, work, slot); });
    });
  }

  void process_slot(unsigned w, WorkSet<std::uint64_t*>& work, std::uint64_t* slot) {
    const Addr v = *slot;
    if (v == kNullAddr || !sources_.contains(v)) return;
    Addr fwd = acc_.forwarding_acquire(v);
    if (fwd == kNullAddr) fwd = evacuate_object(w, work, v);
    update_slot(slot, fwd);
  }

  Addr evacuate_object(unsigned w, WorkSet<std::uint64_t*>& work, Addr obj) {
    assert(acc_.marked(obj) && "evacuating an object the premark pass never reached");
    const std::size_t size = acc_.size(obj);
    const std::uint8_t age = acc_.age(obj);
    const std::uint8_t new_age = age == 0xff ? age : static_cast<std::uint8_t>(age + 1);
    bool to_old = new_age >= opts_.tenuring_threshold;

    Addr dest = kNullAddr;
    if (!to_old) {
      dest = alloc_to(w, size);
      if (dest == kNullAddr) to_old = true;  // survivor overflow tenures early
    }
    if (to_old) {
      dest = alloc_old(w, size);
      if (dest == kNullAddr)
        throw OutOfMemoryError("promotion failed although the capacity check passed");
    }
    layout_.arena().copy(dest, obj, size);
    finish_copy_header(dest, obj, new_age);
    bool won = false;
    const Addr winner = acc_.install_forwarding(obj, dest, &won);
    if (!won) {
      rollback_plab(w, dest, size, to_old);
      return winner;
    }
    WorkerState& ws = states_[w];
    ws.bytes_copied += size;
    ws.objects_copied += 1;
    if (to_old) {
      ws.objects_promoted += 1;
      layout_.start_table().record_start(dest);
    }
    const ClassDescriptor& d = acc_.descriptor(dest);
    for (std::uint32_t i = 0; i < d.ref_field_count; ++i) {
      const Addr t = acc_.load_ref(dest, i);
      if (t != kNullAddr && sources_.contains(t)) work.push(w, slot_ptr(dest, i));
    }
    return dest;
  }

  // --- buffers -----------------------------------------------------------------

  Addr alloc_to(unsigned w, std::size_t size) {
    Plab& p = states_[w].to_plab;
    if (p.cursor + size <= p.end && p.cursor != 0) {
      const Addr a = p.cursor;
      p.cursor += size;
      return a;
    }
    if (size >= opts_.survivor_plab_bytes / 2) {
      if (auto a = layout_.carve_to_space(size)) return *a;
      return kNullAddr;
    }
    retire_plab(p);
    if (auto base = layout_.carve_to_space(opts_.survivor_plab_bytes)) {
      p.cursor = *base;
      p.end = *base + opts_.survivor_plab_bytes;
      const Addr a = p.cursor;
      p.cursor += size;
      return a;
    }
    return kNullAddr;
  }

  Addr alloc_old(unsigned w, std::size_t size) {
    Plab& p = states_[w].old_plab;
    if (p.cursor + size <= p.end && p.cursor != 0) {
      const Addr a = p.cursor;
      p.cursor += size;
      return a;
    }
    if (size >= opts_.plab_bytes / 2) {
      const std::size_t extent = align_up(size, kRegionBytes);
      if (auto base = layout_.carve_old_plain(extent)) {
        layout_.write_filler_raw(*base + size, extent - size);
        return *base;
      }
      return kNullAddr;
    }
    retire_old_plab(p);
    if (auto base = layout_.carve_old_plain(align_up<std::size_t>(opts_.plab_bytes, kRegionBytes))) {
      p.cursor = *base;
      p.end = *base + align_up<std::size_t>(opts_.plab_bytes, kRegionBytes);
      const Addr a = p.cursor;
      p.cursor += size;
      return a;
    }
    return kNullAddr;
  }

  void retire_plab(Plab& p) {
    if (p.cursor != 0 && p.cursor < p.end) write_filler(layout_.arena(), p.cursor, p.end - p.cursor);
    p.cursor = p.end = 0;
  }

  void retire_old_plab(Plab& p) {
    if (p.cursor != 0 && p.cursor < p.end) layout_.write_filler_raw(p.cursor, p.end - p.cursor);
    p.cursor = p.end = 0;
  }

  void rollback_plab(unsigned w, Addr dest, std::size_t size, bool old_plab) {
    Plab& p = old_plab ? states_[w].old_plab : states_[w].to_plab;
    if (p.cursor == dest + size) {
      p.cursor -= size;
    } else if (old_plab) {
      layout_.write_filler_raw(dest, size);
    } else {
      write_filler(layout_.arena(), dest, size);
    }
  }

  void rollback(unsigned w, GangState& gang, Addr dest, std::size_t size, bool seg_alloc) {
    if (!seg_alloc) {
      rollback_plab(w, dest, size, /*old_plab=*/true);
      return;
    }
    SegmentRecord& seg = layout_.segment(gang.current_segment);
    assert(seg.top == dest + size);
    seg.top -= size;
  }

  // --- helpers ------------------------------------------------------------------

  std::uint64_t* slot_ptr(Addr obj, std::uint32_t field) {
    return reinterpret_cast<std::uint64_t*>(layout_.arena().raw(acc_.ref_field_addr(obj, field)));
  }

  // Writes a new value into a slot, re-dirtying the card when an old-gen
  // object ends up referencing a young survivor.
  void update_slot(std::uint64_t* slot, Addr value) {
    *slot = value;
    const auto* base = layout_.arena().raw(0);
    const auto* p = reinterpret_cast<const std::uint8_t*>(slot);
    if (p >= base && p < base + layout_.arena().size()) {
      const Addr slot_addr = static_cast<Addr>(p - base);
      if (layout_.in_old(slot_addr) && value != kNullAddr && layout_.in_young(value))
        rt_.card_table().dirty_on_store(slot_addr);
    }
  }

  void finish_copy_header(Addr dest, Addr src, std::uint8_t age) {
    const ClassId cls = acc_.class_id(src);
    layout_.arena().store_word(dest, hdr::make_word0(cls, age));
    layout_.arena().store_word(dest + 8, 0);
  }

  void finish() {
    for (auto& ws : states_) {
      retire_plab(ws.to_plab);
      retire_old_plab(ws.old_plab);
      stats_.bytes_copied += ws.bytes_copied;
      stats_.objects_copied += ws.objects_copied;
      stats_.objects_promoted += ws.objects_promoted;
      stats_.gang_copied_objects += ws.gang_copied;
    }
    stats_.containers_created = containers_created_.load();
    stats_.live_bytes = live_young_bytes_;
    layout_.reset_eden();
    layout_.reset_from_space();
    layout_.swap_survivors();
  }

  Runtime& rt_;
  HeapLayout& layout_;
  ObjectAccess acc_;
  const RuntimeOptions& opts_;
  GcWorkerPool& workers_;
  WorkSet<Addr> work_;
  std::vector<WorkerState> states_;
  SourceRanges sources_;
  std::vector<std::uint64_t*> root_slots_;
  std::uint64_t live_young_bytes_ = 0;
  std::atomic<std::uint64_t> live_entries_{0};
  std::atomic<std::uint64_t> dead_entries_{0};
  std::atomic<std::uint64_t> containers_created_{0};
  GcStats stats_;
};

}  // namespace

GcStats MinorCollector::collect() {
  MinorGcImpl impl(rt_);
  return impl.run();
}

}  // namespace gangc
