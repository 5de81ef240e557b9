#include "gangc/runtime.hpp"

#include <algorithm>
#include <cassert>
#include <iostream>
#include <sstream>
#include <unordered_set>

#include "full_gc.hpp"
#include "workqueue.hpp"
#include "young_gc.hpp"

namespace gangc {

// ---------------------------------------------------------------------------
// MutatorContext

MutatorContext::~MutatorContext() = default;

ManagedRef MutatorContext::allocate(ClassId cls, std::span<const ManagedRef> init_refs) {
  poll();
  Runtime& rt = *runtime_;
  if (!rt.registry_.valid(cls) || cls == kFillerClassId)
    throw AccessError("allocate: unregistered class id");
  if (!rt.registry_.frozen()) rt.registry_.freeze();
  const ClassDescriptor& desc = rt.registry_[cls];
  if (init_refs.size() > desc.ref_field_count)
    throw AccessError("allocate: more initial values than reference fields");

  // Initial values must survive a collection triggered by this allocation.
  LocalRoots frame(*this);
  for (ManagedRef r : init_refs) frame.push(r);

  const Addr obj = rt.allocate_raw(*this, desc);
  ObjectAccess acc = rt.access();
  acc.init_object(obj, desc);
  for (std::size_t i = 0; i < init_refs.size(); ++i)
    acc.store_ref(obj, static_cast<std::uint32_t>(i), frame.get(i).addr);

  if (desc.is_bda_class) local_queue_.push_back({obj, *desc.target_bda_space});

  rt.counters_.bytes_allocated += desc.instance_bytes;
  rt.counters_.objects_allocated += 1;
  return ManagedRef{obj};
}

Addr MutatorContext::check_access(ManagedRef obj, std::uint32_t index, bool for_ref) const {
  if (obj.is_null()) throw AccessError("field access through null reference");
  const Runtime& rt = *runtime_;
  assert(is_aligned(obj.addr, kAlignment) && obj.addr < rt.layout_.heap_end());
  ObjectAccess acc = rt.access();
  const ClassId cls = acc.class_id(obj.addr);
  assert(cls != kFillerClassId && "dangling reference into filler");
  const ClassDescriptor& desc = rt.registry_[cls];
  if (for_ref && index >= desc.ref_field_count)
    throw AccessError("reference field index out of range");
  return obj.addr;
}

ManagedRef MutatorContext::read_ref(ManagedRef obj, std::uint32_t index) const {
  const Addr a = check_access(obj, index, true);
  return ManagedRef{runtime_->access().load_ref(a, index)};
}

void MutatorContext::write_ref(ManagedRef obj, std::uint32_t index, ManagedRef value) {
  const Addr a = check_access(obj, index, true);
  Runtime& rt = *runtime_;
  ObjectAccess acc = rt.access();
  acc.store_ref(a, index, value.addr);
  // Unconditional old-generation store barrier.
  if (rt.layout_.in_old(a)) rt.card_table_.dirty_on_store(acc.ref_field_addr(a, index));
}

std::uint64_t MutatorContext::read_scalar_u64(ManagedRef obj, std::uint32_t byte_offset) const {
  const Addr a = check_access(obj, 0, false);
  const ClassDescriptor& desc = runtime_->registry_[runtime_->access().class_id(a)];
  if (byte_offset + 8 > desc.scalar_bytes) throw AccessError("scalar offset out of range");
  return runtime_->layout_.arena().load_word(a + desc.scalar_offset() + byte_offset);
}

void MutatorContext::write_scalar_u64(ManagedRef obj, std::uint32_t byte_offset, std::uint64_t value) {
  const Addr a = check_access(obj, 0, false);
  const ClassDescriptor& desc = runtime_->registry_[runtime_->access().class_id(a)];
  if (byte_offset + 8 > desc.scalar_bytes) throw AccessError("scalar offset out of range");
  runtime_->layout_.arena().store_word(a + desc.scalar_offset() + byte_offset, value);
}

void MutatorContext::read_scalar_bytes(ManagedRef obj, std::uint32_t byte_offset,
                                       std::span<std::uint8_t> out) const {
  const Addr a = check_access(obj, 0, false);
  const ClassDescriptor& desc = runtime_->registry_[runtime_->access().class_id(a)];
  if (byte_offset + out.size() > desc.scalar_bytes) throw AccessError("scalar range out of range");
  std::memcpy(out.data(), runtime_->layout_.arena().raw(a + desc.scalar_offset() + byte_offset),
              out.size());
}

void MutatorContext::write_scalar_bytes(ManagedRef obj, std::uint32_t byte_offset,
                                        std::span<const std::uint8_t> in) {
  const Addr a = check_access(obj, 0, false);
  const ClassDescriptor& desc = runtime_->registry_[runtime_->access().class_id(a)];
  if (byte_offset + in.size() > desc.scalar_bytes) throw AccessError("scalar range out of range");
  std::memcpy(runtime_->layout_.arena().raw(a + desc.scalar_offset() + byte_offset), in.data(),
              in.size());
}

ClassId MutatorContext::class_of(ManagedRef obj) const {
  const Addr a = check_access(obj, 0, false);
  return runtime_->access().class_id(a);
}

void MutatorContext::poll() {
  if (runtime_->stop_flag_.load(std::memory_order_acquire)) runtime_->park_in_poll();
}

// ---------------------------------------------------------------------------
// Runtime

Runtime::Runtime(RuntimeOptions options)
    : options_(std::move(options)),
      registry_(options_.bda_active() ? options_.bda.classes : std::vector<std::string>{}),
      layout_(options_),
      card_table_(layout_.old_non_bda().base, layout_.heap_end()) {
  workers_ = std::make_unique<GcWorkerPool>(options_.gc_threads);
  auto ctx = std::unique_ptr<MutatorContext>(new MutatorContext(*this, 0));
  main_mutator_ = ctx.get();
  {
    std::lock_guard lock(mutators_mutex_);
    mutators_.push_back(std::move(ctx));
  }
  {
    std::lock_guard lock(sp_mutex_);
    running_ = 1;
  }
}

Runtime::~Runtime() = default;

const ClassDescriptor& Runtime::register_class(std::string_view name, std::uint32_t ref_fields,
                                               std::uint32_t scalar_bytes) {
  return registry_.register_class(name, ref_fields, scalar_bytes);
}

MutatorContext& Runtime::attach_mutator() {
  {
    std::unique_lock lk(sp_mutex_);
    sp_cv_.wait(lk, [&] { return !stop_requested_; });
    ++running_;
  }
  std::lock_guard lock(mutators_mutex_);
  auto ctx = std::unique_ptr<MutatorContext>(
      new MutatorContext(*this, static_cast<std::uint32_t>(mutators_.size())));
  MutatorContext& ref = *ctx;
  mutators_.push_back(std::move(ctx));
  return ref;
}

void Runtime::detach_mutator(MutatorContext& ctx) {
  assert(ctx.shadow_stack_.empty() && "detaching with live local roots");
  retire_tlab(ctx);
  {
    std::lock_guard lock(mutators_mutex_);
    if (!ctx.local_queue_.empty()) {
      orphan_queue_.insert(orphan_queue_.end(), ctx.local_queue_.begin(), ctx.local_queue_.end());
      ctx.local_queue_.clear();
    }
    auto it = std::find_if(mutators_.begin(), mutators_.end(),
                           [&](const auto& p) { return p.get() == &ctx; });
    assert(it != mutators_.end() && it->get() != main_mutator_);
    mutators_.erase(it);
  }
  {
    std::lock_guard lk(sp_mutex_);
    --running_;
  }
  sp_cv_.notify_all();
}

void Runtime::run_outside_heap(MutatorContext&, const std::function<void()>& fn) {
  {
    std::lock_guard lk(sp_mutex_);
    --running_;
  }
  sp_cv_.notify_all();
  fn();
  std::unique_lock lk(sp_mutex_);
  sp_cv_.wait(lk, [&] { return !stop_requested_; });
  ++running_;
}

GlobalRootId Runtime::add_global_root(ManagedRef r) {
  std::lock_guard lock(roots_mutex_);
  if (!free_root_ids_.empty()) {
    GlobalRootId id = free_root_ids_.back();
    free_root_ids_.pop_back();
    global_roots_[id] = r.addr;
    return id;
  }
  global_roots_.push_back(r.addr);
  return global_roots_.size() - 1;
}

void Runtime::remove_global_root(GlobalRootId id) {
  std::lock_guard lock(roots_mutex_);
  global_roots_.at(id) = kNullAddr;
  free_root_ids_.push_back(id);
}

ManagedRef Runtime::global_root(GlobalRootId id) const {
  std::lock_guard lock(roots_mutex_);
  return ManagedRef{global_roots_.at(id)};
}

void Runtime::set_global_root(GlobalRootId id, ManagedRef r) {
  std::lock_guard lock(roots_mutex_);
  global_roots_.at(id) = r.addr;
}

// --- safepoint --------------------------------------------------------------

void Runtime::begin_stw(MutatorContext&) {
  std::unique_lock lk(sp_mutex_);
  for (;;) {
    if (!stop_requested_) {
      stop_requested_ = true;
      stop_flag_.store(true, std::memory_order_release);
      sp_cv_.notify_all();
      sp_cv_.wait(lk, [&] { return parked_ >= running_ - 1; });
      return;
    }
    // Someone else is collecting; park like any other mutator, then retry.
    ++parked_;
    sp_cv_.notify_all();
    sp_cv_.wait(lk, [&] { return !stop_requested_; });
    --parked_;
  }
}

void Runtime::end_stw() {
  {
    std::lock_guard lk(sp_mutex_);
    stop_requested_ = false;
    stop_flag_.store(false, std::memory_order_release);
  }
  sp_cv_.notify_all();
}

void Runtime::park_in_poll() {
  std::unique_lock lk(sp_mutex_);
  while (stop_requested_) {
    ++parked_;
    sp_cv_.notify_all();
    sp_cv_.wait(lk, [&] { return !stop_requested_; });
    --parked_;
  }
}

// --- allocation --------------------------------------------------------------

Addr Runtime::allocate_raw(MutatorContext& ctx, const ClassDescriptor& desc) {
  const std::size_t size = desc.instance_bytes;
  if (size > layout_.eden().bytes()) throw OutOfMemoryError("object larger than eden");
  for (int attempt = 0;; ++attempt) {
    if (ctx.tlab_cursor_ != 0 && ctx.tlab_cursor_ + size <= ctx.tlab_end_) {
      const Addr a = ctx.tlab_cursor_;
      ctx.tlab_cursor_ += size;
      return a;
    }
    if (size * 2 >= options_.tlab_bytes) {
      if (auto a = layout_.carve_eden(size)) return *a;
    } else {
      retire_tlab(ctx);
      if (auto base = layout_.carve_eden(options_.tlab_bytes)) {
        ctx.tlab_cursor_ = *base;
        ctx.tlab_end_ = *base + options_.tlab_bytes;
        continue;
      }
    }
    if (attempt == 0)
      collect_minor(ctx);
    else if (attempt == 1)
      collect_full(ctx);
    else
      throw OutOfMemoryError("eden exhausted after full collection");
  }
}

void Runtime::retire_tlab(MutatorContext& ctx) {
  if (ctx.tlab_cursor_ != 0 && ctx.tlab_cursor_ < ctx.tlab_end_)
    write_filler(layout_.arena(), ctx.tlab_cursor_, ctx.tlab_end_ - ctx.tlab_cursor_);
  ctx.tlab_cursor_ = ctx.tlab_end_ = 0;
}

void Runtime::retire_all_tlabs() {
  std::lock_guard lock(mutators_mutex_);
  for (auto& m : mutators_) retire_tlab(*m);
}

void Runtime::collect_reference_queues(std::vector<ReferenceQueueEntry>& out) {
  std::lock_guard lock(mutators_mutex_);
  out.insert(out.end(), orphan_queue_.begin(), orphan_queue_.end());
  orphan_queue_.clear();
  for (auto& m : mutators_) {
    out.insert(out.end(), m->local_queue_.begin(), m->local_queue_.end());
    m->local_queue_.clear();
  }
}

std::size_t Runtime::reference_queue_length() const {
  std::lock_guard lock(mutators_mutex_);
  std::size_t n = orphan_queue_.size();
  for (const auto& m : mutators_) n += m->local_queue_.size();
  return n;
}

void Runtime::collect_root_slots(std::vector<std::uint64_t*>& out) {
  std::lock_guard rlock(roots_mutex_);
  for (auto& slot : global_roots_) out.push_back(&slot);
  std::lock_guard mlock(mutators_mutex_);
  for (auto& m : mutators_)
    for (auto& slot : m->shadow_stack_) out.push_back(&slot);
}

// --- collections --------------------------------------------------------------

GcStats Runtime::collect_minor(MutatorContext& ctx) {
  begin_stw(ctx);
  GcStats out;
  try {
    MinorCollector collector(*this);
    out = collector.collect();
  } catch (...) {
    end_stw();
    throw;
  }
  end_stw();
  return out;
}

GcStats Runtime::collect_full(MutatorContext& ctx) {
  begin_stw(ctx);
  GcStats out;
  try {
    FullCollector collector(*this);
    out = collector.collect();
  } catch (...) {
    end_stw();
    throw;
  }
  end_stw();
  return out;
}

void Runtime::record_stats(const GcStats& stats) {
  gc_log_.push_back(stats);
  if (stats.kind == GcKind::kMinor)
    ++counters_.minor_collections;
  else
    ++counters_.full_collections;
  counters_.total_pause_ns += stats.pause_ns;
  if (options_.log_gc) {
    std::cerr << (stats.kind == GcKind::kMinor ? "[minor]" : "[full] ") << " #" << stats.sequence
              << " pause=" << stats.pause_ns / 1000 << "us copied=" << stats.bytes_copied
              << "B promoted=" << stats.objects_promoted
              << " containers=" << stats.containers_created
              << " released=" << stats.segments_released << "\n";
  }
  if (options_.verify_after_gc) {
    std::string report;
    if (std::size_t v = verify_container_purity(&report); v != 0)
      throw std::logic_error("container purity violated after GC: " + report);
  }
}

// --- introspection ------------------------------------------------------------

void Runtime::for_each_old_object(const std::function<void(Addr)>& fn) const {
  std::vector<HeapLayout::Chunk> chunks;
  layout_.old_chunks(chunks);
  ObjectAccess acc = access();
  for (const auto& c : chunks) {
    Addr p = c.base;
    while (p < c.top) {
      const std::size_t size = acc.size(p);
      assert(size >= 8);
      if (!acc.is_filler(p)) fn(p);
      p += size;
    }
  }
}

void Runtime::for_each_young_object(const std::function<void(Addr)>& fn) const {
  const_cast<Runtime*>(this)->retire_all_tlabs();
  ObjectAccess acc = access();
  auto walk = [&](Addr base, Addr top) {
    Addr p = base;
    while (p < top) {
      const std::size_t size = acc.size(p);
      if (!acc.is_filler(p)) fn(p);
      p += size;
    }
  };
  walk(layout_.eden().base, layout_.eden_top());
  walk(layout_.from_space().base, layout_.from_top());
}

std::size_t Runtime::verify_container_purity(std::string* report) const {
  ObjectAccess acc = access();
  // Live set from the true root set.
  std::unordered_set<Addr> live;
  std::vector<Addr> stack;
  {
    std::lock_guard rlock(roots_mutex_);
    for (Addr a : global_roots_)
      if (a != kNullAddr) stack.push_back(a);
  }
  {
    std::lock_guard mlock(mutators_mutex_);
    for (const auto& m : mutators_)
      for (Addr a : m->shadow_stack_)
        if (a != kNullAddr) stack.push_back(a);
  }
  while (!stack.empty()) {
    Addr a = stack.back();
    stack.pop_back();
    if (!live.insert(a).second) continue;
    const ClassDescriptor& d = registry_[acc.class_id(a)];
    for (std::uint32_t i = 0; i < d.ref_field_count; ++i)
      if (Addr t = acc.load_ref(a, i); t != kNullAddr && !live.contains(t)) stack.push_back(t);
  }

  std::size_t violations = 0;
  for (std::size_t ci = 0; ci < layout_.container_count(); ++ci) {
    const ContainerRecord& c = layout_.container(static_cast<std::int32_t>(ci));
    if (c.dead) continue;
    std::unordered_set<Addr> from_parent;
    if (c.parent != kNullAddr && live.contains(c.parent)) {
      stack.push_back(c.parent);
      while (!stack.empty()) {
        Addr a = stack.back();
        stack.pop_back();
        if (!from_parent.insert(a).second) continue;
        const ClassDescriptor& d = registry_[acc.class_id(a)];
        for (std::uint32_t i = 0; i < d.ref_field_count; ++i)
          if (Addr t = acc.load_ref(a, i); t != kNullAddr && !from_parent.contains(t))
            stack.push_back(t);
      }
    }
    for (std::int32_t seg = c.head; seg >= 0; seg = layout_.segment(seg).next) {
      const SegmentRecord& s = layout_.segment(seg);
      Addr p = s.base;
      while (p < s.top) {
        const std::size_t size = acc.size(p);
        if (!acc.is_filler(p) && live.contains(p) && !from_parent.contains(p)) {
          ++violations;
          if (report) {
            std::ostringstream os;
            os << "object 0x" << std::hex << p << " in segment " << std::dec << seg
               << " not reachable from container " << ci << " parent\n";
            *report += os.str();
          }
        }
        p += size;
      }
    }
  }
  return violations;
}

std::size_t Runtime::verify_card_completeness(std::string* report) const {
  ObjectAccess acc = access();
  std::size_t violations = 0;
  for_each_old_object([&](Addr a) {
    const ClassDescriptor& d = registry_[acc.class_id(a)];
    bool young_ref = false;
    for (std::uint32_t i = 0; i < d.ref_field_count && !young_ref; ++i) {
      Addr t = acc.load_ref(a, i);
      young_ref = t != kNullAddr && layout_.in_young(t);
    }
    if (!young_ref) return;
    const std::size_t size = acc.size(a);
    bool covered = false;
    for (Addr card = align_down(a, kCardBytes); card < a + size && !covered; card += kCardBytes)
      covered = card_table_.is_dirty(card);
    if (!covered) {
      ++violations;
      if (report) {
        std::ostringstream os;
        os << "old object 0x" << std::hex << a << " holds young ref but no dirty card\n";
        *report += os.str();
      }
    }
  });
  return violations;
}

}  // namespace gangc
