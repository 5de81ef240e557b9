#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gangc/address.hpp"
#include "gangc/card_table.hpp"
#include "gangc/class_registry.hpp"
#include "gangc/config.hpp"
#include "gangc/gc_stats.hpp"
#include "gangc/heap_layout.hpp"
#include "gangc/object.hpp"

namespace gangc {

class Runtime;
class MinorCollector;
class FullCollector;
class GcWorkerPool;

class OutOfMemoryError : public std::runtime_error {
 public:
  explicit OutOfMemoryError(const std::string& what) : std::runtime_error(what) {}
};

class AccessError : public std::logic_error {
 public:
  explicit AccessError(const std::string& what) : std::logic_error(what) {}
};

// Recorded when a bda-class instance is allocated; consumed by the next
// collection. The root lives in the young generation until then.
struct ReferenceQueueEntry {
  Addr root = kNullAddr;
  std::uint32_t target_space = 0;
};

// Thread-confined mutator state: eden allocation buffer, shadow-stack root
// frames, and the local slice of the reference queue.
class MutatorContext {
 public:
  ~MutatorContext();

  ManagedRef allocate(ClassId cls, std::span<const ManagedRef> init_refs = {});

  ManagedRef read_ref(ManagedRef obj, std::uint32_t index) const;
  void write_ref(ManagedRef obj, std::uint32_t index, ManagedRef value);

  std::uint64_t read_scalar_u64(ManagedRef obj, std::uint32_t byte_offset) const;
  void write_scalar_u64(ManagedRef obj, std::uint32_t byte_offset, std::uint64_t value);
  void read_scalar_bytes(ManagedRef obj, std::uint32_t byte_offset, std::span<std::uint8_t> out) const;
  void write_scalar_bytes(ManagedRef obj, std::uint32_t byte_offset, std::span<const std::uint8_t> in);

  ClassId class_of(ManagedRef obj) const;

  // Safepoint opportunity; call this on every workload iteration.
  void poll();

  Runtime& runtime() { return *runtime_; }

 private:
  friend class Runtime;
  friend class MinorCollector;
  friend class FullCollector;
  friend class LocalRoots;
  MutatorContext(Runtime& rt, std::uint32_t id) : runtime_(&rt), id_(id) {}

  Addr check_access(ManagedRef obj, std::uint32_t index, bool for_ref) const;

  Runtime* runtime_;
  std::uint32_t id_;
  Addr tlab_cursor_ = 0;
  Addr tlab_end_ = 0;
  std::vector<Addr> shadow_stack_;
  std::vector<ReferenceQueueEntry> local_queue_;
  bool attached_ = true;
};

// RAII frame of GC-visible local roots. Slots are updated by the collector,
// so re-read values after any operation that may collect.
class LocalRoots {
 public:
  explicit LocalRoots(MutatorContext& ctx) : ctx_(&ctx), base_(ctx.shadow_stack_.size()) {}
  ~LocalRoots() { ctx_->shadow_stack_.resize(base_); }
  LocalRoots(const LocalRoots&) = delete;
  LocalRoots& operator=(const LocalRoots&) = delete;

  std::size_t push(ManagedRef r) {
    ctx_->shadow_stack_.push_back(r.addr);
    return ctx_->shadow_stack_.size() - 1;
  }
  ManagedRef get(std::size_t slot) const { return ManagedRef{ctx_->shadow_stack_[slot]}; }
  void set(std::size_t slot, ManagedRef r) { ctx_->shadow_stack_[slot] = r.addr; }

 private:
  MutatorContext* ctx_;
  std::size_t base_;
};

using GlobalRootId = std::size_t;

class Runtime {
 public:
  explicit Runtime(RuntimeOptions options);
  ~Runtime();
  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  const RuntimeOptions& options() const { return options_; }

  // --- classes -----------------------------------------------------------
  const ClassDescriptor& register_class(std::string_view name, std::uint32_t ref_fields,
                                        std::uint32_t scalar_bytes);
  const ClassRegistry& classes() const { return registry_; }

  // --- mutators ----------------------------------------------------------
  // The constructing thread owns the main mutator. Worker threads attach
  // their own context and must detach before the runtime is destroyed.
  MutatorContext& mutator() { return *main_mutator_; }
  MutatorContext& attach_mutator();
  void detach_mutator(MutatorContext& ctx);

  // Marks the calling mutator as GC-safe for the duration of fn (e.g. while
  // joining worker threads). The heap must not be touched inside.
  void run_outside_heap(MutatorContext& ctx, const std::function<void()>& fn);

  // --- roots --------------------------------------------------------------
  GlobalRootId add_global_root(ManagedRef r);
  void remove_global_root(GlobalRootId id);
  ManagedRef global_root(GlobalRootId id) const;
  void set_global_root(GlobalRootId id, ManagedRef r);

  // --- collections ---------------------------------------------------------
  // Both entry points bring all mutators to a safepoint first. collect_minor
  // escalates to a full collection when survivors cannot fit.
  GcStats collect_minor(MutatorContext& ctx);
  GcStats collect_full(MutatorContext& ctx);

  const std::vector<GcStats>& gc_log() const { return gc_log_; }
  const GcCounters& counters() const { return counters_; }

  // --- introspection --------------------------------------------------------
  HeapLayout& layout() { return layout_; }
  const HeapLayout& layout() const { return layout_; }
  CardTable& card_table() { return card_table_; }
  const CardTable& card_table() const { return card_table_; }
  ObjectAccess access() { return ObjectAccess(layout_.arena(), registry_); }
  ObjectAccess access() const {
    return ObjectAccess(const_cast<Arena&>(layout_.arena()), registry_);
  }

  std::size_t reference_queue_length() const;
  LocateResult locate(ManagedRef r) const { return layout_.locate(r.addr); }

  std::size_t object_size(ManagedRef r) const { return access().size(r.addr); }
  std::uint8_t object_age(ManagedRef r) const { return access().age(r.addr); }

  // Walks every (non-filler) object currently parsable in the old
  // generation, live or not. Test and verification helper.
  void for_each_old_object(const std::function<void(Addr)>& fn) const;
  // Same over eden + from-space; valid at safepoints (TLABs retired).
  void for_each_young_object(const std::function<void(Addr)>& fn) const;

  // Container purity: every live object inside an owned segment must be
  // reachable from that segment's container parent. Returns violations.
  std::size_t verify_container_purity(std::string* report = nullptr) const;
  // Remembered-set completeness against a brute-force old-gen scan.
  std::size_t verify_card_completeness(std::string* report = nullptr) const;

  void set_full_gc_mark_observer(std::function<void(const std::vector<Addr>&)> fn) {
    mark_observer_ = std::move(fn);
  }

  std::uint64_t next_gc_sequence() { return gc_sequence_++; }

 private:
  friend class MutatorContext;
  friend class MinorCollector;
  friend class FullCollector;

  // Safepoint protocol. begin_stw blocks until every other mutator is
  // parked; parked mutators resume at end_stw.
  void begin_stw(MutatorContext& ctx);
  void end_stw();
  void park_in_poll();

  Addr allocate_raw(MutatorContext& ctx, const ClassDescriptor& desc);
  void retire_tlab(MutatorContext& ctx);
  void retire_all_tlabs();
  void collect_reference_queues(std::vector<ReferenceQueueEntry>& out);
  void record_stats(const GcStats& stats);

  // Root slot enumeration for collectors: pointers into the global table,
  // every shadow stack, and (for minor GC) dirty-card object fields.
  void collect_root_slots(std::vector<std::uint64_t*>& out);

  RuntimeOptions options_;
  ClassRegistry registry_;
  HeapLayout layout_;
  CardTable card_table_;

  mutable std::mutex mutators_mutex_;
  std::vector<std::unique_ptr<MutatorContext>> mutators_;
  MutatorContext* main_mutator_ = nullptr;
  std::vector<ReferenceQueueEntry> orphan_queue_;

  mutable std::mutex roots_mutex_;
  std::vector<Addr> global_roots_;
  std::vector<std::size_t> free_root_ids_;

  // safepoint state
  std::mutex sp_mutex_;
  std::condition_variable sp_cv_;
  std::atomic<bool> stop_flag_{false};
  bool stop_requested_ = false;
  int running_ = 0;
  int parked_ = 0;

  std::unique_ptr<GcWorkerPool> workers_;
  std::vector<GcStats> gc_log_;
  GcCounters counters_;
  std::uint64_t gc_sequence_ = 0;
  std::function<void(const std::vector<Addr>&)> mark_observer_;
};

}  // namespace gangc
