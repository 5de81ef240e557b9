#pragma once

#include <atomic>
#include <cassert>
#include <cstdint>
#include <cstring>
#include <memory>

#include "gangc/address.hpp"
#include "gangc/class_registry.hpp"

namespace gangc {

// Backing storage for the managed heap: one contiguous byte arena addressed
// by offsets. The first kAlignment bytes are reserved so offset 0 is null.
class Arena {
 public:
  explicit Arena(std::size_t bytes)
      : bytes_(bytes), storage_(std::make_unique<std::uint8_t[]>(bytes)) {}

  std::size_t size() const { return bytes_; }

  std::uint8_t* raw(Addr a) {
    assert(a < bytes_);
    return storage_.get() + a;
  }
  const std::uint8_t* raw(Addr a) const {
    assert(a < bytes_);
    return storage_.get() + a;
  }

  std::uint64_t load_word(Addr a) const {
    assert(is_aligned(a, kAlignment));
    std::uint64_t v;
    std::memcpy(&v, raw(a), sizeof(v));
    return v;
  }
  void store_word(Addr a, std::uint64_t v) {
    assert(is_aligned(a, kAlignment));
    std::memcpy(raw(a), &v, sizeof(v));
  }

  // Aligned word access with atomic semantics, for mark bits, forwarding
  // installation and card bytes racing across GC workers.
  std::atomic_ref<std::uint64_t> atomic_word(Addr a) {
    assert(is_aligned(a, kAlignment));
    return std::atomic_ref<std::uint64_t>(*reinterpret_cast<std::uint64_t*>(raw(a)));
  }

  void copy(Addr dst, Addr src, std::size_t n) { std::memmove(raw(dst), raw(src), n); }
  void zero(Addr a, std::size_t n) { std::memset(raw(a), 0, n); }

 private:
  std::size_t bytes_;
  std::unique_ptr<std::uint8_t[]> storage_;
};

// Object header layout (16 bytes):
//   word0: class_id:32 | age:8 | flags:8 | unused:16
//   word1: forwarding address during minor GC; payload size for fillers
// A filler with age 1 is the 8-byte variant: one word, no word1.
namespace hdr {

inline constexpr std::uint64_t kMarkFlag = 1ull << 40;

inline std::uint64_t make_word0(ClassId cls, std::uint8_t age) {
  return std::uint64_t{cls} | (std::uint64_t{age} << 32);
}

inline ClassId class_id(std::uint64_t w0) { return static_cast<ClassId>(w0 & 0xffffffffu); }
inline std::uint8_t age(std::uint64_t w0) { return static_cast<std::uint8_t>((w0 >> 32) & 0xff); }
inline bool marked(std::uint64_t w0) { return (w0 & kMarkFlag) != 0; }

}  // namespace hdr

// Dead padding over a carved extent; any 8-byte-aligned gap is fillable.
inline void write_filler(Arena& arena, Addr a, std::size_t bytes) {
  assert(bytes % kAlignment == 0);
  if (bytes == 0) return;
  if (bytes == 8) {
    arena.store_word(a, hdr::make_word0(kFillerClassId, 1));
    return;
  }
  assert(bytes >= kHeaderBytes);
  arena.store_word(a, hdr::make_word0(kFillerClassId, 0));
  arena.store_word(a + 8, bytes);
}

class ObjectAccess {
 public:
  ObjectAccess(Arena& arena, const ClassRegistry& registry) : arena_(&arena), registry_(&registry) {}

  void init_object(Addr a, const ClassDescriptor& d) {
    arena_->store_word(a, hdr::make_word0(d.class_id, 0));
    arena_->store_word(a + 8, 0);
    arena_->zero(a + kHeaderBytes, d.instance_bytes - kHeaderBytes);
  }

  ClassId class_id(Addr a) const { return hdr::class_id(arena_->load_word(a)); }
  std::uint8_t age(Addr a) const { return hdr::age(arena_->load_word(a)); }
  bool is_filler(Addr a) const { return class_id(a) == kFillerClassId; }

  const ClassDescriptor& descriptor(Addr a) const { return (*registry_)[class_id(a)]; }

  std::size_t size(Addr a) const {
    const std::uint64_t w0 = arena_->load_word(a);
    const ClassId c = hdr::class_id(w0);
    if (c == kFillerClassId)
      return hdr::age(w0) == 1 ? 8 : static_cast<std::size_t>(arena_->load_word(a + 8));
    return (*registry_)[c].instance_bytes;
  }

  bool marked(Addr a) const { return hdr::marked(arena_->load_word(a)); }
  void set_mark(Addr a) { arena_->store_word(a, arena_->load_word(a) | hdr::kMarkFlag); }
  void clear_mark(Addr a) { arena_->store_word(a, arena_->load_word(a) & ~hdr::kMarkFlag); }

  // Returns true iff this call won the mark (parallel marking).
  bool try_mark_atomic(Addr a) {
    auto w = arena_->atomic_word(a);
    std::uint64_t prev = w.fetch_or(hdr::kMarkFlag, std::memory_order_acq_rel);
    return (prev & hdr::kMarkFlag) == 0;
  }

  // Forwarding: word1 != 0 means the object was copied this cycle.
  Addr forwarding(Addr a) const { return arena_->load_word(a + 8); }
  Addr forwarding_acquire(Addr a) {
    return arena_->atomic_word(a + 8).load(std::memory_order_acquire);
  }
  // Installs fwd if no other worker did; returns the winning destination.
  Addr install_forwarding(Addr a, Addr fwd, bool* won) {
    auto w = arena_->atomic_word(a + 8);
    std::uint64_t expected = 0;
    if (w.compare_exchange_strong(expected, fwd, std::memory_order_acq_rel)) {
      *won = true;
      return fwd;
    }
    *won = false;
    return expected;
  }

  void bump_age(Addr a) {
    std::uint64_t w0 = arena_->load_word(a);
    std::uint8_t ag = hdr::age(w0);
    if (ag < 0xff) ++ag;
    arena_->store_word(a, (w0 & ~0xff00000000ull) | (std::uint64_t{ag} << 32));
  }

  Addr ref_field_addr(Addr a, std::uint32_t index) const {
    return a + kHeaderBytes + std::uint64_t{index} * kRefBytes;
  }
  Addr load_ref(Addr a, std::uint32_t index) const {
    return arena_->load_word(ref_field_addr(a, index));
  }
  void store_ref(Addr a, std::uint32_t index, Addr value) {
    arena_->store_word(ref_field_addr(a, index), value);
  }

  Arena& arena() { return *arena_; }
  const Arena& arena() const { return *arena_; }
  const ClassRegistry& registry() const { return *registry_; }

 private:
  Arena* arena_;
  const ClassRegistry* registry_;
};

}  // namespace gangc
