#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace gangc {

// Heap addresses are byte offsets into one contiguous arena. Offset 0 is
// reserved (never allocated) so it doubles as the null reference.
using Addr = std::uint64_t;
inline constexpr Addr kNullAddr = 0;

inline constexpr std::size_t kAlignment = 8;        // object alignment
inline constexpr std::size_t kHeaderBytes = 16;     // per-object header (h)
inline constexpr std::size_t kRefBytes = 8;         // reference field width (f)
inline constexpr std::size_t kRegionBytes = 4096;   // compaction region / simulated page
inline constexpr std::size_t kCardBytes = 512;      // card-table granule
inline constexpr std::size_t kStartBlockBytes = 512; // object-start-table granule

template <typename T>
constexpr T align_up(T v, std::size_t a) {
  return static_cast<T>((v + (a - 1)) & ~static_cast<T>(a - 1));
}

template <typename T>
constexpr T align_down(T v, std::size_t a) {
  return static_cast<T>(v & ~static_cast<T>(a - 1));
}

constexpr bool is_aligned(Addr a, std::size_t alignment) {
  return (a & (alignment - 1)) == 0;
}

// Mutator-facing reference. Non-null refs always point at an object header.
struct ManagedRef {
  Addr addr = kNullAddr;

  constexpr ManagedRef() = default;
  constexpr explicit ManagedRef(Addr a) : addr(a) {}

  constexpr bool is_null() const { return addr == kNullAddr; }
  constexpr explicit operator bool() const { return !is_null(); }

  friend constexpr bool operator==(ManagedRef a, ManagedRef b) { return a.addr == b.addr; }
  friend constexpr bool operator!=(ManagedRef a, ManagedRef b) { return a.addr != b.addr; }
};

inline constexpr ManagedRef kNullRef{};

struct AddrRange {
  Addr base = 0;
  Addr end = 0;

  constexpr std::size_t bytes() const { return end - base; }
  constexpr bool contains(Addr a) const { return a >= base && a < end; }
  constexpr bool empty() const { return base == end; }
};

}  // namespace gangc

template <>
struct std::hash<gangc::ManagedRef> {
  std::size_t operator()(gangc::ManagedRef r) const noexcept {
    return std::hash<gangc::Addr>{}(r.addr);
  }
};
