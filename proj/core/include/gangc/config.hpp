#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gangc/address.hpp"

namespace gangc {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Tuning knobs for the bda-heap: which classes get container placement and
// how big their containers/segments are expected to be.
struct BdaConfig {
  std::vector<std::string> classes;   // fully-qualified names handled as storage types
  double bda_ratio = 0.5;             // fraction of the old generation dedicated to bda-spaces
  std::uint32_t container_fraction = 1;   // CF: split one container estimate into CF segments
  std::uint32_t delegation_level = 2;     // DL: indirection depth copied with a storage root
  std::uint32_t default_node_fields = 1;  // DNF: expected fields per element object
  std::uint32_t node_fields = 2;          // NF: fields per node of the parent structure
  std::uint64_t container_size = 25000;   // CS: expected element count per container

  bool enabled() const { return !classes.empty(); }

  void validate() const {
    if (bda_ratio < 0.0 || bda_ratio >= 1.0)
      throw ConfigError("bda_ratio must lie in [0, 1)");
    if (container_fraction < 1)
      throw ConfigError("container_fraction must be >= 1");
  }
};

enum class GcMode : std::uint8_t {
  kBase,  // plain generational collector, no bda-spaces, no gang promotion
  kBda,   // bda-heap layout with gang promotion
};

struct RuntimeOptions {
  std::size_t heap_bytes = 64ull << 20;
  double young_fraction = 0.35;   // of the whole heap
  double eden_fraction = 0.8;     // of the young generation; survivors split the rest
  std::uint32_t tenuring_threshold = 2;
  std::uint32_t gc_threads = 2;
  std::size_t tlab_bytes = 64 * 1024;
  std::size_t plab_bytes = 16 * 1024;          // old-gen promotion buffer
  std::size_t survivor_plab_bytes = 4 * 1024;  // to-space promotion buffer
  GcMode mode = GcMode::kBda;
  BdaConfig bda;
  bool gang_full_closure = false;  // trace gangs to transitive closure instead of DL
  bool verify_after_gc = false;    // heavy invariant checks after every collection
  bool log_gc = false;

  void validate() const {
    if (heap_bytes < (1u << 20)) throw ConfigError("heap_bytes must be at least 1 MiB");
    if (young_fraction <= 0.0 || young_fraction >= 0.9)
      throw ConfigError("young_fraction must lie in (0, 0.9)");
    if (eden_fraction <= 0.5 || eden_fraction >= 0.95)
      throw ConfigError("eden_fraction must lie in (0.5, 0.95)");
    if (tenuring_threshold < 1 || tenuring_threshold > 15)
      throw ConfigError("tenuring_threshold must lie in [1, 15]");
    if (gc_threads < 1 || gc_threads > 64) throw ConfigError("gc_threads must lie in [1, 64]");
    if (tlab_bytes < 1024) throw ConfigError("tlab_bytes must be >= 1024");
    bda.validate();
  }

  // Base mode behaves exactly like a bda build with an empty class list.
  bool bda_active() const { return mode == GcMode::kBda && bda.enabled(); }
};

}  // namespace gangc
