#pragma once

#include "gangc/gc_stats.hpp"

namespace gangc {

class Runtime;

// Stop-the-world copying collection of the young generation: queued bda
// roots gang-promote into container segments first, everything else is
// evacuated by age through promotion buffers. Escalates to a full
// collection up front when survivors cannot fit.
class MinorCollector {
 public:
  explicit MinorCollector(Runtime& rt) : rt_(rt) {}
  GcStats collect();

 private:
  Runtime& rt_;
};

}  // namespace gangc
