#include "cts/runtime.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace cts {

void tune_allocator() {
#if defined(__GLIBC__)
  constexpr int kThreshold = 256 << 20;
  mallopt(M_MMAP_THRESHOLD, kThreshold);
  mallopt(M_TRIM_THRESHOLD, kThreshold);
#endif
}

}  // namespace cts
