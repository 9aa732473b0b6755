#pragma once

// Process-wide allocator tuning for training loops. Every iteration
// allocates and frees tens of megabytes of activations; with glibc's
// defaults those blocks go straight to mmap/munmap and each iteration pays
// for fresh page faults. Keeping them on the heap removes that cost.

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace crowdcast::runtime {

/// Call once at startup. No effect on non-glibc platforms.
inline void keep_heap_mapped() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace crowdcast::runtime
