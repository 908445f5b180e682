#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace hdl {

/// The samplers allocate and free multi-megabyte activations every step. With
/// glibc defaults those go through mmap/munmap and page faults end up costing
/// as much as the arithmetic, so keep them on the heap and never trim it.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace hdl
