#include "orgpose/numerics/memory.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace orgpose::nn {

void configure_allocator() {
#if defined(__GLIBC__)
  // 32 MiB is the largest mmap threshold glibc accepts on 64-bit targets.
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
  mallopt(M_TOP_PAD, 256 * 1024 * 1024);
#endif
}

}  // namespace orgpose::nn
