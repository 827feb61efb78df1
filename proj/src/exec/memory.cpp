#include "attrkit/exec/memory.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace attrkit {

void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);  // glibc's ceiling on 64-bit
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

}  // namespace attrkit
