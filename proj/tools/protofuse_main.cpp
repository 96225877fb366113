#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "protofuse/cli.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Gradient buffers are several MB and are reallocated every episode; keep
  // them on the heap instead of paying for fresh mmap'd pages each time.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  return protofuse::run_cli(argc, argv, std::cout, std::cerr);
}
