#pragma once

namespace cts {

// Keeps freed large blocks in the heap instead of returning them to the OS.
// Training reallocates the same attention-sized buffers every step, and the
// default glibc thresholds turn each of those into an mmap/munmap pair.
// No-op on other C libraries.
void tune_allocator();

}  // namespace cts
