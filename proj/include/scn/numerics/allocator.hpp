#pragma once

namespace scn {

/// Keeps large tensor buffers on the heap and stops the allocator from
/// returning freed memory to the kernel. Training allocates and frees
/// buffers of the same few sizes every step; without this each one is a
/// fresh mmap and pays its page faults again. Process-wide; call once from
/// main. No-op outside glibc.
void tune_allocator();

}  // namespace scn
