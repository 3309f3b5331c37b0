#pragma once

namespace orgpose::nn {

/// Keeps freed tensor buffers in the process heap instead of handing them back
/// to the OS. Every training step allocates and frees many multi-megabyte
/// buffers; without this each one is a fresh mmap that page-faults on first
/// touch. Call once at program start. No-op outside glibc.
void configure_allocator();

}  // namespace orgpose::nn
