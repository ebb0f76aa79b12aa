#pragma once

namespace svc {

/// Keeps large freed blocks in the heap instead of returning them to the OS,
/// which otherwise dominates the cost of big temporary tensors. No-op off glibc.
void tune_allocator();

}  // namespace svc
