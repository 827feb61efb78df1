#pragma once

namespace attrkit {

/// Keeps freed heap memory in the process instead of returning it to the
/// system. Batched forward passes allocate and release the same large buffers
/// on every call; without this each call pays for fresh page faults.
/// Process-wide, so only executables call it. No-op outside glibc.
void retain_freed_memory();

}  // namespace attrkit
