#pragma once

namespace mmcl {

// Size of the OpenMP pool used by the batch kernels. 1 means fully serial.
void set_num_threads(int n);
int num_threads();

// Reads MMCL_THREADS; returns fallback when unset or malformed.
int threads_from_env(int fallback = 1);

}  // namespace mmcl
