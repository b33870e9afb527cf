#include "mmcl/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace mmcl {

void set_num_threads(int n) { omp_set_num_threads(n < 1 ? 1 : n); }

int num_threads() { return omp_get_max_threads(); }

int threads_from_env(int fallback) {
  const char* raw = std::getenv("MMCL_THREADS");
  if (raw == nullptr) return fallback;
  try {
    const int n = std::stoi(raw);
    return n >= 1 ? n : fallback;
  } catch (const std::exception&) {
    return fallback;
  }
}

}  // namespace mmcl
