#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>

#include <Eigen/Core>

namespace ucf {

// Thread cap shared by Eigen GEMM and the few hand-rolled parallel loops.
// UCF_FORGE_THREADS wins; otherwise use the hardware count (capped at 8).
// Results are reproducible for a fixed thread count.
inline int thread_count() {
  static const int n = [] {
    if (const char* env = std::getenv("UCF_FORGE_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp(hw, 1u, 8u));
  }();
  return n;
}

inline void init_threading() { Eigen::setNbThreads(thread_count()); }

}  // namespace ucf
