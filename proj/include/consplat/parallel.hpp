#pragma once

#include <cstddef>
#include <functional>

namespace consplat {

// Caps worker parallelism for every parallel loop in the library (default: hardware
// concurrency). Results never depend on this value.
void set_thread_count(int threads);
int thread_count();

// Runs body(i) for every i in [0, n). Work items must write disjoint state.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body);

} // namespace consplat
