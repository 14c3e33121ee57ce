#pragma once

// Deterministic task-parallel loop. Tasks write into slots indexed by
// task id and every reduction afterwards runs sequentially, so results
// never depend on the worker count.

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace disagg {

std::size_t thread_count();
void set_thread_count(std::size_t n);  // 0 restores hardware default

// Runs body(i) for i in [0, n). body must only touch state owned by task i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace disagg
