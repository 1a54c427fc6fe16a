#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace zsad {

/// Runs f(i) for i in [0, n) across OpenMP threads; the first failure (by
/// index) is rethrown once every task has finished.
template <typename F>
void parallel_for(std::size_t n, F&& f) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      f(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace zsad
