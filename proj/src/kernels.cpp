#include "dhf/kernels.hpp"

#include <atomic>
#include <exception>
#include <mutex>

#include <omp.h>

namespace dhf {

namespace {
std::atomic<Exec> g_exec{Exec::parallel};
}

Exec default_exec() { return g_exec.load(); }
void set_default_exec(Exec e) { g_exec.store(e); }

void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

int max_threads() { return omp_get_max_threads(); }

namespace detail {

void run_parallel(Index n, void (*thunk)(void*, Index), void* ctx) {
  std::exception_ptr first;
  std::mutex mu;
#pragma omp parallel for schedule(dynamic, 16)
  for (Index i = 0; i < n; ++i) {
    try {
      thunk(ctx, i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
}

}  // namespace detail

}  // namespace dhf
