#pragma once

#include <cstddef>
#include <type_traits>

#include "dhf/types.hpp"

namespace dhf {

/// Execution policy for data-parallel loops. `serial` is the reference
/// path; `parallel` distributes iterations over OpenMP threads. Both run the
/// same per-item code, so results are bitwise identical.
enum class Exec { serial, parallel };

/// Process-wide default used when callers don't pass a policy.
Exec default_exec();
void set_default_exec(Exec e);
/// Sets the OpenMP thread count (<= 0 leaves the runtime default).
void set_threads(int n);
int max_threads();

/// Calls fn(i) for i in [0, n). Exceptions thrown inside parallel regions
/// are captured and the first one is rethrown after the loop.
template <class Fn>
void for_each_index(Exec exec, Index n, Fn&& fn);

namespace detail {
void run_parallel(Index n, void (*thunk)(void*, Index), void* ctx);
}

template <class Fn>
void for_each_index(Exec exec, Index n, Fn&& fn) {
  if (exec == Exec::serial || n < 2) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  using F = std::remove_reference_t<Fn>;
  detail::run_parallel(
      n, [](void* ctx, Index i) { (*static_cast<F*>(ctx))(i); }, static_cast<void*>(&fn));
}

}  // namespace dhf
