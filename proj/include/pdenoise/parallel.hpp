#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace pdenoise {

/// Splits [0, n) into contiguous chunks and runs `body(begin, end, worker)` on
/// up to `workers` threads. Each index is handled by exactly one call, so any
/// body that writes only to per-index outputs gives identical results for
/// every worker count. The first exception thrown by a worker is rethrown.
template <typename Body>
void parallel_for(std::size_t n, unsigned workers, Body&& body) {
  if (n == 0) return;
  const std::size_t w = std::clamp<std::size_t>(workers, 1, n);
  if (w == 1) {
    body(std::size_t{0}, n, 0u);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(w);
  threads.reserve(w);
  const std::size_t chunk = (n + w - 1) / w;
  for (std::size_t t = 0; t < w; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&, begin, end, t] {
      try {
        body(begin, end, static_cast<unsigned>(t));
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Worker count from the PD_WORKERS environment variable, or `fallback`.
inline unsigned workers_from_env(unsigned fallback = 1) {
  const char* raw = std::getenv("PD_WORKERS");
  if (raw == nullptr || *raw == '\0') return fallback;
  try {
    const long v = std::stol(raw);
    return v >= 1 ? static_cast<unsigned>(v) : fallback;
  } catch (...) {
    return fallback;
  }
}

}  // namespace pdenoise
