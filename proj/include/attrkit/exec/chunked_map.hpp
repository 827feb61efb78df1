#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace attrkit {

/// Scheduling knobs. None of them may change a numeric result.
struct ExecPlan {
  std::int64_t chunk_size = 64;             // internally expanded rows per forward/backward batch
  std::int64_t perturbations_per_eval = 1;  // perturbed copies per forward batch
  int workers = 1;                          // threads evaluating chunks

  void validate() const;  // throws InvalidParameter unless every field is >= 1
};

/// Runs task(c) once for each c in [0, n_chunks) on at most `workers`
/// threads (the caller counts as one). If tasks throw, the exception of the
/// lowest failing chunk index is rethrown after all threads have joined.
void run_chunks(std::size_t n_chunks, int workers, const std::function<void(std::size_t)>& task);

// Wraps an exception escaping chunk `index` covering items [begin, end).
[[noreturn]] void rethrow_annotated(std::size_t index, std::size_t begin, std::size_t end);

/// Applies `fn(begin, end) -> std::vector<R>` to consecutive chunks of
/// [0, n_items) and concatenates the per-chunk results in chunk order.
/// Each chunk owns one result slot, so the output never depends on
/// `workers` or on completion order.
template <typename R, typename Fn>
std::vector<R> chunked_map(std::size_t n_items, std::int64_t chunk_size, int workers, Fn&& fn) {
  const auto step = static_cast<std::size_t>(chunk_size < 1 ? 1 : chunk_size);
  const std::size_t n_chunks = (n_items + step - 1) / step;
  std::vector<std::vector<R>> slots(n_chunks);
  run_chunks(n_chunks, workers, [&](std::size_t c) {
    const std::size_t begin = c * step;
    const std::size_t end = begin + step < n_items ? begin + step : n_items;
    try {
      slots[c] = fn(begin, end);
    } catch (...) {
      rethrow_annotated(c, begin, end);
    }
  });
  std::vector<R> out;
  out.reserve(n_items);
  for (auto& slot : slots) {
    for (auto& r : slot) out.push_back(std::move(r));
  }
  return out;
}

}  // namespace attrkit
