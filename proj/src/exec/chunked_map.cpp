#include "attrkit/exec/chunked_map.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include "attrkit/engine/error.hpp"

namespace attrkit {

void ExecPlan::validate() const {
  if (chunk_size < 1) throw Error(ErrorCode::invalid_parameter, "chunk_size must be >= 1");
  if (perturbations_per_eval < 1) throw Error(ErrorCode::invalid_parameter, "perturbations_per_eval must be >= 1");
  if (workers < 1) throw Error(ErrorCode::invalid_parameter, "workers must be >= 1");
}

void run_chunks(std::size_t n_chunks, int workers, const std::function<void(std::size_t)>& task) {
  if (n_chunks == 0) return;
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n_chunks);
  std::vector<std::exception_ptr> errors(n_chunks);
  std::atomic<std::size_t> next{0};
  auto drain = [&] {
    for (std::size_t c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1)) {
      try {
        task(c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(drain);
    drain();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void rethrow_annotated(std::size_t index, std::size_t begin, std::size_t end) {
  const std::string where =
      "chunk " + std::to_string(index) + " [" + std::to_string(begin) + ", " + std::to_string(end) + "): ";
  try {
    throw;
  } catch (const Error& e) {
    throw Error(e.code(), where + e.message());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::chunk_failure, where + e.what());
  }
}

}  // namespace attrkit
