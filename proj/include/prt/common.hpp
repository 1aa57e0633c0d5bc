#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace prt {

enum class ErrorCode {
  kInvalidArgument,
  kUnsupportedOrder,
  kInvalidFrame,
  kDegenerateTexel,
  kDegenerateNormal,
  kInvalidRoughness,
  kUndefinedNormalization,
  kContractViolation,
  kMalformedInput,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

// Worker count used by parallel_for. Defaults to the hardware concurrency,
// capped by the PRT_THREADS environment variable. set_worker_threads(0)
// restores the default.
int worker_threads();
void set_worker_threads(int count);

// Runs body(i) for i in [0, count). Indices are split into contiguous chunks,
// one per worker; callers must only write state owned by index i, which keeps
// results independent of the thread count. Nested calls run serially.
namespace detail {
inline thread_local bool in_parallel_region = false;
}  // namespace detail

template <typename Body>
void parallel_for(std::size_t count, Body&& body) {
  const std::size_t workers =
      detail::in_parallel_region
          ? 1
          : std::min<std::size_t>(static_cast<std::size_t>(worker_threads()), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  auto run = [&](std::size_t w) {
    const bool outer = detail::in_parallel_region;
    detail::in_parallel_region = true;
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    try {
      for (std::size_t i = begin; i < end; ++i) body(i);
    } catch (...) {
      errors[w] = std::current_exception();
    }
    detail::in_parallel_region = outer;
  };
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// SplitMix64 finalizer; used to derive independent RNG streams from
// (seed, stream id) pairs.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(mix_seed(seed) ^ (stream * 0xd1b54a32d192ed03ULL));
}

// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
template <typename Engine>
double uniform01(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

}  // namespace prt
