#include "prt/common.hpp"

#include <atomic>
#include <cstdlib>

namespace prt {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kUnsupportedOrder: return "unsupported-order";
    case ErrorCode::kInvalidFrame: return "invalid-frame";
    case ErrorCode::kDegenerateTexel: return "degenerate-texel";
    case ErrorCode::kDegenerateNormal: return "degenerate-normal";
    case ErrorCode::kInvalidRoughness: return "invalid-roughness";
    case ErrorCode::kUndefinedNormalization: return "undefined-normalization";
    case ErrorCode::kContractViolation: return "contract-violation";
    case ErrorCode::kMalformedInput: return "malformed-input";
  }
  return "unknown";
}

namespace {

std::atomic<int> g_thread_override{0};

int default_threads() {
  int count = static_cast<int>(std::thread::hardware_concurrency());
  if (count <= 0) count = 1;
  if (const char* env = std::getenv("PRT_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) count = std::min(count, cap);
  }
  return count;
}

}  // namespace

int worker_threads() {
  const int forced = g_thread_override.load(std::memory_order_relaxed);
  if (forced > 0) return forced;
  static const int kDefault = default_threads();
  return kDefault;
}

void set_worker_threads(int count) {
  g_thread_override.store(std::max(count, 0), std::memory_order_relaxed);
}

}  // namespace prt
