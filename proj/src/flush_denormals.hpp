#pragma once

// Scoped flush-to-zero / denormals-are-zero for the calling thread.
// Penalized columns decay geometrically into the subnormal range, where
// arithmetic takes a slow path.

#if defined(__SSE2__) || defined(_M_X64)
#include <xmmintrin.h>
#define BTD_HAS_MXCSR 1
#endif

namespace btd::detail {

class FlushDenormals {
 public:
#ifdef BTD_HAS_MXCSR
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | kFtz | kDaz); }
  ~FlushDenormals() { _mm_setcsr(saved_); }
#else
  FlushDenormals() = default;
#endif
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
#ifdef BTD_HAS_MXCSR
  static constexpr unsigned kFtz = 0x8000;
  static constexpr unsigned kDaz = 0x0040;
  unsigned saved_;
#endif
};

}  // namespace btd::detail
