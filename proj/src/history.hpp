#pragma once

#include <cstddef>

namespace vmv::detail {

// acc[c] += sum_{k<count} w[k] * hist[k*d + c]. Four partial sums in the
// scalar case; the order is fixed, so every caller gets identical bits.
inline void weighted_history(const double* w, const double* hist, std::size_t count, std::size_t d,
                             double* acc) {
  if (d == 1) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t k = 0;
    for (; k + 4 <= count; k += 4) {
      s0 += w[k] * hist[k];
      s1 += w[k + 1] * hist[k + 1];
      s2 += w[k + 2] * hist[k + 2];
      s3 += w[k + 3] * hist[k + 3];
    }
    for (; k < count; ++k) s0 += w[k] * hist[k];
    acc[0] += (s0 + s1) + (s2 + s3);
    return;
  }
  for (std::size_t k = 0; k < count; ++k)
    for (std::size_t c = 0; c < d; ++c) acc[c] += w[k] * hist[k * d + c];
}

}  // namespace vmv::detail
