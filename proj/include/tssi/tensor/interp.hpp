#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace tssi::interp {

/// One output coordinate of an align-corners linear resample: value is
/// (1 - weight) * in[lo] + weight * in[hi].
struct Tap {
  std::size_t lo;
  std::size_t hi;
  double weight;
};

/// Taps mapping `in` samples onto `out` samples with corners aligned. The
/// source position is computed as an exact rational so that same-size calls
/// and both end points land on integer coordinates.
inline std::vector<Tap> align_corners_taps(std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw std::invalid_argument("resample: zero extent");
  std::vector<Tap> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    if (out == 1 || in == 1) {
      taps[i] = {0, 0, 0.0};
      continue;
    }
    const std::size_t num = i * (in - 1);
    const std::size_t den = out - 1;
    const std::size_t lo = num / den;
    const double frac = static_cast<double>(num % den) / static_cast<double>(den);
    const std::size_t hi = lo + 1 < in ? lo + 1 : lo;
    taps[i] = {lo, hi, frac};
  }
  return taps;
}

}  // namespace tssi::interp
