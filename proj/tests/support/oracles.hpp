#pragma once

// Brute-force reference implementations, written directly from the math and
// kept independent of the library code they check.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

// Direct nested-loop convolution. input [cin,h,w], weights [cout,cin,k,k].
inline std::vector<float> conv2d(const std::vector<float>& input, int cin,
                                 int h, int w,
                                 const std::vector<float>& weights,
                                 const std::vector<float>& bias, int cout,
                                 int k, int stride, int pad) {
  int ho = (h + 2 * pad - k) / stride + 1;
  int wo = (w + 2 * pad - k) / stride + 1;
  std::vector<float> out(static_cast<size_t>(cout) * ho * wo, 0.0f);
  for (int o = 0; o < cout; ++o)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double acc = bias[o];
        for (int c = 0; c < cin; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              int iy = oy * stride + ky - pad;
              int ix = ox * stride + kx - pad;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += static_cast<double>(
                         input[(static_cast<size_t>(c) * h + iy) * w + ix]) *
                     weights[((static_cast<size_t>(o) * cin + c) * k + ky) * k +
                             kx];
            }
        out[(static_cast<size_t>(o) * ho + oy) * wo + ox] =
            static_cast<float>(acc);
      }
  return out;
}

inline double mean_of(const std::vector<float>& v, size_t off, size_t n) {
  double m = 0.0;
  for (size_t i = 0; i < n; ++i) m += v[off + i];
  return m / static_cast<double>(n);
}

inline double var_of(const std::vector<float>& v, size_t off, size_t n) {
  double m = mean_of(v, off, n);
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double d = v[off + i] - m;
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

inline float max_abs_diff(const std::vector<float>& a,
                          const std::vector<float>& b) {
  float worst = 0.0f;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

}  // namespace oracle
