#pragma once

// Direct-loop reference implementations used as oracles.

#include "scn/numerics/tensor.hpp"

#include <limits>
#include <vector>

namespace scn::testing {

inline std::vector<double> naive_conv2d(const Tensor<double>& x, const Tensor<double>& k,
                                        int stride, int pad, Index& out_h, Index& out_w) {
  const Index B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index O = k.dim(0), KH = k.dim(2), KW = k.dim(3);
  out_h = (H + 2 * pad - KH) / stride + 1;
  out_w = (W + 2 * pad - KW) / stride + 1;
  std::vector<double> out(B * O * out_h * out_w, 0.0);
  for (Index b = 0; b < B; ++b)
    for (Index o = 0; o < O; ++o)
      for (Index oy = 0; oy < out_h; ++oy)
        for (Index ox = 0; ox < out_w; ++ox) {
          double acc = 0.0;
          for (Index c = 0; c < C; ++c)
            for (Index i = 0; i < KH; ++i)
              for (Index j = 0; j < KW; ++j) {
                const Index iy = oy * stride - pad + i, ix = ox * stride - pad + j;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x.at({b, c, iy, ix}) * k.at({o, c, i, j});
              }
          out[((b * O + o) * out_h + oy) * out_w + ox] = acc;
        }
  return out;
}

inline std::vector<double> naive_pool2d(const Tensor<double>& x, bool max_pool, int kernel,
                                        int stride, int pad) {
  const Index B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index oh = (H + 2 * pad - kernel) / stride + 1;
  const Index ow = (W + 2 * pad - kernel) / stride + 1;
  std::vector<double> out;
  for (Index b = 0; b < B; ++b)
    for (Index c = 0; c < C; ++c)
      for (Index oy = 0; oy < oh; ++oy)
        for (Index ox = 0; ox < ow; ++ox) {
          double best = -std::numeric_limits<double>::infinity(), total = 0.0;
          int count = 0;
          for (int i = 0; i < kernel; ++i)
            for (int j = 0; j < kernel; ++j) {
              const Index iy = oy * stride - pad + i, ix = ox * stride - pad + j;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              const double v = x.at({b, c, iy, ix});
              best = std::max(best, v);
              total += v;
              ++count;
            }
          out.push_back(max_pool ? best : total / count);
        }
  return out;
}

}  // namespace scn::testing
