#include "manigan/nn.hpp"

#include <Eigen/Core>

#include <cmath>

namespace manigan {

using detail::Node;
using detail::NodePtr;

using MatrixRM =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatrixRM>;
using MapCM = Eigen::Map<const MatrixRM>;

ConvSpec ConvSpec::create(int in_channels, int out_channels, int kernel_size,
                          int stride, int padding, Rng& rng,
                          float weight_scale) {
  ConvSpec s;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel_size = kernel_size;
  s.stride = stride;
  s.padding = padding;
  s.weights = Tensor::randn({out_channels, in_channels, kernel_size,
                             kernel_size},
                            rng, weight_scale, true);
  s.bias = Tensor::zeros({out_channels}, true);
  s.validate();
  return s;
}

void ConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0 || kernel_size <= 0 ||
      stride <= 0 || padding < 0)
    throw ConfigError("ConvSpec: non-positive geometry");
  Shape w = {out_channels, in_channels, kernel_size, kernel_size};
  if (!weights.defined() || weights.shape() != w)
    throw DimensionError("ConvSpec: weights must be " + shape_str(w));
  if (!bias.defined() || bias.shape() != Shape{out_channels})
    throw DimensionError("ConvSpec: bias must be [" +
                         std::to_string(out_channels) + "]");
}

namespace {

struct ConvGeom {
  int cin, h, w, cout, k, s, p, ho, wo;
};

ConvGeom conv_geometry(const Tensor& input, const ConvSpec& spec) {
  spec.validate();
  if (input.ndim() != 3)
    throw DimensionError("conv2d expects [C,H,W], got " +
                         shape_str(input.shape()));
  ConvGeom g;
  g.cin = input.dim(0);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.cout = spec.out_channels;
  g.k = spec.kernel_size;
  g.s = spec.stride;
  g.p = spec.padding;
  if (g.cin != spec.in_channels)
    throw DimensionError("conv2d: input has " + std::to_string(g.cin) +
                         " channels, spec expects " +
                         std::to_string(spec.in_channels));
  int hp = g.h + 2 * g.p - g.k;
  int wp = g.w + 2 * g.p - g.k;
  if (hp < 0 || wp < 0)
    throw ConfigError("conv2d: kernel exceeds padded input");
  if (hp % g.s != 0 || wp % g.s != 0)
    throw ConfigError("conv2d: stride does not divide padded extent");
  g.ho = hp / g.s + 1;
  g.wo = wp / g.s + 1;
  return g;
}

// Patches as columns: row (c*k*k + ky*k + kx), column (oy*wo + ox).
void im2col(const float* src, const ConvGeom& g, float* col) {
  int patch = g.cin * g.k * g.k;
  int cols = g.ho * g.wo;
  for (int c = 0; c < g.cin; ++c)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        float* dst = col + (static_cast<size_t>(c) * g.k * g.k +
                            static_cast<size_t>(ky) * g.k + kx) *
                               cols;
        for (int oy = 0; oy < g.ho; ++oy) {
          int iy = oy * g.s + ky - g.p;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst + static_cast<size_t>(oy) * g.wo, g.wo, 0.0f);
            continue;
          }
          const float* row = src + (static_cast<size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            int ix = ox * g.s + kx - g.p;
            dst[static_cast<size_t>(oy) * g.wo + ox] =
                (ix >= 0 && ix < g.w) ? row[ix] : 0.0f;
          }
        }
      }
  (void)patch;
}

// Transpose of im2col: scatter-add columns back into the image grid.
void col2im_add(const float* col, const ConvGeom& g, float* dst) {
  int cols = g.ho * g.wo;
  for (int c = 0; c < g.cin; ++c)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        const float* src = col + (static_cast<size_t>(c) * g.k * g.k +
                                  static_cast<size_t>(ky) * g.k + kx) *
                                     cols;
        for (int oy = 0; oy < g.ho; ++oy) {
          int iy = oy * g.s + ky - g.p;
          if (iy < 0 || iy >= g.h) continue;
          float* row = dst + (static_cast<size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            int ix = ox * g.s + kx - g.p;
            if (ix >= 0 && ix < g.w)
              row[ix] += src[static_cast<size_t>(oy) * g.wo + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const ConvSpec& spec) {
  ConvGeom g = conv_geometry(input, spec);
  int patch = g.cin * g.k * g.k;
  int cols = g.ho * g.wo;

  std::vector<float> col(static_cast<size_t>(patch) * cols);
  im2col(input.data().data(), g, col.data());

  std::vector<float> out(static_cast<size_t>(g.cout) * cols);
  {
    MapCM W(spec.weights.data().data(), g.cout, patch);
    MapCM C(col.data(), patch, cols);
    MapM O(out.data(), g.cout, cols);
    O.noalias() = W * C;
    for (int o = 0; o < g.cout; ++o) O.row(o).array() += spec.bias.at(o);
  }

  auto px = input.node();
  auto pw = spec.weights.node();
  auto pb = spec.bias.node();
  bool track = px->requires_grad || pw->requires_grad || pb->requires_grad;
  // The column matrix is only needed again for the weight gradient.
  auto col_keep = track && pw->requires_grad
                      ? std::make_shared<std::vector<float>>(std::move(col))
                      : nullptr;
  return make_op(
      {g.cout, g.ho, g.wo}, std::move(out), {px, pw, pb},
      [px, pw, pb, g, patch, cols, col_keep](Node& n) {
        MapCM G(n.grad.data(), g.cout, cols);
        if (pw->requires_grad) {
          pw->ensure_grad();
          MapCM C(col_keep->data(), patch, cols);
          MapM dW(pw->grad.data(), g.cout, patch);
          dW.noalias() += G * C.transpose();
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (int o = 0; o < g.cout; ++o) pb->grad[o] += G.row(o).sum();
        }
        if (px->requires_grad) {
          px->ensure_grad();
          std::vector<float> dcol(static_cast<size_t>(patch) * cols);
          MapCM W(pw->value.data(), g.cout, patch);
          MapM dC(dcol.data(), patch, cols);
          dC.noalias() = W.transpose() * G;
          col2im_add(dcol.data(), g, px->grad.data());
        }
      });
}

Tensor upsample2x(const Tensor& input) {
  if (input.ndim() != 3) throw DimensionError("upsample2x expects [C,H,W]");
  int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  std::vector<float> out(static_cast<size_t>(c) * 4 * h * w);
  const auto& src = input.data();
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y) {
      const float* srow = src.data() + (static_cast<size_t>(ch) * h + y) * w;
      float* d0 = out.data() + (static_cast<size_t>(ch) * 2 * h + 2 * y) * 2 * w;
      float* d1 = d0 + 2 * w;
      for (int x = 0; x < w; ++x) {
        float v = srow[x];
        d0[2 * x] = d0[2 * x + 1] = v;
        d1[2 * x] = d1[2 * x + 1] = v;
      }
    }
  auto pa = input.node();
  return make_op({c, 2 * h, 2 * w}, std::move(out), {pa},
                 [pa, c, h, w](Node& n) {
                   pa->ensure_grad();
                   for (int ch = 0; ch < c; ++ch)
                     for (int y = 0; y < h; ++y) {
                       float* drow = pa->grad.data() +
                                     (static_cast<size_t>(ch) * h + y) * w;
                       const float* g0 =
                           n.grad.data() +
                           (static_cast<size_t>(ch) * 2 * h + 2 * y) * 2 * w;
                       const float* g1 = g0 + 2 * w;
                       for (int x = 0; x < w; ++x)
                         drow[x] += g0[2 * x] + g0[2 * x + 1] + g1[2 * x] +
                                    g1[2 * x + 1];
                     }
                 });
}

Tensor avg_pool2x(const Tensor& input) {
  if (input.ndim() != 3) throw DimensionError("avg_pool2x expects [C,H,W]");
  int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 != 0 || w % 2 != 0)
    throw DimensionError("avg_pool2x needs even spatial dims");
  int ho = h / 2, wo = w / 2;
  std::vector<float> out(static_cast<size_t>(c) * ho * wo);
  const auto& src = input.data();
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < ho; ++y) {
      const float* s0 =
          src.data() + (static_cast<size_t>(ch) * h + 2 * y) * w;
      const float* s1 = s0 + w;
      float* drow = out.data() + (static_cast<size_t>(ch) * ho + y) * wo;
      for (int x = 0; x < wo; ++x)
        drow[x] =
            0.25f * (s0[2 * x] + s0[2 * x + 1] + s1[2 * x] + s1[2 * x + 1]);
    }
  auto pa = input.node();
  return make_op({c, ho, wo}, std::move(out), {pa},
                 [pa, c, h, w, ho, wo](Node& n) {
                   pa->ensure_grad();
                   for (int ch = 0; ch < c; ++ch)
                     for (int y = 0; y < ho; ++y) {
                       float* d0 = pa->grad.data() +
                                   (static_cast<size_t>(ch) * h + 2 * y) * w;
                       float* d1 = d0 + w;
                       const float* grow =
                           n.grad.data() +
                           (static_cast<size_t>(ch) * ho + y) * wo;
                       for (int x = 0; x < wo; ++x) {
                         float g = 0.25f * grow[x];
                         d0[2 * x] += g;
                         d0[2 * x + 1] += g;
                         d1[2 * x] += g;
                         d1[2 * x + 1] += g;
                       }
                     }
                 });
}

Tensor instance_norm(const Tensor& input, float eps) {
  if (input.ndim() != 3) throw DimensionError("instance_norm expects [C,H,W]");
  if (eps <= 0.0f) throw ConfigError("instance_norm: eps must be positive");
  int c = input.dim(0);
  int hw = input.dim(1) * input.dim(2);
  const auto& src = input.data();
  std::vector<float> out(src.size());
  std::vector<float> inv_std(static_cast<size_t>(c));
  for (int ch = 0; ch < c; ++ch) {
    const float* x = src.data() + static_cast<size_t>(ch) * hw;
    double m = 0.0;
    for (int i = 0; i < hw; ++i) m += x[i];
    m /= hw;
    double var = 0.0;
    for (int i = 0; i < hw; ++i) {
      double d = x[i] - m;
      var += d * d;
    }
    var /= hw;
    float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    inv_std[ch] = is;
    float* y = out.data() + static_cast<size_t>(ch) * hw;
    float mf = static_cast<float>(m);
    for (int i = 0; i < hw; ++i) y[i] = (x[i] - mf) * is;
  }
  auto pa = input.node();
  return make_op(
      input.shape(), std::move(out), {pa},
      [pa, c, hw, inv_std](Node& n) {
        pa->ensure_grad();
        // dx = inv_std * (g - mean(g) - y * mean(g*y))
        for (int ch = 0; ch < c; ++ch) {
          const float* y = n.value.data() + static_cast<size_t>(ch) * hw;
          const float* g = n.grad.data() + static_cast<size_t>(ch) * hw;
          float* dx = pa->grad.data() + static_cast<size_t>(ch) * hw;
          double gm = 0.0, gym = 0.0;
          for (int i = 0; i < hw; ++i) {
            gm += g[i];
            gym += static_cast<double>(g[i]) * y[i];
          }
          gm /= hw;
          gym /= hw;
          float is = inv_std[ch];
          for (int i = 0; i < hw; ++i)
            dx[i] += is * static_cast<float>(g[i] - gm - y[i] * gym);
        }
      });
}

Tensor glu(const Tensor& input) {
  if (input.ndim() != 3) throw DimensionError("glu expects [2C,H,W]");
  if (input.dim(0) % 2 != 0)
    throw DimensionError("glu needs an even channel count, got " +
                         std::to_string(input.dim(0)));
  int c = input.dim(0) / 2;
  int hw = input.dim(1) * input.dim(2);
  size_t half = static_cast<size_t>(c) * hw;
  const auto& src = input.data();
  std::vector<float> out(half);
  for (size_t i = 0; i < half; ++i) {
    float b = src[half + i];
    float s = b >= 0.0f ? 1.0f / (1.0f + std::exp(-b))
                        : std::exp(b) / (1.0f + std::exp(b));
    out[i] = src[i] * s;
  }
  auto pa = input.node();
  return make_op({c, input.dim(1), input.dim(2)}, std::move(out), {pa},
                 [pa, half](Node& n) {
                   pa->ensure_grad();
                   for (size_t i = 0; i < half; ++i) {
                     float a = pa->value[i];
                     float b = pa->value[half + i];
                     float s = b >= 0.0f ? 1.0f / (1.0f + std::exp(-b))
                                         : std::exp(b) / (1.0f + std::exp(b));
                     float g = n.grad[i];
                     pa->grad[i] += g * s;
                     pa->grad[half + i] += g * a * s * (1.0f - s);
                   }
                 });
}

}  // namespace manigan
