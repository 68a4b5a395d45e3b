#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "manigan/tensor.hpp"

namespace manigan {

using detail::Node;
using detail::NodePtr;

using MatrixRM =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatrixRM>;
using MapCM = Eigen::Map<const MatrixRM>;
using MapV = Eigen::Map<Eigen::VectorXf>;
using MapCV = Eigen::Map<const Eigen::VectorXf>;

static void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// ---- elementwise binary ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<float> out(a.data());
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto pa = a.node(), pb = b.node();
  return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<float> out(a.data());
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  auto pa = a.node(), pb = b.node();
  return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<float> out(a.data());
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  auto pa = a.node(), pb = b.node();
  return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i)
        pa->grad[i] += n.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i)
        pb->grad[i] += n.grad[i] * pa->value[i];
    }
  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0f); }

// ---- scalar ----

Tensor scale(const Tensor& a, float s) {
  std::vector<float> out(a.data());
  for (auto& v : out) v *= s;
  auto pa = a.node();
  return make_op(a.shape(), std::move(out), {pa}, [pa, s](Node& n) {
    pa->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += s * n.grad[i];
  });
}

Tensor offset(const Tensor& a, float s) {
  std::vector<float> out(a.data());
  for (auto& v : out) v += s;
  auto pa = a.node();
  return make_op(a.shape(), std::move(out), {pa}, [pa](Node& n) {
    pa->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
  });
}

// ---- pointwise nonlinearities ----

template <typename Fwd, typename Bwd>
static Tensor pointwise(const Tensor& a, Fwd fwd, Bwd dydx) {
  const auto& av = a.data();
  std::vector<float> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  auto pa = a.node();
  return make_op(a.shape(), std::move(out), {pa}, [pa, dydx](Node& n) {
    pa->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      pa->grad[i] += n.grad[i] * dydx(pa->value[i], n.value[i]);
  });
}

Tensor relu(const Tensor& a) {
  return pointwise(
      a, [](float x) { return x > 0.0f ? x : 0.0f; },
      [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor leaky_relu(const Tensor& a, float slope) {
  return pointwise(
      a, [slope](float x) { return x > 0.0f ? x : slope * x; },
      [slope](float x, float) { return x > 0.0f ? 1.0f : slope; });
}

Tensor sigmoid(const Tensor& a) {
  return pointwise(
      a,
      [](float x) {
        // split by sign to avoid exp overflow
        return x >= 0.0f ? 1.0f / (1.0f + std::exp(-x))
                         : std::exp(x) / (1.0f + std::exp(x));
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor tanh(const Tensor& a) {
  return pointwise(a, [](float x) { return std::tanh(x); },
                   [](float, float y) { return 1.0f - y * y; });
}

Tensor abs(const Tensor& a) {
  return pointwise(a, [](float x) { return std::fabs(x); },
                   [](float x, float) { return x >= 0.0f ? 1.0f : -1.0f; });
}

Tensor square(const Tensor& a) {
  return pointwise(a, [](float x) { return x * x; },
                   [](float x, float) { return 2.0f * x; });
}

Tensor log(const Tensor& a, float eps) {
  return pointwise(a, [eps](float x) { return std::log(x + eps); },
                   [eps](float x, float) { return 1.0f / (x + eps); });
}

Tensor log_sigmoid(const Tensor& a) {
  // log sigmoid(x) = -softplus(-x); gradient is sigmoid(-x).
  return pointwise(
      a,
      [](float x) {
        return x >= 0.0f ? -std::log1p(std::exp(-x))
                         : x - std::log1p(std::exp(x));
      },
      [](float x, float) {
        return x >= 0.0f ? std::exp(-x) / (1.0f + std::exp(-x))
                         : 1.0f / (1.0f + std::exp(x));
      });
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  auto pa = a.node();
  Tensor out = make_op({1}, {static_cast<float>(acc)}, {pa}, [pa](Node& n) {
    pa->ensure_grad();
    float g = n.grad[0];
    for (auto& gv : pa->grad) gv += g;
  });
  out.node()->exact = acc;
  return out;
}

Tensor mean(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  float inv = 1.0f / static_cast<float>(a.size());
  auto pa = a.node();
  Tensor out = make_op({1}, {static_cast<float>(acc * inv)}, {pa},
                       [pa, inv](Node& n) {
                         pa->ensure_grad();
                         float g = n.grad[0] * inv;
                         for (auto& gv : pa->grad) gv += g;
                       });
  out.node()->exact = acc / static_cast<double>(a.size());
  return out;
}

Tensor mean_abs(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += std::fabs(v);
  float inv = 1.0f / static_cast<float>(a.size());
  auto pa = a.node();
  Tensor out = make_op({1}, {static_cast<float>(acc * inv)}, {pa},
                       [pa, inv](Node& n) {
                         pa->ensure_grad();
                         float g = n.grad[0] * inv;
                         for (size_t i = 0; i < pa->grad.size(); ++i)
                           pa->grad[i] +=
                               g * (pa->value[i] >= 0.0f ? 1.0f : -1.0f);
                       });
  out.node()->exact = acc / static_cast<double>(a.size());
  return out;
}

Tensor spatial_mean(const Tensor& a) {
  if (a.ndim() != 3) throw DimensionError("spatial_mean expects [C,H,W]");
  int c = a.dim(0);
  int hw = a.dim(1) * a.dim(2);
  std::vector<float> out(static_cast<size_t>(c));
  const auto& av = a.data();
  for (int k = 0; k < c; ++k) {
    double acc = 0.0;
    for (int i = 0; i < hw; ++i) acc += av[static_cast<size_t>(k) * hw + i];
    out[k] = static_cast<float>(acc / hw);
  }
  auto pa = a.node();
  return make_op({c}, std::move(out), {pa}, [pa, c, hw](Node& n) {
    pa->ensure_grad();
    float inv = 1.0f / static_cast<float>(hw);
    for (int k = 0; k < c; ++k) {
      float g = n.grad[k] * inv;
      for (int i = 0; i < hw; ++i) pa->grad[static_cast<size_t>(k) * hw + i] += g;
    }
  });
}

Tensor mean_rows(const Tensor& a) {
  if (a.ndim() != 2) throw DimensionError("mean_rows expects [L,d]");
  int l = a.dim(0), d = a.dim(1);
  std::vector<float> out(static_cast<size_t>(d));
  const auto& av = a.data();
  for (int j = 0; j < d; ++j) {
    double acc = 0.0;
    for (int r = 0; r < l; ++r) acc += av[static_cast<size_t>(r) * d + j];
    out[j] = static_cast<float>(acc / l);
  }
  auto pa = a.node();
  return make_op({d}, std::move(out), {pa}, [pa, l, d](Node& n) {
    pa->ensure_grad();
    float inv = 1.0f / static_cast<float>(l);
    for (int r = 0; r < l; ++r)
      for (int j = 0; j < d; ++j)
        pa->grad[static_cast<size_t>(r) * d + j] += n.grad[j] * inv;
  });
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw DimensionError("matmul expects 2-D operands");
  int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw DimensionError("matmul: inner dims " + std::to_string(k) + " vs " +
                         std::to_string(k2));
  std::vector<float> out(static_cast<size_t>(m) * n);
  {
    MapCM A(a.data().data(), m, k);
    MapCM B(b.data().data(), k, n);
    MapM C(out.data(), m, n);
    C.noalias() = A * B;
  }
  auto pa = a.node(), pb = b.node();
  return make_op({m, n}, std::move(out), {pa, pb},
                 [pa, pb, m, k, n](Node& node) {
                   MapCM G(node.grad.data(), m, n);
                   if (pa->requires_grad) {
                     pa->ensure_grad();
                     MapCM B(pb->value.data(), k, n);
                     MapM dA(pa->grad.data(), m, k);
                     dA.noalias() += G * B.transpose();
                   }
                   if (pb->requires_grad) {
                     pb->ensure_grad();
                     MapCM A(pa->value.data(), m, k);
                     MapM dB(pb->grad.data(), k, n);
                     dB.noalias() += A.transpose() * G;
                   }
                 });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.ndim() != 1 || weight.ndim() != 2)
    throw DimensionError("linear expects input [in], weight [out,in]");
  int in = input.dim(0), out_dim = weight.dim(0);
  if (weight.dim(1) != in)
    throw DimensionError("linear: weight " + shape_str(weight.shape()) +
                         " does not accept input " + shape_str(input.shape()));
  bool with_bias = bias.defined();
  if (with_bias && (bias.ndim() != 1 || bias.dim(0) != out_dim))
    throw DimensionError("linear: bad bias shape");

  std::vector<float> out(static_cast<size_t>(out_dim));
  {
    MapCM W(weight.data().data(), out_dim, in);
    MapCV x(input.data().data(), in);
    MapV y(out.data(), out_dim);
    y.noalias() = W * x;
    if (with_bias) y += MapCV(bias.data().data(), out_dim);
  }
  auto px = input.node(), pw = weight.node();
  std::vector<NodePtr> parents = {px, pw};
  NodePtr pbias = with_bias ? bias.node() : nullptr;
  if (with_bias) parents.push_back(pbias);
  return make_op({out_dim}, std::move(out), std::move(parents),
                 [px, pw, pbias, in, out_dim](Node& node) {
                   MapCV g(node.grad.data(), out_dim);
                   if (px->requires_grad) {
                     px->ensure_grad();
                     MapCM W(pw->value.data(), out_dim, in);
                     MapV dx(px->grad.data(), in);
                     dx.noalias() += W.transpose() * g;
                   }
                   if (pw->requires_grad) {
                     pw->ensure_grad();
                     MapCV x(px->value.data(), in);
                     MapM dW(pw->grad.data(), out_dim, in);
                     dW.noalias() += g * x.transpose();
                   }
                   if (pbias && pbias->requires_grad) {
                     pbias->ensure_grad();
                     MapV db(pbias->grad.data(), out_dim);
                     db += g;
                   }
                 });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  double acc = 0.0;
  const auto& av = a.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < av.size(); ++i)
    acc += static_cast<double>(av[i]) * bv[i];
  auto pa = a.node(), pb = b.node();
  Tensor out = make_op({1}, {static_cast<float>(acc)}, {pa, pb}, [pa, pb](Node& n) {
    float g = n.grad[0];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < pa->grad.size(); ++i)
        pa->grad[i] += g * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < pb->grad.size(); ++i)
        pb->grad[i] += g * pa->value[i];
    }
  });
  out.node()->exact = acc;
  return out;
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b, float eps) {
  check_same_shape(a, b, "cosine_similarity");
  const auto& av = a.data();
  const auto& bv = b.data();
  double d = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < av.size(); ++i) {
    d += static_cast<double>(av[i]) * bv[i];
    na += static_cast<double>(av[i]) * av[i];
    nb += static_cast<double>(bv[i]) * bv[i];
  }
  double denom = std::sqrt(na) * std::sqrt(nb) + eps;
  float y = static_cast<float>(d / denom);
  auto pa = a.node(), pb = b.node();
  Tensor out = make_op(
      {1}, {y}, {pa, pb},
      [pa, pb, d, na, nb, denom](Node& n) {
        float g = n.grad[0];
        double inv_denom = 1.0 / denom;
        // d/da_i [ d / denom ] with denom treated as |a||b| (+eps)
        double sa = std::sqrt(std::max(na, 1e-30));
        double sb = std::sqrt(std::max(nb, 1e-30));
        if (pa->requires_grad) {
          pa->ensure_grad();
          double c1 = inv_denom;
          double c2 = d * inv_denom * inv_denom * (sb / sa);
          for (size_t i = 0; i < pa->grad.size(); ++i)
            pa->grad[i] += g * static_cast<float>(c1 * pb->value[i] -
                                                  c2 * pa->value[i]);
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          double c1 = inv_denom;
          double c2 = d * inv_denom * inv_denom * (sa / sb);
          for (size_t i = 0; i < pb->grad.size(); ++i)
            pb->grad[i] += g * static_cast<float>(c1 * pa->value[i] -
                                                  c2 * pb->value[i]);
        }
      });
  out.node()->exact = d / denom;
  return out;
}

// ---- shape plumbing ----

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (numel(shape) != a.size())
    throw DimensionError("reshape " + shape_str(a.shape()) + " -> " +
                         shape_str(shape) + " changes element count");
  std::vector<float> out(a.data());
  auto pa = a.node();
  return make_op(shape, std::move(out), {pa}, [pa](Node& n) {
    pa->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw DimensionError("transpose expects a 2-D tensor");
  int m = a.dim(0), n = a.dim(1);
  std::vector<float> out(a.data().size());
  const auto& av = a.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(j) * m + i] = av[static_cast<size_t>(i) * n + j];
  auto pa = a.node();
  return make_op({n, m}, std::move(out), {pa}, [pa, m, n](Node& node) {
    pa->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        pa->grad[static_cast<size_t>(i) * n + j] +=
            node.grad[static_cast<size_t>(j) * m + i];
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  int axis0 = 0;
  size_t total = 0;
  for (const auto& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != tail)
      throw DimensionError("concat: trailing dims differ");
    axis0 += p.dim(0);
    total += p.data().size();
  }
  std::vector<float> out;
  out.reserve(total);
  std::vector<NodePtr> parents;
  parents.reserve(parts.size());
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    parents.push_back(p.node());
  }
  Shape shape = parts[0].shape();
  shape[0] = axis0;
  auto parents_copy = parents;
  return make_op(shape, std::move(out), std::move(parents),
                 [parents_copy](Node& n) {
                   size_t off = 0;
                   for (const auto& p : parents_copy) {
                     if (p->requires_grad) {
                       p->ensure_grad();
                       for (size_t i = 0; i < p->grad.size(); ++i)
                         p->grad[i] += n.grad[off + i];
                     }
                     off += p->value.size();
                   }
                 });
}

Tensor row(const Tensor& a, int i) {
  if (a.ndim() != 2) throw DimensionError("row expects a 2-D tensor");
  if (i < 0 || i >= a.dim(0)) throw DimensionError("row index out of range");
  int d = a.dim(1);
  std::vector<float> out(a.data().begin() + static_cast<size_t>(i) * d,
                         a.data().begin() + static_cast<size_t>(i + 1) * d);
  auto pa = a.node();
  return make_op({d}, std::move(out), {pa}, [pa, i, d](Node& n) {
    pa->ensure_grad();
    for (int j = 0; j < d; ++j)
      pa->grad[static_cast<size_t>(i) * d + j] += n.grad[j];
  });
}

Tensor embed(const Tensor& table, const std::vector<int>& ids) {
  if (table.ndim() != 2) throw DimensionError("embed expects table [V,d]");
  if (ids.empty()) throw EncodingError("embed: empty index list");
  int v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      throw EncodingError("embed: index " + std::to_string(id) +
                          " out of range for table of " + std::to_string(v));
  std::vector<float> out(ids.size() * static_cast<size_t>(d));
  const auto& tv = table.data();
  for (size_t r = 0; r < ids.size(); ++r)
    std::copy_n(tv.begin() + static_cast<size_t>(ids[r]) * d, d,
                out.begin() + r * d);
  auto pt = table.node();
  std::vector<int> ids_copy = ids;
  return make_op({static_cast<int>(ids.size()), d}, std::move(out), {pt},
                 [pt, ids_copy, d](Node& n) {
                   pt->ensure_grad();
                   for (size_t r = 0; r < ids_copy.size(); ++r)
                     for (int j = 0; j < d; ++j)
                       pt->grad[static_cast<size_t>(ids_copy[r]) * d + j] +=
                           n.grad[r * d + j];
                 });
}

Tensor tile_spatial(const Tensor& v, int h, int w) {
  if (v.ndim() != 1) throw DimensionError("tile_spatial expects a vector");
  int c = v.dim(0);
  int hw = h * w;
  std::vector<float> out(static_cast<size_t>(c) * hw);
  for (int k = 0; k < c; ++k)
    std::fill_n(out.begin() + static_cast<size_t>(k) * hw, hw, v.at(k));
  auto pv = v.node();
  return make_op({c, h, w}, std::move(out), {pv}, [pv, c, hw](Node& n) {
    pv->ensure_grad();
    for (int k = 0; k < c; ++k) {
      double acc = 0.0;
      for (int i = 0; i < hw; ++i) acc += n.grad[static_cast<size_t>(k) * hw + i];
      pv->grad[k] += static_cast<float>(acc);
    }
  });
}

Tensor scale_channels(const Tensor& a, const Tensor& s) {
  if (a.ndim() != 3 || s.ndim() != 1 || s.dim(0) != a.dim(0))
    throw DimensionError("scale_channels expects [C,H,W] and [C]");
  int c = a.dim(0);
  int hw = a.dim(1) * a.dim(2);
  std::vector<float> out(a.data());
  for (int k = 0; k < c; ++k) {
    float sk = s.at(k);
    for (int i = 0; i < hw; ++i) out[static_cast<size_t>(k) * hw + i] *= sk;
  }
  auto pa = a.node(), ps = s.node();
  return make_op(a.shape(), std::move(out), {pa, ps},
                 [pa, ps, c, hw](Node& n) {
                   if (pa->requires_grad) {
                     pa->ensure_grad();
                     for (int k = 0; k < c; ++k) {
                       float sk = ps->value[k];
                       for (int i = 0; i < hw; ++i) {
                         size_t idx = static_cast<size_t>(k) * hw + i;
                         pa->grad[idx] += n.grad[idx] * sk;
                       }
                     }
                   }
                   if (ps->requires_grad) {
                     ps->ensure_grad();
                     for (int k = 0; k < c; ++k) {
                       double acc = 0.0;
                       for (int i = 0; i < hw; ++i) {
                         size_t idx = static_cast<size_t>(k) * hw + i;
                         acc += static_cast<double>(n.grad[idx]) * pa->value[idx];
                       }
                       ps->grad[k] += static_cast<float>(acc);
                     }
                   }
                 });
}

Tensor softmax(const Tensor& a) {
  if (a.ndim() > 2) throw DimensionError("softmax expects 1-D or 2-D input");
  int rows = a.ndim() == 2 ? a.dim(0) : 1;
  int cols = a.ndim() == 2 ? a.dim(1) : a.dim(0);
  std::vector<float> out(a.data().size());
  const auto& av = a.data();
  for (int r = 0; r < rows; ++r) {
    const float* x = av.data() + static_cast<size_t>(r) * cols;
    float* y = out.data() + static_cast<size_t>(r) * cols;
    float mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (int j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    float inv = static_cast<float>(1.0 / z);
    for (int j = 0; j < cols; ++j) y[j] *= inv;
  }
  auto pa = a.node();
  return make_op(a.shape(), std::move(out), {pa}, [pa, rows, cols](Node& n) {
    pa->ensure_grad();
    for (int r = 0; r < rows; ++r) {
      const float* y = n.value.data() + static_cast<size_t>(r) * cols;
      const float* g = n.grad.data() + static_cast<size_t>(r) * cols;
      float* dx = pa->grad.data() + static_cast<size_t>(r) * cols;
      double gy = 0.0;
      for (int j = 0; j < cols; ++j) gy += static_cast<double>(g[j]) * y[j];
      for (int j = 0; j < cols; ++j)
        dx[j] += y[j] * (g[j] - static_cast<float>(gy));
    }
  });
}

}  // namespace manigan
