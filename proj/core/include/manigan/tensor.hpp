#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "manigan/errors.hpp"
#include "manigan/rng.hpp"

namespace manigan {

/// Dimension sizes, outermost first. Data is row-major 32-bit float.
using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the computation graph. Values are written once by the op
// that creates the node; gradients are filled during backward().
struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;
  // Scalar reductions stash their double-precision accumulator here so the
  // finite-difference harness is not limited by the float32 readout.
  double exact = std::numeric_limits<double>::quiet_NaN();
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  // Reads this->grad and accumulates into the parents' grad buffers.
  std::function<void(Node&)> backprop;

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  bool is_leaf() const { return parents.empty(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
  }
};

}  // namespace detail

/// Value-semantic handle to a graph node. Copies share the node.
///
/// Values are immutable once produced by an op; only leaf tensors
/// (parameters) may be mutated in place, via raw().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, float value,
                     bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<float> data,
                          bool requires_grad = false);
  static Tensor scalar(float value);
  /// I.i.d. normal entries, mean 0 / given stddev.
  static Tensor randn(const Shape& shape, Rng& rng, float stddev = 1.0f,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(int axis) const;
  int ndim() const;
  int64_t size() const;

  const std::vector<float>& data() const;
  float at(int64_t flat_index) const;
  /// Scalar tensors only.
  float item() const;

  /// Mutable access to a leaf's storage (optimizer updates, test setup).
  std::vector<float>& raw();

  bool requires_grad() const;
  /// Leaves only; flips gradient tracking for subsequent ops.
  void set_requires_grad(bool flag);

  /// Gradient buffer after backward(); throws if absent.
  const std::vector<float>& grad() const;
  bool has_grad() const;
  void zero_grad();

  /// Same values, no history: a fresh leaf that does not require grad.
  Tensor detach() const;
  /// Deep copy into an independent leaf.
  Tensor clone() const;

  /// Reverse-mode sweep from a scalar. Leaf gradients accumulate across
  /// calls until zero_grad(); interior gradients are per-call.
  void backward() const;

  bool all_finite() const;

  detail::NodePtr node() const { return node_; }

 private:
  detail::NodePtr node_;
};

/// Build an op result. requires_grad and the backprop closure are kept only
/// when at least one parent tracks gradients.
Tensor make_op(Shape shape, std::vector<float> value,
               std::vector<detail::NodePtr> parents,
               std::function<void(detail::Node&)> backprop);

// ---- elementwise arithmetic (same shape) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);

// ---- scalar arithmetic ----
Tensor scale(const Tensor& a, float s);
Tensor offset(const Tensor& a, float s);

// ---- pointwise nonlinearities ----
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, float slope = 0.2f);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
/// log(x + eps); eps guards exact zeros.
Tensor log(const Tensor& a, float eps = 0.0f);
/// Numerically stable log(sigmoid(x)).
Tensor log_sigmoid(const Tensor& a);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_abs(const Tensor& a);
/// Per-channel mean over the spatial extent: [C,H,W] -> [C].
Tensor spatial_mean(const Tensor& a);
/// Column-wise mean over rows: [L,d] -> [d].
Tensor mean_rows(const Tensor& a);

// ---- linear algebra ----
/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// weight [out,in], input [in], bias [out] (optional) -> [out]
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor dot(const Tensor& a, const Tensor& b);
/// dot(a,b) / (|a||b| + eps)
Tensor cosine_similarity(const Tensor& a, const Tensor& b, float eps = 1e-8f);

// ---- shape plumbing ----
Tensor reshape(const Tensor& a, const Shape& shape);
/// [m,n] -> [n,m]
Tensor transpose(const Tensor& a);
/// Concatenate along axis 0. All trailing dims must agree.
Tensor concat(const std::vector<Tensor>& parts);
/// Row i of a 2-D tensor -> 1-D.
Tensor row(const Tensor& a, int i);
/// Rows of table selected by index: [V,d] + ids -> [L,d]. Grad scatters.
Tensor embed(const Tensor& table, const std::vector<int>& ids);
/// Repeat a vector [C] at every position of an HxW grid -> [C,H,W].
Tensor tile_spatial(const Tensor& v, int h, int w);
/// Scale channel c of [C,H,W] by s[c].
Tensor scale_channels(const Tensor& a, const Tensor& s);
/// Rows of a 2-D tensor softmaxed independently; 1-D treated as one row.
Tensor softmax(const Tensor& a);

/// Central-difference check of df/dx against the analytic gradient.
/// f must map a leaf tensor to a finite scalar. Returns
/// max_i |analytic_i - numeric_i| / max(1, |analytic_i|).
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double h);

}  // namespace manigan
