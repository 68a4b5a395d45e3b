#include "manigan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace manigan {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

static detail::NodePtr new_leaf(Shape shape, std::vector<float> value,
                                bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(new_leaf(shape, std::vector<float>(numel(shape), 0.0f), requires_grad));
}

Tensor Tensor::full(const Shape& shape, float value, bool requires_grad) {
  return Tensor(new_leaf(shape, std::vector<float>(numel(shape), value), requires_grad));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<float> data,
                         bool requires_grad) {
  if (numel(shape) != static_cast<int64_t>(data.size()))
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  return Tensor(new_leaf(shape, std::move(data), requires_grad));
}

Tensor Tensor::scalar(float value) { return from_data({1}, {value}); }

Tensor Tensor::randn(const Shape& shape, Rng& rng, float stddev,
                     bool requires_grad) {
  std::vector<float> data(static_cast<size_t>(numel(shape)));
  for (auto& v : data) v = static_cast<float>(rng.normal(0.0, stddev));
  return Tensor(new_leaf(shape, std::move(data), requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= ndim())
    throw DimensionError("axis out of range");
  return node_->shape[axis];
}

int Tensor::ndim() const { return static_cast<int>(node_->shape.size()); }

int64_t Tensor::size() const { return node_->size(); }

const std::vector<float>& Tensor::data() const { return node_->value; }

float Tensor::at(int64_t flat_index) const { return node_->value[flat_index]; }

float Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on non-scalar " + shape_str(shape()));
  return node_->value[0];
}

std::vector<float>& Tensor::raw() {
  if (!node_->is_leaf())
    throw StateError("raw() mutation is restricted to leaf tensors");
  return node_->value;
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_->is_leaf())
    throw StateError("requires_grad can only be toggled on leaf tensors");
  node_->requires_grad = flag;
}

const std::vector<float>& Tensor::grad() const {
  if (node_->grad.size() != node_->value.size())
    throw StateError("no gradient present; call backward() first");
  return node_->grad;
}

bool Tensor::has_grad() const {
  return node_->grad.size() == node_->value.size();
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0f); }

Tensor Tensor::detach() const {
  return Tensor(new_leaf(node_->shape, node_->value, false));
}

Tensor Tensor::clone() const {
  return Tensor(new_leaf(node_->shape, node_->value, node_->requires_grad));
}

bool Tensor::all_finite() const {
  for (float v : node_->value)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::backward() const {
  if (size() != 1)
    throw DimensionError("backward() expects a scalar, got " + shape_str(shape()));
  if (!node_->requires_grad)
    throw StateError("backward() on a tensor with no gradient history");

  // Iterative depth-first topological order over grad-tracking nodes.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  struct Frame {
    detail::Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  seen.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior gradients are owned by this sweep; leaves accumulate.
  for (detail::Node* n : order) {
    if (n->is_leaf())
      n->ensure_grad();
    else
      n->grad.assign(n->value.size(), 0.0f);
  }
  node_->grad.assign(1, 1.0f);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

Tensor make_op(Shape shape, std::vector<float> value,
               std::vector<detail::NodePtr> parents,
               std::function<void(detail::Node&)> backprop) {
  bool track = false;
  for (const auto& p : parents)
    if (p->requires_grad) track = true;

  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = track;
  if (track) {
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return Tensor(node);
}

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double h) {
  Tensor probe = x.clone();
  probe.set_requires_grad(true);
  probe.zero_grad();
  Tensor y = f(probe);
  if (y.size() != 1) throw DimensionError("grad_check: f must return a scalar");
  if (!std::isfinite(y.item()))
    throw NumericError("grad_check: f is not finite at x");
  y.backward();
  std::vector<float> analytic = probe.grad();

  // Reductions record their double accumulator on the node; reading it keeps
  // the difference quotient above the float32 rounding floor.
  auto eval = [&f](const Tensor& t) {
    Tensor y = f(t);
    double v = std::isnan(y.node()->exact) ? static_cast<double>(y.item())
                                           : y.node()->exact;
    if (!std::isfinite(v))
      throw NumericError("grad_check: f is not finite near x");
    return v;
  };

  Tensor frozen = x.clone();
  frozen.set_requires_grad(false);
  double worst = 0.0;
  for (size_t i = 0; i < frozen.raw().size(); ++i) {
    float saved = frozen.raw()[i];
    // Snap the step to the float grid so the perturbation is exact.
    float up = static_cast<float>(saved + h);
    float down = static_cast<float>(saved - h);
    double step = static_cast<double>(up) - static_cast<double>(down);
    frozen.raw()[i] = up;
    double fp = eval(frozen);
    frozen.raw()[i] = down;
    double fm = eval(frozen);
    frozen.raw()[i] = saved;
    double numeric = (fp - fm) / step;
    double a = analytic[i];
    double err = std::fabs(a - numeric) / std::max(1.0, std::fabs(a));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace manigan
