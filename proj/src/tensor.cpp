// SPDX-License-Identifier: Apache-2.0
#include "dpose/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "dpose/error.hpp"

namespace dpose {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

std::span<double> TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

detail::TensorImpl& checked(const std::shared_ptr<detail::TensorImpl>& impl) {
  if (!impl) throw ShapeError("use of an undefined tensor");
  return *impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_vector(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value), requires_grad);
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_vector({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::int64_t Tensor::dim(int axis) const {
  const auto& s = shape();
  const int n = static_cast<int>(s.size());
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  return s[static_cast<std::size_t>(a)];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(checked(impl_).data.size()); }

std::span<const double> Tensor::data() const { return checked(impl_).data; }

std::span<double> Tensor::mutable_data() { return checked(impl_).data; }

double Tensor::item() const {
  const auto& d = checked(impl_).data;
  if (d.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(impl_->shape));
  return d[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("index rank mismatch for shape " + shape_str(s));
  std::int64_t flat = 0;
  std::size_t k = 0;
  for (auto i : index) {
    if (i < 0 || i >= s[k]) throw ShapeError("index out of range on dim " + std::to_string(k));
    flat = flat * s[k] + i;
    ++k;
  }
  return impl_->data[static_cast<std::size_t>(flat)];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

void Tensor::set_requires_grad(bool value) { checked(impl_).requires_grad = value; }

bool Tensor::is_leaf() const { return !checked(impl_).backward_fn; }

bool Tensor::has_grad() const {
  const auto& impl = checked(impl_);
  return !impl.grad.empty() && impl.grad.size() == impl.data.size();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw NumericError("tensor " + shape_str(shape()) + " has no gradient");
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() { return checked(impl_).ensure_grad(); }

void Tensor::zero_grad() {
  auto& impl = checked(impl_);
  impl.grad.assign(impl.data.size(), 0.0);
}

void Tensor::backward() const {
  auto& root = checked(impl_);
  if (root.data.size() != 1) {
    throw ShapeError("backward() needs a scalar root, got shape " + shape_str(root.shape));
  }
  if (!root.requires_grad) throw NumericError("backward() on a tensor that does not require grad");

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack{{impl_.get(), 0}};
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (node->backward_fn) node->grad.assign(node->data.size(), 0.0);
  }
  root.ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (node->backward_fn) node->backward_fn(node->grad);
  }
}

Tensor Tensor::detach() const {
  const auto& impl = checked(impl_);
  return from_vector(impl.shape, impl.data, false);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

namespace {

Tensor build(const char* op, Shape shape, std::vector<double> data, const Tensor* begin, const Tensor* end,
             BackwardFn backward) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw NumericError(std::string(op) + ": non-finite output at flat index " + std::to_string(i));
    }
  }
  auto out = Tensor::from_vector(std::move(shape), std::move(data));
  if (!g_grad_enabled) return out;
  const bool needs = std::any_of(begin, end, [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!needs) return out;
  auto* impl = out.impl();
  impl->requires_grad = true;
  for (const auto* t = begin; t != end; ++t) {
    if (t->defined() && t->requires_grad()) impl->parents.push_back(t->impl_ptr());
  }
  impl->backward_fn = std::move(backward);
  return out;
}

}  // namespace

Tensor make_result(const char* op, Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   BackwardFn backward) {
  return build(op, std::move(shape), std::move(data), inputs.begin(), inputs.end(), std::move(backward));
}

Tensor make_result(const char* op, Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   BackwardFn backward) {
  return build(op, std::move(shape), std::move(data), inputs.data(), inputs.data() + inputs.size(),
               std::move(backward));
}

bool recording(std::initializer_list<Tensor> inputs) {
  if (!g_grad_enabled) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.defined() && t.requires_grad(); });
}

double* grad_target(const Tensor& t) {
  if (!t.defined() || !t.requires_grad()) return nullptr;
  return t.impl()->ensure_grad().data();
}

}  // namespace detail

}  // namespace dpose
