// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dpose {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(std::span<const double>)> backward_fn;

  std::span<double> ensure_grad();
};

}  // namespace detail

/// Dense row-major array of doubles with reverse-mode gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same buffer. Operations in
/// ops.hpp return new tensors and, when gradient recording is enabled and an
/// input requires gradients, remember how to push gradients back to their
/// inputs. Calling backward() on a scalar result accumulates d(result)/d(leaf)
/// into every reachable leaf that requires gradients.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int ndim() const { return static_cast<int>(shape().size()); }
  // Negative axes count from the back.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;

  std::span<const double> data() const;
  // Untracked in-place access, for initialisation and optimizer updates.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  void backward() const;

  // Fresh leaf holding a copy of the data.
  Tensor detach() const;

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

bool grad_enabled();

/// Disables graph recording for the lifetime of the guard (eval / inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

using BackwardFn = std::function<void(std::span<const double>)>;

/// Wraps freshly computed `data` as an op output. Rejects non-finite values
/// (naming `op`). The backward closure is attached only when recording is on
/// and one of `inputs` requires gradients.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::initializer_list<Tensor> inputs, BackwardFn backward);
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   const std::vector<Tensor>& inputs, BackwardFn backward);

// True when an op over `inputs` would record a backward closure.
bool recording(std::initializer_list<Tensor> inputs);

// Gradient buffer of `t` if it participates in differentiation, else nullptr.
double* grad_target(const Tensor& t);

}  // namespace detail

}  // namespace dpose
