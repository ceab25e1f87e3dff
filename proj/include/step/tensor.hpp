#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "step/errors.hpp"

namespace step {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <class T>
class Tape;

namespace detail {

template <class T>
struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  std::vector<T> grad;
  bool requires_grad = false;
  // Non-null for tensors produced by a recorded operation.
  const void* tape = nullptr;

  void ensure_grad() {
    if (grad.size() != data->size()) grad.assign(data->size(), T(0));
  }
};

}  // namespace detail

// Dense row-major tensor handle. Copies share storage; use clone() for a deep
// copy. Leaves with requires_grad accumulate gradients across backward() calls
// until zero_grad().
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<T> values,
                            bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t size() const { return impl_->data->size(); }

  std::span<const T> data() const { return *impl_->data; }
  std::span<T> mutable_data() { return *impl_->data; }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag);
  // Empty span when no gradient has been allocated.
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad();
  void zero_grad();
  bool is_leaf() const { return impl_->tape == nullptr; }

  // Deep copy of data; gradient state is not copied.
  Tensor clone() const;
  // A new leaf sharing this tensor's data buffer but owning its own gradient.
  // Used to give each worker a private gradient over shared parameters.
  Tensor share_data() const;

  template <class U>
  Tensor<U> cast() const;

  // Ops and tape internals.
  const std::shared_ptr<detail::TensorImpl<T>>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl<T>> impl)
      : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

// Ordered record of operations. Each op appends one backward rule; backward()
// replays them in reverse. A tape is single-threaded.
template <class T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  // Allocates an op output. When requires_grad is set the output is owned by
  // this tape and receives a gradient buffer.
  Tensor<T> make_output(Shape shape, bool requires_grad);
  void record(std::function<void()> rule);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded rule once, newest first.
  // Intermediate gradients are reset on each call; leaf gradients accumulate.
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return rules_.size(); }
  void clear();

 private:
  bool grad_enabled_;
  std::vector<std::shared_ptr<detail::TensorImpl<T>>> outputs_;
  std::vector<std::function<void()>> rules_;
};

template <class T>
template <class U>
Tensor<U> Tensor<T>::cast() const {
  std::vector<U> out(size());
  const auto src = data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
  return Tensor<U>::from_vector(shape(), std::move(out), requires_grad());
}

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace step
