#include "step/tensor.hpp"

#include <sstream>

namespace step {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  std::vector<T> values(numel(shape), value);
  return from_vector(std::move(shape), std::move(values), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::from_vector(Shape shape, std::vector<T> values,
                                 bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_string(shape) + " holds " +
                     std::to_string(numel(shape)) + " elements, got " +
                     std::to_string(values.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::make_shared<std::vector<T>>(std::move(values));
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->ensure_grad();
  return Tensor(std::move(impl));
}

template <class T>
T Tensor<T>::item() const {
  if (size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  }
  return (*impl_->data)[0];
}

template <class T>
void Tensor<T>::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  if (flag) {
    impl_->ensure_grad();
  } else {
    impl_->grad.clear();
  }
}

template <class T>
std::span<T> Tensor<T>::mutable_grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

template <class T>
void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <class T>
Tensor<T> Tensor<T>::clone() const {
  return from_vector(shape(), *impl_->data, requires_grad());
}

template <class T>
Tensor<T> Tensor<T>::share_data() const {
  auto impl = std::make_shared<detail::TensorImpl<T>>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  impl->requires_grad = impl_->requires_grad;
  if (impl->requires_grad) impl->ensure_grad();
  return Tensor(std::move(impl));
}

template <class T>
Tensor<T> Tape<T>::make_output(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl<T>>();
  impl->data = std::make_shared<std::vector<T>>(numel(shape), T(0));
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad && grad_enabled_;
  if (impl->requires_grad) {
    impl->ensure_grad();
    impl->tape = this;
    outputs_.push_back(impl);
  }
  return Tensor<T>(std::move(impl));
}

template <class T>
void Tape<T>::record(std::function<void()> rule) {
  rules_.push_back(std::move(rule));
}

template <class T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape())
                                        : std::string("<undefined>")));
  }
  if (loss.impl()->tape != this) {
    throw ContractError("backward(): loss was not produced on this tape");
  }
  for (auto& out : outputs_) std::fill(out->grad.begin(), out->grad.end(), T(0));
  loss.impl()->grad[0] = T(1);
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
}

template <class T>
void Tape<T>::clear() {
  rules_.clear();
  outputs_.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace step
