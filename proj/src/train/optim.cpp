#include "step/optim.hpp"

#include <cmath>

#include "step/errors.hpp"

namespace step {

template <class T>
void adam_step(std::span<T> param, std::span<const T> grad, std::span<T> m,
               std::span<T> v, std::size_t step, const AdamHyper& h) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw ShapeError("adam_step: state sizes do not match the parameter");
  }
  if (step == 0) throw ContractError("adam_step: step counts from 1");
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  const T c1 = T(1) - static_cast<T>(std::pow(h.beta1, static_cast<double>(step)));
  const T c2 = T(1) - static_cast<T>(std::pow(h.beta2, static_cast<double>(step)));
  const T lr = static_cast<T>(h.learning_rate), eps = static_cast<T>(h.eps);
  const T wd = static_cast<T>(h.weight_decay);
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * grad[i];
    v[i] = b2 * v[i] + (T(1) - b2) * grad[i] * grad[i];
    const T m_hat = m[i] / c1;
    const T v_hat = v[i] / c2;
    param[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * param[i]);
  }
}

template <class T>
void sgd_step(std::span<T> param, std::span<const T> grad, std::span<T> velocity,
              double learning_rate, double momentum, double weight_decay) {
  const T lr = static_cast<T>(learning_rate), mu = static_cast<T>(momentum);
  const T wd = static_cast<T>(weight_decay);
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = mu * velocity[i] + grad[i];
    param[i] -= lr * (velocity[i] + wd * param[i]);
  }
}

template <class T>
Optimizer<T>::Optimizer(const ProbeModel<T>& model, OptimizerKind kind, AdamHyper adam,
                        double momentum)
    : kind_(kind), adam_(adam), momentum_(momentum) {
  for (const auto& [name, t] : model.params) {
    first_.emplace_back(t.size(), T(0));
    if (kind_ == OptimizerKind::Adam) second_.emplace_back(t.size(), T(0));
  }
}

template <class T>
void Optimizer<T>::step(ProbeModel<T>& model, double learning_rate) {
  if (model.params.size() != first_.size()) {
    throw ContractError("optimizer: model does not match optimizer state");
  }
  ++steps_;
  std::size_t i = 0;
  for (auto& [name, t] : model.params) {
    std::span<const T> g = t.grad();
    if (kind_ == OptimizerKind::Adam) {
      AdamHyper h = adam_;
      h.learning_rate = learning_rate;
      adam_step<T>(t.mutable_data(), g, first_[i], second_[i], steps_, h);
    } else {
      sgd_step<T>(t.mutable_data(), g, first_[i], learning_rate, momentum_, adam_.weight_decay);
    }
    ++i;
  }
}

template <class T>
double clip_grad_norm(ProbeModel<T>& model, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : model.params)
    for (T g : t.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& [name, t] : model.params)
      for (T& g : t.mutable_grad()) g *= factor;
  }
  return norm;
}

template void adam_step<float>(std::span<float>, std::span<const float>, std::span<float>,
                               std::span<float>, std::size_t, const AdamHyper&);
template void adam_step<double>(std::span<double>, std::span<const double>, std::span<double>,
                                std::span<double>, std::size_t, const AdamHyper&);
template void sgd_step<float>(std::span<float>, std::span<const float>, std::span<float>, double,
                              double, double);
template void sgd_step<double>(std::span<double>, std::span<const double>, std::span<double>,
                               double, double, double);
template class Optimizer<float>;
template class Optimizer<double>;
template double clip_grad_norm<float>(ProbeModel<float>&, double);
template double clip_grad_norm<double>(ProbeModel<double>&, double);

}  // namespace step
