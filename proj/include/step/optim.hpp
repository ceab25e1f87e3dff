#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "step/model.hpp"

namespace step {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

// One bias-corrected Adam update of a single tensor; `step` counts from 1.
// p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
template <class T>
void adam_step(std::span<T> param, std::span<const T> grad, std::span<T> m,
               std::span<T> v, std::size_t step, const AdamHyper& hyper);

// Heavy-ball momentum with decoupled weight decay.
template <class T>
void sgd_step(std::span<T> param, std::span<const T> grad, std::span<T> velocity,
              double learning_rate, double momentum, double weight_decay);

enum class OptimizerKind { Adam, Sgd };

// Optimizer state for every parameter tensor of one model.
template <class T>
class Optimizer {
 public:
  Optimizer(const ProbeModel<T>& model, OptimizerKind kind, AdamHyper adam, double momentum);

  // Applies one update using the gradients stored in the model's parameters.
  void step(ProbeModel<T>& model, double learning_rate);
  std::size_t steps_taken() const { return steps_; }

 private:
  OptimizerKind kind_;
  AdamHyper adam_;
  double momentum_;
  std::size_t steps_ = 0;
  std::vector<std::vector<T>> first_;
  std::vector<std::vector<T>> second_;
};

// Scales all gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
template <class T>
double clip_grad_norm(ProbeModel<T>& model, double max_norm);

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace step
