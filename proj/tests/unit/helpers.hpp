#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "step/features.hpp"
#include "step/model.hpp"
#include "step/ops.hpp"
#include "step/tensor.hpp"

namespace testutil {

inline step::FeatureSequence random_features(std::mt19937_64& rng, std::size_t frames, std::size_t tokens,
                                             std::size_t dim, bool with_cls = true,
                                             std::string id = "clip") {
  std::normal_distribution<float> n01(0.0f, 1.0f);
  auto f = step::FeatureSequence::zeros(std::move(id), frames, tokens, dim, with_cls);
  for (auto& v : f.patch_tokens) v = n01(rng);
  if (with_cls)
    for (auto& v : *f.frame_cls) v = n01(rng);
  return f;
}

template <class T>
step::Tensor<T> random_tensor(std::mt19937_64& rng, step::Shape shape, bool requires_grad = true,
                              double scale = 1.0) {
  std::normal_distribution<double> n01(0.0, scale);
  std::vector<T> v(step::numel(shape));
  for (auto& x : v) x = static_cast<T>(n01(rng));
  return step::Tensor<T>::from_vector(std::move(shape), std::move(v), requires_grad);
}

// Redraws every parameter at unit-gain scale: weights with std 1/sqrt(fan_in),
// everything else (PE, CLS, biases) with std 1, LN gains at 1.
template <class T>
void nondegenerate(step::ProbeModel<T>& model, std::mt19937_64& rng) {
  for (auto& [name, t] : model.params) {
    if (name.ends_with(".gamma")) {
      std::fill(t.mutable_data().begin(), t.mutable_data().end(), T(1));
      continue;
    }
    double std_dev = 1.0;
    if (name.ends_with(".weight")) std_dev = 1.0 / std::sqrt(static_cast<double>(t.shape()[0]));
    std::normal_distribution<double> dist(0.0, std_dev);
    for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
  }
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

enum class Stencil {
  Central,    // (f(x+h) - f(x-h)) / 2h
  FivePoint,  // fourth-order: (8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h
};

// Compares the tape gradient of every element of every leaf with a finite
// difference of `loss_fn`. The relative error of one element is
// |analytic - numeric| / (|numeric| + 1e-8).
inline GradCheck grad_check(std::vector<step::Tensor<double>> leaves,
                            const std::function<step::Tensor<double>(step::Tape<double>&)>& loss_fn,
                            double eps = 1e-3, Stencil stencil = Stencil::Central) {
  for (auto& l : leaves) l.zero_grad();
  {
    step::Tape<double> tape;
    auto loss = loss_fn(tape);
    tape.backward(loss);
  }
  GradCheck out;
  auto eval = [&] {
    step::Tape<double> tape(false);
    return loss_fn(tape).item();
  };
  for (auto& leaf : leaves) {
    const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    auto data = leaf.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      auto at = [&](double offset) {
        data[i] = saved + offset;
        return eval();
      };
      const double numeric =
          stencil == Stencil::Central
              ? (at(eps) - at(-eps)) / (2.0 * eps)
              : (8.0 * (at(eps) - at(-eps)) - (at(2 * eps) - at(-2 * eps))) / (12.0 * eps);
      data[i] = saved;
      const double rel = std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-8);
      out.max_rel_error = std::max(out.max_rel_error, rel);
      ++out.checked;
    }
  }
  return out;
}

// Weighted sum with fixed random weights, so every output element gets a
// distinct upstream gradient.
inline step::Tensor<double> project(step::Tape<double>& tape, const step::Tensor<double>& y,
                                    const step::Tensor<double>& weights) {
  return step::ops::sum(tape, step::ops::mul(tape, y, weights));
}

// Straight-loop evaluation of an attention-only Step head in double precision,
// written without the tensor library: tokens = [cls; patches + pe[frame]],
// multi-head self-attention with output projection, mean over all tokens,
// linear classifier.
inline std::vector<double> step_loop_oracle(const step::ProbeModel<double>& m,
                                            const step::FeatureSequence& f) {
  const auto& c = m.config;
  const std::size_t d = c.d_model, h = c.num_heads, dh = d / h;
  auto P = [&](const char* name) { return m.params.at(name).data(); };
  const auto pe = P("temporal_pe");
  const auto cls = P("global_cls");
  std::vector<std::vector<double>> x;
  x.emplace_back(cls.begin(), cls.end());
  for (std::size_t t = 0; t < f.frames; ++t) {
    for (std::size_t j = 0; j < f.tokens; ++j) {
      std::vector<double> row(d);
      for (std::size_t k = 0; k < d; ++k) row[k] = f.patch_tokens[(t * f.tokens + j) * d + k] + pe[t * d + k];
      x.push_back(row);
    }
  }
  const std::size_t L = x.size();
  auto affine = [&](const std::vector<double>& in, std::span<const double> w, std::span<const double> b,
                    std::size_t dout) {
    std::vector<double> out(dout);
    for (std::size_t o = 0; o < dout; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < in.size(); ++i) s += in[i] * w[i * dout + o];
      out[o] = s;
    }
    return out;
  };
  std::vector<std::vector<double>> q, k, v;
  for (const auto& row : x) {
    q.push_back(affine(row, P("attn.q.weight"), P("attn.q.bias"), d));
    k.push_back(affine(row, P("attn.k.weight"), P("attn.k.bias"), d));
    v.push_back(affine(row, P("attn.v.weight"), P("attn.v.bias"), d));
  }
  std::vector<double> pooled(d, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    std::vector<double> z(d, 0.0);
    for (std::size_t head = 0; head < h; ++head) {
      std::vector<double> s(L);
      double mx = -1e300;
      for (std::size_t j = 0; j < L; ++j) {
        double dot = 0;
        for (std::size_t e = 0; e < dh; ++e) dot += q[i][head * dh + e] * k[j][head * dh + e];
        s[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double total = 0;
      for (auto& sj : s) total += (sj = std::exp(sj - mx));
      for (std::size_t j = 0; j < L; ++j)
        for (std::size_t e = 0; e < dh; ++e) z[head * dh + e] += s[j] / total * v[j][head * dh + e];
    }
    const auto o = affine(z, P("attn.o.weight"), P("attn.o.bias"), d);
    for (std::size_t e = 0; e < d; ++e) pooled[e] += o[e] / static_cast<double>(L);
  }
  return affine(pooled, P("classifier.weight"), P("classifier.bias"), c.num_classes);
}

}  // namespace testutil
