#pragma once

#include <cstddef>
#include <vector>

#include "step/tensor.hpp"

// Differentiable operations. Each op computes its output eagerly and, when any
// input requires a gradient and the tape has gradients enabled, records one
// backward rule on the tape.
namespace step::ops {

// [m,k]x[k,p], [B,m,k]x[B,k,p] or either batch extent equal to 1 (broadcast),
// and [B,m,k]x[k,p].
template <class T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

// Elementwise product.
template <class T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor);

// Sum of all elements; scalar output of shape [].
template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x);

// Max-shifted softmax along `axis`. NaN input raises NumericError.
template <class T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x, std::size_t axis);

// softmax(q k^T / sqrt(d_head)) v for each head. q is [h,Lq,dh], k is
// [h,Lk,dh], v is [h,Lk,dv]. When `weights` is non-null it receives the
// [h,Lq,Lk] attention weights as a constant tensor.
template <class T>
Tensor<T> scaled_dot_attention(Tape<T>& tape, const Tensor<T>& q,
                               const Tensor<T>& k, const Tensor<T>& v,
                               Tensor<T>* weights = nullptr);

// [L,d] -> [h,L,d/h] using contiguous d/h column chunks, and back.
template <class T>
Tensor<T> split_heads(Tape<T>& tape, const Tensor<T>& x, std::size_t heads);
template <class T>
Tensor<T> merge_heads(Tape<T>& tape, const Tensor<T>& x);

// Mean over rows of [L,d] -> [d]. Each column is summed in sorted order so the
// result is bit-identical under any permutation of the rows.
template <class T>
Tensor<T> mean_pool(Tape<T>& tape, const Tensor<T>& x);

// Per-row normalization over the last axis of [L,d] or [d].
template <class T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-5));

// x W + b for x of shape [L,din] or [din]; W is [din,dout], b is [dout].
template <class T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias);

template <class T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x);

// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <class T>
Tensor<T> gelu(Tape<T>& tape, const Tensor<T>& x);

// -log softmax(logits)[label] for logits of shape [C] or [1,C].
template <class T>
Tensor<T> cross_entropy(Tape<T>& tape, const Tensor<T>& logits,
                        std::size_t label);

// Stacks rank-2 tensors with equal column counts.
template <class T>
Tensor<T> concat_rows(Tape<T>& tape, const std::vector<Tensor<T>>& parts);

// [R,d] -> [R*times,d]; row r is repeated `times` times consecutively.
template <class T>
Tensor<T> repeat_rows(Tape<T>& tape, const Tensor<T>& x, std::size_t times);

// Rows [begin,end) of a rank-2 tensor.
template <class T>
Tensor<T> slice_rows(Tape<T>& tape, const Tensor<T>& x, std::size_t begin,
                     std::size_t end);

template <class T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape);

}  // namespace step::ops
