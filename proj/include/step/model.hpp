#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "step/config.hpp"
#include "step/features.hpp"
#include "step/tensor.hpp"

namespace step {

// Ordered name -> tensor map. Order is the initialization and serialization
// order.
template <class T>
class ParameterSet {
 public:
  void add(std::string name, Tensor<T> tensor);
  bool contains(std::string_view name) const;
  const Tensor<T>& at(std::string_view name) const;
  Tensor<T>& at(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  Tensor<T>& tensor(std::size_t i) { return entries_[i].second; }
  const Tensor<T>& tensor(std::size_t i) const { return entries_[i].second; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

// Trainable parameters of one probe head. Parameter names:
//   temporal_pe, global_cls, query,
//   attn.{q,k,v,o}.{weight,bias}, ln{1,2}.{gamma,beta} (self-attention block),
//   ln_kv.*, ln_ff.* (attentive probe), ff.fc{1,2}.{weight,bias},
//   classifier.{weight,bias}.
template <class T>
struct ProbeModel {
  ProbeConfig config;
  ParameterSet<T> params;

  std::size_t count_params() const;
  void zero_grad();
  // Same config, parameters sharing data with this model, private gradients.
  ProbeModel share_for_worker() const;
  // Deep copy.
  ProbeModel clone() const;

  template <class U>
  ProbeModel<U> cast() const {
    ProbeModel<U> out{config, {}};
    for (const auto& [name, t] : params) out.params.add(name, t.template cast<U>());
    return out;
  }
};

// Weights ~ truncated normal (std 0.02, cut at 2 std), biases 0, LN gain 1,
// learnable PE and global CLS ~ normal std 0.02, hybrid PE offset 0.
// Deterministic in (config, seed).
template <class T>
ProbeModel<T> init_params(const ProbeConfig& config, std::uint64_t seed);

// Standard sinusoidal table: row p, column 2i -> sin(p / 10000^(2i/d)),
// column 2i+1 -> cos(p / 10000^(2i/d)).
template <class T>
Tensor<T> sinusoidal_table(std::size_t rows, std::size_t dim);

// Tokens fed to the attention layer, with the frame each token came from
// (-1 for the global CLS slot).
template <class T>
struct TokenSequence {
  Tensor<T> tokens;  // [L, d]
  std::vector<int> frame_index;
};

// Checks T, n, d of the features against the model config; throws
// ConfigError on mismatch.
void check_feature_dims(const ProbeConfig& config, const FeatureSequence& features);

template <class T>
TokenSequence<T> assemble_tokens(Tape<T>& tape, const ProbeModel<T>& model,
                                 const FeatureSequence& features);

// Logits [C]. When `attention` is non-null it receives the [h,Lq,Lk] weights of
// the probe's attention layer (empty for the linear probe).
template <class T>
Tensor<T> forward(Tape<T>& tape, const ProbeModel<T>& model,
                  const FeatureSequence& features, Tensor<T>* attention = nullptr);

// Forward without recording; returns logits as plain values.
template <class T>
std::vector<T> predict_logits(const ProbeModel<T>& model,
                              const FeatureSequence& features);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template struct ProbeModel<float>;
extern template struct ProbeModel<double>;

}  // namespace step
