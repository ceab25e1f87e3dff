#include <cmath>
#include <random>

#include "step/errors.hpp"
#include "step/model.hpp"

namespace step {

template <class T>
void ParameterSet<T>::add(std::string name, Tensor<T> tensor) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(tensor));
}

template <class T>
bool ParameterSet<T>::contains(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

template <class T>
const Tensor<T>& ParameterSet<T>::at(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.first == name) return e.second;
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

template <class T>
Tensor<T>& ParameterSet<T>::at(std::string_view name) {
  for (auto& e : entries_)
    if (e.first == name) return e.second;
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

template <class T>
std::size_t ProbeModel<T>::count_params() const {
  std::size_t total = 0;
  for (const auto& [name, t] : params) total += t.size();
  return total;
}

template <class T>
void ProbeModel<T>::zero_grad() {
  for (auto& [name, t] : params) t.zero_grad();
}

template <class T>
ProbeModel<T> ProbeModel<T>::share_for_worker() const {
  ProbeModel out{config, {}};
  for (const auto& [name, t] : params) out.params.add(name, t.share_data());
  return out;
}

template <class T>
ProbeModel<T> ProbeModel<T>::clone() const {
  ProbeModel out{config, {}};
  for (const auto& [name, t] : params) out.params.add(name, t.clone());
  return out;
}

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  template <class T>
  Tensor<T> truncated_normal(Shape shape, double stddev) {
    std::vector<T> v(numel(shape));
    for (auto& x : v) {
      double z;
      do {
        z = normal_(rng_);
      } while (std::abs(z) > 2.0);
      x = static_cast<T>(z * stddev);
    }
    return Tensor<T>::from_vector(std::move(shape), std::move(v), true);
  }

  template <class T>
  Tensor<T> normal(Shape shape, double stddev) {
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(normal_(rng_) * stddev);
    return Tensor<T>::from_vector(std::move(shape), std::move(v), true);
  }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

constexpr double kInitStd = 0.02;

template <class T>
void add_linear(ParameterSet<T>& params, Initializer& init, const std::string& prefix,
                std::size_t din, std::size_t dout) {
  params.add(prefix + ".weight", init.truncated_normal<T>({din, dout}, kInitStd));
  params.add(prefix + ".bias", Tensor<T>::zeros({dout}, true));
}

template <class T>
void add_layer_norm(ParameterSet<T>& params, const std::string& prefix, std::size_t d) {
  params.add(prefix + ".gamma", Tensor<T>::full({d}, T(1), true));
  params.add(prefix + ".beta", Tensor<T>::zeros({d}, true));
}

template <class T>
void add_attention(ParameterSet<T>& params, Initializer& init, std::size_t d) {
  for (const char* proj : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
    add_linear(params, init, proj, d, d);
  }
}

template <class T>
void add_feed_forward(ParameterSet<T>& params, Initializer& init, std::size_t d) {
  add_linear(params, init, "ff.fc1", d, 4 * d);
  add_linear(params, init, "ff.fc2", 4 * d, d);
}

}  // namespace

template <class T>
ProbeModel<T> init_params(const ProbeConfig& config, std::uint64_t seed) {
  config.validate();
  Initializer init(seed);
  ProbeModel<T> model{config, {}};
  auto& p = model.params;
  const std::size_t d = config.d_model;

  switch (config.variant) {
    case ProbeVariant::Linear:
      break;
    case ProbeVariant::Attentive:
      p.add("query", init.normal<T>({1, d}, kInitStd));
      add_layer_norm(p, "ln_kv", d);
      add_attention(p, init, d);
      add_layer_norm(p, "ln_ff", d);
      add_feed_forward(p, init, d);
      break;
    case ProbeVariant::SelfAttn:
    case ProbeVariant::Step:
      if (config.pe_scheme == PeScheme::Learnable) {
        p.add("temporal_pe", init.normal<T>({config.pe_rows(), d}, kInitStd));
      } else if (config.pe_scheme == PeScheme::Hybrid) {
        p.add("temporal_pe", Tensor<T>::zeros({config.pe_rows(), d}, true));
      }
      if (config.has_global_cls()) p.add("global_cls", init.normal<T>({1, d}, kInitStd));
      if (config.block_style != BlockStyle::AttnOnly) add_layer_norm(p, "ln1", d);
      add_attention(p, init, d);
      if (config.block_style == BlockStyle::FullBlock) {
        add_layer_norm(p, "ln2", d);
        add_feed_forward(p, init, d);
      }
      break;
  }
  add_linear(p, init, "classifier", d, config.num_classes);
  return model;
}

template <class T>
Tensor<T> sinusoidal_table(std::size_t rows, std::size_t dim) {
  std::vector<T> v(rows * dim);
  for (std::size_t pos = 0; pos < rows; ++pos) {
    for (std::size_t c = 0; c < dim; ++c) {
      const double exponent = static_cast<double>(c - c % 2) / static_cast<double>(dim);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      v[pos * dim + c] = static_cast<T>(c % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return Tensor<T>::from_vector({rows, dim}, std::move(v));
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template struct ProbeModel<float>;
template struct ProbeModel<double>;
template ProbeModel<float> init_params<float>(const ProbeConfig&, std::uint64_t);
template ProbeModel<double> init_params<double>(const ProbeConfig&, std::uint64_t);
template Tensor<float> sinusoidal_table<float>(std::size_t, std::size_t);
template Tensor<double> sinusoidal_table<double>(std::size_t, std::size_t);

}  // namespace step
