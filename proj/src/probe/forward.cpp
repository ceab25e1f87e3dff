#include "step/errors.hpp"
#include "step/model.hpp"
#include "step/ops.hpp"

namespace step {
namespace {

template <class T>
Tensor<T> constant(Shape shape, std::vector<T> values) {
  return Tensor<T>::from_vector(std::move(shape), std::move(values), false);
}

bool needs_frame_cls(const ProbeConfig& cfg) {
  return cfg.variant == ProbeVariant::Linear ||
         (cfg.uses_self_attention() && cfg.cls_mode == ClsMode::PerFrameCls);
}

// Frame-major rows: for each frame, its CLS token (when `with_cls`) followed by
// its patch tokens.
template <class T>
std::vector<T> frame_rows(const FeatureSequence& f, bool with_cls) {
  std::vector<T> out;
  out.reserve(f.frames * (f.tokens + (with_cls ? 1 : 0)) * f.dim);
  for (std::size_t t = 0; t < f.frames; ++t) {
    if (with_cls) {
      for (float v : f.frame_cls_row(t)) out.push_back(static_cast<T>(v));
    }
    for (float v : f.frame_patches(t)) out.push_back(static_cast<T>(v));
  }
  return out;
}

template <class T>
Tensor<T> pe_table(Tape<T>& tape, const ProbeModel<T>& model) {
  const auto& cfg = model.config;
  switch (cfg.pe_scheme) {
    case PeScheme::FixedSinusoidal:
      return sinusoidal_table<T>(cfg.pe_rows(), cfg.d_model);
    case PeScheme::Learnable:
      return model.params.at("temporal_pe");
    case PeScheme::Hybrid:
      return ops::add(tape, sinusoidal_table<T>(cfg.pe_rows(), cfg.d_model),
                      model.params.at("temporal_pe"));
    case PeScheme::None:
      break;
  }
  throw ContractError("pe_table: no positional encoding configured");
}

template <class T>
Tensor<T> multi_head_attention(Tape<T>& tape, const ParameterSet<T>& p,
                               const Tensor<T>& queries, const Tensor<T>& context,
                               std::size_t heads, Tensor<T>* weights) {
  auto q = ops::split_heads(tape, ops::linear(tape, queries, p.at("attn.q.weight"), p.at("attn.q.bias")), heads);
  auto k = ops::split_heads(tape, ops::linear(tape, context, p.at("attn.k.weight"), p.at("attn.k.bias")), heads);
  auto v = ops::split_heads(tape, ops::linear(tape, context, p.at("attn.v.weight"), p.at("attn.v.bias")), heads);
  auto z = ops::merge_heads(tape, ops::scaled_dot_attention(tape, q, k, v, weights));
  return ops::linear(tape, z, p.at("attn.o.weight"), p.at("attn.o.bias"));
}

template <class T>
Tensor<T> feed_forward(Tape<T>& tape, const ParameterSet<T>& p, const Tensor<T>& x) {
  auto h = ops::gelu(tape, ops::linear(tape, x, p.at("ff.fc1.weight"), p.at("ff.fc1.bias")));
  return ops::linear(tape, h, p.at("ff.fc2.weight"), p.at("ff.fc2.bias"));
}

template <class T>
Tensor<T> layer_norm(Tape<T>& tape, const ParameterSet<T>& p, const std::string& prefix,
                     const Tensor<T>& x) {
  return ops::layer_norm(tape, x, p.at(prefix + ".gamma"), p.at(prefix + ".beta"));
}

}  // namespace

void check_feature_dims(const ProbeConfig& config, const FeatureSequence& features) {
  if (features.frames != config.num_frames || features.tokens != config.tokens_per_frame ||
      features.dim != config.d_model) {
    throw ConfigError("clip '" + features.clip_id + "' has dims (T=" +
                      std::to_string(features.frames) + ", n=" + std::to_string(features.tokens) +
                      ", d=" + std::to_string(features.dim) + "), probe expects (T=" +
                      std::to_string(config.num_frames) + ", n=" +
                      std::to_string(config.tokens_per_frame) + ", d=" +
                      std::to_string(config.d_model) + ")");
  }
  if (needs_frame_cls(config) && !features.frame_cls) {
    throw ConfigError("clip '" + features.clip_id + "' has no frame CLS tokens, required by the " +
                      std::string(to_string(config.variant)) + " probe in this mode");
  }
}

template <class T>
TokenSequence<T> assemble_tokens(Tape<T>& tape, const ProbeModel<T>& model,
                                 const FeatureSequence& features) {
  const auto& cfg = model.config;
  check_feature_dims(cfg, features);
  const std::size_t frames = cfg.num_frames, n = cfg.tokens_per_frame, d = cfg.d_model;
  TokenSequence<T> seq;

  if (cfg.variant == ProbeVariant::Linear) {
    std::vector<T> rows;
    rows.reserve(frames * d);
    for (float v : *features.frame_cls) rows.push_back(static_cast<T>(v));
    seq.tokens = constant<T>({frames, d}, std::move(rows));
    for (std::size_t t = 0; t < frames; ++t) seq.frame_index.push_back(static_cast<int>(t));
    return seq;
  }

  const bool with_cls = cfg.variant == ProbeVariant::Attentive
                            ? features.frame_cls.has_value()
                            : cfg.cls_mode == ClsMode::PerFrameCls;
  const std::size_t per_frame = n + (with_cls ? 1 : 0);
  Tensor<T> x = constant<T>({frames * per_frame, d}, frame_rows<T>(features, with_cls));

  if (cfg.pe_scheme != PeScheme::None) {
    auto table = pe_table(tape, model);
    if (cfg.pe_granularity == PeGranularity::FrameWise) {
      table = ops::repeat_rows(tape, table, per_frame);
    }
    x = ops::add(tape, x, table);
  }

  if (cfg.has_global_cls()) {
    seq.tokens = ops::concat_rows(tape, std::vector<Tensor<T>>{model.params.at("global_cls"), x});
    seq.frame_index.push_back(-1);
  } else {
    seq.tokens = x;
  }
  for (std::size_t t = 0; t < frames; ++t) {
    seq.frame_index.insert(seq.frame_index.end(), per_frame, static_cast<int>(t));
  }
  return seq;
}

template <class T>
Tensor<T> forward(Tape<T>& tape, const ProbeModel<T>& model,
                  const FeatureSequence& features, Tensor<T>* attention) {
  const auto& cfg = model.config;
  const auto& p = model.params;
  const std::size_t d = cfg.d_model;
  auto seq = assemble_tokens(tape, model, features);
  Tensor<T> pooled;

  switch (cfg.variant) {
    case ProbeVariant::Linear:
      if (attention) *attention = Tensor<T>();
      pooled = ops::mean_pool(tape, seq.tokens);
      break;
    case ProbeVariant::Attentive: {
      const auto& query = p.at("query");
      auto context = layer_norm(tape, p, "ln_kv", seq.tokens);
      auto attended = multi_head_attention(tape, p, query, context, cfg.num_heads, attention);
      auto z = ops::add(tape, query, attended);
      auto y = ops::add(tape, z, feed_forward(tape, p, layer_norm(tape, p, "ln_ff", z)));
      pooled = ops::reshape(tape, y, {d});
      break;
    }
    case ProbeVariant::SelfAttn:
    case ProbeVariant::Step: {
      const auto& x = seq.tokens;
      Tensor<T> y;
      switch (cfg.block_style) {
        case BlockStyle::AttnOnly:
          y = multi_head_attention(tape, p, x, x, cfg.num_heads, attention);
          break;
        case BlockStyle::AttnLNSkip:
        case BlockStyle::FullBlock: {
          auto normed = layer_norm(tape, p, "ln1", x);
          y = ops::add(tape, x, multi_head_attention(tape, p, normed, normed, cfg.num_heads, attention));
          if (cfg.block_style == BlockStyle::FullBlock) {
            y = ops::add(tape, y, feed_forward(tape, p, layer_norm(tape, p, "ln2", y)));
          }
          break;
        }
      }
      if (cfg.aggregation == Aggregation::GlobalClsOnly) {
        pooled = ops::reshape(tape, ops::slice_rows(tape, y, 0, 1), {d});
      } else {
        pooled = ops::mean_pool(tape, y);
      }
      break;
    }
  }
  return ops::linear(tape, pooled, p.at("classifier.weight"), p.at("classifier.bias"));
}

template <class T>
std::vector<T> predict_logits(const ProbeModel<T>& model, const FeatureSequence& features) {
  Tape<T> tape(false);
  auto logits = forward(tape, model, features);
  return {logits.data().begin(), logits.data().end()};
}

#define STEP_INSTANTIATE_FORWARD(T)                                                    \
  template TokenSequence<T> assemble_tokens(Tape<T>&, const ProbeModel<T>&,            \
                                            const FeatureSequence&);                   \
  template Tensor<T> forward(Tape<T>&, const ProbeModel<T>&, const FeatureSequence&,   \
                             Tensor<T>*);                                              \
  template std::vector<T> predict_logits(const ProbeModel<T>&, const FeatureSequence&);

STEP_INSTANTIATE_FORWARD(float)
STEP_INSTANTIATE_FORWARD(double)

}  // namespace step
