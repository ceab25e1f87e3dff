#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace step {

enum class ProbeVariant { Linear, Attentive, SelfAttn, Step };
enum class PeScheme { None, FixedSinusoidal, Learnable, Hybrid };
enum class PeGranularity { FrameWise, TokenWise };
enum class BlockStyle { AttnOnly, AttnLNSkip, FullBlock };
enum class Aggregation { GlobalClsOnly, PatchOnly, Combined };
enum class ClsMode { PerFrameCls, GlobalCls };

std::string_view to_string(ProbeVariant v);
std::string_view to_string(PeScheme v);
std::string_view to_string(PeGranularity v);
std::string_view to_string(BlockStyle v);
std::string_view to_string(Aggregation v);
std::string_view to_string(ClsMode v);

// Parsers accept the lower-case names printed by to_string and throw
// ConfigError listing the valid names otherwise.
ProbeVariant parse_probe_variant(std::string_view s);
PeScheme parse_pe_scheme(std::string_view s);
PeGranularity parse_pe_granularity(std::string_view s);
BlockStyle parse_block_style(std::string_view s);
Aggregation parse_aggregation(std::string_view s);
ClsMode parse_cls_mode(std::string_view s);

struct ProbeConfig {
  ProbeVariant variant = ProbeVariant::Step;
  std::size_t d_model = 64;
  std::size_t num_heads = 4;
  std::size_t num_classes = 14;
  std::size_t num_frames = 16;
  std::size_t tokens_per_frame = 8;
  PeScheme pe_scheme = PeScheme::Learnable;
  PeGranularity pe_granularity = PeGranularity::FrameWise;
  BlockStyle block_style = BlockStyle::AttnOnly;
  Aggregation aggregation = Aggregation::Combined;
  ClsMode cls_mode = ClsMode::GlobalCls;
  std::uint64_t seed = 42;

  // Throws ConfigError on the first violated constraint.
  void validate() const;

  bool uses_self_attention() const {
    return variant == ProbeVariant::SelfAttn || variant == ProbeVariant::Step;
  }
  bool has_global_cls() const {
    return uses_self_attention() && cls_mode == ClsMode::GlobalCls &&
           aggregation != Aggregation::PatchOnly;
  }
  bool has_learnable_pe() const {
    return pe_scheme == PeScheme::Learnable || pe_scheme == PeScheme::Hybrid;
  }
  // Rows of the temporal PE table: T for frame-wise, T*n for token-wise.
  std::size_t pe_rows() const;
  // Tokens entering the attention layer.
  std::size_t sequence_length() const;
  // Tokens averaged by the pooling step.
  std::size_t pooled_tokens() const;

  bool operator==(const ProbeConfig&) const = default;
};

// Canonical defaults for each probe family. Step is global CLS + learnable
// frame-wise PE + attention-only block; SelfAttn is per-frame CLS without PE.
ProbeConfig make_probe_config(ProbeVariant variant, std::size_t d_model,
                              std::size_t num_heads, std::size_t num_classes,
                              std::size_t num_frames,
                              std::size_t tokens_per_frame);

// Applies one `key = value` setting. Unknown keys and bad values throw
// ConfigError naming the field.
void apply_probe_setting(ProbeConfig& cfg, std::string_view key,
                         std::string_view value);

// One `key=value` per line in a fixed key order. Stored in checkpoints.
std::string to_canonical_text(const ProbeConfig& cfg);
ProbeConfig probe_config_from_text(std::string_view text);

}  // namespace step
