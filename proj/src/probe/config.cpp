#include "step/config.hpp"

#include <array>
#include <charconv>
#include <sstream>
#include <utility>

#include "step/errors.hpp"

namespace step {
namespace {

template <class E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<ProbeVariant, 4> kVariants{{
    {ProbeVariant::Linear, "linear"},
    {ProbeVariant::Attentive, "attentive"},
    {ProbeVariant::SelfAttn, "selfattn"},
    {ProbeVariant::Step, "step"},
}};
constexpr NameTable<PeScheme, 4> kPeSchemes{{
    {PeScheme::None, "none"},
    {PeScheme::FixedSinusoidal, "fixed"},
    {PeScheme::Learnable, "learnable"},
    {PeScheme::Hybrid, "hybrid"},
}};
constexpr NameTable<PeGranularity, 2> kGranularities{{
    {PeGranularity::FrameWise, "frame"},
    {PeGranularity::TokenWise, "token"},
}};
constexpr NameTable<BlockStyle, 3> kBlockStyles{{
    {BlockStyle::AttnOnly, "attn"},
    {BlockStyle::AttnLNSkip, "attn_ln_skip"},
    {BlockStyle::FullBlock, "full"},
}};
constexpr NameTable<Aggregation, 3> kAggregations{{
    {Aggregation::GlobalClsOnly, "cls"},
    {Aggregation::PatchOnly, "patch"},
    {Aggregation::Combined, "combined"},
}};
constexpr NameTable<ClsMode, 2> kClsModes{{
    {ClsMode::PerFrameCls, "frame"},
    {ClsMode::GlobalCls, "global"},
}};

template <class E, std::size_t N>
std::string_view name_of(const NameTable<E, N>& table, E value) {
  for (const auto& [v, name] : table)
    if (v == value) return name;
  return "?";
}

template <class E, std::size_t N>
E parse_name(const NameTable<E, N>& table, std::string_view s,
             std::string_view what) {
  for (const auto& [v, name] : table)
    if (name == s) return v;
  std::string msg = "invalid " + std::string(what) + " '" + std::string(s) +
                    "'; valid: ";
  for (std::size_t i = 0; i < N; ++i) {
    if (i) msg += ", ";
    msg += table[i].second;
  }
  throw ConfigError(msg);
}

std::uint64_t parse_unsigned(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("field '" + std::string(key) +
                      "': expected a non-negative integer, got '" +
                      std::string(value) + "'");
  }
  return out;
}

}  // namespace

std::string_view to_string(ProbeVariant v) { return name_of(kVariants, v); }
std::string_view to_string(PeScheme v) { return name_of(kPeSchemes, v); }
std::string_view to_string(PeGranularity v) { return name_of(kGranularities, v); }
std::string_view to_string(BlockStyle v) { return name_of(kBlockStyles, v); }
std::string_view to_string(Aggregation v) { return name_of(kAggregations, v); }
std::string_view to_string(ClsMode v) { return name_of(kClsModes, v); }

ProbeVariant parse_probe_variant(std::string_view s) {
  return parse_name(kVariants, s, "probe variant");
}
PeScheme parse_pe_scheme(std::string_view s) {
  return parse_name(kPeSchemes, s, "pe_scheme");
}
PeGranularity parse_pe_granularity(std::string_view s) {
  return parse_name(kGranularities, s, "pe_granularity");
}
BlockStyle parse_block_style(std::string_view s) {
  return parse_name(kBlockStyles, s, "block_style");
}
Aggregation parse_aggregation(std::string_view s) {
  return parse_name(kAggregations, s, "aggregation");
}
ClsMode parse_cls_mode(std::string_view s) {
  return parse_name(kClsModes, s, "cls_mode");
}

void ProbeConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("probe config: " + msg); };
  if (d_model == 0) fail("d_model must be positive");
  if (num_heads == 0) fail("num_heads must be positive");
  if (d_model % num_heads != 0) {
    fail("d_model " + std::to_string(d_model) + " is not divisible by num_heads " +
         std::to_string(num_heads));
  }
  if (num_classes == 0) fail("num_classes must be positive");
  if (num_frames == 0) fail("num_frames must be positive");
  if (tokens_per_frame == 0) fail("tokens_per_frame must be positive");

  switch (variant) {
    case ProbeVariant::Linear:
    case ProbeVariant::Attentive:
      if (pe_scheme != PeScheme::None) {
        fail(std::string(to_string(variant)) + " probe takes no positional encoding");
      }
      break;
    case ProbeVariant::SelfAttn:
      if (cls_mode != ClsMode::PerFrameCls) fail("selfattn baseline uses per-frame CLS tokens");
      if (pe_scheme != PeScheme::None) fail("selfattn baseline takes no positional encoding");
      if (aggregation != Aggregation::Combined) fail("selfattn baseline pools all tokens");
      break;
    case ProbeVariant::Step:
      if (cls_mode == ClsMode::PerFrameCls) {
        if (aggregation != Aggregation::Combined) {
          fail("per-frame CLS mode only supports combined aggregation");
        }
        if (pe_scheme != PeScheme::None && pe_granularity == PeGranularity::TokenWise) {
          fail("token-wise PE requires global CLS mode");
        }
      }
      break;
  }
}

std::size_t ProbeConfig::pe_rows() const {
  return pe_granularity == PeGranularity::TokenWise ? num_frames * tokens_per_frame
                                                    : num_frames;
}

std::size_t ProbeConfig::sequence_length() const {
  switch (variant) {
    case ProbeVariant::Linear:
      return num_frames;
    case ProbeVariant::Attentive:
      return num_frames * (tokens_per_frame + 1);
    case ProbeVariant::SelfAttn:
    case ProbeVariant::Step:
      break;
  }
  if (cls_mode == ClsMode::PerFrameCls) return num_frames * (tokens_per_frame + 1);
  const std::size_t patches = num_frames * tokens_per_frame;
  return aggregation == Aggregation::PatchOnly ? patches : patches + 1;
}

std::size_t ProbeConfig::pooled_tokens() const {
  if (variant == ProbeVariant::Attentive) return 1;
  if (uses_self_attention() && aggregation == Aggregation::GlobalClsOnly) return 1;
  return sequence_length();
}

ProbeConfig make_probe_config(ProbeVariant variant, std::size_t d_model,
                              std::size_t num_heads, std::size_t num_classes,
                              std::size_t num_frames,
                              std::size_t tokens_per_frame) {
  ProbeConfig cfg;
  cfg.variant = variant;
  cfg.d_model = d_model;
  cfg.num_heads = num_heads;
  cfg.num_classes = num_classes;
  cfg.num_frames = num_frames;
  cfg.tokens_per_frame = tokens_per_frame;
  if (variant == ProbeVariant::Step) {
    cfg.cls_mode = ClsMode::GlobalCls;
    cfg.pe_scheme = PeScheme::Learnable;
  } else {
    cfg.cls_mode = ClsMode::PerFrameCls;
    cfg.pe_scheme = PeScheme::None;
  }
  return cfg;
}

void apply_probe_setting(ProbeConfig& cfg, std::string_view key,
                         std::string_view value) {
  if (key == "variant") {
    cfg.variant = parse_probe_variant(value);
  } else if (key == "d_model") {
    cfg.d_model = parse_unsigned(key, value);
  } else if (key == "num_heads") {
    cfg.num_heads = parse_unsigned(key, value);
  } else if (key == "num_classes") {
    cfg.num_classes = parse_unsigned(key, value);
  } else if (key == "num_frames") {
    cfg.num_frames = parse_unsigned(key, value);
  } else if (key == "tokens_per_frame") {
    cfg.tokens_per_frame = parse_unsigned(key, value);
  } else if (key == "pe_scheme") {
    cfg.pe_scheme = parse_pe_scheme(value);
  } else if (key == "pe_granularity") {
    cfg.pe_granularity = parse_pe_granularity(value);
  } else if (key == "block_style") {
    cfg.block_style = parse_block_style(value);
  } else if (key == "aggregation") {
    cfg.aggregation = parse_aggregation(value);
  } else if (key == "cls_mode") {
    cfg.cls_mode = parse_cls_mode(value);
  } else if (key == "seed") {
    cfg.seed = parse_unsigned(key, value);
  } else {
    throw ConfigError("unknown probe field '" + std::string(key) + "'");
  }
}

std::string to_canonical_text(const ProbeConfig& cfg) {
  std::ostringstream os;
  os << "variant=" << to_string(cfg.variant) << '\n'
     << "d_model=" << cfg.d_model << '\n'
     << "num_heads=" << cfg.num_heads << '\n'
     << "num_classes=" << cfg.num_classes << '\n'
     << "num_frames=" << cfg.num_frames << '\n'
     << "tokens_per_frame=" << cfg.tokens_per_frame << '\n'
     << "pe_scheme=" << to_string(cfg.pe_scheme) << '\n'
     << "pe_granularity=" << to_string(cfg.pe_granularity) << '\n'
     << "block_style=" << to_string(cfg.block_style) << '\n'
     << "aggregation=" << to_string(cfg.aggregation) << '\n'
     << "cls_mode=" << to_string(cfg.cls_mode) << '\n'
     << "seed=" << cfg.seed << '\n';
  return os.str();
}

ProbeConfig probe_config_from_text(std::string_view text) {
  ProbeConfig cfg;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("probe config text: malformed line '" + std::string(line) + "'");
    }
    apply_probe_setting(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

}  // namespace step
