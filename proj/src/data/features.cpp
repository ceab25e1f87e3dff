#include "step/features.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "step/errors.hpp"
#include "step/random.hpp"

namespace step {
namespace {

constexpr std::size_t kHeaderBytes = 8 + 2 + 1 + 4 * 3;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw DataError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

FeatureSequence FeatureSequence::zeros(std::string clip_id, std::size_t frames,
                                       std::size_t tokens, std::size_t dim,
                                       bool with_cls) {
  FeatureSequence f;
  f.clip_id = std::move(clip_id);
  f.frames = frames;
  f.tokens = tokens;
  f.dim = dim;
  f.patch_tokens.assign(frames * tokens * dim, 0.0f);
  if (with_cls) f.frame_cls = std::vector<float>(frames * dim, 0.0f);
  return f;
}

void FeatureSequence::validate() const {
  if (frames == 0 || tokens == 0 || dim == 0) {
    throw DataError("feature sequence '" + clip_id + "' has an empty dimension");
  }
  if (patch_tokens.size() != frames * tokens * dim) {
    throw DataError("feature sequence '" + clip_id + "': patch token buffer size mismatch");
  }
  if (frame_cls && frame_cls->size() != frames * dim) {
    throw DataError("feature sequence '" + clip_id + "': frame CLS buffer size mismatch");
  }
  auto finite = [](float v) { return std::isfinite(v); };
  if (!std::all_of(patch_tokens.begin(), patch_tokens.end(), finite) ||
      (frame_cls && !std::all_of(frame_cls->begin(), frame_cls->end(), finite))) {
    throw DataError("feature sequence '" + clip_id + "' contains non-finite values");
  }
}

std::vector<std::uint8_t> encode_features(const FeatureSequence& features) {
  features.validate();
  const std::size_t floats =
      features.patch_tokens.size() + (features.frame_cls ? features.frame_cls->size() : 0);
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + floats * 4 + 4);
  out.insert(out.end(), std::begin(kFeatureMagic), std::end(kFeatureMagic));
  put_u16(out, kFeatureVersion);
  out.push_back(features.frame_cls ? 1 : 0);
  put_u32(out, checked_u32(features.frames, "T"));
  put_u32(out, checked_u32(features.tokens, "n"));
  put_u32(out, checked_u32(features.dim, "d"));
  const std::size_t payload_begin = out.size();
  for (float v : features.patch_tokens) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (features.frame_cls) {
    for (float v : *features.frame_cls) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  const auto crc = ::crc32(0L, out.data() + payload_begin,
                           static_cast<uInt>(out.size() - payload_begin));
  put_u32(out, static_cast<std::uint32_t>(crc));
  return out;
}

FeatureSequence decode_features(std::span<const std::uint8_t> bytes,
                                std::string clip_id) {
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kFeatureMagic, 8) != 0) {
    throw BadMagicError("feature container: bad magic");
  }
  if (bytes.size() < kHeaderBytes) {
    throw TruncatedError("feature container: truncated header (" +
                         std::to_string(bytes.size()) + " bytes)");
  }
  const std::uint8_t* p = bytes.data();
  const auto version = get_u16(p + 8);
  if (version != kFeatureVersion) {
    throw VersionMismatchError("feature container: version " + std::to_string(version) +
                               ", expected " + std::to_string(kFeatureVersion));
  }
  const std::uint8_t flags = p[10];
  if (flags & ~1u) throw FormatError("feature container: unknown flag bits");
  FeatureSequence f;
  f.clip_id = std::move(clip_id);
  f.frames = get_u32(p + 11);
  f.tokens = get_u32(p + 15);
  f.dim = get_u32(p + 19);
  if (f.frames == 0 || f.tokens == 0 || f.dim == 0) {
    throw FormatError("feature container: zero dimension in header");
  }
  const std::size_t patch_count = f.frames * f.tokens * f.dim;
  const std::size_t cls_count = (flags & 1u) ? f.frames * f.dim : 0;
  const std::size_t expected = kHeaderBytes + 4 * (patch_count + cls_count) + 4;
  if (bytes.size() < expected) {
    throw TruncatedError("feature container: truncated payload (" +
                         std::to_string(bytes.size()) + " of " +
                         std::to_string(expected) + " bytes)");
  }
  if (bytes.size() > expected) {
    throw FormatError("feature container: " + std::to_string(bytes.size() - expected) +
                      " trailing bytes");
  }
  const std::uint8_t* payload = p + kHeaderBytes;
  const std::size_t payload_bytes = 4 * (patch_count + cls_count);
  const auto crc = static_cast<std::uint32_t>(
      ::crc32(0L, payload, static_cast<uInt>(payload_bytes)));
  if (crc != get_u32(payload + payload_bytes)) {
    throw ChecksumError("feature container: CRC-32 mismatch");
  }
  f.patch_tokens.resize(patch_count);
  for (std::size_t i = 0; i < patch_count; ++i) {
    f.patch_tokens[i] = std::bit_cast<float>(get_u32(payload + 4 * i));
  }
  if (cls_count) {
    std::vector<float> cls(cls_count);
    const std::uint8_t* base = payload + 4 * patch_count;
    for (std::size_t i = 0; i < cls_count; ++i) cls[i] = std::bit_cast<float>(get_u32(base + 4 * i));
    f.frame_cls = std::move(cls);
  }
  return f;
}

void write_features(const std::filesystem::path& path,
                    const FeatureSequence& features) {
  const auto bytes = encode_features(features);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

FeatureSequence read_features(const std::filesystem::path& path,
                              std::string clip_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_features(bytes, std::move(clip_id));
}

std::string CorruptionMode::name() const {
  if (kind == OrderCorruption::Reverse) return "reverse";
  return "shuffle:" + std::to_string(seed);
}

CorruptionMode CorruptionMode::parse(std::string_view text) {
  if (text == "reverse") return reverse();
  if (text == "shuffle") return shuffle(0);
  if (text.starts_with("shuffle:")) {
    const auto digits = text.substr(8);
    std::uint64_t seed = 0;
    for (char c : digits) {
      if (c < '0' || c > '9') throw ConfigError("invalid shuffle seed in '" + std::string(text) + "'");
      seed = seed * 10 + static_cast<std::uint64_t>(c - '0');
    }
    if (digits.empty()) throw ConfigError("invalid shuffle seed in '" + std::string(text) + "'");
    return shuffle(seed);
  }
  throw ConfigError("unknown corruption mode '" + std::string(text) +
                    "'; valid: reverse, shuffle[:seed]");
}

std::vector<std::size_t> corruption_permutation(std::size_t frames,
                                                const CorruptionMode& mode) {
  std::vector<std::size_t> perm(frames);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (mode.kind == OrderCorruption::Reverse) {
    std::reverse(perm.begin(), perm.end());
    return perm;
  }
  std::mt19937_64 rng(mode.seed);
  shuffle_in_place(perm, rng);
  return perm;
}

FeatureSequence permute_frames(const FeatureSequence& features,
                               std::span<const std::size_t> perm) {
  if (perm.size() != features.frames) {
    throw ShapeError("permute_frames: permutation of " + std::to_string(perm.size()) +
                     " frames for a clip of " + std::to_string(features.frames));
  }
  FeatureSequence out = features;
  const std::size_t frame_size = features.tokens * features.dim;
  for (std::size_t t = 0; t < features.frames; ++t) {
    std::copy_n(features.patch_tokens.begin() + perm[t] * frame_size, frame_size,
                out.patch_tokens.begin() + t * frame_size);
    if (features.frame_cls) {
      std::copy_n(features.frame_cls->begin() + perm[t] * features.dim, features.dim,
                  out.frame_cls->begin() + t * features.dim);
    }
  }
  return out;
}

FeatureSequence corrupt_order(const FeatureSequence& features,
                              const CorruptionMode& mode) {
  return permute_frames(features, corruption_permutation(features.frames, mode));
}

}  // namespace step
