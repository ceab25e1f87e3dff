#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace step {

// One clip of frozen backbone output: T frames x n patch tokens x d dims, plus
// optional per-frame CLS tokens.
struct FeatureSequence {
  std::string clip_id;
  std::size_t frames = 0;
  std::size_t tokens = 0;
  std::size_t dim = 0;
  std::vector<float> patch_tokens;              // [T][n][d]
  std::optional<std::vector<float>> frame_cls;  // [T][d]

  static FeatureSequence zeros(std::string clip_id, std::size_t frames,
                               std::size_t tokens, std::size_t dim,
                               bool with_cls);

  // Throws DataError on empty dims, size mismatches or non-finite values.
  void validate() const;

  std::span<const float> frame_patches(std::size_t t) const {
    return std::span<const float>(patch_tokens).subspan(t * tokens * dim, tokens * dim);
  }
  std::span<const float> frame_cls_row(std::size_t t) const {
    return std::span<const float>(*frame_cls).subspan(t * dim, dim);
  }

  bool operator==(const FeatureSequence&) const = default;
};

inline constexpr char kFeatureMagic[8] = {'S', 'T', 'E', 'P', 'F', 'E', 'A', 'T'};
inline constexpr std::uint16_t kFeatureVersion = 1;

// Container layout (little endian): magic "STEPFEAT", u16 version, u8 flags
// (bit0: frame CLS present), u32 T, u32 n, u32 d, f32 patch tokens [T][n][d],
// f32 frame CLS [T][d] when flagged, u32 CRC-32 of the float payload.
std::vector<std::uint8_t> encode_features(const FeatureSequence& features);
// `clip_id` is not stored in the container; the caller supplies it.
FeatureSequence decode_features(std::span<const std::uint8_t> bytes,
                                std::string clip_id = {});

void write_features(const std::filesystem::path& path,
                    const FeatureSequence& features);
FeatureSequence read_features(const std::filesystem::path& path,
                              std::string clip_id = {});

enum class OrderCorruption { Reverse, RandomShuffle };

struct CorruptionMode {
  OrderCorruption kind = OrderCorruption::Reverse;
  std::uint64_t seed = 0;

  std::string name() const;
  static CorruptionMode reverse() { return {OrderCorruption::Reverse, 0}; }
  static CorruptionMode shuffle(std::uint64_t seed) {
    return {OrderCorruption::RandomShuffle, seed};
  }
  // "reverse" or "shuffle:<seed>" (seed defaults to 0 for bare "shuffle").
  static CorruptionMode parse(std::string_view text);
};

// Frame permutation the mode applies: output frame i takes input frame
// perm[i].
std::vector<std::size_t> corruption_permutation(std::size_t frames,
                                                const CorruptionMode& mode);
FeatureSequence permute_frames(const FeatureSequence& features,
                               std::span<const std::size_t> perm);
FeatureSequence corrupt_order(const FeatureSequence& features,
                              const CorruptionMode& mode);

}  // namespace step
