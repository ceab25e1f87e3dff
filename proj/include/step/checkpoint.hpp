#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "step/model.hpp"

namespace step {

inline constexpr char kCheckpointMagic[8] = {'S', 'T', 'E', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

// Layout (little endian): magic "STEPCKPT", u16 version, u32 length + canonical
// probe config text, u32 length + free-form metadata text, u32 tensor count,
// then per tensor: u16 name length + name, u8 dtype (1 = f32), u8 rank,
// u32 extents, f32 payload. A trailing u32 CRC-32 covers every byte after the
// version field.
struct Checkpoint {
  ProbeModel<float> model;
  std::string metadata;
};

std::vector<std::uint8_t> encode_checkpoint(const ProbeModel<float>& model,
                                            std::string_view metadata = {});
// Validates the parameter set against the stored config.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ProbeModel<float>& model,
                     std::string_view metadata = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace step
