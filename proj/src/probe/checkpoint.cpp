#include "step/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "step/errors.hpp"

namespace step {
namespace {

constexpr std::uint8_t kDtypeF32 = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void text32(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw TruncatedError("checkpoint: truncated");
  }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

constexpr std::size_t kPrefix = 8 + 2;

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ProbeModel<float>& model,
                                            std::string_view metadata) {
  Writer w;
  w.bytes.insert(w.bytes.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  w.u16(kCheckpointVersion);
  w.text32(to_canonical_text(model.config));
  w.text32(metadata);
  w.u32(static_cast<std::uint32_t>(model.params.size()));
  for (const auto& [name, t] : model.params) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes.insert(w.bytes.end(), name.begin(), name.end());
    w.u8(kDtypeF32);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    for (float v : t.data()) w.u32(std::bit_cast<std::uint32_t>(v));
  }
  const auto crc = ::crc32(0L, w.bytes.data() + kPrefix,
                           static_cast<uInt>(w.bytes.size() - kPrefix));
  w.u32(static_cast<std::uint32_t>(crc));
  return std::move(w.bytes);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw BadMagicError("checkpoint: bad magic");
  }
  if (bytes.size() < kPrefix + 4) throw TruncatedError("checkpoint: truncated");
  Reader r(bytes);
  r.text(8);
  if (const auto version = r.u16(); version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint: version " + std::to_string(version) +
                               ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto body = bytes.subspan(0, bytes.size() - 4);
  Reader tail(bytes.subspan(bytes.size() - 4));
  const auto crc = static_cast<std::uint32_t>(
      ::crc32(0L, body.data() + kPrefix, static_cast<uInt>(body.size() - kPrefix)));
  Reader br(body);
  br.text(kPrefix);
  const std::string config_text = br.text(br.u32());
  if (crc != tail.u32()) throw ChecksumError("checkpoint: CRC-32 mismatch");

  Checkpoint ckpt;
  const auto config = probe_config_from_text(config_text);
  ckpt.metadata = br.text(br.u32());
  const auto reference = init_params<float>(config, 0);
  const std::uint32_t count = br.u32();
  if (count != reference.params.size()) {
    throw FormatError("checkpoint: " + std::to_string(count) + " tensors, config expects " +
                      std::to_string(reference.params.size()));
  }
  ckpt.model.config = config;
  for (const auto& [ref_name, ref] : reference.params) {
    std::string name = br.text(br.u16());
    if (name != ref_name) {
      throw FormatError("checkpoint: tensor '" + name + "' where '" + ref_name + "' expected");
    }
    if (br.u8() != kDtypeF32) throw FormatError("checkpoint: unsupported dtype for '" + name + "'");
    Shape shape(br.u8());
    for (auto& e : shape) e = br.u32();
    if (shape != ref.shape()) {
      throw FormatError("checkpoint: tensor '" + name + "' has shape " + shape_string(shape) +
                        ", expected " + shape_string(ref.shape()));
    }
    std::vector<float> values(numel(shape));
    for (auto& v : values) v = std::bit_cast<float>(br.u32());
    ckpt.model.params.add(std::move(name), Tensor<float>::from_vector(shape, std::move(values), true));
  }
  if (br.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const ProbeModel<float>& model,
                     std::string_view metadata) {
  const auto bytes = encode_checkpoint(model, metadata);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace step
