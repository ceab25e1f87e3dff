#include "step/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "step/errors.hpp"

namespace step {
namespace {

// [T][d] table of a random smooth trajectory.
std::vector<float> random_trajectory(std::mt19937_64& rng, const SynthConfig& cfg) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> freq(0.25, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double amp_std = 1.0 / std::sqrt(static_cast<double>(cfg.basis));
  std::vector<double> table(cfg.frames * cfg.dim, 0.0);
  for (std::size_t b = 0; b < cfg.basis; ++b) {
    const double w = freq(rng);
    const double phi = phase(rng);
    std::vector<double> amp(cfg.dim);
    for (auto& a : amp) a = normal(rng) * amp_std;
    for (std::size_t t = 0; t < cfg.frames; ++t) {
      const double tau = cfg.frames > 1 ? static_cast<double>(t) / static_cast<double>(cfg.frames - 1) : 0.0;
      const double s = std::sin(2.0 * std::numbers::pi * w * tau + phi);
      for (std::size_t c = 0; c < cfg.dim; ++c) table[t * cfg.dim + c] += amp[c] * s;
    }
  }
  return {table.begin(), table.end()};
}

std::string clip_name(const std::string& cls, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_%04zu", i);
  return cls + buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_pairs + num_nsym == 0) throw ConfigError("synth: no classes");
  if (clips_per_class == 0 || frames == 0 || tokens == 0 || dim == 0 || basis == 0) {
    throw ConfigError("synth: clips_per_class, frames, tokens, dim and basis must be positive");
  }
  if (!(noise_std >= 0.0)) throw ConfigError("synth: noise_std must be >= 0");
  if (train_fraction <= 0.0 || val_fraction < 0.0 || train_fraction + val_fraction > 1.0) {
    throw ConfigError("synth: invalid split fractions");
  }
}

SyntheticData generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticData out;
  auto& manifest = out.dataset.manifest;
  manifest.frames = cfg.frames;
  manifest.tokens = cfg.tokens;
  manifest.dim = cfg.dim;

  std::vector<std::vector<float>> base(cfg.num_classes());
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t k = 0; k < cfg.num_pairs; ++k) {
    manifest.class_names.push_back("pair" + std::to_string(k) + "_fwd");
    manifest.class_names.push_back("pair" + std::to_string(k) + "_rev");
    auto g = random_trajectory(rng, cfg);
    std::vector<float> reversed(g.size());
    for (std::size_t t = 0; t < cfg.frames; ++t) {
      std::copy_n(g.begin() + (cfg.frames - 1 - t) * cfg.dim, cfg.dim, reversed.begin() + t * cfg.dim);
    }
    base[2 * k] = std::move(g);
    base[2 * k + 1] = std::move(reversed);
    pairs.emplace_back(2 * k, 2 * k + 1);
  }
  for (std::size_t j = 0; j < cfg.num_nsym; ++j) {
    const std::size_t cls = 2 * cfg.num_pairs + j;
    manifest.class_names.push_back("nsym" + std::to_string(j));
    auto h = random_trajectory(rng, cfg);
    std::vector<double> offset(cfg.dim);
    for (auto& o : offset) o = normal(rng);
    for (std::size_t t = 0; t < cfg.frames; ++t)
      for (std::size_t c = 0; c < cfg.dim; ++c)
        h[t * cfg.dim + c] = static_cast<float>(h[t * cfg.dim + c] + offset[c]);
    base[cls] = std::move(h);
  }

  const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * cfg.clips_per_class));
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * cfg.clips_per_class));
  for (std::size_t cls = 0; cls < cfg.num_classes(); ++cls) {
    for (std::size_t i = 0; i < cfg.clips_per_class; ++i) {
      const auto id = clip_name(manifest.class_names[cls], i);
      auto f = FeatureSequence::zeros(id, cfg.frames, cfg.tokens, cfg.dim, true);
      for (std::size_t t = 0; t < cfg.frames; ++t) {
        for (std::size_t j = 0; j < cfg.tokens; ++j) {
          for (std::size_t c = 0; c < cfg.dim; ++c) {
            const double noise = cfg.noise_std > 0.0 ? normal(rng) * cfg.noise_std : 0.0;
            f.patch_tokens[(t * cfg.tokens + j) * cfg.dim + c] =
                static_cast<float>(base[cls][t * cfg.dim + c] + noise);
          }
        }
        for (std::size_t c = 0; c < cfg.dim; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < cfg.tokens; ++j) acc += f.patch_tokens[(t * cfg.tokens + j) * cfg.dim + c];
          (*f.frame_cls)[t * cfg.dim + c] = static_cast<float>(acc / static_cast<double>(cfg.tokens));
        }
      }
      const Split split = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
      manifest.clips.push_back({id, "features/" + id + ".stepfeat", cls, split});
      out.dataset.features.push_back(std::move(f));
    }
  }
  out.split = SymmetricSplit(cfg.num_classes(), std::move(pairs));
  return out;
}

std::size_t write_dataset(const std::filesystem::path& dir, SyntheticData& data) {
  namespace fs = std::filesystem;
  auto& manifest = data.dataset.manifest;
  fs::create_directories(dir / "features");
  std::size_t bytes = 0;
  for (std::size_t i = 0; i < manifest.clips.size(); ++i) {
    const auto encoded = encode_features(data.dataset.features[i]);
    const auto path = dir / manifest.clips[i].feature_path;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(encoded.data()), static_cast<std::streamsize>(encoded.size()));
    if (!out) throw DataError("write failed for '" + path.string() + "'");
    bytes += encoded.size();
  }
  manifest.base_dir = dir;
  const auto manifest_text = format_manifest(manifest);
  const auto pairs_text = format_pairs(data.split, manifest.class_names);
  for (const auto& [name, text] : {std::pair{"manifest.txt", manifest_text}, std::pair{"pairs.txt", pairs_text}}) {
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + (dir / name).string() + "' for writing");
    out << text;
    bytes += text.size();
  }
  return bytes;
}

}  // namespace step
