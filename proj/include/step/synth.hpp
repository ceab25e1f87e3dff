#pragma once

#include <cstdint>
#include <filesystem>

#include "step/dataset.hpp"

namespace step {

struct SynthConfig {
  std::size_t num_pairs = 5;
  std::size_t num_nsym = 4;
  std::size_t clips_per_class = 60;
  std::size_t frames = 16;
  std::size_t tokens = 8;
  std::size_t dim = 64;
  std::size_t basis = 3;  // sinusoids per trajectory
  double noise_std = 0.1;
  std::uint64_t seed = 42;
  // Per-class split fractions; the remainder goes to test.
  double train_fraction = 0.6;
  double val_fraction = 0.2;

  std::size_t num_classes() const { return 2 * num_pairs + num_nsym; }
  void validate() const;
};

// Classes 2k and 2k+1 share one smooth latent trajectory g_k, played forward
// and backward: patch (t, j) of a class-2k clip is g_k(t) + noise, of a
// class-2k+1 clip g_k(T-1-t) + noise. The remaining classes each get their
// own trajectory plus a constant offset. Frame CLS tokens are per-frame patch
// means. Deterministic in the config.
struct SyntheticData {
  Dataset dataset;
  SymmetricSplit split;
};

SyntheticData generate_synthetic(const SynthConfig& config);

// Writes features/<clip_id>.stepfeat, manifest.txt and pairs.txt under `dir`
// and points the returned manifest's paths at them. Returns bytes written.
std::size_t write_dataset(const std::filesystem::path& dir, SyntheticData& data);

}  // namespace step
