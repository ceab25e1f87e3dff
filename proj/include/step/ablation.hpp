#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "step/config.hpp"
#include "step/dataset.hpp"
#include "step/evaluate.hpp"
#include "step/train.hpp"

namespace step {

struct AblationEntry {
  std::string label;
  ProbeConfig config;
};

struct AblationRow {
  std::string label;
  ProbeConfig config;
  EvalReport report;  // test split, plus any requested corruption modes
  std::size_t best_epoch = 0;
};

// Built-in grids over a Step base config:
//   blocks   attention-only vs LN+skip vs full block
//   tokens   global CLS only / patch tokens only / combined
//   pe       fixed / hybrid / learnable
//   pe-grain token-wise vs frame-wise
//   ladder   self-attention probe, +global CLS, +temporal PE, Step
// "table4".."table8" are accepted as aliases in the same order.
std::vector<std::string> ablation_preset_names();
std::vector<AblationEntry> ablation_preset(std::string_view name, const ProbeConfig& base);

// Grid file: one row per line, "<label>: key=value key=value ...", applied on
// top of `base`. '#' starts a comment. Errors name the line and field.
std::vector<AblationEntry> parse_ablation_grid(std::string_view text, const ProbeConfig& base);

// Trains every entry with the same TrainConfig (and each config's own init
// seed) and evaluates it on the test split.
std::vector<AblationRow> run_ablation(const std::vector<AblationEntry>& grid, const Dataset& dataset,
                                      const SymmetricSplit& split, const TrainConfig& cfg,
                                      const std::vector<CorruptionMode>& modes = {});

}  // namespace step
