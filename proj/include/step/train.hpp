#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "step/dataset.hpp"
#include "step/model.hpp"
#include "step/optim.hpp"

namespace step {

enum class LrSchedule { Constant, Cosine };

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;  // SGD only
  LrSchedule schedule = LrSchedule::Cosine;
  std::size_t warmup_epochs = 5;
  std::uint64_t seed = 42;
  std::optional<double> grad_clip_norm = 1.0;
  std::size_t eval_every = 1;
  // Worker cap for per-clip forward/backward. Results do not depend on it.
  std::size_t threads = 1;

  // Throws ConfigError.
  void validate() const;
};

void apply_train_setting(TrainConfig& cfg, std::string_view key, std::string_view value);
std::string to_canonical_text(const TrainConfig& cfg);

// Learning rate at optimizer step `step` (0-based): linear warmup to the base
// rate over warmup_epochs, then cosine decay to 0 at the last step.
double scheduled_lr(const TrainConfig& cfg, std::size_t step, std::size_t steps_per_epoch);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_acc;
  double last_lr = 0.0;
};

struct TrainResult {
  ProbeModel<float> model;  // best-validation parameters
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::optional<double> best_val_acc;
};

// Minimizes mean cross-entropy over the train split. The shuffle order is drawn
// from cfg.seed and per-clip gradients are summed in batch order, so results
// are reproducible for any thread count. Throws NumericError on a non-finite
// loss and ContractError when the train split is empty or labels exceed C.
TrainResult train(ProbeModel<float> model, const Dataset& dataset, const TrainConfig& cfg);

}  // namespace step
