#pragma once

#include <optional>
#include <string>
#include <vector>

#include "step/dataset.hpp"
#include "step/features.hpp"
#include "step/model.hpp"

namespace step {

struct ClassConfusion {
  std::size_t cls = 0;
  // The paired class for symmetric classes, otherwise the most frequently
  // predicted wrong class (none when the class has no errors).
  std::optional<std::size_t> partner;
  double rate = 0.0;
  bool is_mirror = false;
};

struct CorruptionResult {
  std::string mode;
  double overall_acc = 0.0;
  double sym_acc = 0.0;
  double nsym_acc = 0.0;
  double delta = 0.0;  // clean overall_acc - corrupted overall_acc
  // Fraction of symmetric-class clips predicted as their paired class.
  double mirror_rate = 0.0;
};

struct EvalReport {
  std::vector<std::string> class_names;
  std::size_t total = 0;
  double overall_acc = 0.0;
  double sym_acc = 0.0;
  double nsym_acc = 0.0;
  std::size_t sym_support = 0;
  std::size_t nsym_support = 0;
  std::vector<std::size_t> support;
  std::vector<double> per_class_acc;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<ClassConfusion> confusions;
  std::vector<CorruptionResult> corruption;
  std::size_t param_count = 0;
  double probe_gflops = 0.0;
};

// Argmax with ties broken toward the lowest class index.
std::size_t argmax(std::span<const float> logits);

// Predicted class for each clip index, optionally after an order corruption.
std::vector<std::size_t> predict(const ProbeModel<float>& model, const Dataset& dataset,
                                 const std::vector<std::size_t>& clip_indices, std::size_t threads,
                                 const std::optional<CorruptionMode>& corruption = std::nullopt);

// Metrics from labels and predictions. Accuracies over an empty group are 0
// with zero support.
EvalReport build_report(const std::vector<std::size_t>& labels,
                        const std::vector<std::size_t>& predictions,
                        const std::vector<std::string>& class_names, const SymmetricSplit& split);

// Evaluates one split (test by default). Throws ContractError when it is empty.
EvalReport evaluate(const ProbeModel<float>& model, const Dataset& dataset,
                    const SymmetricSplit& split, Split which = Split::Test, std::size_t threads = 1);

// Re-evaluates under each corruption mode and appends the results to
// report.corruption.
void sensitivity_analysis(const ProbeModel<float>& model, const Dataset& dataset,
                          const SymmetricSplit& split, const std::vector<CorruptionMode>& modes,
                          EvalReport& report, Split which = Split::Test, std::size_t threads = 1);

// Closed-form multiply-add count of the probe head for one clip; backbone cost
// is excluded.
double estimate_probe_flops(const ProbeConfig& config);

}  // namespace step
