#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "step/dataset.hpp"
#include "step/evaluate.hpp"
#include "step/model.hpp"

namespace step {

// One head on the shared features: its own label space and symmetric pairs.
struct TaskSpec {
  std::string name;
  DatasetManifest manifest;
  SymmetricSplit pairs;
  ProbeModel<float> model;
};

struct MultiTaskSpec {
  std::vector<TaskSpec> tasks;
  // Cost of the shared backbone pass per clip, in GFLOPs (0 when unknown).
  double shared_gflops = 0.0;
  Split split = Split::Test;
};

struct MultiTaskResult {
  std::vector<EvalReport> reports;  // index-aligned with spec.tasks
  std::size_t clips = 0;
  std::size_t feature_loads = 0;
  double shared_gflops = 0.0;
  std::vector<double> head_gflops;
  double total_gflops = 0.0;  // shared + sum of heads, per clip
};

using FeatureLoader =
    std::function<FeatureSequence(const std::filesystem::path& path, const std::string& clip_id)>;

// Loads every feature file of the evaluated split once and runs all heads on
// the same in-memory sequence. Every task must list the same feature files in
// that split (ContractError otherwise); a head whose dims disagree with the
// features throws ConfigError.
MultiTaskResult multi_task_evaluate(const MultiTaskSpec& spec, std::size_t threads = 1,
                                    const FeatureLoader& loader = {});

}  // namespace step
