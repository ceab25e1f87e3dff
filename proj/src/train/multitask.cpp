#include "step/multitask.hpp"

#include <map>

#include "step/errors.hpp"
#include "step/parallel.hpp"

namespace step {

MultiTaskResult multi_task_evaluate(const MultiTaskSpec& spec, std::size_t threads,
                                    const FeatureLoader& loader) {
  if (spec.tasks.empty()) throw ContractError("multi_task_evaluate: no tasks");
  const auto load = loader ? loader : FeatureLoader([](const std::filesystem::path& p, const std::string& id) {
    return read_features(p, id);
  });

  // The first task fixes the clip order; the others are matched by feature path.
  const auto& lead = spec.tasks.front().manifest;
  const auto lead_idx = lead.indices(spec.split);
  if (lead_idx.empty()) {
    throw ContractError("multi_task_evaluate: the " + std::string(to_string(spec.split)) +
                        " split of task '" + spec.tasks.front().name + "' is empty");
  }
  std::vector<std::filesystem::path> paths;
  std::map<std::filesystem::path, std::size_t> slot;
  for (auto i : lead_idx) {
    auto p = lead.resolve(lead.clips[i]).lexically_normal();
    if (!slot.emplace(p, paths.size()).second) {
      throw ContractError("multi_task_evaluate: feature file '" + p.string() + "' listed twice");
    }
    paths.push_back(std::move(p));
  }

  // Per task: slot of each evaluated clip, in that task's manifest order.
  std::vector<std::vector<std::size_t>> task_slots(spec.tasks.size());
  for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
    const auto& task = spec.tasks[t];
    const auto idx = task.manifest.indices(spec.split);
    if (idx.size() != paths.size()) {
      throw ContractError("multi_task_evaluate: task '" + task.name + "' evaluates " +
                          std::to_string(idx.size()) + " clips, task '" + spec.tasks.front().name +
                          "' " + std::to_string(paths.size()));
    }
    if (task.manifest.num_classes() != task.model.config.num_classes) {
      throw ContractError("multi_task_evaluate: task '" + task.name + "' has " +
                          std::to_string(task.manifest.num_classes()) + " classes, its probe " +
                          std::to_string(task.model.config.num_classes));
    }
    for (auto i : idx) {
      const auto p = task.manifest.resolve(task.manifest.clips[i]).lexically_normal();
      auto it = slot.find(p);
      if (it == slot.end()) {
        throw ContractError("multi_task_evaluate: task '" + task.name + "' references '" + p.string() +
                            "', which task '" + spec.tasks.front().name + "' does not");
      }
      task_slots[t].push_back(it->second);
    }
  }

  MultiTaskResult result;
  result.clips = paths.size();
  std::vector<FeatureSequence> features(paths.size());
  for (std::size_t s = 0; s < paths.size(); ++s) {
    features[s] = load(paths[s], lead.clips[lead_idx[s]].clip_id);
    ++result.feature_loads;
  }
  for (const auto& task : spec.tasks) {
    for (const auto& f : features) check_feature_dims(task.model.config, f);
  }

  // preds[t][s]: prediction of head t on clip slot s.
  std::vector<std::vector<std::size_t>> preds(spec.tasks.size(), std::vector<std::size_t>(paths.size()));
  parallel_for(paths.size(), threads, [&](std::size_t s) {
    for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
      preds[t][s] = argmax(predict_logits(spec.tasks[t].model, features[s]));
    }
  });

  result.shared_gflops = spec.shared_gflops;
  result.total_gflops = spec.shared_gflops;
  for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
    const auto& task = spec.tasks[t];
    const auto idx = task.manifest.indices(spec.split);
    std::vector<std::size_t> labels, task_preds;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      labels.push_back(task.manifest.clips[idx[k]].label);
      task_preds.push_back(preds[t][task_slots[t][k]]);
    }
    auto report = build_report(labels, task_preds, task.manifest.class_names, task.pairs);
    report.param_count = task.model.count_params();
    report.probe_gflops = estimate_probe_flops(task.model.config) / 1e9;
    result.head_gflops.push_back(report.probe_gflops);
    result.total_gflops += report.probe_gflops;
    result.reports.push_back(std::move(report));
  }
  return result;
}

}  // namespace step
