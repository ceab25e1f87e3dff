#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "step/ablation.hpp"
#include "step/evaluate.hpp"
#include "step/multitask.hpp"
#include "step/train.hpp"

namespace step {

using Json = nlohmann::ordered_json;

inline constexpr int kReportVersion = 1;

Json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const Json& j);
Json to_json(const std::vector<EpochRecord>& history);
Json to_json(const ProbeConfig& config);
Json to_json(const TrainConfig& config);
Json to_json(const std::vector<AblationRow>& rows);
Json to_json(const MultiTaskResult& result, const std::vector<std::string>& task_names);

// Percentages with two decimals and the signed change, e.g.
// format_transition(87.02, 42.26) == "87.02 → 42.26 (↓ 44.76)".
std::string format_transition(double clean_pct, double corrupted_pct);

// Groups digits by thousands: 1234567 -> "1,234,567".
std::string format_count(std::size_t n);

// Plain text tables. `label` names the probe in the first column.
std::string render_accuracy_table(const std::vector<std::pair<std::string, EvalReport>>& rows);
std::string render_sensitivity_table(const std::vector<std::pair<std::string, EvalReport>>& rows);
std::string render_confusion_table(const EvalReport& report);
std::string render_ablation_table(const std::vector<AblationRow>& rows);
std::string render_multitask_table(const MultiTaskResult& result,
                                   const std::vector<std::string>& task_names);

// Columns padded to the widest cell; first column left aligned, others right.
std::string render_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows);

}  // namespace step
