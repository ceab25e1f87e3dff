#include "step/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "step/errors.hpp"

namespace step {
namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Display width, counting each UTF-8 code point once.
std::size_t text_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++w;
  return w;
}

Json text_to_object(const std::string& text) {
  Json out = Json::object();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace

Json to_json(const EvalReport& r) {
  Json j;
  j["classes"] = r.class_names;
  j["total"] = r.total;
  j["overall_acc"] = r.overall_acc;
  j["sym_acc"] = r.sym_acc;
  j["nsym_acc"] = r.nsym_acc;
  j["sym_support"] = r.sym_support;
  j["nsym_support"] = r.nsym_support;
  j["support"] = r.support;
  j["per_class_acc"] = r.per_class_acc;
  j["confusion"] = r.confusion;
  Json conf = Json::array();
  for (const auto& c : r.confusions) {
    Json e;
    e["class"] = r.class_names.at(c.cls);
    e["partner"] = c.partner ? Json(r.class_names.at(*c.partner)) : Json(nullptr);
    e["rate"] = c.rate;
    e["is_mirror"] = c.is_mirror;
    conf.push_back(e);
  }
  j["confusions"] = conf;
  Json corr = Json::array();
  for (const auto& c : r.corruption) {
    corr.push_back({{"mode", c.mode},
                    {"overall_acc", c.overall_acc},
                    {"sym_acc", c.sym_acc},
                    {"nsym_acc", c.nsym_acc},
                    {"delta", c.delta},
                    {"mirror_rate", c.mirror_rate}});
  }
  j["corruption"] = corr;
  j["param_count"] = r.param_count;
  j["probe_gflops"] = r.probe_gflops;
  j["probe_gflops_note"] = "head-only closed-form estimate; backbone excluded";
  return j;
}

EvalReport eval_report_from_json(const Json& j) {
  try {
    EvalReport r;
    r.class_names = j.at("classes").get<std::vector<std::string>>();
    r.total = j.at("total").get<std::size_t>();
    r.overall_acc = j.at("overall_acc").get<double>();
    r.sym_acc = j.at("sym_acc").get<double>();
    r.nsym_acc = j.at("nsym_acc").get<double>();
    r.sym_support = j.at("sym_support").get<std::size_t>();
    r.nsym_support = j.at("nsym_support").get<std::size_t>();
    r.support = j.at("support").get<std::vector<std::size_t>>();
    r.per_class_acc = j.at("per_class_acc").get<std::vector<double>>();
    r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    auto index_of = [&](const std::string& name) -> std::size_t {
      for (std::size_t i = 0; i < r.class_names.size(); ++i)
        if (r.class_names[i] == name) return i;
      throw DataError("report: unknown class '" + name + "'");
    };
    for (const auto& e : j.at("confusions")) {
      ClassConfusion c;
      c.cls = index_of(e.at("class").get<std::string>());
      if (!e.at("partner").is_null()) c.partner = index_of(e.at("partner").get<std::string>());
      c.rate = e.at("rate").get<double>();
      c.is_mirror = e.at("is_mirror").get<bool>();
      r.confusions.push_back(c);
    }
    for (const auto& e : j.at("corruption")) {
      r.corruption.push_back({e.at("mode").get<std::string>(), e.at("overall_acc").get<double>(),
                              e.at("sym_acc").get<double>(), e.at("nsym_acc").get<double>(),
                              e.at("delta").get<double>(), e.at("mirror_rate").get<double>()});
    }
    r.param_count = j.at("param_count").get<std::size_t>();
    r.probe_gflops = j.at("probe_gflops").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

Json to_json(const std::vector<EpochRecord>& history) {
  Json out = Json::array();
  for (const auto& h : history) {
    out.push_back({{"epoch", h.epoch},
                   {"train_loss", h.train_loss},
                   {"val_acc", h.val_acc ? Json(*h.val_acc) : Json(nullptr)},
                   {"lr", h.last_lr}});
  }
  return out;
}

Json to_json(const ProbeConfig& config) { return text_to_object(to_canonical_text(config)); }
Json to_json(const TrainConfig& config) { return text_to_object(to_canonical_text(config)); }

Json to_json(const std::vector<AblationRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    out.push_back({{"label", r.label},
                   {"probe", to_json(r.config)},
                   {"best_epoch", r.best_epoch},
                   {"report", to_json(r.report)}});
  }
  return out;
}

Json to_json(const MultiTaskResult& result, const std::vector<std::string>& task_names) {
  Json tasks = Json::array();
  for (std::size_t t = 0; t < result.reports.size(); ++t) {
    tasks.push_back({{"name", task_names.at(t)},
                     {"head_gflops", result.head_gflops.at(t)},
                     {"report", to_json(result.reports[t])}});
  }
  return {{"clips", result.clips},
          {"feature_loads", result.feature_loads},
          {"passes", 1},
          {"shared_gflops", result.shared_gflops},
          {"total_gflops", result.total_gflops},
          {"tasks", tasks}};
}

std::string format_transition(double clean_pct, double corrupted_pct) {
  // Round each side first so the printed change always equals the printed
  // difference.
  const double a = std::round(clean_pct * 100.0) / 100.0;
  const double b = std::round(corrupted_pct * 100.0) / 100.0;
  const double delta = std::round((a - b) * 100.0) / 100.0;
  const char* arrow = delta < 0 ? "↑" : "↓";
  return fixed(a, 2) + " → " + fixed(b, 2) + " (" + arrow + " " + fixed(std::abs(delta), 2) + ")";
}

std::string format_count(std::size_t n) {
  auto digits = std::to_string(n);
  std::string out;
  const std::size_t lead = digits.size() % 3;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (i % 3) == lead % 3) out += ',';
    out += digits[i];
  }
  return out;
}

std::string render_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = text_width(header[c]);
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw ContractError("render_table: ragged row");
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], text_width(row[c]));
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string pad(width[c] - text_width(row[c]), ' ');
      if (c) os << "  ";
      if (c == 0) {
        os << row[c] << (row.size() > 1 ? pad : "");
      } else {
        os << pad << row[c];
      }
    }
    os << '\n';
  };
  emit(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& row : rows) emit(row);
  return os.str();
}

std::string render_accuracy_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::vector<std::vector<std::string>> body;
  for (const auto& [label, r] : rows) {
    body.push_back({label, fixed(static_cast<double>(r.param_count) / 1e6, 3),
                    fixed(r.probe_gflops, 3), pct(r.sym_acc), pct(r.nsym_acc), pct(r.overall_acc)});
  }
  return render_table({"Method", "Train Params (M)", "Head GFLOPs", "Sym Acc", "N-Sym Acc", "Ovr. Acc"},
                      body);
}

std::string render_sensitivity_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::vector<std::string> modes;
  for (const auto& [label, r] : rows)
    for (const auto& c : r.corruption)
      if (std::find(modes.begin(), modes.end(), c.mode) == modes.end()) modes.push_back(c.mode);
  std::vector<std::string> header{"Method"};
  for (const auto& m : modes) header.push_back("clean → " + m);
  std::vector<std::vector<std::string>> body;
  for (const auto& [label, r] : rows) {
    std::vector<std::string> row{label};
    for (const auto& m : modes) {
      auto it = std::find_if(r.corruption.begin(), r.corruption.end(),
                             [&](const CorruptionResult& c) { return c.mode == m; });
      row.push_back(it == r.corruption.end()
                        ? "-"
                        : format_transition(100.0 * r.overall_acc, 100.0 * it->overall_acc));
    }
    body.push_back(std::move(row));
  }
  return render_table(header, body);
}

std::string render_confusion_table(const EvalReport& r) {
  std::vector<std::vector<std::string>> body;
  for (const auto& c : r.confusions) {
    body.push_back({r.class_names.at(c.cls), pct(r.per_class_acc.at(c.cls)),
                    c.partner ? r.class_names.at(*c.partner) : "-",
                    c.partner ? pct(c.rate) : "-", c.is_mirror ? "pair" : "top"});
  }
  return render_table({"Class", "Acc", "Most common confusion", "Rate", "Kind"}, body);
}

std::string render_ablation_table(const std::vector<AblationRow>& rows) {
  std::vector<std::vector<std::string>> body;
  for (const auto& row : rows) {
    body.push_back({row.label, format_count(row.report.param_count), pct(row.report.sym_acc),
                    pct(row.report.nsym_acc), pct(row.report.overall_acc)});
  }
  return render_table({"Method", "Params", "Sym Acc", "N-Sym Acc", "Ovr. Acc"}, body);
}

std::string render_multitask_table(const MultiTaskResult& result,
                                   const std::vector<std::string>& task_names) {
  std::vector<std::string> header{"Method", "# Passes", "GFLOPs/clip", "Feature loads"};
  std::vector<std::string> row{"shared pass + heads", "1", fixed(result.total_gflops, 3),
                               std::to_string(result.feature_loads)};
  for (std::size_t t = 0; t < result.reports.size(); ++t) {
    header.push_back(task_names.at(t) + " Acc.");
    row.push_back(pct(result.reports[t].overall_acc));
  }
  return render_table(header, {row});
}

}  // namespace step
