#include "step/ablation.hpp"

#include <sstream>

#include "step/errors.hpp"
#include "step/model.hpp"

namespace step {
namespace {

ProbeConfig step_base(const ProbeConfig& base) {
  auto cfg = make_probe_config(ProbeVariant::Step, base.d_model, base.num_heads, base.num_classes,
                               base.num_frames, base.tokens_per_frame);
  cfg.seed = base.seed;
  return cfg;
}

std::string_view canonical_preset(std::string_view name) {
  if (name == "table4") return "blocks";
  if (name == "table5") return "tokens";
  if (name == "table6") return "pe";
  if (name == "table7") return "pe-grain";
  if (name == "table8") return "ladder";
  return name;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::vector<std::string> ablation_preset_names() {
  return {"blocks", "tokens", "pe", "pe-grain", "ladder"};
}

std::vector<AblationEntry> ablation_preset(std::string_view name, const ProbeConfig& base) {
  const auto s = step_base(base);
  std::vector<AblationEntry> rows;
  auto with = [&](std::string label, auto&& edit) {
    auto cfg = s;
    edit(cfg);
    rows.push_back({std::move(label), cfg});
  };
  const auto which = canonical_preset(name);
  if (which == "blocks") {
    with("FF + LN + Skip (block)", [](ProbeConfig& c) { c.block_style = BlockStyle::FullBlock; });
    with("LN + Skip (no FF)", [](ProbeConfig& c) { c.block_style = BlockStyle::AttnLNSkip; });
    with("Attention only", [](ProbeConfig&) {});
  } else if (which == "tokens") {
    with("Only global CLS", [](ProbeConfig& c) { c.aggregation = Aggregation::GlobalClsOnly; });
    with("Only patch tokens", [](ProbeConfig& c) { c.aggregation = Aggregation::PatchOnly; });
    with("Combined", [](ProbeConfig&) {});
  } else if (which == "pe") {
    with("Fixed PE", [](ProbeConfig& c) { c.pe_scheme = PeScheme::FixedSinusoidal; });
    with("Hybrid PE", [](ProbeConfig& c) { c.pe_scheme = PeScheme::Hybrid; });
    with("Learnable PE", [](ProbeConfig&) {});
  } else if (which == "pe-grain") {
    with("Token-wise PE", [](ProbeConfig& c) { c.pe_granularity = PeGranularity::TokenWise; });
    with("Frame-wise PE", [](ProbeConfig&) {});
  } else if (which == "ladder") {
    auto sa = make_probe_config(ProbeVariant::SelfAttn, s.d_model, s.num_heads, s.num_classes,
                                s.num_frames, s.tokens_per_frame);
    sa.seed = s.seed;
    rows.push_back({"Self-Attn probing", sa});
    with("Self-Attn w global CLS", [](ProbeConfig& c) { c.pe_scheme = PeScheme::None; });
    with("Self-Attn w temporal PE", [](ProbeConfig& c) { c.cls_mode = ClsMode::PerFrameCls; });
    with("STEP", [](ProbeConfig&) {});
  } else {
    std::string valid;
    for (const auto& n : ablation_preset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown ablation preset '" + std::string(name) + "'; valid: " + valid +
                      " (or table4..table8)");
  }
  for (const auto& r : rows) r.config.validate();
  return rows;
}

std::vector<AblationEntry> parse_ablation_grid(std::string_view text, const ProbeConfig& base) {
  std::vector<AblationEntry> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    auto fail = [&](const std::string& msg) {
      throw ConfigError("grid line " + std::to_string(line_no) + ": " + msg);
    };
    const auto colon = body.find(':');
    if (colon == std::string::npos) fail("expected '<label>: key=value ...'");
    AblationEntry entry{trim(body.substr(0, colon)), base};
    if (entry.label.empty()) fail("empty row label");
    std::istringstream fields(body.substr(colon + 1));
    std::string kv;
    while (fields >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) fail("expected key=value, got '" + kv + "'");
      try {
        apply_probe_setting(entry.config, kv.substr(0, eq), kv.substr(eq + 1));
      } catch (const ConfigError& e) {
        fail(e.what());
      }
    }
    try {
      entry.config.validate();
    } catch (const ConfigError& e) {
      fail(e.what());
    }
    rows.push_back(std::move(entry));
  }
  if (rows.empty()) throw ConfigError("grid file has no rows");
  return rows;
}

std::vector<AblationRow> run_ablation(const std::vector<AblationEntry>& grid, const Dataset& dataset,
                                      const SymmetricSplit& split, const TrainConfig& cfg,
                                      const std::vector<CorruptionMode>& modes) {
  std::vector<AblationRow> rows;
  for (const auto& entry : grid) {
    auto result = train(init_params<float>(entry.config, entry.config.seed), dataset, cfg);
    auto report = evaluate(result.model, dataset, split, Split::Test, cfg.threads);
    if (!modes.empty()) {
      sensitivity_analysis(result.model, dataset, split, modes, report, Split::Test, cfg.threads);
    }
    rows.push_back({entry.label, entry.config, std::move(report), result.best_epoch});
  }
  return rows;
}

}  // namespace step
