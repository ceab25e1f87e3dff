// step: command-line front end for the probing toolkit.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data or format
// error, 4 numeric abort during training.

#include <unistd.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "step/ablation.hpp"
#include "step/checkpoint.hpp"
#include "step/config_file.hpp"
#include "step/errors.hpp"
#include "step/evaluate.hpp"
#include "step/multitask.hpp"
#include "step/report.hpp"
#include "step/synth.hpp"

namespace fs = std::filesystem;
using namespace step;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct UsageError : ConfigError {
  using ConfigError::ConfigError;
};

// Shared options of commands that read a dataset.
struct DataOptions {
  std::string manifest;
  std::string pairs;
  std::string split = "test";
};

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  int verbosity = 0;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Builds a run directory next to its final location and renames it into place,
// so a crashed run never leaves a half-written directory under `out`.
class RunDir {
 public:
  RunDir(fs::path out, bool overwrite) : out_(std::move(out)) {
    if (out_.empty()) throw UsageError("--out is required");
    if (fs::exists(out_) && !fs::is_directory(out_)) {
      throw UsageError("'" + out_.string() + "' exists and is not a directory");
    }
    if (fs::exists(out_) && !fs::is_empty(out_) && !overwrite) {
      throw UsageError("output directory '" + out_.string() + "' is not empty; pass --overwrite");
    }
    const auto parent = out_.has_parent_path() ? out_.parent_path() : fs::path(".");
    fs::create_directories(parent);
    tmp_ = parent / ("." + out_.filename().string() + ".tmp-" + std::to_string(::getpid()));
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }
  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;
  ~RunDir() {
    std::error_code ec;
    if (!committed_) fs::remove_all(tmp_, ec);
  }

  const fs::path& path() const { return tmp_; }
  const fs::path& final_path() const { return out_; }

  void commit() {
    if (fs::exists(out_)) fs::remove_all(out_);
    fs::rename(tmp_, out_);
    committed_ = true;
  }

 private:
  fs::path out_;
  fs::path tmp_;
  bool committed_ = false;
};

std::optional<ConfigFile> load_config(const Common& common) {
  if (common.config.empty()) return std::nullopt;
  return load_config_file(common.config);
}

// Paths in a config file are relative to the file itself.
std::string config_path(const ConfigFile& file, std::string_view section, std::string_view key) {
  const auto* sec = file.section(section);
  if (!sec) return {};
  const auto* e = sec->find(key);
  if (!e) return {};
  fs::path p(e->value);
  if (p.is_relative()) p = fs::path(file.source).parent_path() / p;
  return p.string();
}

// --set section.key=value overrides.
void apply_sets(const std::vector<std::string>& sets, ProbeConfig* probe, TrainConfig* train,
                SynthConfig* synth) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    const auto dot = s.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw UsageError("--set expects section.key=value, got '" + s + "'");
    }
    const auto section = s.substr(0, dot);
    const auto key = s.substr(dot + 1, eq - dot - 1);
    const auto value = s.substr(eq + 1);
    if (section == "probe" && probe) {
      apply_probe_setting(*probe, key, value);
    } else if (section == "train" && train) {
      apply_train_setting(*train, key, value);
    } else if (section == "synth" && synth) {
      apply_synth_setting(*synth, key, value);
    } else {
      throw UsageError("--set: section '" + section + "' does not apply to this command");
    }
  }
}

void resolve_data(const std::optional<ConfigFile>& file, DataOptions& data) {
  if (!file) return;
  if (data.manifest.empty()) data.manifest = config_path(*file, "data", "manifest");
  if (data.pairs.empty()) data.pairs = config_path(*file, "data", "pairs");
  if (const auto* sec = file->section("data")) {
    for (const auto& e : sec->entries) {
      if (e.key == "split") {
        data.split = e.value;
      } else if (e.key != "manifest" && e.key != "pairs") {
        file->fail(e.line, "[data] unknown field '" + e.key + "'");
      }
    }
  }
}

struct LoadedData {
  Dataset dataset;
  SymmetricSplit pairs;
};

LoadedData load_data(const DataOptions& data) {
  if (data.manifest.empty()) throw UsageError("a manifest is required (--manifest or [data] manifest)");
  auto manifest = load_manifest(data.manifest);
  auto dataset = load_dataset(manifest);
  SymmetricSplit pairs = data.pairs.empty() ? SymmetricSplit(manifest.num_classes(), {})
                                            : define_pairs(data.pairs, manifest.class_names);
  return {std::move(dataset), std::move(pairs)};
}

ProbeConfig probe_for_dataset(const Dataset& ds) {
  ProbeConfig cfg;
  cfg.d_model = ds.manifest.dim;
  cfg.num_classes = ds.manifest.num_classes();
  cfg.num_frames = ds.manifest.frames;
  cfg.tokens_per_frame = ds.manifest.tokens;
  return cfg;
}

// Variant defaults first, then file fields, then flags.
ProbeConfig resolve_probe(ProbeConfig base, const std::optional<ConfigFile>& file,
                          const std::string& probe_name) {
  std::string variant = probe_name;
  if (variant.empty() && file) {
    if (const auto* sec = file->section("probe"))
      if (const auto* e = sec->find("variant")) variant = e->value;
  }
  if (!variant.empty()) {
    ProbeVariant v;
    try {
      v = parse_probe_variant(variant);
    } catch (const ConfigError& e) {
      throw UsageError(std::string("--probe: ") + e.what());
    }
    auto seeded = make_probe_config(v, base.d_model, base.num_heads, base.num_classes, base.num_frames,
                                    base.tokens_per_frame);
    seeded.seed = base.seed;
    base = seeded;
  }
  if (file) apply_probe_section(*file, base);
  return base;
}

std::string resolved_config_text(const DataOptions* data, const ProbeConfig* probe,
                                 const TrainConfig* train, const SynthConfig* synth) {
  std::ostringstream os;
  os << "# resolved configuration; rerun with --config on this file\n";
  auto section = [&](const char* name, const std::string& text) {
    os << "\n[" << name << "]\n";
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      os << line.substr(0, eq) << " = " << line.substr(eq + 1) << '\n';
    }
  };
  if (data) {
    os << "\n[data]\nmanifest = " << fs::absolute(data->manifest).string() << '\n';
    if (!data->pairs.empty()) os << "pairs = " << fs::absolute(data->pairs).string() << '\n';
    os << "split = " << data->split << '\n';
  }
  if (synth) section("synth", to_canonical_text(*synth));
  if (probe) section("probe", to_canonical_text(*probe));
  if (train) section("train", to_canonical_text(*train));
  return os.str();
}

Json run_metadata(const std::string& command) {
  return {{"command", command},
          {"report_version", kReportVersion},
          {"feature_container_version", kFeatureVersion},
          {"checkpoint_version", kCheckpointVersion},
          {"frames_note", "head FLOPs assume the manifest's T"}};
}

void print_report(const std::string& label, const EvalReport& report) {
  std::cout << render_accuracy_table({{label, report}});
  if (!report.corruption.empty()) std::cout << '\n' << render_sensitivity_table({{label, report}});
}

// ---------------------------------------------------------------- commands

int cmd_gen_synth(const Common& common, const std::string& out, bool overwrite) {
  SynthConfig cfg;
  const auto file = load_config(common);
  if (file) apply_synth_section(*file, cfg);
  apply_sets(common.sets, nullptr, nullptr, &cfg);
  if (common.seed) cfg.seed = *common.seed;
  cfg.validate();
  auto data = generate_synthetic(cfg);
  RunDir dir(out, overwrite);
  const auto bytes = write_dataset(dir.path(), data);
  write_text(dir.path() / "synth.ini", resolved_config_text(nullptr, nullptr, nullptr, &cfg));
  dir.commit();
  std::cout << "classes " << cfg.num_classes() << " (" << cfg.num_pairs << " pairs, " << cfg.num_nsym
            << " non-symmetric)\n"
            << "clips " << data.dataset.size() << '\n'
            << "bytes " << bytes << '\n'
            << "manifest " << (dir.final_path() / "manifest.txt").string() << '\n';
  return 0;
}

int cmd_train(const Common& common, DataOptions data, const std::string& probe_name,
              const std::string& out, bool overwrite, bool dry_run) {
  const auto file = load_config(common);
  if (file) file->require_sections({"data", "probe", "train"});
  resolve_data(file, data);
  auto loaded = load_data(data);
  auto probe = resolve_probe(probe_for_dataset(loaded.dataset), file, probe_name);
  TrainConfig train_cfg;
  if (file) apply_train_section(*file, train_cfg);
  apply_sets(common.sets, &probe, &train_cfg, nullptr);
  if (common.seed) {
    probe.seed = *common.seed;
    train_cfg.seed = *common.seed;
  }
  train_cfg.threads = common.threads;
  probe.validate();
  train_cfg.validate();

  auto model = init_params<float>(probe, probe.seed);
  const auto resolved = resolved_config_text(&data, &probe, &train_cfg, nullptr);
  if (dry_run) {
    std::cout << resolved << "\nparams " << format_count(model.count_params()) << '\n'
              << "head_gflops " << estimate_probe_flops(probe) / 1e9 << '\n';
    return 0;
  }
  RunDir dir(out, overwrite);
  write_text(dir.path() / "config.ini", resolved);
  const auto t0 = std::chrono::steady_clock::now();
  auto result = train(std::move(model), loaded.dataset, train_cfg);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto report = evaluate(result.model, loaded.dataset, loaded.pairs, parse_split(data.split), common.threads);
  save_checkpoint(dir.path() / "model.stepckpt", result.model, to_canonical_text(train_cfg));

  Json j = run_metadata("train");
  j["probe"] = to_json(probe);
  j["train"] = to_json(train_cfg);
  j["seed"] = train_cfg.seed;
  j["split"] = data.split;
  j["best_epoch"] = result.best_epoch;
  j["train_seconds"] = seconds;
  j["history"] = to_json(result.history);
  j["metrics"] = to_json(report);
  write_text(dir.path() / "report.json", j.dump(2) + "\n");
  const std::string label(to_string(probe.variant));
  write_text(dir.path() / "report.txt", render_accuracy_table({{label, report}}) + "\n" +
                                            render_confusion_table(report));
  dir.commit();
  if (common.verbosity > 0) {
    for (const auto& h : result.history) {
      std::cerr << "epoch " << h.epoch << " loss " << h.train_loss;
      if (h.val_acc) std::cerr << " val " << *h.val_acc;
      std::cerr << '\n';
    }
  }
  print_report(label, report);
  std::cout << "run " << dir.final_path().string() << " (best epoch " << result.best_epoch << ")\n";
  return 0;
}

std::vector<CorruptionMode> parse_modes(const std::vector<std::string>& names) {
  std::vector<CorruptionMode> modes;
  for (const auto& m : names) {
    try {
      modes.push_back(CorruptionMode::parse(m));
    } catch (const Error& e) {
      throw UsageError(std::string("--mode: ") + e.what());
    }
  }
  return modes;
}

int cmd_eval(const Common& common, DataOptions data, const std::string& checkpoint,
             const std::vector<std::string>& mode_names, const std::string& json_out, bool sensitivity) {
  if (checkpoint.empty()) throw UsageError("--checkpoint is required");
  const auto file = load_config(common);
  resolve_data(file, data);
  auto ckpt = load_checkpoint(checkpoint);
  auto loaded = load_data(data);
  auto report = evaluate(ckpt.model, loaded.dataset, loaded.pairs, parse_split(data.split), common.threads);
  if (sensitivity) {
    auto modes = parse_modes(mode_names.empty() ? std::vector<std::string>{"reverse"} : mode_names);
    sensitivity_analysis(ckpt.model, loaded.dataset, loaded.pairs, modes, report, parse_split(data.split),
                         common.threads);
  }
  const std::string label(to_string(ckpt.model.config.variant));
  if (sensitivity) {
    std::cout << render_sensitivity_table({{label, report}});
    std::vector<std::vector<std::string>> rows;
    for (const auto& c : report.corruption) {
      char delta[32], mirror[32];
      std::snprintf(delta, sizeof delta, "%.2f", 100.0 * c.delta);
      std::snprintf(mirror, sizeof mirror, "%.2f", 100.0 * c.mirror_rate);
      rows.push_back({c.mode, delta, mirror});
    }
    std::cout << '\n' << render_table({"Mode", "Δ", "Mirror rate"}, rows);
  } else {
    print_report(label, report);
    std::cout << '\n' << render_confusion_table(report);
  }
  if (!json_out.empty()) {
    Json j = run_metadata(sensitivity ? "sensitivity" : "eval");
    j["checkpoint"] = fs::absolute(checkpoint).string();
    j["probe"] = to_json(ckpt.model.config);
    j["split"] = data.split;
    j["metrics"] = to_json(report);
    write_text(json_out, j.dump(2) + "\n");
  }
  return 0;
}

int cmd_ablate(const Common& common, DataOptions data, const std::string& preset, const std::string& grid,
               const std::vector<std::string>& mode_names, const std::string& out, bool overwrite,
               bool dry_run) {
  if (preset.empty() == grid.empty()) throw UsageError("pass exactly one of --preset or --grid");
  const auto file = load_config(common);
  if (file) file->require_sections({"data", "probe", "train"});
  resolve_data(file, data);
  auto loaded = load_data(data);
  auto base = probe_for_dataset(loaded.dataset);
  if (file) apply_probe_section(*file, base);
  TrainConfig train_cfg;
  if (file) apply_train_section(*file, train_cfg);
  apply_sets(common.sets, &base, &train_cfg, nullptr);
  if (common.seed) {
    base.seed = *common.seed;
    train_cfg.seed = *common.seed;
  }
  train_cfg.threads = common.threads;
  train_cfg.validate();
  const auto entries = preset.empty() ? parse_ablation_grid(read_text(grid), base)
                                      : ablation_preset(preset, base);
  if (dry_run) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& e : entries) {
      rows.push_back({e.label, format_count(init_params<float>(e.config, 0).count_params())});
    }
    std::cout << render_table({"Method", "Params"}, rows);
    return 0;
  }
  RunDir dir(out, overwrite);
  write_text(dir.path() / "config.ini", resolved_config_text(&data, &base, &train_cfg, nullptr));
  const auto rows = run_ablation(entries, loaded.dataset, loaded.pairs, train_cfg, parse_modes(mode_names));
  Json j = run_metadata("ablate");
  j["preset"] = preset.empty() ? Json(nullptr) : Json(preset);
  j["train"] = to_json(train_cfg);
  j["seed"] = train_cfg.seed;
  j["rows"] = to_json(rows);
  write_text(dir.path() / "ablation.json", j.dump(2) + "\n");
  const auto table = render_ablation_table(rows);
  write_text(dir.path() / "ablation.txt", table);
  dir.commit();
  std::cout << table;
  return 0;
}

int cmd_params(const Common& common, const std::string& probe_name, std::size_t d, std::size_t heads,
               std::size_t frames, std::size_t tokens, std::size_t classes) {
  ProbeConfig base;
  base.d_model = d;
  base.num_heads = heads;
  base.num_frames = frames;
  base.tokens_per_frame = tokens;
  base.num_classes = classes;
  const auto file = load_config(common);
  auto cfg = resolve_probe(base, file, probe_name.empty() ? "step" : probe_name);
  apply_sets(common.sets, &cfg, nullptr, nullptr);
  cfg.validate();
  const auto model = init_params<float>(cfg, 0);
  std::vector<std::vector<std::string>> rows;
  for (const auto& [name, t] : model.params) rows.push_back({name, shape_string(t.shape()), format_count(t.size())});
  if (common.verbosity > 0) std::cout << render_table({"Parameter", "Shape", "Count"}, rows) << '\n';
  std::cout << format_count(model.count_params()) << '\n';
  char gflops[32];
  std::snprintf(gflops, sizeof gflops, "%.3f", estimate_probe_flops(cfg) / 1e9);
  std::cout << "head GFLOPs per clip: " << gflops << " (T=" << cfg.num_frames << ", n=" << cfg.tokens_per_frame
            << ", head only)\n";
  return 0;
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
}

int cmd_report(const std::string& run_dir) {
  const fs::path dir(run_dir);
  if (!fs::is_directory(dir)) throw DataError("'" + run_dir + "' is not a run directory");
  bool any = false;
  if (fs::exists(dir / "report.json")) {
    const auto j = read_json(dir / "report.json");
    const auto report = eval_report_from_json(j.at("metrics"));
    std::string label = "probe";
    if (j.contains("probe") && j["probe"].contains("variant")) label = j["probe"]["variant"].get<std::string>();
    std::cout << render_accuracy_table({{label, report}});
    if (!report.corruption.empty()) std::cout << '\n' << render_sensitivity_table({{label, report}});
    std::cout << '\n' << render_confusion_table(report);
    any = true;
  }
  if (fs::exists(dir / "ablation.json")) {
    const auto j = read_json(dir / "ablation.json");
    std::vector<AblationRow> rows;
    for (const auto& r : j.at("rows")) {
      AblationRow row;
      row.label = r.at("label").get<std::string>();
      row.report = eval_report_from_json(r.at("report"));
      rows.push_back(std::move(row));
    }
    if (any) std::cout << '\n';
    std::cout << render_ablation_table(rows);
    std::vector<std::pair<std::string, EvalReport>> sens;
    for (const auto& r : rows)
      if (!r.report.corruption.empty()) sens.emplace_back(r.label, r.report);
    if (!sens.empty()) std::cout << '\n' << render_sensitivity_table(sens);
    any = true;
  }
  if (fs::exists(dir / "multitask.json")) {
    const auto j = read_json(dir / "multitask.json");
    MultiTaskResult result;
    std::vector<std::string> names;
    result.clips = j.at("clips").get<std::size_t>();
    result.feature_loads = j.at("feature_loads").get<std::size_t>();
    result.shared_gflops = j.at("shared_gflops").get<double>();
    result.total_gflops = j.at("total_gflops").get<double>();
    for (const auto& t : j.at("tasks")) {
      names.push_back(t.at("name").get<std::string>());
      result.head_gflops.push_back(t.at("head_gflops").get<double>());
      result.reports.push_back(eval_report_from_json(t.at("report")));
    }
    if (any) std::cout << '\n';
    std::cout << render_multitask_table(result, names);
    any = true;
  }
  if (!any) throw DataError("'" + run_dir + "' has no report.json, ablation.json or multitask.json");
  return 0;
}

// Spec file:
//   [multitask]  shared_gflops = <per-clip backbone cost>, split = test
//   [task <name>] manifest = ..., pairs = ..., checkpoint = ...   (one per task)
int cmd_multitask(const Common& common, const std::string& spec_path, const std::string& out, bool overwrite) {
  const auto path = spec_path.empty() ? common.config : spec_path;
  if (path.empty()) throw UsageError("--spec is required");
  const auto file = load_config_file(path);
  file.require_sections({"multitask", "task"});
  MultiTaskSpec spec;
  std::vector<std::string> names;
  if (const auto* sec = file.section("multitask")) {
    for (const auto& e : sec->entries) {
      try {
        if (e.key == "shared_gflops") {
          spec.shared_gflops = std::stod(e.value);
        } else if (e.key == "split") {
          spec.split = parse_split(e.value);
        } else {
          file.fail(e.line, "[multitask] unknown field '" + e.key + "'");
        }
      } catch (const std::invalid_argument&) {
        file.fail(e.line, "[multitask] field '" + e.key + "': expected a number, got '" + e.value + "'");
      } catch (const DataError& err) {
        file.fail(e.line, std::string("[multitask] ") + err.what());
      }
    }
  }
  for (const auto* sec : file.sections_named("task")) {
    if (sec->argument.empty()) file.fail(sec->line, "[task] needs a name: [task <name>]");
    auto resolve = [&](const char* key) {
      const auto* e = sec->find(key);
      if (!e) return std::string();
      fs::path p(e->value);
      if (p.is_relative()) p = fs::path(file.source).parent_path() / p;
      return p.string();
    };
    for (const auto& e : sec->entries) {
      if (e.key != "manifest" && e.key != "pairs" && e.key != "checkpoint") {
        file.fail(e.line, "[task " + sec->argument + "] unknown field '" + e.key + "'");
      }
    }
    const auto manifest_path = resolve("manifest");
    const auto ckpt_path = resolve("checkpoint");
    if (manifest_path.empty() || ckpt_path.empty()) {
      file.fail(sec->line, "[task " + sec->argument + "] needs manifest and checkpoint");
    }
    auto manifest = load_manifest(manifest_path);
    const auto pairs_path = resolve("pairs");
    auto pairs = pairs_path.empty() ? SymmetricSplit(manifest.num_classes(), {})
                                    : define_pairs(pairs_path, manifest.class_names);
    spec.tasks.push_back({sec->argument, std::move(manifest), std::move(pairs), load_checkpoint(ckpt_path).model});
    names.push_back(sec->argument);
  }
  if (spec.tasks.empty()) throw UsageError("spec file defines no [task <name>] sections");

  const auto result = multi_task_evaluate(spec, common.threads);
  const auto table = render_multitask_table(result, names);
  std::cout << table;
  std::cout << "feature loads " << result.feature_loads << " for " << result.clips << " clips and "
            << names.size() << " tasks\n";
  if (!out.empty()) {
    RunDir dir(out, overwrite);
    Json j = run_metadata("multitask");
    const auto body = to_json(result, names);
    for (const auto& [k, v] : body.items()) j[k] = v;
    write_text(dir.path() / "multitask.json", j.dump(2) + "\n");
    write_text(dir.path() / "multitask.txt", table);
    write_text(dir.path() / "spec.ini", read_text(path));
    dir.commit();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal probing toolkit: train and evaluate probe heads on frozen features"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--set", common.sets, "override section.key=value (repeatable)");
    sub->add_option("--seed", common.seed, "seed override");
    sub->add_option("--threads", common.threads, "worker cap")->check(CLI::PositiveNumber);
    sub->add_flag("-v,--verbose", common.verbosity, "more output");
  };
  DataOptions data;
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--manifest", data.manifest, "dataset manifest");
    sub->add_option("--pairs", data.pairs, "symmetric pair file");
    sub->add_option("--split", data.split, "split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  };
  std::string out, probe, checkpoint, json_out, preset, grid, spec, run_dir;
  bool overwrite = false, dry_run = false;
  std::vector<std::string> modes;
  std::size_t d = 768, heads = 12, frames = 16, tokens = 256, classes = 30;

  auto* gen = app.add_subcommand("gen-synth", "write the synthetic symmetric-pair dataset");
  add_common(gen);
  gen->add_option("-o,--out", out, "output directory")->required();
  gen->add_flag("--overwrite", overwrite, "replace a non-empty output directory");

  auto* tr = app.add_subcommand("train", "train a probe, evaluate it and write a run directory");
  add_common(tr);
  add_data(tr);
  tr->add_option("--probe", probe, "linear | attentive | selfattn | step");
  tr->add_option("-o,--out", out, "run directory");
  tr->add_flag("--overwrite", overwrite, "replace a non-empty run directory");
  tr->add_flag("--dry-run", dry_run, "print the resolved config and parameter count only");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev);
  add_data(ev);
  ev->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  ev->add_option("--json", json_out, "write the report as JSON");

  auto* se = app.add_subcommand("sensitivity", "evaluate a checkpoint under frame-order corruption");
  add_common(se);
  add_data(se);
  se->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  se->add_option("--mode", modes, "reverse | shuffle[:seed] (repeatable, default reverse)");
  se->add_option("--json", json_out, "write the report as JSON");

  auto* ab = app.add_subcommand("ablate", "train and evaluate a grid of probe variants");
  add_common(ab);
  add_data(ab);
  ab->add_option("--preset", preset, "blocks | tokens | pe | pe-grain | ladder (or table4..table8)");
  ab->add_option("--grid", grid, "grid file")->check(CLI::ExistingFile);
  ab->add_option("--mode", modes, "also evaluate under these corruptions");
  ab->add_option("-o,--out", out, "run directory");
  ab->add_flag("--overwrite", overwrite, "replace a non-empty run directory");
  ab->add_flag("--dry-run", dry_run, "list the rows and their parameter counts only");

  auto* pa = app.add_subcommand("params", "count trainable parameters of a probe head");
  add_common(pa);
  pa->add_option("--probe", probe, "linear | attentive | selfattn | step (default step)");
  pa->add_option("--d-model", d, "feature dim")->capture_default_str();
  pa->add_option("--heads", heads, "attention heads")->capture_default_str();
  pa->add_option("--frames", frames, "frames per clip")->capture_default_str();
  pa->add_option("--tokens", tokens, "patch tokens per frame")->capture_default_str();
  pa->add_option("--classes", classes, "classes")->capture_default_str();

  auto* re = app.add_subcommand("report", "render the tables stored in a run directory");
  re->add_option("run_dir", run_dir, "run directory")->required();

  auto* mt = app.add_subcommand("multitask", "evaluate several heads in one pass over shared features");
  add_common(mt);
  mt->add_option("--spec", spec, "multi-task spec file")->check(CLI::ExistingFile);
  mt->add_option("-o,--out", out, "run directory");
  mt->add_flag("--overwrite", overwrite, "replace a non-empty run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_synth(common, out, overwrite);
    if (*tr) return cmd_train(common, data, probe, out, overwrite, dry_run);
    if (*ev) return cmd_eval(common, data, checkpoint, {}, json_out, false);
    if (*se) return cmd_eval(common, data, checkpoint, modes, json_out, true);
    if (*ab) return cmd_ablate(common, data, preset, grid, modes, out, overwrite, dry_run);
    if (*pa) return cmd_params(common, probe, d, heads, frames, tokens, classes);
    if (*re) return cmd_report(run_dir);
    if (*mt) return cmd_multitask(common, spec, out, overwrite);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
