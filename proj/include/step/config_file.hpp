#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "step/config.hpp"
#include "step/synth.hpp"
#include "step/train.hpp"

namespace step {

// INI-style run configuration:
//   # comment
//   [section]            or  [section argument]
//   key = value
// Keys before the first section header are rejected.
struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

struct ConfigSection {
  std::string name;
  std::string argument;
  std::size_t line = 0;
  std::vector<ConfigEntry> entries;

  const ConfigEntry* find(std::string_view key) const;
};

struct ConfigFile {
  std::string source;  // file name used in diagnostics
  std::vector<ConfigSection> sections;

  // First section with this name, or null.
  const ConfigSection* section(std::string_view name) const;
  std::vector<const ConfigSection*> sections_named(std::string_view name) const;
  // Throws ConfigError naming the first section outside `allowed`.
  void require_sections(const std::vector<std::string>& allowed) const;
  // ConfigError prefixed with "<source>:<line>: ".
  [[noreturn]] void fail(std::size_t line, const std::string& message) const;
};

ConfigFile parse_config_file(std::string_view text, std::string source = "<config>");
ConfigFile load_config_file(const std::filesystem::path& path);

// Apply every entry of the named section, if present. Errors carry the file,
// line and field.
void apply_probe_section(const ConfigFile& file, ProbeConfig& cfg, std::string_view section = "probe");
void apply_train_section(const ConfigFile& file, TrainConfig& cfg, std::string_view section = "train");
void apply_synth_section(const ConfigFile& file, SynthConfig& cfg, std::string_view section = "synth");

void apply_synth_setting(SynthConfig& cfg, std::string_view key, std::string_view value);
std::string to_canonical_text(const SynthConfig& cfg);

}  // namespace step
