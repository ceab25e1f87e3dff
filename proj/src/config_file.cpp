#include "step/config_file.hpp"

#include <fstream>
#include <sstream>

#include "step/errors.hpp"

namespace step {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class Cfg, class Apply>
void apply_section(const ConfigFile& file, Cfg& cfg, std::string_view name, Apply&& apply) {
  for (const auto* sec : file.sections_named(name)) {
    for (const auto& e : sec->entries) {
      try {
        apply(cfg, e.key, e.value);
      } catch (const ConfigError& err) {
        file.fail(e.line, "[" + std::string(name) + "] " + err.what());
      }
    }
  }
}

std::size_t parse_size(std::string_view key, std::string_view value) {
  try {
    std::size_t used = 0;
    const std::string s(value);
    if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("field '" + std::string(key) + "': expected a non-negative integer, got '" +
                      std::string(value) + "'");
  }
}

double parse_double(std::string_view key, std::string_view value) {
  try {
    std::size_t used = 0;
    const std::string s(value);
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("field '" + std::string(key) + "': expected a number, got '" +
                      std::string(value) + "'");
  }
}

}  // namespace

const ConfigEntry* ConfigSection::find(std::string_view key) const {
  for (const auto& e : entries)
    if (e.key == key) return &e;
  return nullptr;
}

const ConfigSection* ConfigFile::section(std::string_view name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

std::vector<const ConfigSection*> ConfigFile::sections_named(std::string_view name) const {
  std::vector<const ConfigSection*> out;
  for (const auto& s : sections)
    if (s.name == name) out.push_back(&s);
  return out;
}

void ConfigFile::require_sections(const std::vector<std::string>& allowed) const {
  for (const auto& s : sections) {
    if (std::find(allowed.begin(), allowed.end(), s.name) == allowed.end()) {
      std::string valid;
      for (const auto& a : allowed) valid += (valid.empty() ? "" : ", ") + a;
      fail(s.line, "unknown section [" + s.name + "]; valid here: " + valid);
    }
  }
}

void ConfigFile::fail(std::size_t line, const std::string& message) const {
  throw ConfigError(source + ":" + std::to_string(line) + ": " + message);
}

ConfigFile parse_config_file(std::string_view text, std::string source) {
  ConfigFile file;
  file.source = std::move(source);
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const auto body = trim(raw);
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') file.fail(line, "unterminated section header");
      const auto inner = trim(std::string_view(body).substr(1, body.size() - 2));
      if (inner.empty()) file.fail(line, "empty section name");
      ConfigSection sec;
      const auto space = inner.find_first_of(" \t");
      sec.name = inner.substr(0, space);
      if (space != std::string::npos) sec.argument = trim(std::string_view(inner).substr(space));
      sec.line = line;
      file.sections.push_back(std::move(sec));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) file.fail(line, "expected 'key = value'");
    if (file.sections.empty()) file.fail(line, "setting outside of any [section]");
    ConfigEntry e{trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)), line};
    if (e.key.empty()) file.fail(line, "empty key");
    auto& sec = file.sections.back();
    if (sec.find(e.key)) file.fail(line, "field '" + e.key + "' set twice in [" + sec.name + "]");
    sec.entries.push_back(std::move(e));
  }
  return file;
}

ConfigFile load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config_file(os.str(), path.string());
}

void apply_probe_section(const ConfigFile& file, ProbeConfig& cfg, std::string_view section) {
  apply_section(file, cfg, section, [](ProbeConfig& c, std::string_view k, std::string_view v) {
    apply_probe_setting(c, k, v);
  });
}

void apply_train_section(const ConfigFile& file, TrainConfig& cfg, std::string_view section) {
  apply_section(file, cfg, section, [](TrainConfig& c, std::string_view k, std::string_view v) {
    apply_train_setting(c, k, v);
  });
}

void apply_synth_section(const ConfigFile& file, SynthConfig& cfg, std::string_view section) {
  apply_section(file, cfg, section, [](SynthConfig& c, std::string_view k, std::string_view v) {
    apply_synth_setting(c, k, v);
  });
}

void apply_synth_setting(SynthConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "num_pairs") {
    cfg.num_pairs = parse_size(key, value);
  } else if (key == "num_nsym") {
    cfg.num_nsym = parse_size(key, value);
  } else if (key == "clips_per_class") {
    cfg.clips_per_class = parse_size(key, value);
  } else if (key == "frames") {
    cfg.frames = parse_size(key, value);
  } else if (key == "tokens") {
    cfg.tokens = parse_size(key, value);
  } else if (key == "dim") {
    cfg.dim = parse_size(key, value);
  } else if (key == "basis") {
    cfg.basis = parse_size(key, value);
  } else if (key == "noise_std") {
    cfg.noise_std = parse_double(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_size(key, value);
  } else if (key == "train_fraction") {
    cfg.train_fraction = parse_double(key, value);
  } else if (key == "val_fraction") {
    cfg.val_fraction = parse_double(key, value);
  } else {
    throw ConfigError("unknown synth field '" + std::string(key) + "'");
  }
}

std::string to_canonical_text(const SynthConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "num_pairs=" << cfg.num_pairs << '\n'
     << "num_nsym=" << cfg.num_nsym << '\n'
     << "clips_per_class=" << cfg.clips_per_class << '\n'
     << "frames=" << cfg.frames << '\n'
     << "tokens=" << cfg.tokens << '\n'
     << "dim=" << cfg.dim << '\n'
     << "basis=" << cfg.basis << '\n'
     << "noise_std=" << cfg.noise_std << '\n'
     << "seed=" << cfg.seed << '\n'
     << "train_fraction=" << cfg.train_fraction << '\n'
     << "val_fraction=" << cfg.val_fraction << '\n';
  return os.str();
}

}  // namespace step
