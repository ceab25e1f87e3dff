#include <fstream>
#include <set>
#include <sstream>

#include "step/dataset.hpp"
#include "step/errors.hpp"

namespace step {
namespace {

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream is{std::string(line)};
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::size_t parse_count(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw DataError("manifest line " + std::to_string(line) + ": expected integer, got '" + s + "'");
  }
}

// Calls fn(line_number, words) for each non-comment, non-blank line.
template <class Fn>
void for_each_record(std::string_view text, Fn&& fn) {
  std::size_t pos = 0, line_no = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    const auto words = split_words(line);
    if (words.empty() || words.front().starts_with('#')) {
      if (end == text.size()) break;
      continue;
    }
    fn(line_no, words);
    if (end == text.size()) break;
  }
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw DataError("unknown split '" + std::string(s) + "'; valid: train, val, test");
}

std::optional<std::size_t> DatasetManifest::class_index(std::string_view name) const {
  for (std::size_t i = 0; i < class_names.size(); ++i)
    if (class_names[i] == name) return i;
  return std::nullopt;
}

std::filesystem::path DatasetManifest::resolve(const ClipRecord& clip) const {
  if (clip.feature_path.is_absolute() || base_dir.empty()) return clip.feature_path;
  return base_dir / clip.feature_path;
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < clips.size(); ++i)
    if (clips[i].split == split) out.push_back(i);
  return out;
}

void DatasetManifest::validate() const {
  std::set<std::string> names;
  for (const auto& n : class_names) {
    if (!names.insert(n).second) throw DataError("manifest: duplicate class name '" + n + "'");
  }
  std::set<std::string> ids;
  for (const auto& c : clips) {
    if (!ids.insert(c.clip_id).second) throw DataError("manifest: duplicate clip_id '" + c.clip_id + "'");
    if (c.label >= class_names.size()) {
      throw DataError("manifest: clip '" + c.clip_id + "' has label " + std::to_string(c.label) +
                      " but only " + std::to_string(class_names.size()) + " classes");
    }
  }
}

DatasetManifest parse_manifest(std::string_view text, std::filesystem::path base_dir) {
  DatasetManifest m;
  m.base_dir = std::move(base_dir);
  bool header = false;
  std::optional<std::size_t> declared_classes;
  std::set<std::string> ids;
  for_each_record(text, [&](std::size_t line, const std::vector<std::string>& w) {
    auto fail = [&](const std::string& msg) {
      throw DataError("manifest line " + std::to_string(line) + ": " + msg);
    };
    if (!header) {
      if (w.size() != 2 || w[0] != "STEP-MANIFEST") fail("expected 'STEP-MANIFEST 1' header");
      if (w[1] != "1") fail("unsupported manifest version " + w[1]);
      header = true;
      return;
    }
    const auto& kind = w[0];
    if (kind == "dims") {
      if (w.size() != 4) fail("expected 'dims <T> <n> <d>'");
      m.frames = parse_count(w[1], line);
      m.tokens = parse_count(w[2], line);
      m.dim = parse_count(w[3], line);
    } else if (kind == "classes") {
      if (w.size() != 2) fail("expected 'classes <C>'");
      declared_classes = parse_count(w[1], line);
    } else if (kind == "class") {
      if (w.size() != 2) fail("expected 'class <name>'");
      if (m.class_index(w[1])) fail("duplicate class name '" + w[1] + "'");
      m.class_names.push_back(w[1]);
    } else if (kind == "clip") {
      if (w.size() != 5) fail("expected 'clip <id> <class> <split> <path>'");
      const auto label = m.class_index(w[2]);
      if (!label) fail("unknown class name '" + w[2] + "'");
      if (!ids.insert(w[1]).second) fail("duplicate clip_id '" + w[1] + "'");
      m.clips.push_back({w[1], w[4], *label, parse_split(w[3])});
    } else {
      fail("unknown record '" + kind + "'");
    }
  });
  if (!header) throw DataError("manifest: missing 'STEP-MANIFEST 1' header");
  if (!declared_classes) throw DataError("manifest: missing 'classes <C>' record");
  if (*declared_classes != m.class_names.size()) {
    throw DataError("manifest: declares " + std::to_string(*declared_classes) + " classes, lists " +
                    std::to_string(m.class_names.size()));
  }
  if (m.frames == 0 || m.tokens == 0 || m.dim == 0) {
    throw DataError("manifest: missing or zero 'dims' record");
  }
  m.validate();
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text(path), path.parent_path());
}

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream os;
  os << "STEP-MANIFEST 1\n"
     << "dims " << m.frames << ' ' << m.tokens << ' ' << m.dim << '\n'
     << "classes " << m.class_names.size() << '\n';
  for (const auto& name : m.class_names) os << "class " << name << '\n';
  for (const auto& c : m.clips) {
    os << "clip " << c.clip_id << ' ' << m.class_names.at(c.label) << ' ' << to_string(c.split)
       << ' ' << c.feature_path.generic_string() << '\n';
  }
  return os.str();
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  write_text(path, format_manifest(manifest));
}

SymmetricSplit::SymmetricSplit(std::size_t num_classes,
                               std::vector<std::pair<std::size_t, std::size_t>> pairs)
    : pairs_(std::move(pairs)), mirror_(num_classes) {
  for (const auto& [a, b] : pairs_) {
    if (a >= num_classes || b >= num_classes) throw DataError("pair references unknown class index");
    if (a == b) throw DataError("class " + std::to_string(a) + " paired with itself");
    if (mirror_[a] || mirror_[b]) {
      throw DataError("class " + std::to_string(mirror_[a] ? a : b) + " appears in two pairs");
    }
    mirror_[a] = b;
    mirror_[b] = a;
  }
}

std::vector<std::size_t> SymmetricSplit::sym_classes() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < mirror_.size(); ++c)
    if (mirror_[c]) out.push_back(c);
  return out;
}

std::vector<std::size_t> SymmetricSplit::nsym_classes() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < mirror_.size(); ++c)
    if (!mirror_[c]) out.push_back(c);
  return out;
}

SymmetricSplit parse_pairs(std::string_view text, const std::vector<std::string>& class_names) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<int> seen(class_names.size(), 0);
  auto index_of = [&](const std::string& name, std::size_t line) {
    for (std::size_t i = 0; i < class_names.size(); ++i)
      if (class_names[i] == name) return i;
    throw DataError("pair file line " + std::to_string(line) + ": unknown class name '" + name + "'");
  };
  for_each_record(text, [&](std::size_t line, const std::vector<std::string>& w) {
    if (w.size() != 2) {
      throw DataError("pair file line " + std::to_string(line) + ": expected '<class_a> <class_b>'");
    }
    const auto a = index_of(w[0], line);
    const auto b = index_of(w[1], line);
    if (a == b) throw DataError("pair file line " + std::to_string(line) + ": class paired with itself");
    for (auto c : {a, b}) {
      if (seen[c]++) {
        throw DataError("pair file line " + std::to_string(line) + ": class '" + class_names[c] +
                        "' appears in two pairs");
      }
    }
    pairs.emplace_back(a, b);
  });
  return SymmetricSplit(class_names.size(), std::move(pairs));
}

SymmetricSplit define_pairs(const std::filesystem::path& path,
                            const std::vector<std::string>& class_names) {
  return parse_pairs(read_text(path), class_names);
}

std::string format_pairs(const SymmetricSplit& split, const std::vector<std::string>& class_names) {
  std::ostringstream os;
  for (const auto& [a, b] : split.pairs()) os << class_names.at(a) << ' ' << class_names.at(b) << '\n';
  return os.str();
}

Dataset load_dataset(const DatasetManifest& manifest) {
  Dataset ds;
  ds.manifest = manifest;
  ds.features.reserve(manifest.clips.size());
  for (const auto& clip : manifest.clips) {
    auto f = read_features(manifest.resolve(clip), clip.clip_id);
    if (f.frames != manifest.frames || f.tokens != manifest.tokens || f.dim != manifest.dim) {
      throw DataError("clip '" + clip.clip_id + "': container dims (" + std::to_string(f.frames) +
                      "," + std::to_string(f.tokens) + "," + std::to_string(f.dim) +
                      ") differ from manifest header");
    }
    ds.features.push_back(std::move(f));
  }
  return ds;
}

}  // namespace step
