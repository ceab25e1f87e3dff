#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "step/features.hpp"

namespace step {

enum class Split { Train, Val, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view s);

struct ClipRecord {
  std::string clip_id;
  std::filesystem::path feature_path;  // relative paths resolve against the manifest dir
  std::size_t label = 0;
  Split split = Split::Train;
};

// Text manifest:
//   STEP-MANIFEST 1
//   dims <T> <n> <d>
//   classes <C>
//   class <name>                                   (C lines, index = order)
//   clip <clip_id> <class_name> <split> <feature_path>
// Blank lines and lines starting with '#' are ignored.
struct DatasetManifest {
  std::vector<std::string> class_names;
  std::size_t frames = 0;
  std::size_t tokens = 0;
  std::size_t dim = 0;
  std::vector<ClipRecord> clips;
  std::filesystem::path base_dir;

  std::size_t num_classes() const { return class_names.size(); }
  std::optional<std::size_t> class_index(std::string_view name) const;
  std::filesystem::path resolve(const ClipRecord& clip) const;
  std::vector<std::size_t> indices(Split split) const;
  // Throws DataError for duplicate clip ids / class names or labels >= C.
  void validate() const;
};

DatasetManifest parse_manifest(std::string_view text, std::filesystem::path base_dir = {});
DatasetManifest load_manifest(const std::filesystem::path& path);
std::string format_manifest(const DatasetManifest& manifest);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// Pairs of nearly symmetric classes. Every class is either in exactly one pair
// (sym set) or in none (nsym set).
class SymmetricSplit {
 public:
  SymmetricSplit() = default;
  SymmetricSplit(std::size_t num_classes, std::vector<std::pair<std::size_t, std::size_t>> pairs);

  std::size_t num_classes() const { return mirror_.size(); }
  const std::vector<std::pair<std::size_t, std::size_t>>& pairs() const { return pairs_; }
  bool is_symmetric(std::size_t cls) const { return mirror_.at(cls).has_value(); }
  std::optional<std::size_t> mirror(std::size_t cls) const { return mirror_.at(cls); }
  std::vector<std::size_t> sym_classes() const;
  std::vector<std::size_t> nsym_classes() const;

 private:
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
  std::vector<std::optional<std::size_t>> mirror_;
};

// Pair file: one "<class_a> <class_b>" per line, '#' comments. Unknown names,
// self pairs and classes listed in two pairs throw DataError.
SymmetricSplit parse_pairs(std::string_view text, const std::vector<std::string>& class_names);
SymmetricSplit define_pairs(const std::filesystem::path& path,
                            const std::vector<std::string>& class_names);
std::string format_pairs(const SymmetricSplit& split, const std::vector<std::string>& class_names);

// Manifest plus the decoded features of every clip, index-aligned with
// manifest.clips.
struct Dataset {
  DatasetManifest manifest;
  std::vector<FeatureSequence> features;

  std::size_t size() const { return features.size(); }
};

// Reads every feature file once and checks its dims against the manifest
// header.
Dataset load_dataset(const DatasetManifest& manifest);

}  // namespace step
