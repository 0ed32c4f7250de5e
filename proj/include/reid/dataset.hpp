#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "reid/fusion_head.hpp"

namespace reid {

struct FilenameInfo {
  int identity = 0;
  int camera = 0;
  [[nodiscard]] bool junk() const { return identity == -1; }
};

/// `<pid>_c<cam>s<seq>_<frame>_<box>.jpg`, pid possibly -1.
FilenameInfo parse_market_filename(std::string_view name);
/// Market-style names, or the shorter `<pid>_c<cam>_<idx>.(jpg|png)` form.
FilenameInfo parse_cuhk03_filename(std::string_view name);

enum class DatasetKind { market1501, cuhk03np };
std::string to_string(DatasetKind k);
DatasetKind dataset_kind_from_string(const std::string& s);

struct PersonSample {
  std::filesystem::path path;
  int identity = 0;  // raw dataset id
  int camera = 0;
  Split split = Split::train;
  std::string image_id;  // file stem
};

struct DatasetManifest {
  std::string dataset;
  std::vector<PersonSample> samples;
  std::map<int, int> label_map;  // raw training id -> dense label
  std::filesystem::path graph_store;
  std::filesystem::path feature_store;

  [[nodiscard]] int num_train_identities() const { return static_cast<int>(label_map.size()); }
  [[nodiscard]] std::size_t count(Split s) const;
  [[nodiscard]] std::set<int> identities(Split s) const;
  [[nodiscard]] std::vector<const PersonSample*> split(Split s) const;
};

/// Throws ManifestError on train/test identity overlap, on query identities
/// missing from the gallery, or on duplicate image ids. Junk (-1) and
/// background (0) ids are exempt from the identity rules.
void validate_manifest(const DatasetManifest& m);

/// Reads bounding_box_train/, query/ and bounding_box_test/ under `root`.
/// Junk images are left out of the training split. Dense labels follow
/// ascending raw training ids.
DatasetManifest ingest(const std::filesystem::path& root, DatasetKind kind);

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace reid
