#include "reid/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <regex>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "reid/errors.hpp"
#include "reid/util.hpp"

namespace reid {

namespace {

int to_int(const std::string& s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FilenameFormat("number out of range: " + s);
  return v;
}

}  // namespace

FilenameInfo parse_market_filename(std::string_view name) {
  static const std::regex re(R"(^(-?\d+)_c(\d+)s(\d+)_(\d+)_(\d+)\.jpg$)");
  std::smatch m;
  const std::string s(name);
  if (!std::regex_match(s, m, re)) throw FilenameFormat("not a Market-1501 file name: " + s);
  return {to_int(m[1].str()), to_int(m[2].str())};
}

FilenameInfo parse_cuhk03_filename(std::string_view name) {
  static const std::regex re(R"(^(-?\d+)_c(\d+)_(\d+)\.(jpg|png)$)");
  const std::string s(name);
  std::smatch m;
  if (std::regex_match(s, m, re)) return {to_int(m[1].str()), to_int(m[2].str())};
  try {
    return parse_market_filename(name);
  } catch (const FilenameFormat&) {
    throw FilenameFormat("not a CUHK03-np file name: " + s);
  }
}

std::string to_string(DatasetKind k) { return k == DatasetKind::market1501 ? "market1501" : "cuhk03np"; }

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "market1501") return DatasetKind::market1501;
  if (s == "cuhk03np") return DatasetKind::cuhk03np;
  throw ConfigError("unknown dataset \"" + s + "\" (expected market1501 or cuhk03np)");
}

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [&](const auto& p) { return p.split == s; }));
}

std::set<int> DatasetManifest::identities(Split s) const {
  std::set<int> out;
  for (const auto& p : samples)
    if (p.split == s) out.insert(p.identity);
  return out;
}

std::vector<const PersonSample*> DatasetManifest::split(Split s) const {
  std::vector<const PersonSample*> out;
  for (const auto& p : samples)
    if (p.split == s) out.push_back(&p);
  return out;
}

void validate_manifest(const DatasetManifest& m) {
  std::set<std::string> ids;
  for (const auto& p : m.samples)
    if (!ids.insert(p.image_id).second) throw ManifestError("duplicate image id " + p.image_id);

  const std::set<int> train = m.identities(Split::train);
  const std::set<int> query = m.identities(Split::query);
  const std::set<int> gallery = m.identities(Split::gallery);
  for (int id : train) {
    if (id <= 0) continue;
    if (query.count(id) || gallery.count(id))
      throw ManifestError("identity " + std::to_string(id) + " appears in both training and test splits");
  }
  for (int id : query) {
    if (id <= 0) continue;
    if (!gallery.count(id)) throw ManifestError("query identity " + std::to_string(id) + " has no gallery image");
  }
  for (const auto& p : m.samples)
    if (p.split == Split::train && !m.label_map.count(p.identity))
      throw ManifestError("training identity " + std::to_string(p.identity) + " has no dense label");
}

namespace {

struct Expected {
  std::size_t train, query, gallery;
};

void warn_counts(const DatasetManifest& m, DatasetKind kind) {
  const Expected e = kind == DatasetKind::market1501 ? Expected{12936, 3368, 19732} : Expected{7365, 1400, 5332};
  const Expected got{m.count(Split::train), m.count(Split::query), m.count(Split::gallery)};
  if (got.train != e.train || got.query != e.query || got.gallery != e.gallery)
    spdlog::warn("{}: {}/{}/{} train/query/gallery images (full release has {}/{}/{}); treating as a subset",
                 to_string(kind), got.train, got.query, got.gallery, e.train, e.query, e.gallery);
}

}  // namespace

DatasetManifest ingest(const std::filesystem::path& root, DatasetKind kind) {
  const std::pair<const char*, Split> dirs[] = {
      {"bounding_box_train", Split::train}, {"query", Split::query}, {"bounding_box_test", Split::gallery}};
  DatasetManifest m;
  m.dataset = to_string(kind);
  for (const auto& [dir, split] : dirs)
    if (!std::filesystem::is_directory(root / dir))
      throw ManifestError("missing directory " + (root / dir).string());

  for (const auto& [dir, split] : dirs) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(root / dir)) {
      if (!entry.is_regular_file()) continue;
      const auto ext = entry.path().extension().string();
      if (ext == ".jpg" || ext == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::string name = f.filename().string();
      FilenameInfo info;
      try {
        info = kind == DatasetKind::market1501 ? parse_market_filename(name) : parse_cuhk03_filename(name);
      } catch (const FilenameFormat& e) {
        spdlog::warn("skipping {}: {}", f.string(), e.what());
        continue;
      }
      if (split == Split::train && info.junk()) continue;
      m.samples.push_back({f, info.identity, info.camera, split, f.stem().string()});
    }
  }
  int next = 0;
  for (int id : m.identities(Split::train)) m.label_map[id] = next++;
  warn_counts(m, kind);
  validate_manifest(m);
  return m;
}

std::string manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json doc;
  doc["dataset"] = m.dataset;
  doc["graph_store"] = m.graph_store.string();
  doc["feature_store"] = m.feature_store.string();
  doc["counts"] = {{"train", m.count(Split::train)},
                   {"query", m.count(Split::query)},
                   {"gallery", m.count(Split::gallery)},
                   {"train_identities", m.identities(Split::train).size()},
                   {"query_identities", m.identities(Split::query).size()},
                   {"gallery_identities", m.identities(Split::gallery).size()}};
  nlohmann::ordered_json labels = nlohmann::ordered_json::array();
  for (auto [raw, dense] : m.label_map) labels.push_back({raw, dense});
  doc["label_map"] = std::move(labels);
  nlohmann::ordered_json samples = nlohmann::ordered_json::array();
  for (const auto& p : m.samples)
    samples.push_back({{"image_id", p.image_id},
                       {"path", p.path.string()},
                       {"identity", p.identity},
                       {"camera", p.camera},
                       {"split", to_string(p.split)}});
  doc["samples"] = std::move(samples);
  return doc.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const auto doc = nlohmann::json::parse(text);
    m.dataset = doc.at("dataset").get<std::string>();
    m.graph_store = doc.value("graph_store", "");
    m.feature_store = doc.value("feature_store", "");
    for (const auto& pair : doc.at("label_map")) m.label_map[pair.at(0).get<int>()] = pair.at(1).get<int>();
    for (const auto& s : doc.at("samples"))
      m.samples.push_back({s.at("path").get<std::string>(), s.at("identity").get<int>(), s.at("camera").get<int>(),
                           split_from_string(s.at("split").get<std::string>()), s.at("image_id").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file(path, manifest_to_json(m));
}

DatasetManifest load_manifest(const std::filesystem::path& path) { return manifest_from_json(read_file(path)); }

}  // namespace reid
