#include "reid/visual.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include <httplib.h>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "reid/errors.hpp"
#include "reid/util.hpp"

namespace reid {

using nlohmann::json;

namespace {

constexpr int kPatch = 14;
constexpr int kPooledH = kImageHeight / kPatch;
constexpr int kPooledW = kImageWidth / kPatch;

ImageTensor from_mat(const cv::Mat& decoded) {
  cv::Mat resized;
  if (decoded.rows == kImageHeight && decoded.cols == kImageWidth)
    resized = decoded;
  else
    cv::resize(decoded, resized, cv::Size(kImageWidth, kImageHeight), 0, 0, cv::INTER_LINEAR);
  cv::Mat rgb;
  cv::cvtColor(resized, rgb, cv::COLOR_BGR2RGB);
  ImageTensor t;
  t.values.resize(static_cast<std::size_t>(kImageHeight) * kImageWidth * kImageChannels);
  std::size_t i = 0;
  for (int y = 0; y < kImageHeight; ++y) {
    const auto* row = rgb.ptr<cv::Vec3b>(y);
    for (int x = 0; x < kImageWidth; ++x)
      for (int c = 0; c < kImageChannels; ++c) t.values[i++] = static_cast<float>(row[x][c]) / 255.0f;
  }
  return t;
}

}  // namespace

ImageTensor preprocess(std::span<const std::uint8_t> image_bytes) {
  if (image_bytes.empty()) throw DecodeError("empty image buffer");
  const cv::Mat buf(1, static_cast<int>(image_bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(image_bytes.data()));
  cv::Mat decoded;
  try {
    decoded = cv::imdecode(buf, cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw DecodeError(std::string("image decode failed: ") + e.what());
  }
  if (decoded.empty()) throw DecodeError("image decode failed");
  return from_mat(decoded);
}

ImageTensor preprocess_file(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  try {
    return preprocess({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

std::string preprocess_hash() {
  return hex64(fnv1a64("resize=" + std::to_string(kImageHeight) + "x" + std::to_string(kImageWidth) +
                       ";interp=linear;rgb;scale=1/255;version=" + std::to_string(kPreprocessVersion)));
}

StubBackbone::StubBackbone(std::uint64_t seed, int dim) {
  manifest_.backbone = "stub-projection";
  manifest_.dim = dim;
  manifest_.notes = "seed=" + std::to_string(seed);
  std::mt19937_64 rng(seed);
  const int in = kPooledH * kPooledW * kImageChannels;
  projection_.resize(dim, in);
  for (int j = 0; j < in; ++j)
    for (int i = 0; i < dim; ++i) projection_(i, j) = 2.0 * uniform01(rng) - 1.0;
}

VisualFeature StubBackbone::encode(const ImageTensor& image, std::string_view) {
  if (image.values.size() != static_cast<std::size_t>(kImageHeight) * kImageWidth * kImageChannels)
    throw ShapeMismatch("stub backbone expects a preprocessed 252x126x3 tensor");
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(kPooledH * kPooledW * kImageChannels);
  for (int y = 0; y < kImageHeight; ++y)
    for (int x = 0; x < kImageWidth; ++x)
      for (int c = 0; c < kImageChannels; ++c)
        pooled[((y / kPatch) * kPooledW + x / kPatch) * kImageChannels + c] += image.at(y, x, c);
  pooled /= static_cast<double>(kPatch * kPatch);
  pooled.array() -= 0.5;
  Eigen::VectorXd v = projection_ * pooled;
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return VisualFeature{std::move(v)};
}

FixtureBackbone::FixtureBackbone(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw BackboneUnavailable("no feature store at " + dir.string());
  const json m = json::parse(read_file(manifest_path));
  manifest_.backbone = m.at("backbone").get<std::string>();
  manifest_.dim = m.at("dim").get<int>();
  manifest_.preprocess_version = m.value("preprocess_version", kPreprocessVersion);
  manifest_.notes = m.value("notes", "");

  std::ifstream in(dir / "features.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    const auto vals = rec.at("vector").get<std::vector<double>>();
    if (static_cast<int>(vals.size()) != manifest_.dim)
      throw ShapeMismatch("feature for " + rec.at("image_id").get<std::string>() + " does not match manifest dim");
    table_[rec.at("image_id").get<std::string>()] =
        Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  }
}

bool FixtureBackbone::contains(std::string_view image_id) const { return table_.contains(std::string(image_id)); }

VisualFeature FixtureBackbone::encode(const ImageTensor&, std::string_view image_id) {
  auto it = table_.find(std::string(image_id));
  if (it == table_.end()) throw BackboneUnavailable("no recorded feature for " + std::string(image_id));
  return VisualFeature{it->second};
}

VisualFeature HttpBackbone::encode(const ImageTensor& image, std::string_view image_id) {
  std::lock_guard lock(mu_);
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(5, 0);
  const std::string body(reinterpret_cast<const char*>(image.values.data()), image.values.size() * sizeof(float));
  httplib::Headers headers{{"X-Image-Id", std::string(image_id)},
                           {"X-Shape", std::to_string(kImageHeight) + "," + std::to_string(kImageWidth) + "," +
                                           std::to_string(kImageChannels)}};
  auto res = cli.Post("/encode", headers, body, "application/octet-stream");
  if (!res) throw BackboneUnavailable("backbone runtime " + host_ + ":" + std::to_string(port_) + " unreachable");
  if (res->status != 200) throw BackboneUnavailable("backbone runtime returned HTTP " + std::to_string(res->status));
  const json reply = json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("vector")) throw BackboneUnavailable("malformed backbone reply");
  const auto vals = reply["vector"].get<std::vector<double>>();
  if (static_cast<int>(vals.size()) != manifest_.dim) throw ShapeMismatch("backbone reply does not match manifest dim");
  return VisualFeature{Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()))};
}

VisualFeature encode_image(const ImageTensor& image, std::string_view image_id, BackboneAdapter& adapter) {
  VisualFeature f = adapter.encode(image, image_id);
  if (f.values.size() != adapter.manifest().dim) throw ShapeMismatch("visual feature does not match adapter manifest");
  if (!f.values.allFinite()) throw Error("non-finite visual feature for " + std::string(image_id));
  return f;
}

void write_feature_store(const std::filesystem::path& dir, const AdapterManifest& manifest,
                         const std::vector<std::pair<std::string, Eigen::VectorXd>>& records) {
  json m;
  m["backbone"] = manifest.backbone;
  m["dim"] = manifest.dim;
  m["preprocess_version"] = manifest.preprocess_version;
  m["preprocess_hash"] = preprocess_hash();
  m["notes"] = manifest.notes;
  std::ostringstream lines;
  for (const auto& [id, v] : records) {
    json rec;
    rec["image_id"] = id;
    rec["vector"] = std::vector<double>(v.data(), v.data() + v.size());
    lines << rec.dump() << '\n';
  }
  write_file(dir / "features.jsonl", lines.str());
  write_file(dir / "manifest.json", m.dump(2));
}

}  // namespace reid
