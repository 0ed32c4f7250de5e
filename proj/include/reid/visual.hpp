#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace reid {

// Both sides are multiples of the 14 px ViT patch.
inline constexpr int kImageHeight = 252;
inline constexpr int kImageWidth = 126;
inline constexpr int kImageChannels = 3;
inline constexpr int kPreprocessVersion = 1;

/// RGB, row-major HWC, values in [0, 1].
struct ImageTensor {
  std::vector<float> values;

  [[nodiscard]] float at(int y, int x, int c) const {
    return values[(static_cast<std::size_t>(y) * kImageWidth + static_cast<std::size_t>(x)) * kImageChannels +
                  static_cast<std::size_t>(c)];
  }
};

/// Decodes and resizes to 252x126. Throws DecodeError.
ImageTensor preprocess(std::span<const std::uint8_t> image_bytes);
ImageTensor preprocess_file(const std::filesystem::path& path);

/// Identifies the preprocessing contract a feature store was produced under.
std::string preprocess_hash();

struct AdapterManifest {
  std::string backbone;
  int dim = 0;
  int preprocess_version = kPreprocessVersion;
  // Free-form runtime details (e.g. "last_stride=1", "dinov2 cls token").
  std::string notes;
};

struct VisualFeature {
  Eigen::VectorXd values;
};

class BackboneAdapter {
 public:
  virtual ~BackboneAdapter() = default;
  [[nodiscard]] virtual const AdapterManifest& manifest() const = 0;
  /// Throws BackboneUnavailable.
  virtual VisualFeature encode(const ImageTensor& image, std::string_view image_id) = 0;
};

/// Seeded random projection of 14x14 average-pooled, centred pixels,
/// L2-normalized. Nearby images map to nearby features.
class StubBackbone : public BackboneAdapter {
 public:
  explicit StubBackbone(std::uint64_t seed = 7, int dim = 768);
  [[nodiscard]] const AdapterManifest& manifest() const override { return manifest_; }
  VisualFeature encode(const ImageTensor& image, std::string_view image_id) override;

 private:
  AdapterManifest manifest_;
  Eigen::MatrixXd projection_;
};

/// Feature store directory: manifest.json + features.jsonl ({"image_id", "vector"}).
class FixtureBackbone : public BackboneAdapter {
 public:
  explicit FixtureBackbone(const std::filesystem::path& dir);
  [[nodiscard]] const AdapterManifest& manifest() const override { return manifest_; }
  VisualFeature encode(const ImageTensor& image, std::string_view image_id) override;
  [[nodiscard]] bool contains(std::string_view image_id) const;

 private:
  AdapterManifest manifest_;
  std::unordered_map<std::string, Eigen::VectorXd> table_;
};

/// Delegates to an external model runtime: POST /encode with the raw float32
/// HWC tensor; reply {"vector": [...]}. Calls are serialized.
class HttpBackbone : public BackboneAdapter {
 public:
  HttpBackbone(std::string host, int port, AdapterManifest manifest)
      : host_(std::move(host)), port_(port), manifest_(std::move(manifest)) {}
  [[nodiscard]] const AdapterManifest& manifest() const override { return manifest_; }
  VisualFeature encode(const ImageTensor& image, std::string_view image_id) override;

 private:
  std::string host_;
  int port_;
  AdapterManifest manifest_;
  std::mutex mu_;
};

VisualFeature encode_image(const ImageTensor& image, std::string_view image_id, BackboneAdapter& adapter);

void write_feature_store(const std::filesystem::path& dir, const AdapterManifest& manifest,
                         const std::vector<std::pair<std::string, Eigen::VectorXd>>& records);

}  // namespace reid
