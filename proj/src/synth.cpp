#include "reid/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <random>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "reid/errors.hpp"
#include "reid/util.hpp"

namespace reid {

namespace {

struct Color {
  const char* name;
  cv::Scalar bgr;
};

const std::array<Color, 8> kPalette = {{{"red", {40, 40, 210}},
                                        {"blue", {200, 70, 30}},
                                        {"green", {60, 170, 50}},
                                        {"yellow", {40, 210, 230}},
                                        {"black", {25, 25, 25}},
                                        {"white", {235, 235, 235}},
                                        {"purple", {160, 40, 130}},
                                        {"orange", {30, 130, 240}}}};
const std::array<const char*, 4> kHair = {"short black", "long brown", "blond", "gray"};
const std::array<const char*, 4> kAccessory = {"", "backpack", "handbag", "hat"};

struct Identity {
  int pid = 0;
  int shirt = 0;
  int pants = 0;
  int hair = 0;
  int accessory = 0;
  int accessory_color = 0;
  bool long_sleeves = false;
};

int pick(std::mt19937_64& rng, int n) { return static_cast<int>(uniform01(rng) * n); }

cv::Mat render(const Identity& id, std::mt19937_64& rng) {
  cv::Mat img(128, 64, CV_8UC3, cv::Scalar(120, 125, 118));
  const int dx = pick(rng, 9) - 4;
  const int dy = pick(rng, 7) - 3;
  const cv::Scalar skin(140, 170, 215);
  cv::circle(img, {32 + dx, 16 + dy}, 10, skin, cv::FILLED);
  cv::rectangle(img, cv::Rect(20 + dx, 6 + dy, 24, 6), cv::Scalar(30 + 40 * id.hair, 40 + 30 * id.hair, 50), cv::FILLED);
  cv::rectangle(img, cv::Rect(16 + dx, 28 + dy, 32, 44), kPalette[static_cast<std::size_t>(id.shirt)].bgr, cv::FILLED);
  if (id.long_sleeves) {
    cv::rectangle(img, cv::Rect(9 + dx, 30 + dy, 7, 36), kPalette[static_cast<std::size_t>(id.shirt)].bgr, cv::FILLED);
    cv::rectangle(img, cv::Rect(48 + dx, 30 + dy, 7, 36), kPalette[static_cast<std::size_t>(id.shirt)].bgr, cv::FILLED);
  }
  cv::rectangle(img, cv::Rect(18 + dx, 72 + dy, 12, 48), kPalette[static_cast<std::size_t>(id.pants)].bgr, cv::FILLED);
  cv::rectangle(img, cv::Rect(34 + dx, 72 + dy, 12, 48), kPalette[static_cast<std::size_t>(id.pants)].bgr, cv::FILLED);
  const cv::Scalar acc = kPalette[static_cast<std::size_t>(id.accessory_color)].bgr;
  switch (id.accessory) {
    case 1: cv::rectangle(img, cv::Rect(44 + dx, 32 + dy, 12, 28), acc, cv::FILLED); break;
    case 2: cv::rectangle(img, cv::Rect(46 + dx, 66 + dy, 12, 12), acc, cv::FILLED); break;
    case 3: cv::rectangle(img, cv::Rect(18 + dx, 0 + std::max(dy, 0), 28, 8), acc, cv::FILLED); break;
    default: break;
  }
  cv::Mat noise(img.size(), CV_16SC3);
  cv::Mat img16;
  img.convertTo(img16, CV_16SC3);
  const double brightness = 30.0 * uniform01(rng) - 15.0;
  for (int y = 0; y < img16.rows; ++y)
    for (int x = 0; x < img16.cols; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = img16.at<cv::Vec3s>(y, x)[c] + brightness + 12.0 * (uniform01(rng) - 0.5);
        img16.at<cv::Vec3s>(y, x)[c] = static_cast<short>(std::clamp(v, 0.0, 255.0));
      }
  img16.convertTo(img, CV_8UC3);
  return img;
}

std::string graph_text(const Identity& id, std::mt19937_64& rng) {
  nlohmann::ordered_json person;
  person["id"] = "person";
  std::vector<std::string> attrs;
  if (uniform01(rng) < 0.8) attrs.emplace_back(std::string(kHair[static_cast<std::size_t>(id.hair)]) + " hair");
  attrs.emplace_back(uniform01(rng) < 0.5 ? "walking" : "standing");
  person["attributes"] = attrs;

  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  nlohmann::ordered_json edges = nlohmann::ordered_json::array();
  nodes.push_back(person);
  nodes.push_back({{"id", "shirt"},
                   {"attributes", {kPalette[static_cast<std::size_t>(id.shirt)].name,
                                   id.long_sleeves ? "long sleeves" : "short sleeves"}}});
  nodes.push_back({{"id", "pants"}, {"attributes", {kPalette[static_cast<std::size_t>(id.pants)].name}}});
  edges.push_back({{"source", "person"}, {"target", "shirt"}, {"relation", "wearing"}});
  edges.push_back({{"source", "person"}, {"target", "pants"}, {"relation", "wearing"}});
  if (id.accessory != 0) {
    const std::string acc = kAccessory[static_cast<std::size_t>(id.accessory)];
    nodes.push_back({{"id", acc}, {"attributes", {kPalette[static_cast<std::size_t>(id.accessory_color)].name}}});
    edges.push_back({{"source", "person"}, {"target", acc}, {"relation", id.accessory == 3 ? "wearing" : "carrying"}});
  }
  return nlohmann::ordered_json{{"nodes", nodes}, {"edges", edges}}.dump(2);
}

// Defects the rule-based repair is expected to undo.
std::string corrupt(std::string text, int kind) {
  if (kind == 0 || kind == 2) {
    for (std::size_t pos = 0; (pos = text.find("\n  ]", pos)) != std::string::npos; pos += 4) {
      text.insert(pos, ",");
      pos += 1;
    }
  }
  if (kind == 1 || kind == 2) text = "Here is the scene graph:\n```json\n" + text + "\n```\n";
  return text;
}

}  // namespace

SynthTruth generate_synthetic(const std::filesystem::path& root, const SynthConfig& cfg) {
  if (cfg.train_ids < 2 || cfg.test_ids < 1 || cfg.images_per_id < 2 || cfg.queries_per_id < 1 ||
      cfg.queries_per_id >= cfg.images_per_id || cfg.cameras < 2)
    throw ContractViolation("synthetic dataset configuration is degenerate");
  const int total = cfg.train_ids + cfg.test_ids;
  if (total > static_cast<int>(kPalette.size() * kPalette.size()))
    throw ContractViolation("synthetic generator supports at most 64 identities");

  std::mt19937_64 rng(cfg.seed);
  // Distinct (shirt, pants) pairs so every identity has its own look.
  std::vector<int> combos(kPalette.size() * kPalette.size());
  for (std::size_t i = 0; i < combos.size(); ++i) combos[i] = static_cast<int>(i);
  for (std::size_t i = 0; i + 1 < combos.size(); ++i)
    std::swap(combos[i], combos[i + static_cast<std::size_t>(pick(rng, static_cast<int>(combos.size() - i)))]);

  std::vector<Identity> ids;
  for (int i = 0; i < total; ++i) {
    Identity id;
    id.pid = i < cfg.train_ids ? i + 1 : 500 + (i - cfg.train_ids) + 1;
    id.shirt = combos[static_cast<std::size_t>(i)] / static_cast<int>(kPalette.size());
    id.pants = combos[static_cast<std::size_t>(i)] % static_cast<int>(kPalette.size());
    id.hair = pick(rng, static_cast<int>(kHair.size()));
    id.accessory = pick(rng, static_cast<int>(kAccessory.size()));
    id.accessory_color = pick(rng, static_cast<int>(kPalette.size()));
    id.long_sleeves = uniform01(rng) < 0.5;
    ids.push_back(id);
  }

  for (const char* dir : {"bounding_box_train", "query", "bounding_box_test", "lvlm_fixtures"})
    std::filesystem::create_directories(root / dir);

  SynthTruth truth;
  int frame = 0;
  for (int i = 0; i < total; ++i) {
    const Identity& id = ids[static_cast<std::size_t>(i)];
    const bool train = i < cfg.train_ids;
    (train ? truth.train_identities : truth.test_identities).push_back(id.pid);
    for (int j = 0; j < cfg.images_per_id; ++j) {
      const int cam = j % cfg.cameras + 1;
      char name[64];
      std::snprintf(name, sizeof name, "%04d_c%ds1_%06d_00", id.pid, cam, ++frame);
      const char* dir = train ? "bounding_box_train" : (j < cfg.queries_per_id ? "query" : "bounding_box_test");
      (train ? truth.train : (j < cfg.queries_per_id ? truth.query : truth.gallery)) += 1;

      std::vector<std::uint8_t> jpg;
      cv::imencode(".jpg", render(id, rng), jpg, {cv::IMWRITE_JPEG_QUALITY, 95});
      write_file(root / dir / (std::string(name) + ".jpg"), std::string_view(reinterpret_cast<const char*>(jpg.data()), jpg.size()));

      std::string text = graph_text(id, rng);
      if (uniform01(rng) < cfg.malformed_rate) {
        text = corrupt(std::move(text), pick(rng, 3));
        truth.malformed.emplace_back(name);
      }
      write_file(root / "lvlm_fixtures" / (std::string(name) + ".json"), text);
    }
  }

  nlohmann::ordered_json gt;
  gt["train"] = truth.train;
  gt["query"] = truth.query;
  gt["gallery"] = truth.gallery;
  gt["train_identities"] = truth.train_identities;
  gt["test_identities"] = truth.test_identities;
  gt["malformed"] = truth.malformed;
  write_file(root / "ground_truth.json", gt.dump(2) + "\n");
  return truth;
}

}  // namespace reid
