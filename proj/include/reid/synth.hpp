#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace reid {

struct SynthConfig {
  int train_ids = 8;
  int test_ids = 8;
  int images_per_id = 10;
  int queries_per_id = 2;  // test images sent to query/, the rest to bounding_box_test/
  int cameras = 6;
  double malformed_rate = 0.1;  // share of scene-graph fixtures with repairable defects
  std::uint64_t seed = 0;
};

struct SynthTruth {
  std::size_t train = 0;
  std::size_t query = 0;
  std::size_t gallery = 0;
  std::vector<int> train_identities;
  std::vector<int> test_identities;
  std::vector<std::string> malformed;  // image ids whose fixture needs repair
};

/// Writes a Market-1501 style tree under `root` (bounding_box_train/,
/// query/, bounding_box_test/), LVLM replay fixtures in lvlm_fixtures/ and
/// the expected counts in ground_truth.json.
SynthTruth generate_synthetic(const std::filesystem::path& root, const SynthConfig& cfg);

}  // namespace reid
