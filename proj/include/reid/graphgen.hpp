#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reid/dataset.hpp"
#include "reid/repair.hpp"
#include "reid/scene_graph.hpp"

namespace reid {

/// Vision-language model that turns an image into scene-graph text.
class LvlmClient {
 public:
  virtual ~LvlmClient() = default;
  /// Throws LvlmUnavailable when the backend cannot answer.
  virtual std::string generate(const std::string& image_id, std::span<const std::uint8_t> image,
                               const std::string& prompt) = 0;
};

/// Serves `<dir>/<image_id>.json` verbatim (the file holds the raw model
/// output, which need not be valid JSON).
class ReplayLvlmClient : public LvlmClient {
 public:
  explicit ReplayLvlmClient(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::string generate(const std::string& image_id, std::span<const std::uint8_t> image,
                       const std::string& prompt) override;
  [[nodiscard]] int calls() const { return calls_.load(); }

 private:
  std::filesystem::path dir_;
  std::atomic<int> calls_{0};
};

/// Ollama-compatible `/api/generate` with the image attached as base64.
class HttpLvlmClient : public LvlmClient {
 public:
  HttpLvlmClient(std::string host, int port, std::string model, int timeout_s = 300)
      : host_(std::move(host)), port_(port), model_(std::move(model)), timeout_s_(timeout_s) {}
  std::string generate(const std::string& image_id, std::span<const std::uint8_t> image,
                       const std::string& prompt) override;

 private:
  std::string host_;
  int port_;
  std::string model_;
  int timeout_s_;
  std::mutex mu_;
};

/// Instruction sent with every image.
const std::string& scene_graph_prompt();

enum class GraphStatus { clean, rule_repaired, llm_repaired, dropped };
std::string to_string(GraphStatus s);

struct GraphGenEntry {
  std::string image_id;
  GraphStatus status = GraphStatus::clean;
  std::vector<std::string> rules;
  std::string reason;  // why a graph was dropped
};

struct GraphGenSummary {
  int processed = 0;  // client calls made in this run
  int skipped = 0;    // already stored or previously dropped
  int clean = 0;
  int rule_repaired = 0;
  int llm_repaired = 0;
  int dropped = 0;
  std::vector<GraphGenEntry> entries;  // this run only
};

/// Canonical text of a stored graph and how it got there.
struct RepairedGraph {
  std::optional<SceneGraph> graph;
  GraphGenEntry entry;
};

/// Rule-based repair, then LLM repair when a client is given.
RepairedGraph repair_graph_text(const std::string& image_id, const std::string& raw, RepairClient* repair);

/// Writes `<store>/<image_id>.json` for every manifest image and appends one
/// line per image to `<store>/graphgen_log.jsonl`. Images with a stored graph
/// or a logged drop are skipped, so an interrupted run resumes where it
/// stopped. LvlmUnavailable propagates after the progress is flushed.
GraphGenSummary graphgen(const DatasetManifest& manifest, LvlmClient& lvlm, const std::filesystem::path& store,
                         RepairClient* repair = nullptr);

std::filesystem::path graph_path(const std::filesystem::path& store, const std::string& image_id);
/// Parsed graph from the store, or nullopt when the image was dropped.
std::optional<SceneGraph> load_stored_graph(const std::filesystem::path& store, const std::string& image_id);

}  // namespace reid
