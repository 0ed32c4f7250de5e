#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "reid/scene_graph.hpp"

namespace reid {

inline constexpr int kTextDim = 384;

/// A finite 384-dim sentence embedding.
class TextVector {
 public:
  explicit TextVector(Eigen::VectorXd values);
  [[nodiscard]] const Eigen::VectorXd& values() const { return values_; }

 private:
  Eigen::VectorXd values_;
};

class EmbedClient {
 public:
  virtual ~EmbedClient() = default;
  /// Throws EmbedUnavailable when no vector can be produced.
  virtual TextVector embed(const std::string& s) = 0;
};

/// Seeded hash of the string expanded to 384 uniform values, L2-normalized.
/// Needs no external service.
class StubEmbedClient : public EmbedClient {
 public:
  explicit StubEmbedClient(std::uint64_t seed = 0) : seed_(seed) {}
  TextVector embed(const std::string& s) override;

 private:
  std::uint64_t seed_;
};

/// Line-delimited records {"text": ..., "vector": [384 floats]}.
class FixtureEmbedClient : public EmbedClient {
 public:
  explicit FixtureEmbedClient(const std::filesystem::path& file);
  TextVector embed(const std::string& s) override;
  [[nodiscard]] std::size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, Eigen::VectorXd> table_;
};

/// POST {"texts": [s]} -> {"embeddings": [[...]]}; one request in flight per client.
class HttpEmbedClient : public EmbedClient {
 public:
  HttpEmbedClient(std::string host, int port, std::string path = "/embed")
      : host_(std::move(host)), port_(port), path_(std::move(path)) {}
  TextVector embed(const std::string& s) override;

 private:
  std::string host_;
  int port_;
  std::string path_;
  std::mutex mu_;
};

/// Exact-string cache in front of another client. Concurrent readers,
/// exclusive writers.
class CachedEmbedClient : public EmbedClient {
 public:
  explicit CachedEmbedClient(EmbedClient& inner) : inner_(inner) {}
  TextVector embed(const std::string& s) override;
  /// Writes the cache in the fixture record format, sorted by text.
  void save(const std::filesystem::path& file) const;
  [[nodiscard]] std::size_t size() const;

 private:
  EmbedClient& inner_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Eigen::VectorXd> cache_;
};

void write_embedding_records(const std::filesystem::path& file,
                             const std::vector<std::pair<std::string, Eigen::VectorXd>>& records);

/// ContractViolation on empty input.
TextVector embed_text(const std::string& s, EmbedClient& client);

/// Numeric form of an expanded, flow-reversed scene graph. Rows of
/// `node_features` follow the scene-graph node order; `edge_index` holds
/// (source, destination) pairs in message orientation.
struct NumericGraph {
  Eigen::MatrixXd node_features;  // N x D
  std::vector<std::pair<int, int>> edge_index;
  Eigen::MatrixXd edge_features;  // M x D
  int person_node_index = 0;
  std::string source_image_id;

  [[nodiscard]] int num_nodes() const { return static_cast<int>(node_features.rows()); }
  [[nodiscard]] int num_edges() const { return static_cast<int>(edge_index.size()); }
};

enum class PersonPolicy {
  strict,   // MissingPersonNode when there is no "person" node
  lenient,  // fall back to node 0 and log a warning
};

NumericGraph numerify_graph(const SceneGraph& g, EmbedClient& client, PersonPolicy policy = PersonPolicy::strict);

}  // namespace reid
