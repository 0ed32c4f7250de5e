#include "reid/text_embed.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "reid/errors.hpp"
#include "reid/util.hpp"

namespace reid {

using nlohmann::json;

TextVector::TextVector(Eigen::VectorXd values) : values_(std::move(values)) {
  if (values_.size() != kTextDim)
    throw ShapeMismatch("text vector has dimension " + std::to_string(values_.size()) + ", expected 384");
  if (!values_.allFinite()) throw Error("text vector has non-finite entries");
}

TextVector StubEmbedClient::embed(const std::string& s) {
  std::mt19937_64 rng(fnv1a64(s) ^ (seed_ * 0x9e3779b97f4a7c15ULL));
  Eigen::VectorXd v(kTextDim);
  for (int i = 0; i < kTextDim; ++i) v[i] = 2.0 * uniform01(rng) - 1.0;
  v /= v.norm();
  return TextVector(std::move(v));
}

FixtureEmbedClient::FixtureEmbedClient(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw EmbedUnavailable("cannot open embedding fixture " + file.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.contains("text") || !rec.contains("vector"))
      throw EmbedUnavailable(file.string() + ":" + std::to_string(lineno) + ": malformed record");
    const auto vals = rec["vector"].get<std::vector<double>>();
    table_[rec["text"].get<std::string>()] = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  }
}

TextVector FixtureEmbedClient::embed(const std::string& s) {
  auto it = table_.find(s);
  if (it == table_.end()) throw EmbedUnavailable("no embedding fixture for \"" + s + "\"");
  return TextVector(it->second);
}

TextVector HttpEmbedClient::embed(const std::string& s) {
  std::lock_guard lock(mu_);
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(5, 0);
  json body;
  body["texts"] = json::array({s});
  auto res = cli.Post(path_, body.dump(), "application/json");
  if (!res) throw EmbedUnavailable("embedding endpoint " + host_ + ":" + std::to_string(port_) + " unreachable");
  if (res->status != 200) throw EmbedUnavailable("embedding endpoint returned HTTP " + std::to_string(res->status));
  const json reply = json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("embeddings") || reply["embeddings"].empty())
    throw EmbedUnavailable("malformed embedding endpoint reply");
  const auto vals = reply["embeddings"][0].get<std::vector<double>>();
  return TextVector(Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size())));
}

TextVector CachedEmbedClient::embed(const std::string& s) {
  {
    std::shared_lock lock(mu_);
    if (auto it = cache_.find(s); it != cache_.end()) return TextVector(it->second);
  }
  TextVector v = inner_.embed(s);
  std::unique_lock lock(mu_);
  cache_.emplace(s, v.values());
  return v;
}

std::size_t CachedEmbedClient::size() const {
  std::shared_lock lock(mu_);
  return cache_.size();
}

void CachedEmbedClient::save(const std::filesystem::path& file) const {
  std::vector<std::pair<std::string, Eigen::VectorXd>> records;
  {
    std::shared_lock lock(mu_);
    records.assign(cache_.begin(), cache_.end());
  }
  write_embedding_records(file, records);
}

void write_embedding_records(const std::filesystem::path& file,
                             const std::vector<std::pair<std::string, Eigen::VectorXd>>& records) {
  std::ostringstream out;
  for (const auto& [text, v] : records) {
    json rec;
    rec["text"] = text;
    rec["vector"] = std::vector<double>(v.data(), v.data() + v.size());
    out << rec.dump() << '\n';
  }
  write_file(file, out.str());
}

TextVector embed_text(const std::string& s, EmbedClient& client) {
  if (s.empty()) throw ContractViolation("embed_text: empty string");
  return client.embed(s);
}

NumericGraph numerify_graph(const SceneGraph& g, EmbedClient& client, PersonPolicy policy) {
  if (!g.expanded || !g.flow_reversed)
    throw ContractViolation("numerify_graph: graph must be expanded and flow-reversed");

  NumericGraph out;
  out.source_image_id = g.source_image_id;
  const auto n = static_cast<Eigen::Index>(g.nodes.size());
  out.node_features.resize(n, kTextDim);
  std::unordered_map<std::string, int> index;
  for (Eigen::Index i = 0; i < n; ++i) {
    const SGNode& node = g.nodes[static_cast<std::size_t>(i)];
    out.node_features.row(i) = embed_text(node.text(), client).values().transpose();
    index.emplace(node.id, static_cast<int>(i));
  }

  out.edge_features.resize(static_cast<Eigen::Index>(g.edges.size()), kTextDim);
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    const SGEdge& e = g.edges[k];
    auto s = index.find(e.source);
    auto t = index.find(e.target);
    if (s == index.end() || t == index.end()) throw ContractViolation("numerify_graph: dangling edge endpoint");
    out.edge_index.emplace_back(s->second, t->second);
    out.edge_features.row(static_cast<Eigen::Index>(k)) = embed_text(e.relation, client).values().transpose();
  }

  out.person_node_index = -1;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i].kind == NodeKind::object && g.nodes[i].id == "person") {
      out.person_node_index = static_cast<int>(i);
      break;
    }
  }
  if (out.person_node_index < 0) {
    if (policy == PersonPolicy::strict)
      throw MissingPersonNode("graph " + g.source_image_id + " has no \"person\" node");
    spdlog::warn("graph {} has no \"person\" node; using node 0 as root", g.source_image_id);
    out.person_node_index = 0;
  }
  return out;
}

}  // namespace reid
