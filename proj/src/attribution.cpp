#include "reid/attribution.hpp"

#include <cmath>
#include <cstdio>

#include "reid/errors.hpp"
#include "reid/util.hpp"

namespace reid {

namespace {

void check_normalized(int num_nodes, const std::vector<std::pair<int, int>>& edges, const Eigen::VectorXd& alpha,
                      const char* layer) {
  std::vector<double> sums(static_cast<std::size_t>(num_nodes), 0.0);
  std::vector<char> has_in(static_cast<std::size_t>(num_nodes), 0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    sums[static_cast<std::size_t>(edges[e].second)] += alpha[static_cast<Eigen::Index>(e)];
    has_in[static_cast<std::size_t>(edges[e].second)] = 1;
  }
  for (int v = 0; v < num_nodes; ++v)
    if (has_in[static_cast<std::size_t>(v)] && std::abs(sums[static_cast<std::size_t>(v)] - 1.0) > 1e-9)
      throw ContractViolation(std::string(layer) + " attention into node " + std::to_string(v) + " sums to " +
                              std::to_string(sums[static_cast<std::size_t>(v)]));
}

}  // namespace

AttributionResult gatt_from_attention(int num_nodes, const std::vector<std::pair<int, int>>& edges,
                                      const Eigen::VectorXd& alpha1, const Eigen::VectorXd& alpha2, int target) {
  const auto m = static_cast<Eigen::Index>(edges.size());
  if (alpha1.size() != m || alpha2.size() != m) throw ShapeMismatch("one attention coefficient per edge expected");
  if (target < 0 || target >= num_nodes) throw ContractViolation("attribution target " + std::to_string(target) + " out of range");
  for (const auto& [u, v] : edges)
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes) throw ContractViolation("edge endpoint out of range");
  check_normalized(num_nodes, edges, alpha1, "layer-1");
  check_normalized(num_nodes, edges, alpha2, "layer-2");

  // Layer-2 mass each node sends straight into the target.
  std::vector<double> into_target(static_cast<std::size_t>(num_nodes), 0.0);
  for (Eigen::Index e = 0; e < m; ++e)
    if (edges[static_cast<std::size_t>(e)].second == target)
      into_target[static_cast<std::size_t>(edges[static_cast<std::size_t>(e)].first)] += alpha2[e];

  AttributionResult r;
  r.target = target;
  r.edges = edges;
  r.edge_scores = Eigen::VectorXd::Zero(m);
  r.node_scores = Eigen::VectorXd::Zero(num_nodes);
  for (Eigen::Index e = 0; e < m; ++e) {
    const auto [u, v] = edges[static_cast<std::size_t>(e)];
    double s = alpha1[e] * into_target[static_cast<std::size_t>(v)];
    if (v == target) s += alpha2[e];
    r.edge_scores[e] = s;
    r.node_scores[u] += s;
  }
  for (int n = 0; n < num_nodes; ++n)
    if (r.node_scores[n] == 0.0) r.omitted_nodes.push_back(n);
  return r;
}

AttributionResult gatt_attribute(const GraphEncoderParams& encoder, const NumericGraph& graph, int target) {
  if (target < 0) target = graph.person_node_index;
  const LayerAttention att = encoder_attention(encoder, graph);
  AttributionResult r = gatt_from_attention(static_cast<int>(att.graph.node_features.rows()), att.graph.edge_index,
                                            att.layer1, att.layer2, target);
  r.image_id = graph.source_image_id;
  return r;
}

namespace {

std::string describe(const SGNode& n) {
  if (n.kind == NodeKind::attribute) return n.label + " (attribute of " + n.owner + ")";
  return n.id;
}

void check_alignment(const AttributionResult& r, const SceneGraph& g) {
  if (static_cast<std::size_t>(r.node_scores.size()) != g.nodes.size())
    throw ShapeMismatch("attribution and scene graph disagree on node count");
}

}  // namespace

std::string render_attribution(const AttributionResult& r, const SceneGraph& g) {
  check_alignment(r, g);
  std::string out = "image: " + (r.image_id.empty() ? g.source_image_id : r.image_id) + "\n";
  out += "target: " + std::to_string(r.target) + ": " + g.nodes[static_cast<std::size_t>(r.target)].id + "\n";
  out += "contributing nodes:\n";
  char buf[32];
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const double s = r.node_scores[static_cast<Eigen::Index>(i)];
    if (s == 0.0) continue;
    std::snprintf(buf, sizeof buf, "%.6f", s);
    out += "  " + std::to_string(i) + ": " + describe(g.nodes[i]) + "  " + buf + "\n";
  }
  out += "omitted: " + std::to_string(r.omitted_nodes.size()) + "\n";
  return out;
}

std::string render_attribution_csv(const AttributionResult& r, const SceneGraph& g) {
  check_alignment(r, g);
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  std::string out = "index,node_id,kind,text,owner,score\n";
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const SGNode& n = g.nodes[i];
    out += std::to_string(i) + "," + quote(n.id) + "," + (n.kind == NodeKind::attribute ? "attribute" : "object") +
           "," + quote(n.text()) + "," + quote(n.owner) + "," + format_double(r.node_scores[static_cast<Eigen::Index>(i)]) +
           "\n";
  }
  return out;
}

}  // namespace reid
