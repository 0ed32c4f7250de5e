#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "reid/gat.hpp"
#include "reid/scene_graph.hpp"

namespace reid {

/// Attention path-product attribution towards one node. Edges are the
/// message edges of the self-loop augmented graph, in encoder order.
struct AttributionResult {
  std::string image_id;
  int target = 0;
  std::vector<std::pair<int, int>> edges;  // (source, destination)
  Eigen::VectorXd edge_scores;             // one per edge
  Eigen::VectorXd node_scores;             // one per node: sum over its outgoing edges
  std::vector<int> omitted_nodes;          // nodes scoring exactly zero, ascending
};

/// Scores from given per-layer coefficients. For edge u -> v:
///   alpha1(u->v) * sum_{e = v->target} alpha2(e)  +  [v == target] * alpha2(u->v)
/// i.e. the sum over every path of at most two hops that starts with this
/// edge and ends at the target. Throws ContractViolation if either layer's
/// coefficients do not sum to one per destination.
AttributionResult gatt_from_attention(int num_nodes, const std::vector<std::pair<int, int>>& edges,
                                      const Eigen::VectorXd& alpha1, const Eigen::VectorXd& alpha2, int target);

/// Runs the encoder's attention on `graph`; `target` < 0 selects the person node.
AttributionResult gatt_attribute(const GraphEncoderParams& encoder, const NumericGraph& graph, int target = -1);

/// Text report: image id, target node, then one row per contributing node in
/// scene-graph order with its raw score.
std::string render_attribution(const AttributionResult& result, const SceneGraph& graph);
/// index,node_id,kind,text,owner,score for every node (omitted ones included).
std::string render_attribution_csv(const AttributionResult& result, const SceneGraph& graph);

}  // namespace reid
