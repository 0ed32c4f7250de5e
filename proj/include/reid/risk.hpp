#pragma once

#include <optional>
#include <string>
#include <vector>

#include "reid/attribution.hpp"
#include "reid/eval.hpp"
#include "reid/scene_graph.hpp"

namespace reid {

struct NamedReport {
  std::string name;
  EvalReport plain;
  std::optional<EvalReport> reranked;
};

struct AttributedNode {
  std::string image_id;
  std::string text;
  bool attribute = false;
  double score = 0.0;
};

/// Flattens one attribution into rows, dropping non-contributing nodes.
std::vector<AttributedNode> attributed_nodes(const AttributionResult& result, const SceneGraph& graph);

/// Markdown summary: metrics per report with and without re-ranking,
/// cross-dataset deltas against the in-domain report on the same target, and
/// the attribute strings with the largest summed attribution.
std::string risk_report(const std::vector<NamedReport>& reports, const std::vector<AttributedNode>& attributions,
                        int top_n = 10);

}  // namespace reid
