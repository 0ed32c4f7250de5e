#include "reid/risk.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "reid/errors.hpp"

namespace reid {

std::vector<AttributedNode> attributed_nodes(const AttributionResult& result, const SceneGraph& graph) {
  if (static_cast<std::size_t>(result.node_scores.size()) != graph.nodes.size())
    throw ShapeMismatch("attribution and scene graph disagree on node count");
  std::vector<AttributedNode> out;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const double s = result.node_scores[static_cast<Eigen::Index>(i)];
    if (s == 0.0) continue;
    const SGNode& n = graph.nodes[i];
    out.push_back({result.image_id.empty() ? graph.source_image_id : result.image_id, n.text(),
                   n.kind == NodeKind::attribute, s});
  }
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string signed_fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.4f", v);
  return buf;
}

}  // namespace

std::string risk_report(const std::vector<NamedReport>& reports, const std::vector<AttributedNode>& attributions,
                        int top_n) {
  std::string out = "# Re-identification risk report\n";
  for (const auto& r : reports) {
    const EvalReport& p = r.plain;
    out += "\n## " + r.name + "\n\n";
    out += "dataset: " + (p.target_dataset.empty() ? std::string("unknown") : p.target_dataset);
    if (p.cross_dataset) out += " (trained on " + p.source_dataset + ", cross-dataset)";
    out += "\n\n| metric | plain | re-ranked |\n|---|---|---|\n";
    const auto row = [&](const char* name, double plain, std::optional<double> rr) {
      out += std::string("| ") + name + " | " + fmt(plain) + " | " + (rr ? fmt(*rr) : std::string("-")) + " |\n";
    };
    const EvalReport* rr = r.reranked ? &*r.reranked : nullptr;
    row("R@1", p.rank1, rr ? std::optional(rr->rank1) : std::nullopt);
    row("R@5", p.rank5, rr ? std::optional(rr->rank5) : std::nullopt);
    row("mAP", p.mean_ap, rr ? std::optional(rr->mean_ap) : std::nullopt);
    out += "\nqueries: " + std::to_string(p.num_queries) + " (" + std::to_string(p.num_valid_queries) +
           " with a valid match), gallery: " + std::to_string(p.num_gallery) + "\n";
    if (rr && rr->rerank)
      out += "re-ranking: k1=" + std::to_string(rr->rerank->k1) + " k2=" + std::to_string(rr->rerank->k2) +
             " lambda=" + fmt(rr->rerank->lambda) + "\n";
  }

  std::string deltas;
  for (const auto& cross : reports) {
    if (!cross.plain.cross_dataset) continue;
    for (const auto& ref : reports) {
      if (ref.plain.cross_dataset || ref.plain.target_dataset != cross.plain.target_dataset) continue;
      deltas += "- " + cross.name + " vs " + ref.name + ": R@1 " + signed_fmt(cross.plain.rank1 - ref.plain.rank1) +
                ", R@5 " + signed_fmt(cross.plain.rank5 - ref.plain.rank5) + ", mAP " +
                signed_fmt(cross.plain.mean_ap - ref.plain.mean_ap) + "\n";
    }
  }
  if (!deltas.empty()) out += "\n## Cross-dataset deltas\n\n" + deltas;

  if (!attributions.empty()) {
    struct Agg {
      double total = 0.0;
      std::set<std::string> images;
    };
    std::map<std::string, Agg> by_text;
    std::set<std::string> images;
    for (const auto& a : attributions) {
      images.insert(a.image_id);
      if (!a.attribute) continue;
      auto& g = by_text[a.text];
      g.total += a.score;
      g.images.insert(a.image_id);
    }
    std::vector<std::pair<std::string, Agg>> ranked(by_text.begin(), by_text.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second.total > b.second.total; });
    out += "\n## Most attributed attributes\n\nimages analysed: " + std::to_string(images.size()) + "\n\n";
    out += "| rank | attribute | total score | images |\n|---|---|---|---|\n";
    for (std::size_t i = 0; i < ranked.size() && static_cast<int>(i) < top_n; ++i)
      out += "| " + std::to_string(i + 1) + " | " + ranked[i].first + " | " + fmt(ranked[i].second.total) + " | " +
             std::to_string(ranked[i].second.images.size()) + " |\n";
  }
  return out;
}

}  // namespace reid
