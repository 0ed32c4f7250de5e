#include "reid/scene_graph.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <json.hpp>

#include "reid/errors.hpp"

namespace reid {

using nlohmann::json;

std::optional<std::size_t> SceneGraph::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return i;
  return std::nullopt;
}

namespace {

ParseResult schema_failure(std::string reason) {
  return ParseResult{std::nullopt, ParseFailure{ParseFailure::Kind::schema, 0, std::move(reason)}};
}

}  // namespace

ParseResult parse_scene_graph(std::string_view text, std::string source_image_id) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    return ParseResult{std::nullopt, ParseFailure{ParseFailure::Kind::syntax, e.byte, e.what()}};
  }

  if (!doc.is_object()) return schema_failure("document is not an object");
  if (!doc.contains("nodes")) return schema_failure("missing \"nodes\"");
  if (!doc.contains("edges")) return schema_failure("missing \"edges\"");
  const json& nodes = doc["nodes"];
  const json& edges = doc["edges"];
  if (!nodes.is_array()) return schema_failure("\"nodes\" is not an array");
  if (!edges.is_array()) return schema_failure("\"edges\" is not an array");
  if (nodes.empty()) return schema_failure("graph has no nodes");

  SceneGraph g;
  g.source_image_id = std::move(source_image_id);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const json& n = nodes[i];
    const std::string where = "nodes[" + std::to_string(i) + "]";
    if (!n.is_object()) return schema_failure(where + " is not an object");
    if (!n.contains("id") || !n["id"].is_string()) return schema_failure(where + ".id missing or not a string");
    SGNode node;
    node.id = n["id"].get<std::string>();
    if (node.id.empty()) return schema_failure(where + ".id is empty");
    if (!ids.insert(node.id).second) return schema_failure("duplicate node id \"" + node.id + "\"");
    if (n.contains("attributes")) {
      const json& attrs = n["attributes"];
      if (!attrs.is_array()) return schema_failure(where + ".attributes is not an array");
      for (const json& a : attrs) {
        if (!a.is_string()) return schema_failure(where + ".attributes holds a non-string");
        if (a.get_ref<const std::string&>().empty()) return schema_failure(where + ".attributes holds an empty string");
        node.attributes.push_back(a.get<std::string>());
      }
    }
    g.nodes.push_back(std::move(node));
  }

  for (std::size_t i = 0; i < edges.size(); ++i) {
    const json& e = edges[i];
    const std::string where = "edges[" + std::to_string(i) + "]";
    if (!e.is_object()) return schema_failure(where + " is not an object");
    for (const char* key : {"source", "target", "relation"})
      if (!e.contains(key) || !e[key].is_string())
        return schema_failure(where + "." + key + " missing or not a string");
    SGEdge edge{e["source"].get<std::string>(), e["target"].get<std::string>(), e["relation"].get<std::string>(),
                EdgeKind::relation};
    if (edge.relation.empty()) return schema_failure(where + ".relation is empty");
    if (!ids.contains(edge.source)) return schema_failure(where + " dangling endpoint \"" + edge.source + "\"");
    if (!ids.contains(edge.target)) return schema_failure(where + " dangling endpoint \"" + edge.target + "\"");
    g.edges.push_back(std::move(edge));
  }
  return ParseResult{std::move(g), std::nullopt};
}

std::string to_document(const SceneGraph& g) {
  nlohmann::ordered_json doc;
  doc["nodes"] = nlohmann::ordered_json::array();
  doc["edges"] = nlohmann::ordered_json::array();
  for (const auto& n : g.nodes) {
    nlohmann::ordered_json jn;
    jn["id"] = n.id;
    jn["attributes"] = n.attributes;
    doc["nodes"].push_back(std::move(jn));
  }
  for (const auto& e : g.edges) {
    nlohmann::ordered_json je;
    je["source"] = e.source;
    je["target"] = e.target;
    je["relation"] = e.relation;
    doc["edges"].push_back(std::move(je));
  }
  return doc.dump(2);
}

SceneGraph expand_attributes(const SceneGraph& g) {
  if (g.expanded) throw ContractViolation("expand_attributes: graph already expanded");
  SceneGraph out = g;
  out.expanded = true;

  // An attribute string needs an owner suffix if it is shared between owners
  // or clashes with an original node id.
  std::map<std::string, std::set<std::string>> owners_of;
  for (const auto& n : g.nodes)
    for (const auto& a : n.attributes) owners_of[a].insert(n.id);

  std::set<std::string> taken;
  for (const auto& n : g.nodes) taken.insert(n.id);

  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const SGNode& owner = g.nodes[i];
    std::set<std::string> seen;
    for (const auto& attr : owner.attributes) {
      if (!seen.insert(attr).second) continue;
      std::string id = attr;
      if (owners_of[attr].size() > 1 || taken.contains(attr)) id = attr + "#" + owner.id;
      if (taken.contains(id)) {
        int k = 2;
        while (taken.contains(id + "#" + std::to_string(k))) ++k;
        id += "#" + std::to_string(k);
      }
      taken.insert(id);

      SGNode an;
      an.id = id;
      an.kind = NodeKind::attribute;
      an.label = attr;
      an.owner = owner.id;
      out.nodes.push_back(std::move(an));
      out.edges.push_back(SGEdge{id, owner.id, std::string(kAttributeRelation), EdgeKind::attribute});
    }
    out.nodes[i].attributes.clear();
  }
  return out;
}

SceneGraph reverse_flow(const SceneGraph& g) {
  if (g.flow_reversed) throw DoubleReversal("reverse_flow: graph already reversed");
  if (!g.expanded) throw ContractViolation("reverse_flow: expand_attributes must run first");
  SceneGraph out = g;
  out.flow_reversed = true;
  for (auto& e : out.edges)
    if (e.kind == EdgeKind::relation) std::swap(e.source, e.target);
  return out;
}

}  // namespace reid
