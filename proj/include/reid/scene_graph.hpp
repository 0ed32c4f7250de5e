#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace reid {

enum class NodeKind { object, attribute };
enum class EdgeKind { relation, attribute };

/// Relation label given to the attribute -> owner edges created by expansion.
inline constexpr std::string_view kAttributeRelation = "has attribute";

struct SGNode {
  std::string id;
  std::vector<std::string> attributes;
  NodeKind kind = NodeKind::object;
  // Set on attribute nodes: the raw attribute text and the id of the owning node.
  std::string label;
  std::string owner;

  /// Text fed to the embedder: the raw attribute string for attribute nodes,
  /// the id otherwise. Collision suffixes never reach the embedder.
  [[nodiscard]] const std::string& text() const { return kind == NodeKind::attribute ? label : id; }

  bool operator==(const SGNode&) const = default;
};

struct SGEdge {
  std::string source;
  std::string target;
  std::string relation;
  EdgeKind kind = EdgeKind::relation;

  bool operator==(const SGEdge&) const = default;
};

/// A parsed textual scene graph. `expanded` and `flow_reversed` track which
/// canonicalization passes have already been applied.
struct SceneGraph {
  std::vector<SGNode> nodes;
  std::vector<SGEdge> edges;
  std::string source_image_id;
  bool expanded = false;
  bool flow_reversed = false;

  [[nodiscard]] std::optional<std::size_t> index_of(std::string_view id) const;

  bool operator==(const SceneGraph&) const = default;
};

struct ParseFailure {
  enum class Kind { syntax, schema };
  Kind kind = Kind::syntax;
  std::size_t position = 0;  // byte offset for syntax errors
  std::string reason;
};

struct ParseResult {
  std::optional<SceneGraph> graph;
  std::optional<ParseFailure> failure;

  explicit operator bool() const { return graph.has_value(); }
};

/// Parses one generation output in the scene-graph document format:
/// {"nodes": [{"id", "attributes"}], "edges": [{"source", "target", "relation"}]}.
ParseResult parse_scene_graph(std::string_view text, std::string source_image_id = {});

/// Serializes to the same document format (two-space indentation).
std::string to_document(const SceneGraph& g);

/// Appends one node per attribute with an "has attribute" edge pointing from
/// the attribute node to its owner. Attribute strings that occur under more
/// than one owner, or that clash with an existing node id, get an "#<owner>"
/// suffix.
SceneGraph expand_attributes(const SceneGraph& g);

/// Turns relation edges into message edges (target -> source). Attribute
/// edges already point towards their owner and are left as-is.
SceneGraph reverse_flow(const SceneGraph& g);

}  // namespace reid
