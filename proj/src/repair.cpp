#include "reid/repair.hpp"

#include <algorithm>
#include <array>
#include <set>

#include <httplib.h>
#include <json.hpp>

#include "reid/errors.hpp"
#include "reid/scene_graph.hpp"
#include "reid/util.hpp"

namespace reid {

using ojson = nlohmann::ordered_json;

std::string_view rule_name(RepairRule r) {
  switch (r) {
    case RepairRule::strip_wrapper: return "strip_wrapper";
    case RepairRule::trailing_commas: return "trailing_commas";
    case RepairRule::escapes: return "escapes";
    case RepairRule::smart_quotes: return "smart_quotes";
    case RepairRule::restructure_edges: return "restructure_edges";
    case RepairRule::dedup_attributes: return "dedup_attributes";
    case RepairRule::restructure_nodes: return "restructure_nodes";
  }
  return "unknown";
}

namespace {

constexpr std::string_view kLeftDouble = "\xE2\x80\x9C";   // U+201C
constexpr std::string_view kRightDouble = "\xE2\x80\x9D";  // U+201D
constexpr std::string_view kLowDouble = "\xE2\x80\x9E";    // U+201E
constexpr std::string_view kLeftSingle = "\xE2\x80\x98";   // U+2018
constexpr std::string_view kRightSingle = "\xE2\x80\x99";  // U+2019

bool starts_with_at(std::string_view s, std::size_t i, std::string_view p) { return s.substr(i, p.size()) == p; }

std::string strip_wrapper(std::string_view s) {
  const auto open = s.find('{');
  if (open == std::string_view::npos) return std::string(s);
  const auto close = s.rfind('}');
  if (close != std::string_view::npos && close > open) return std::string(s.substr(open, close - open + 1));
  // Truncated document: keep everything from the first brace, minus a dangling fence.
  std::string rest(s.substr(open));
  if (auto fence = rest.rfind("```"); fence != std::string::npos) rest.erase(fence);
  while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.back()))) rest.pop_back();
  return rest;
}

std::string drop_trailing_commas(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_str) {
      out.push_back(c);
      if (c == '\\' && i + 1 < s.size()) {
        out.push_back(s[++i]);
      } else if (c == '"') {
        in_str = false;
      }
      continue;
    }
    if (c == '"') {
      in_str = true;
    } else if (c == ',') {
      std::size_t j = i + 1;
      while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j < s.size() && (s[j] == ']' || s[j] == '}')) continue;
    }
    out.push_back(c);
  }
  return out;
}

bool is_hex(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }

std::string fix_escapes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (!in_str) {
      if (c == '"') in_str = true;
      out.push_back(c);
      continue;
    }
    if (c == '"') {
      in_str = false;
      out.push_back(c);
    } else if (c == '\\') {
      if (i + 1 >= s.size()) continue;  // lone trailing backslash
      const char n = s[i + 1];
      const bool valid = std::string_view("\"\\/bfnrt").find(n) != std::string_view::npos ||
                         (n == 'u' && i + 5 < s.size() && is_hex(s[i + 2]) && is_hex(s[i + 3]) && is_hex(s[i + 4]) &&
                          is_hex(s[i + 5]));
      if (valid) {
        out.push_back(c);
        out.push_back(n);
        ++i;
      }
      // invalid escape: drop the backslash, keep the character on the next turn
    } else if (static_cast<unsigned char>(c) < 0x20) {
      if (c == '\n') out += "\\n";
      else if (c == '\t') out += "\\t";
      else if (c != '\r') out.push_back(' ');
    } else {
      out.push_back(c);
    }
  }
  return out;
}

// Typographic double quotes become string delimiters when they open or close
// a string they started; inside an ordinary string they are downgraded to an
// apostrophe so the string stays intact.
std::string normalize_smart_quotes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  enum class Mode { code, plain_str, smart_str } mode = Mode::code;
  for (std::size_t i = 0; i < s.size();) {
    const bool dq = starts_with_at(s, i, kLeftDouble) || starts_with_at(s, i, kRightDouble) ||
                    starts_with_at(s, i, kLowDouble);
    const bool sq = starts_with_at(s, i, kLeftSingle) || starts_with_at(s, i, kRightSingle);
    if (dq) {
      if (mode == Mode::code) {
        out.push_back('"');
        mode = Mode::smart_str;
      } else if (mode == Mode::smart_str) {
        out.push_back('"');
        mode = Mode::code;
      } else {
        out.push_back('\'');
      }
      i += 3;
      continue;
    }
    if (sq) {
      out.push_back('\'');
      i += 3;
      continue;
    }
    const char c = s[i];
    if (mode != Mode::code && c == '\\' && i + 1 < s.size()) {
      out.push_back(c);
      out.push_back(s[i + 1]);
      i += 2;
      continue;
    }
    if (c == '"') {
      if (mode == Mode::code) mode = Mode::plain_str;
      else if (mode == Mode::plain_str) mode = Mode::code;
      else {
        // a straight quote inside a smart-quoted string would end it early
        out += "\\\"";
        ++i;
        continue;
      }
    }
    out.push_back(c);
    ++i;
  }
  return out;
}

std::string scalar_to_string(const ojson& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  return v.dump();
}

const ojson* first_key(const ojson& obj, std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    if (auto it = obj.find(k); it != obj.end()) return &*it;
  return nullptr;
}

bool restructure_edges(ojson& doc) {
  if (!doc.is_object()) return false;
  bool changed = false;
  if (!doc.contains("edges")) {
    for (const char* alt : {"relations", "relationships", "links"}) {
      if (doc.contains(alt)) {
        ojson moved = doc[alt];
        doc.erase(alt);
        doc["edges"] = std::move(moved);
        changed = true;
        break;
      }
    }
  }
  auto it = doc.find("edges");
  if (it == doc.end() || !it->is_array()) return changed;

  ojson fixed = ojson::array();
  for (const ojson& e : *it) {
    ojson out;
    if (e.is_array() && e.size() == 3) {
      out["source"] = scalar_to_string(e[0]);
      out["target"] = scalar_to_string(e[2]);
      out["relation"] = scalar_to_string(e[1]);
    } else if (e.is_object()) {
      const ojson* src = first_key(e, {"source", "from", "subject", "src", "head", "node1", "start"});
      const ojson* dst = first_key(e, {"target", "to", "object", "dst", "tail", "node2", "end"});
      const ojson* rel = first_key(e, {"relation", "relationship", "label", "predicate", "rel", "type", "edge", "name"});
      out["source"] = src ? scalar_to_string(*src) : "";
      out["target"] = dst ? scalar_to_string(*dst) : "";
      out["relation"] = rel ? scalar_to_string(*rel) : "";
    } else {
      out = e;
    }
    fixed.push_back(std::move(out));
  }
  if (fixed != *it) {
    *it = std::move(fixed);
    changed = true;
  }
  return changed;
}

bool dedup_attributes(ojson& doc) {
  if (!doc.is_object()) return false;
  auto it = doc.find("nodes");
  if (it == doc.end() || !it->is_array()) return false;
  bool changed = false;
  for (ojson& n : *it) {
    if (!n.is_object()) continue;
    auto a = n.find("attributes");
    if (a == n.end() || !a->is_array()) continue;
    ojson kept = ojson::array();
    std::set<std::string> seen;
    for (const ojson& v : *a) {
      if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        if (s.empty() || !seen.insert(s).second) continue;
      }
      kept.push_back(v);
    }
    if (kept.size() != a->size()) {
      *a = std::move(kept);
      changed = true;
    }
  }
  return changed;
}

bool restructure_nodes(ojson& doc) {
  if (!doc.is_object()) return false;
  auto it = doc.find("nodes");
  if (it == doc.end() || !it->is_array()) return false;
  bool changed = false;
  for (ojson& n : *it) {
    if (n.is_string()) {
      ojson obj;
      obj["id"] = n.get<std::string>();
      obj["attributes"] = ojson::array();
      n = std::move(obj);
      changed = true;
      continue;
    }
    if (!n.is_object()) continue;
    if (!n.contains("id")) {
      if (const ojson* alt = first_key(n, {"name", "label", "node"}); alt && alt->is_string()) {
        ojson obj;
        obj["id"] = *alt;
        obj["attributes"] = n.value("attributes", ojson::array());
        n = std::move(obj);
        changed = true;
      }
    }
    if (!n.contains("attributes") && n.contains("attribute")) {
      n["attributes"] = n["attribute"];
      n.erase("attribute");
      changed = true;
    }
    if (auto a = n.find("attributes"); a != n.end() && a->is_string()) {
      *a = ojson::array({a->get<std::string>()});
      changed = true;
    }
  }
  return changed;
}

bool has_duplicate_attributes(const SceneGraph& g) {
  for (const auto& n : g.nodes) {
    std::set<std::string_view> seen;
    for (const auto& a : n.attributes)
      if (!seen.insert(a).second) return true;
  }
  return false;
}

}  // namespace

bool is_clean_graph_text(std::string_view text) {
  auto r = parse_scene_graph(text);
  return r && !has_duplicate_attributes(*r.graph);
}

RepairOutcome fix_malformed_json(std::string_view text) {
  RepairOutcome out{std::string(text), {}, false};
  if (is_clean_graph_text(text)) return out;

  using TextRule = std::string (*)(std::string_view);
  constexpr std::array<std::pair<RepairRule, TextRule>, 4> text_rules{{
      {RepairRule::strip_wrapper, &strip_wrapper},
      {RepairRule::trailing_commas, &drop_trailing_commas},
      {RepairRule::escapes, &fix_escapes},
      {RepairRule::smart_quotes, &normalize_smart_quotes},
  }};
  using TreeRule = bool (*)(ojson&);
  constexpr std::array<std::pair<RepairRule, TreeRule>, 3> tree_rules{{
      {RepairRule::restructure_edges, &restructure_edges},
      {RepairRule::dedup_attributes, &dedup_attributes},
      {RepairRule::restructure_nodes, &restructure_nodes},
  }};

  std::set<RepairRule> fired;
  std::string cur = out.repaired_text;
  // Rounds repeat until nothing changes, which makes the whole function idempotent.
  for (int round = 0; round < 16; ++round) {
    const std::string before = cur;
    for (const auto& [rule, fn] : text_rules) {
      std::string next = fn(cur);
      if (next != cur) {
        fired.insert(rule);
        cur = std::move(next);
      }
    }
    ojson doc = ojson::parse(cur, nullptr, false);
    if (!doc.is_discarded()) {
      bool tree_changed = false;
      for (const auto& [rule, fn] : tree_rules) {
        if (fn(doc)) {
          fired.insert(rule);
          tree_changed = true;
        }
      }
      if (tree_changed) cur = doc.dump(2, ' ', false, ojson::error_handler_t::replace);
    }
    if (cur == before || is_clean_graph_text(cur)) break;
  }
  out.repaired_text = std::move(cur);
  out.rules_applied.assign(fired.begin(), fired.end());
  return out;
}

std::string fix_graph_prompt(std::string_view graph) {
  std::string p =
      "Fix the JSON graph.\n"
      "Example format:\n"
      "{\n"
      "  \"nodes\": [\n"
      "    { \"id\": \"person\", \"attributes\": [\"...\"] }\n"
      "  ],\n"
      "  \"edges\": [\n"
      "    { \"source\": \"...\", \"target\": \"...\", \"relation\": \"...\" }\n"
      "  ]\n"
      "}\n"
      "Requirements:\n"
      "- keep attributes\n"
      "- remove redundancies\n"
      "- Nodes: id + attributes list\n"
      "- Edges: source/target/relation\n"
      "- Only use one word per node/source/target/attribute\n"
      "- Output only the valid revised JSON, and no explanation or notes\n"
      "Text: ";
  p.append(graph);
  return p;
}

RepairOutcome llm_repair(std::string_view text, RepairClient& client) {
  if (parse_scene_graph(text)) throw ContractViolation("llm_repair: input already parses");
  if (parse_scene_graph(fix_malformed_json(text).repaired_text))
    throw ContractViolation("llm_repair: rule-based repair is sufficient for this input");

  const std::string response = client.complete(fix_graph_prompt(text));
  RepairOutcome out = fix_malformed_json(response);
  out.used_llm = true;
  if (auto r = parse_scene_graph(out.repaired_text); !r)
    throw RepairFailed("llm_repair: still unparseable after LLM and rule-based repair: " + r.failure->reason);
  return out;
}

void write_repair_fixture(const std::filesystem::path& dir, const std::string& request, const std::string& response) {
  ojson rec;
  rec["request"] = request;
  rec["response"] = response;
  write_file(dir / (hex64(fnv1a64(request)) + ".json"), rec.dump(2));
}

std::string ReplayRepairClient::complete(const std::string& prompt) {
  const auto path = dir_ / (hex64(fnv1a64(prompt)) + ".json");
  if (!std::filesystem::exists(path)) throw RepairUnavailable("no repair fixture for request " + path.filename().string());
  const ojson rec = ojson::parse(read_file(path));
  if (rec.at("request").get<std::string>() != prompt)
    throw RepairUnavailable("repair fixture hash collision at " + path.string());
  return rec.at("response").get<std::string>();
}

std::string RecordingRepairClient::complete(const std::string& prompt) {
  std::string response = inner_.complete(prompt);
  write_repair_fixture(dir_, prompt, response);
  return response;
}

std::string HttpRepairClient::complete(const std::string& prompt) {
  std::lock_guard lock(mu_);
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(5, 0);
  cli.set_read_timeout(timeout_s_, 0);
  ojson body;
  body["model"] = model_;
  body["prompt"] = prompt;
  body["stream"] = false;
  auto res = cli.Post("/api/generate", body.dump(), "application/json");
  if (!res) throw RepairUnavailable("repair endpoint " + host_ + ":" + std::to_string(port_) + " unreachable");
  if (res->status != 200) throw RepairUnavailable("repair endpoint returned HTTP " + std::to_string(res->status));
  const ojson reply = ojson::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("response")) throw RepairUnavailable("malformed repair endpoint reply");
  return reply["response"].get<std::string>();
}

}  // namespace reid
