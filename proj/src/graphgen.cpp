#include "reid/graphgen.hpp"

#include <fstream>
#include <set>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "reid/errors.hpp"
#include "reid/util.hpp"

namespace reid {

using ojson = nlohmann::ordered_json;

std::string ReplayLvlmClient::generate(const std::string& image_id, std::span<const std::uint8_t>,
                                       const std::string&) {
  ++calls_;
  const auto path = dir_ / (image_id + ".json");
  if (!std::filesystem::exists(path)) throw LvlmUnavailable("no scene-graph fixture for " + image_id);
  return read_file(path);
}

std::string HttpLvlmClient::generate(const std::string& image_id, std::span<const std::uint8_t> image,
                                     const std::string& prompt) {
  std::lock_guard lock(mu_);
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(5, 0);
  cli.set_read_timeout(timeout_s_, 0);
  ojson body;
  body["model"] = model_;
  body["prompt"] = prompt;
  body["images"] = {httplib::detail::base64_encode(std::string(image.begin(), image.end()))};
  body["stream"] = false;
  auto res = cli.Post("/api/generate", body.dump(), "application/json");
  if (!res) throw LvlmUnavailable("LVLM endpoint " + host_ + ":" + std::to_string(port_) + " unreachable (" + image_id + ")");
  if (res->status != 200) throw LvlmUnavailable("LVLM endpoint returned HTTP " + std::to_string(res->status));
  const ojson reply = ojson::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("response")) throw LvlmUnavailable("malformed LVLM reply");
  return reply["response"].get<std::string>();
}

const std::string& scene_graph_prompt() {
  static const std::string prompt =
      "Describe the detailed visual characteristics of the person in the photo that could be used to re-identify "
      "the person. Create a scene graph. Use the JSON format like in the example shown below and only output the "
      "JSON:\n"
      "{\n"
      "  \"nodes\": [\n"
      "    { \"id\": \"person\", \"attributes\": [\"...\", \"...\", \"...\"] },\n"
      "    { \"id\": \"...\", \"attributes\": [\"...\", \"...\", \"...\"] }\n"
      "  ],\n"
      "  \"edges\": [\n"
      "    { \"source\": \"...\", \"target\": \"...\", \"relation\": \"...\" },\n"
      "    { \"source\": \"...\", \"target\": \"...\", \"relation\": \"...\" }\n"
      "  ]\n"
      "}\n"
      "Ensure nodes, attributes, and edges are well-structured. Ensure that the JSON is valid, and do not output "
      "additional information. In the output, use only English language. Nodes consist of an id and an attributes "
      "list. Edges consist of a source, a target, and a relation. Use only up to 1000 tokens.";
  return prompt;
}

std::string to_string(GraphStatus s) {
  switch (s) {
    case GraphStatus::clean: return "clean";
    case GraphStatus::rule_repaired: return "rule_repaired";
    case GraphStatus::llm_repaired: return "llm_repaired";
    case GraphStatus::dropped: return "dropped";
  }
  return "dropped";
}

RepairedGraph repair_graph_text(const std::string& image_id, const std::string& raw, RepairClient* repair) {
  RepairedGraph out;
  out.entry.image_id = image_id;
  const RepairOutcome rules = fix_malformed_json(raw);
  for (auto r : rules.rules_applied) out.entry.rules.emplace_back(rule_name(r));
  if (auto parsed = parse_scene_graph(rules.repaired_text, image_id)) {
    out.graph = std::move(*parsed.graph);
    out.entry.status = rules.rules_applied.empty() ? GraphStatus::clean : GraphStatus::rule_repaired;
    return out;
  } else {
    out.entry.reason = parsed.failure->reason;
  }
  if (repair == nullptr) {
    out.entry.status = GraphStatus::dropped;
    return out;
  }
  try {
    const RepairOutcome fixed = llm_repair(raw, *repair);
    out.entry.rules.clear();
    for (auto r : fixed.rules_applied) out.entry.rules.emplace_back(rule_name(r));
    out.graph = std::move(*parse_scene_graph(fixed.repaired_text, image_id).graph);
    out.entry.status = GraphStatus::llm_repaired;
    out.entry.reason.clear();
  } catch (const RepairFailed& e) {
    out.entry.status = GraphStatus::dropped;
    out.entry.reason = e.what();
  } catch (const RepairUnavailable& e) {
    out.entry.status = GraphStatus::dropped;
    out.entry.reason = e.what();
  }
  return out;
}

std::filesystem::path graph_path(const std::filesystem::path& store, const std::string& image_id) {
  return store / (image_id + ".json");
}

namespace {

constexpr const char* kLogName = "graphgen_log.jsonl";

std::set<std::string> logged_drops(const std::filesystem::path& store) {
  std::set<std::string> out;
  std::ifstream in(store / kLogName);
  std::string line;
  while (std::getline(in, line)) {
    const auto rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded()) continue;
    if (rec.value("status", "") == "dropped") out.insert(rec.value("image_id", ""));
  }
  return out;
}

}  // namespace

GraphGenSummary graphgen(const DatasetManifest& manifest, LvlmClient& lvlm, const std::filesystem::path& store,
                         RepairClient* repair) {
  std::filesystem::create_directories(store);
  const std::set<std::string> dropped_before = logged_drops(store);
  std::ofstream log(store / kLogName, std::ios::app);
  if (!log) throw Error("cannot open " + (store / kLogName).string());

  GraphGenSummary sum;
  for (const auto& sample : manifest.samples) {
    if (std::filesystem::exists(graph_path(store, sample.image_id)) || dropped_before.count(sample.image_id)) {
      ++sum.skipped;
      continue;
    }
    std::string bytes;
    if (std::filesystem::exists(sample.path)) bytes = read_file(sample.path);
    const std::span<const std::uint8_t> image(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
    const std::string raw = lvlm.generate(sample.image_id, image, scene_graph_prompt());
    ++sum.processed;

    RepairedGraph r = repair_graph_text(sample.image_id, raw, repair);
    if (r.graph) write_file(graph_path(store, sample.image_id), to_document(*r.graph) + "\n");
    switch (r.entry.status) {
      case GraphStatus::clean: ++sum.clean; break;
      case GraphStatus::rule_repaired: ++sum.rule_repaired; break;
      case GraphStatus::llm_repaired: ++sum.llm_repaired; break;
      case GraphStatus::dropped:
        ++sum.dropped;
        spdlog::warn("graph for {} dropped: {}", sample.image_id, r.entry.reason);
        break;
    }
    ojson rec;
    rec["image_id"] = r.entry.image_id;
    rec["status"] = to_string(r.entry.status);
    rec["rules"] = r.entry.rules;
    if (!r.entry.reason.empty()) rec["reason"] = r.entry.reason;
    log << rec.dump() << '\n' << std::flush;
    sum.entries.push_back(std::move(r.entry));
  }
  return sum;
}

std::optional<SceneGraph> load_stored_graph(const std::filesystem::path& store, const std::string& image_id) {
  const auto path = graph_path(store, image_id);
  if (!std::filesystem::exists(path)) return std::nullopt;
  auto parsed = parse_scene_graph(read_file(path), image_id);
  if (!parsed) throw Error("stored graph " + path.string() + " does not parse: " + parsed.failure->reason);
  return std::move(*parsed.graph);
}

}  // namespace reid
