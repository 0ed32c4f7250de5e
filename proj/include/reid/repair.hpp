#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace reid {

/// Rule-based repair steps, in the order they are applied. New rules are
/// appended; existing ones never move.
enum class RepairRule {
  strip_wrapper,       // code fences, prose before/after the document
  trailing_commas,     // ",]" and ",}"
  escapes,             // invalid backslash escapes, raw control chars in strings
  smart_quotes,        // typographic quotes
  restructure_edges,   // stray edge keys folded to source/target/relation
  dedup_attributes,    // duplicate or empty attribute strings
  restructure_nodes,   // "name" -> "id", scalar attributes -> list
};

std::string_view rule_name(RepairRule r);

struct RepairOutcome {
  std::string repaired_text;
  std::vector<RepairRule> rules_applied;
  bool used_llm = false;
};

/// True when the text parses into a scene graph with no duplicate attributes,
/// i.e. when repair has nothing to do.
bool is_clean_graph_text(std::string_view text);

/// Deterministic, idempotent syntax cleanup. Clean input is returned
/// byte-identical with no rules applied.
RepairOutcome fix_malformed_json(std::string_view text);

/// Completion endpoint used for LLM-based repair.
class RepairClient {
 public:
  virtual ~RepairClient() = default;
  /// Throws RepairUnavailable when the backend cannot be reached.
  virtual std::string complete(const std::string& prompt) = 0;
};

/// The graph-fixing prompt with `graph` substituted for the {graph} slot.
std::string fix_graph_prompt(std::string_view graph);

/// LLM repair followed by the rule-based cleanup. Only valid for input that
/// neither parses as-is nor after fix_malformed_json (ContractViolation).
/// Throws RepairUnavailable / RepairFailed.
RepairOutcome llm_repair(std::string_view text, RepairClient& client);

/// Replays recorded (request -> response) pairs from a fixture directory.
/// Records are `<fnv1a64(request) hex>.json` holding {"request", "response"}.
class ReplayRepairClient : public RepairClient {
 public:
  explicit ReplayRepairClient(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::string complete(const std::string& prompt) override;

 private:
  std::filesystem::path dir_;
};

/// Forwards to another client and stores every exchange as a replay record.
class RecordingRepairClient : public RepairClient {
 public:
  RecordingRepairClient(RepairClient& inner, std::filesystem::path dir) : inner_(inner), dir_(std::move(dir)) {}
  std::string complete(const std::string& prompt) override;

 private:
  RepairClient& inner_;
  std::filesystem::path dir_;
};

/// Talks to an Ollama-compatible `/api/generate` endpoint. Calls are
/// serialized per client.
class HttpRepairClient : public RepairClient {
 public:
  HttpRepairClient(std::string host, int port, std::string model, int timeout_s = 120)
      : host_(std::move(host)), port_(port), model_(std::move(model)), timeout_s_(timeout_s) {}
  std::string complete(const std::string& prompt) override;

 private:
  std::string host_;
  int port_;
  std::string model_;
  int timeout_s_;
  std::mutex mu_;
};

void write_repair_fixture(const std::filesystem::path& dir, const std::string& request, const std::string& response);

}  // namespace reid
