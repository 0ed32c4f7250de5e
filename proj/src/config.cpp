#include "reid/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>

#include "reid/errors.hpp"
#include "reid/util.hpp"

namespace reid {

Config::Config()
    : entries_{
          {"seed", "0"},
          {"dataset", "market1501"},
          {"dataset_root", "data/market1501"},
          {"manifest", "work/manifest.json"},
          {"graph_store", "work/graphs"},
          {"embedding_store", "work/text_embeddings.jsonl"},
          {"feature_store", "work/features"},
          {"checkpoint_dir", "work/ckpt"},
          {"reports_dir", "work/reports"},
          {"metrics_log", "work/metrics.jsonl"},
          {"lvlm_mode", "replay"},
          {"lvlm_fixtures", "data/lvlm_fixtures"},
          {"lvlm_host", "localhost"},
          {"lvlm_port", "11434"},
          {"lvlm_model", "llava"},
          {"repair_mode", "off"},
          {"repair_fixtures", "data/repair_fixtures"},
          {"repair_host", "localhost"},
          {"repair_port", "11434"},
          {"repair_model", "phi4"},
          {"embed_mode", "stub"},
          {"embed_fixture", "data/text_embeddings.jsonl"},
          {"embed_host", "localhost"},
          {"embed_port", "8080"},
          {"backbone_mode", "stub"},
          {"backbone_host", "localhost"},
          {"backbone_port", "8081"},
          {"backbone_name", "dinov2_vitb14"},
          {"visual_dim", "768"},
          {"person_policy", "lenient"},
          {"fusion_mode", "joint"},
          {"hidden_dim", "384"},
          {"batch_size", "64"},
          {"instances_per_id", "4"},
          {"epochs", "120"},
          {"base_lr", "0.00035"},
          {"warmup_epochs", "10"},
          {"decay_epoch1", "40"},
          {"decay_epoch2", "70"},
          {"max_steps", "0"},
          {"steps_per_epoch", "0"},
          {"margin", "0.3"},
          {"lambda_center", "0.0005"},
          {"smoothing", "0.1"},
          {"center_lr", "0.5"},
          {"rerank", "true"},
          {"k1", "20"},
          {"k2", "6"},
          {"lambda_rr", "0.3"},
          {"eval_checkpoint", ""},
      } {}

std::pair<std::string, std::string>* Config::find(const std::string& key) {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
  return it == entries_.end() ? nullptr : &*it;
}

const std::pair<std::string, std::string>* Config::find(const std::string& key) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
  return it == entries_.end() ? nullptr : &*it;
}

void Config::set(const std::string& key, const std::string& value) {
  auto* e = find(key);
  if (!e) throw ConfigError("unknown config key \"" + key + "\"");
  e->second = value;
}

namespace {

std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

}  // namespace

void Config::load_text(const std::string& text, const std::string& origin) {
  std::size_t start = 0;
  int lineno = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void Config::load_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file " + path.string() + " not found");
  load_text(read_file(path), path.string());
}

void Config::load_env() {
  for (auto& [key, value] : entries_) {
    std::string name = "REID_" + key;
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (const char* v = std::getenv(name.c_str())) value = v;
  }
}

const std::string& Config::get(const std::string& key) const {
  const auto* e = find(key);
  if (!e) throw ConfigError("unknown config key \"" + key + "\"");
  return e->second;
}

int Config::get_int(const std::string& key) const {
  const std::string& s = get(key);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key + ": expected an integer, got \"" + s + "\"");
  return v;
}

double Config::get_double(const std::string& key) const {
  const std::string& s = get(key);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key + ": expected a number, got \"" + s + "\"");
  return v;
}

bool Config::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key + ": expected a boolean, got \"" + s + "\"");
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

TrainConfig Config::train_config() const {
  TrainConfig c;
  c.batch_size = get_int("batch_size");
  c.instances_per_id = get_int("instances_per_id");
  c.epochs = get_int("epochs");
  c.base_lr = get_double("base_lr");
  c.warmup_epochs = get_int("warmup_epochs");
  c.decay_epoch1 = get_int("decay_epoch1");
  c.decay_epoch2 = get_int("decay_epoch2");
  c.max_steps = get_int("max_steps");
  c.steps_per_epoch = get_int("steps_per_epoch");
  c.seed = static_cast<std::uint64_t>(std::stoull(get("seed")));
  c.loss.margin = get_double("margin");
  c.loss.lambda_center = get_double("lambda_center");
  c.loss.smoothing = get_double("smoothing");
  c.center_lr = get_double("center_lr");
  c.fusion_mode = fusion_mode_from_string(get("fusion_mode"));
  c.hidden_dim = get_int("hidden_dim");
  c.checkpoint_dir = get_path("checkpoint_dir");
  c.metrics_path = get_path("metrics_log");
  return c;
}

RerankParams Config::rerank_params() const { return {get_int("k1"), get_int("k2"), get_double("lambda_rr")}; }

}  // namespace reid
