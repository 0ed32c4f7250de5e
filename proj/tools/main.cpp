#include <algorithm>
#include <iostream>
#include <memory>
#include <optional>
#include <regex>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "reid/attribution.hpp"
#include "reid/config.hpp"
#include "reid/dataset.hpp"
#include "reid/errors.hpp"
#include "reid/evaluate.hpp"
#include "reid/graphgen.hpp"
#include "reid/risk.hpp"
#include "reid/synth.hpp"
#include "reid/train.hpp"
#include "reid/util.hpp"

using namespace reid;
namespace fs = std::filesystem;

namespace {

struct Clients {
  std::unique_ptr<EmbedClient> text_inner;
  std::unique_ptr<EmbedClient> text;
  std::unique_ptr<BackboneAdapter> backbone;
};

std::unique_ptr<EmbedClient> configured_text_client(const Config& cfg) {
  const std::string& mode = cfg.get("embed_mode");
  if (mode == "stub") return std::make_unique<StubEmbedClient>(static_cast<std::uint64_t>(std::stoull(cfg.get("seed"))));
  if (mode == "fixture") return std::make_unique<FixtureEmbedClient>(cfg.get_path("embed_fixture"));
  if (mode == "live") return std::make_unique<HttpEmbedClient>(cfg.get("embed_host"), cfg.get_int("embed_port"));
  throw ConfigError("embed_mode must be stub, fixture or live");
}

std::unique_ptr<BackboneAdapter> configured_backbone(const Config& cfg) {
  const std::string& mode = cfg.get("backbone_mode");
  if (mode == "stub") return std::make_unique<StubBackbone>(7, cfg.get_int("visual_dim"));
  if (mode == "fixture") return std::make_unique<FixtureBackbone>(cfg.get_path("feature_store"));
  if (mode == "live") {
    AdapterManifest m;
    m.backbone = cfg.get("backbone_name");
    m.dim = cfg.get_int("visual_dim");
    return std::make_unique<HttpBackbone>(cfg.get("backbone_host"), cfg.get_int("backbone_port"), m);
  }
  throw ConfigError("backbone_mode must be stub, fixture or live");
}

/// Stored embeddings and features take precedence over the live clients.
Clients stored_clients(const Config& cfg) {
  Clients c;
  if (fs::exists(cfg.get_path("embedding_store"))) {
    c.text = std::make_unique<FixtureEmbedClient>(cfg.get_path("embedding_store"));
  } else {
    c.text_inner = configured_text_client(cfg);
    c.text = std::make_unique<CachedEmbedClient>(*c.text_inner);
  }
  if (fs::exists(cfg.get_path("feature_store") / "manifest.json"))
    c.backbone = std::make_unique<FixtureBackbone>(cfg.get_path("feature_store"));
  else
    c.backbone = configured_backbone(cfg);
  return c;
}

PersonPolicy person_policy(const Config& cfg) {
  const std::string& p = cfg.get("person_policy");
  if (p == "strict") return PersonPolicy::strict;
  if (p == "lenient") return PersonPolicy::lenient;
  throw ConfigError("person_policy must be strict or lenient");
}

fs::path latest_checkpoint(const Config& cfg) {
  if (!cfg.get("eval_checkpoint").empty()) return cfg.get_path("eval_checkpoint");
  const fs::path dir = cfg.get_path("checkpoint_dir");
  int best = -1;
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string n = e.path().filename().string();
      if (n.rfind("epoch_", 0) == 0) best = std::max(best, std::stoi(n.substr(6)));
    }
  if (best < 0) throw CheckpointError("no checkpoint under " + dir.string());
  return dir / ("epoch_" + std::to_string(best));
}

std::string report_name(const EvalReport& r) {
  return r.cross_dataset ? r.source_dataset + "_to_" + r.target_dataset : r.target_dataset;
}

int cmd_synth(const Config& cfg, const fs::path& out, SynthConfig sc) {
  sc.seed = static_cast<std::uint64_t>(std::stoull(cfg.get("seed")));
  const SynthTruth t = generate_synthetic(out, sc);
  std::cout << "wrote " << t.train << " train / " << t.query << " query / " << t.gallery << " gallery images to "
            << out.string() << " (" << t.malformed.size() << " malformed scene-graph fixtures)\n";
  return 0;
}

int cmd_ingest(const Config& cfg) {
  DatasetManifest m = ingest(cfg.get_path("dataset_root"), dataset_kind_from_string(cfg.get("dataset")));
  m.graph_store = cfg.get_path("graph_store");
  m.feature_store = cfg.get_path("feature_store");
  save_manifest(cfg.get_path("manifest"), m);
  std::cout << m.dataset << ": " << m.count(Split::train) << " train / " << m.count(Split::query) << " query / "
            << m.count(Split::gallery) << " gallery images, " << m.num_train_identities() << " training identities\n";
  return 0;
}

int cmd_graphgen(const Config& cfg) {
  const DatasetManifest m = load_manifest(cfg.get_path("manifest"));
  std::unique_ptr<LvlmClient> lvlm;
  if (cfg.get("lvlm_mode") == "replay")
    lvlm = std::make_unique<ReplayLvlmClient>(cfg.get_path("lvlm_fixtures"));
  else if (cfg.get("lvlm_mode") == "live")
    lvlm = std::make_unique<HttpLvlmClient>(cfg.get("lvlm_host"), cfg.get_int("lvlm_port"), cfg.get("lvlm_model"));
  else
    throw ConfigError("lvlm_mode must be replay or live");

  std::unique_ptr<RepairClient> repair_inner;
  std::unique_ptr<RepairClient> repair;
  const std::string& rm = cfg.get("repair_mode");
  if (rm == "replay") {
    repair = std::make_unique<ReplayRepairClient>(cfg.get_path("repair_fixtures"));
  } else if (rm == "live") {
    repair_inner = std::make_unique<HttpRepairClient>(cfg.get("repair_host"), cfg.get_int("repair_port"), cfg.get("repair_model"));
    repair = std::make_unique<RecordingRepairClient>(*repair_inner, cfg.get_path("repair_fixtures"));
  } else if (rm != "off") {
    throw ConfigError("repair_mode must be off, replay or live");
  }
  const GraphGenSummary s = graphgen(m, *lvlm, cfg.get_path("graph_store"), repair.get());
  std::cout << "graphs: " << s.processed << " generated (" << s.clean << " clean, " << s.rule_repaired
            << " rule-repaired, " << s.llm_repaired << " LLM-repaired, " << s.dropped << " dropped), " << s.skipped
            << " already stored\n";
  return 0;
}

int cmd_embed(const Config& cfg) {
  const DatasetManifest m = load_manifest(cfg.get_path("manifest"));
  auto inner = configured_text_client(cfg);
  CachedEmbedClient text(*inner);
  const bool store_features = cfg.get("backbone_mode") != "fixture";
  auto backbone = store_features ? configured_backbone(cfg) : nullptr;
  std::vector<std::pair<std::string, Eigen::VectorXd>> features;
  int graphs = 0;
  for (const auto& p : m.samples) {
    if (auto g = load_stored_graph(cfg.get_path("graph_store"), p.image_id)) {
      canonical_numeric_graph(*g, text, person_policy(cfg));
      ++graphs;
    }
    if (backbone) features.emplace_back(p.image_id, encode_image(preprocess_file(p.path), p.image_id, *backbone).values);
  }
  const fs::path store = cfg.get_path("embedding_store");
  if (store.has_parent_path()) fs::create_directories(store.parent_path());
  text.save(store);
  std::cout << "embedded " << text.size() << " distinct strings from " << graphs << " graphs into " << store.string()
            << "\n";
  if (backbone) {
    write_feature_store(cfg.get_path("feature_store"), backbone->manifest(), features);
    std::cout << "stored " << features.size() << " visual features in " << cfg.get("feature_store") << "\n";
  }
  return 0;
}

SampleSources sources(const Config& cfg, Clients& c) {
  return {cfg.get_path("graph_store"), c.text.get(), c.backbone.get(), person_policy(cfg)};
}

int cmd_train(const Config& cfg, const std::string& resume) {
  const DatasetManifest m = load_manifest(cfg.get_path("manifest"));
  validate_manifest(m);
  const TrainConfig tc = cfg.train_config();
  tc.validate();
  Clients c = stored_clients(cfg);
  const std::vector<TrainSample> data = build_samples(m, Split::train, sources(cfg, c));
  std::optional<TrainState> state;
  if (!resume.empty()) state = load_checkpoint(resume);
  const TrainResult r = train(data, tc, std::move(state));
  if (!r.metrics.empty())
    std::cout << "trained to epoch " << r.state.epoch << " (step " << r.state.step << "), final loss "
              << r.metrics.back().total << "\n";
  return 0;
}

int cmd_eval(const Config& cfg, bool rerank, const std::string& cross_manifest) {
  const DatasetManifest train_m = load_manifest(cfg.get_path("manifest"));
  const DatasetManifest target = cross_manifest.empty() ? train_m : load_manifest(cross_manifest);
  const fs::path ckpt = latest_checkpoint(cfg);
  TrainState st = load_checkpoint(ckpt);
  Clients c = stored_clients(cfg);
  SampleSources src = sources(cfg, c);
  if (!cross_manifest.empty()) {
    // The target dataset brings its own stores.
    if (!target.graph_store.empty()) src.graph_store = target.graph_store;
    if (!target.feature_store.empty() && fs::exists(target.feature_store / "manifest.json")) {
      c.backbone = std::make_unique<FixtureBackbone>(target.feature_store);
      src.backbone = c.backbone.get();
    }
  }
  const auto q = build_samples(target, Split::query, src);
  const auto g = build_samples(target, Split::gallery, src);

  EvalOptions opt;
  opt.cross_dataset = !cross_manifest.empty();
  opt.source_dataset = train_m.dataset;
  opt.target_dataset = target.dataset;
  for (const auto& kv : train_m.label_map) opt.train_identities.push_back(kv.first);
  opt.rerank_params = cfg.rerank_params();

  const fs::path dir = cfg.get_path("reports_dir");
  fs::create_directories(dir);
  auto emit = [&](const EvalReport& r, const std::string& suffix) {
    const std::string stem = "eval_" + report_name(r) + suffix;
    write_file(dir / (stem + ".json"), report_to_json(r, true) + "\n");
    write_file(dir / (stem + ".csv"), report_to_csv(r));
    std::cout << stem << ": R@1 " << r.rank1 << "  R@5 " << r.rank5 << "  mAP " << r.mean_ap << "  ("
              << r.num_valid_queries << "/" << r.num_queries << " queries, " << r.num_gallery << " gallery)\n";
  };
  emit(evaluate(st.model, q, g, opt), "");
  if (rerank) {
    opt.rerank = true;
    emit(evaluate(st.model, q, g, opt), "_rerank");
  }
  return 0;
}

int cmd_attribute(const Config& cfg, const std::vector<std::string>& image_ids, int limit) {
  const DatasetManifest m = load_manifest(cfg.get_path("manifest"));
  TrainState st = load_checkpoint(latest_checkpoint(cfg));
  Clients c = stored_clients(cfg);
  std::vector<std::string> ids = image_ids;
  if (ids.empty())
    for (const PersonSample* p : m.split(Split::query)) {
      if (static_cast<int>(ids.size()) >= limit) break;
      ids.push_back(p->image_id);
    }
  const fs::path dir = cfg.get_path("reports_dir") / "attribution";
  fs::create_directories(dir);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  int done = 0;
  for (const auto& id : ids) {
    const auto g = load_stored_graph(cfg.get_path("graph_store"), id);
    if (!g) {
      spdlog::warn("no scene graph for {}; skipped", id);
      continue;
    }
    const SceneGraph canon = reverse_flow(expand_attributes(*g));
    const NumericGraph ng = numerify_graph(canon, *c.text, person_policy(cfg));
    const AttributionResult r = gatt_attribute(st.model.encoder, ng);
    write_file(dir / (id + ".txt"), render_attribution(r, canon));
    write_file(dir / (id + ".csv"), render_attribution_csv(r, canon));
    for (const auto& a : attributed_nodes(r, canon))
      rows.push_back({{"image_id", a.image_id}, {"text", a.text}, {"attribute", a.attribute}, {"score", a.score}});
    ++done;
  }
  write_file(cfg.get_path("reports_dir") / "attributions.json", rows.dump(2) + "\n");
  std::cout << "attributed " << done << " graphs into " << dir.string() << "\n";
  return 0;
}

int cmd_report(const Config& cfg) {
  const fs::path dir = cfg.get_path("reports_dir");
  std::map<std::string, NamedReport> by_name;
  static const std::regex eval_re(R"(^eval_(.+?)(_rerank)?\.json$)");
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir)) {
      std::smatch mt;
      const std::string n = e.path().filename().string();
      if (!std::regex_match(n, mt, eval_re)) continue;
      NamedReport& nr = by_name[mt[1].str()];
      nr.name = mt[1].str();
      EvalReport r = report_from_json(read_file(e.path()));
      if (mt[2].matched)
        nr.reranked = std::move(r);
      else
        nr.plain = std::move(r);
    }
  std::vector<NamedReport> reports;
  for (auto& kv : by_name) reports.push_back(std::move(kv.second));
  std::vector<AttributedNode> attributions;
  if (fs::exists(dir / "attributions.json"))
    for (const auto& row : nlohmann::json::parse(read_file(dir / "attributions.json")))
      attributions.push_back({row.at("image_id").get<std::string>(), row.at("text").get<std::string>(),
                              row.at("attribute").get<bool>(), row.at("score").get<double>()});
  const std::string doc = risk_report(reports, attributions);
  write_file(dir / "risk_report.md", doc);
  std::cout << doc;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-graph person re-identification toolkit"};
  app.require_subcommand(0, 1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool dump_config = false;
  app.add_option("--config", config_path, "flat key = value settings file");
  app.add_option("--seed", seed, "overrides the seed setting");
  app.add_option("--set", overrides, "key=value override, repeatable");
  app.add_flag("--dump-config", dump_config, "print every setting with its current value and exit");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out = "data/synthetic";
  SynthConfig sc;
  synth->add_option("--out", synth_out, "output root")->capture_default_str();
  synth->add_option("--train-ids", sc.train_ids)->capture_default_str();
  synth->add_option("--test-ids", sc.test_ids)->capture_default_str();
  synth->add_option("--images", sc.images_per_id, "images per identity")->capture_default_str();
  synth->add_option("--malformed-rate", sc.malformed_rate)->capture_default_str();

  auto* ingest_cmd = app.add_subcommand("ingest", "scan a dataset tree and write the manifest");
  auto* graphgen_cmd = app.add_subcommand("graphgen", "generate and repair scene graphs for every image");
  auto* embed_cmd = app.add_subcommand("embed", "build the text-embedding and visual-feature stores");

  auto* train_cmd = app.add_subcommand("train", "train the graph encoder, fusion layer and head");
  std::string resume;
  train_cmd->add_option("--resume", resume, "checkpoint directory (ckpt/epoch_<n>) to continue from");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate the latest checkpoint");
  bool rerank_flag = true;
  std::optional<int> k1, k2;
  std::optional<double> lambda_rr;
  std::string cross;
  eval_cmd->add_flag("--rerank,!--no-rerank", rerank_flag, "also report k-reciprocal re-ranked metrics");
  eval_cmd->add_option("--k1", k1);
  eval_cmd->add_option("--k2", k2);
  eval_cmd->add_option("--lambda-rr", lambda_rr);
  eval_cmd->add_option("--cross-dataset", cross, "manifest of another dataset to evaluate on without fine-tuning");

  auto* attr_cmd = app.add_subcommand("attribute", "attention attribution towards the person node");
  std::vector<std::string> image_ids;
  int limit = 20;
  attr_cmd->add_option("--image-id", image_ids, "images to explain (default: first query images)");
  attr_cmd->add_option("--limit", limit, "number of query images when no id is given")->capture_default_str();

  auto* report_cmd = app.add_subcommand("report", "write the risk report from evaluation and attribution outputs");

  CLI11_PARSE(app, argc, argv);

  try {
    Config cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    cfg.load_env();
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got \"" + kv + "\"");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.set("seed", std::to_string(*seed));
    if (eval_cmd->parsed()) {
      if (k1) cfg.set("k1", std::to_string(*k1));
      if (k2) cfg.set("k2", std::to_string(*k2));
      if (lambda_rr) cfg.set("lambda_rr", format_double(*lambda_rr));
      if (eval_cmd->count("--rerank") + eval_cmd->count("--no-rerank") == 0) rerank_flag = cfg.get_bool("rerank");
    }
    if (dump_config) {
      std::cout << cfg.dump();
      return 0;
    }
    if (synth->parsed()) return cmd_synth(cfg, synth_out, sc);
    if (ingest_cmd->parsed()) return cmd_ingest(cfg);
    if (graphgen_cmd->parsed()) return cmd_graphgen(cfg);
    if (embed_cmd->parsed()) return cmd_embed(cfg);
    if (train_cmd->parsed()) return cmd_train(cfg, resume);
    if (eval_cmd->parsed()) return cmd_eval(cfg, rerank_flag, cross);
    if (attr_cmd->parsed()) return cmd_attribute(cfg, image_ids, limit);
    if (report_cmd->parsed()) return cmd_report(cfg);
    std::cout << app.help();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
