#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "e2e.hpp"
#include "reid/attribution.hpp"
#include "reid/config.hpp"
#include "reid/errors.hpp"
#include "reid/repair.hpp"
#include "reid/risk.hpp"
#include "reid/util.hpp"
#include "support.hpp"

using namespace reid;

namespace {

void touch(const std::filesystem::path& p) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p) << "";
}

// Minimal Market-style tree made of empty files.
void market_tree(const std::filesystem::path& root, bool overlap) {
  for (const char* f : {"0002_c1s1_000451_03.jpg", "0002_c2s1_000301_01.jpg", "0007_c3s3_077419_03.jpg",
                        "0007_c5s1_000101_01.jpg", "-1_c1s1_000401_03.jpg"})
    touch(root / "bounding_box_train" / f);
  touch(root / "query" / "0011_c1s1_001051_00.jpg");
  touch(root / "bounding_box_test" / "0011_c4s1_001101_01.jpg");
  touch(root / "bounding_box_test" / "-1_c2s1_001101_01.jpg");
  touch(root / "bounding_box_test" / "0000_c1s1_002301_00.jpg");
  if (overlap) touch(root / "bounding_box_test" / "0007_c6s1_003301_01.jpg");
}

class CountingLvlm : public LvlmClient {
 public:
  explicit CountingLvlm(std::string reply) : reply_(std::move(reply)) {}
  std::string generate(const std::string&, std::span<const std::uint8_t>, const std::string&) override {
    ++calls;
    return reply_;
  }
  int calls = 0;

 private:
  std::string reply_;
};

class DownLvlm : public LvlmClient {
 public:
  std::string generate(const std::string&, std::span<const std::uint8_t>, const std::string&) override {
    throw LvlmUnavailable("offline");
  }
};

}  // namespace

TEST_CASE("market filenames") {
  const FilenameInfo a = parse_market_filename("0002_c1s1_000451_03.jpg");
  CHECK(a.identity == 2);
  CHECK(a.camera == 1);
  CHECK(parse_market_filename("-1_c3s2_000001_00.jpg").junk());
  CHECK(parse_market_filename("0000_c6s4_002202_01.jpg").identity == 0);
  CHECK_THROWS_AS(parse_market_filename("0002_c1_000451.jpg"), FilenameFormat);
  CHECK_THROWS_AS(parse_market_filename("Thumbs.db"), FilenameFormat);
}

TEST_CASE("cuhk03 filenames accept both forms") {
  CHECK(parse_cuhk03_filename("0123_c2_004.png").camera == 2);
  CHECK(parse_cuhk03_filename("0123_c2_004.png").identity == 123);
  CHECK(parse_cuhk03_filename("0001_c1s1_000001_00.jpg").identity == 1);
  CHECK_THROWS_AS(parse_cuhk03_filename("0123-c2-004.png"), FilenameFormat);
  CHECK(dataset_kind_from_string(to_string(DatasetKind::cuhk03np)) == DatasetKind::cuhk03np);
}

TEST_CASE("ingest builds splits and dense labels") {
  test::TempDir dir("ingest");
  market_tree(dir.path(), false);
  const DatasetManifest m = ingest(dir.path(), DatasetKind::market1501);
  CHECK(m.count(Split::train) == 4);  // junk left out
  CHECK(m.count(Split::query) == 1);
  CHECK(m.count(Split::gallery) == 3);
  CHECK(m.label_map == std::map<int, int>{{2, 0}, {7, 1}});
  CHECK(m.identities(Split::query) == std::set<int>{11});

  save_manifest(dir / "m.json", m);
  const DatasetManifest back = load_manifest(dir / "m.json");
  CHECK(back.samples.size() == m.samples.size());
  CHECK(back.label_map == m.label_map);
  CHECK(back.samples[0].image_id == m.samples[0].image_id);
}

TEST_CASE("train and test identity overlap is rejected") {
  test::TempDir dir("overlap");
  market_tree(dir.path(), true);
  CHECK_THROWS_AS(ingest(dir.path(), DatasetKind::market1501), ManifestError);
}

TEST_CASE("manifest validation rules") {
  DatasetManifest m;
  m.dataset = "market1501";
  m.samples = {{"a.jpg", 1, 1, Split::train, "a"}, {"b.jpg", 1, 2, Split::train, "b"},
               {"c.jpg", 5, 1, Split::query, "c"}, {"d.jpg", 5, 2, Split::gallery, "d"}};
  m.label_map = {{1, 0}};
  validate_manifest(m);

  DatasetManifest dup = m;
  dup.samples[1].image_id = "a";
  CHECK_THROWS_AS(validate_manifest(dup), ManifestError);

  DatasetManifest orphan = m;
  orphan.samples[2].identity = 6;
  CHECK_THROWS_AS(validate_manifest(orphan), ManifestError);

  DatasetManifest unlabeled = m;
  unlabeled.label_map.clear();
  CHECK_THROWS_AS(validate_manifest(unlabeled), ManifestError);
}

TEST_CASE("evaluation refuses identities seen in training") {
  std::mt19937_64 rng(1);
  auto query = test::toy_train_set(rng, 2, 2, 4);
  auto gallery = test::toy_train_set(rng, 2, 3, 4);
  ReidModel model = ReidModel::init(2, 4, FusionMode::joint, rng, 8);
  EvalOptions eo;
  eo.train_identities = {1};
  CHECK_THROWS_AS(evaluate(model, query, gallery, eo), ManifestError);
  eo.cross_dataset = true;
  CHECK(evaluate(model, query, gallery, eo).num_queries == 4);
}

TEST_CASE("graph generation stores, repairs, drops and resumes") {
  test::TempDir dir("graphgen");
  SynthConfig sc;
  sc.train_ids = 2;
  sc.test_ids = 2;
  sc.images_per_id = 4;
  sc.malformed_rate = 0.5;
  sc.seed = 3;
  const SynthTruth truth = generate_synthetic(dir.path(), sc);
  const DatasetManifest m = ingest(dir.path(), DatasetKind::market1501);
  const std::size_t total = m.samples.size();

  // one fixture is beyond rule-based repair
  const std::string victim = m.samples.front().image_id;
  write_file(dir / "lvlm_fixtures" / (victim + ".json"), "I see a person.");

  ReplayLvlmClient lvlm(dir / "lvlm_fixtures");
  const GraphGenSummary first = graphgen(m, lvlm, dir / "graphs");
  CHECK(first.processed == static_cast<int>(total));
  CHECK(first.dropped == 1);
  CHECK(first.rule_repaired >= 1);
  CHECK(first.clean + first.rule_repaired + first.dropped == static_cast<int>(total));
  CHECK_FALSE(load_stored_graph(dir / "graphs", victim));
  for (const auto& id : truth.malformed)
    if (id != victim) CHECK(load_stored_graph(dir / "graphs", id));

  const int calls = lvlm.calls();
  const GraphGenSummary second = graphgen(m, lvlm, dir / "graphs");
  CHECK(lvlm.calls() == calls);
  CHECK(second.processed == 0);
  CHECK(second.skipped == static_cast<int>(total));
}

TEST_CASE("stored graphs are canonical documents") {
  test::TempDir dir("store");
  market_tree(dir.path(), false);
  const DatasetManifest m = ingest(dir.path(), DatasetKind::market1501);
  CountingLvlm lvlm("```json\n{\"nodes\": [{\"id\": \"person\", \"attributes\": [\"tall\",]}], \"edges\": []}\n```");
  const GraphGenSummary s = graphgen(m, lvlm, dir / "graphs");
  CHECK(s.rule_repaired == static_cast<int>(m.samples.size()));
  const std::string stored = read_file(graph_path(dir / "graphs", m.samples[0].image_id));
  CHECK(is_clean_graph_text(stored));
  CHECK(fix_malformed_json(stored).rules_applied.empty());
}

TEST_CASE("an unavailable model stops generation with progress kept") {
  test::TempDir dir("down");
  market_tree(dir.path(), false);
  const DatasetManifest m = ingest(dir.path(), DatasetKind::market1501);
  DownLvlm lvlm;
  CHECK_THROWS_AS(graphgen(m, lvlm, dir / "graphs"), LvlmUnavailable);
}

TEST_CASE("llm repair is used only when rules fail") {
  class FixedRepair : public RepairClient {
   public:
    std::string complete(const std::string&) override {
      ++calls;
      return R"({"nodes": [{"id": "person", "attributes": []}], "edges": []})";
    }
    int calls = 0;
  } repair;
  const RepairedGraph ok = repair_graph_text("a", R"({"nodes": [{"id": "person"},], "edges": []})", &repair);
  CHECK(ok.entry.status == GraphStatus::rule_repaired);
  CHECK(repair.calls == 0);
  const RepairedGraph llm = repair_graph_text("b", "{\"nodes\" [", &repair);
  CHECK(llm.entry.status == GraphStatus::llm_repaired);
  CHECK(repair.calls == 1);
  const RepairedGraph dropped = repair_graph_text("c", "{\"nodes\" [", nullptr);
  CHECK(dropped.entry.status == GraphStatus::dropped);
  CHECK_FALSE(dropped.graph);
}

TEST_CASE("scene-graph prompt is fixed text") {
  CHECK(scene_graph_prompt().find("JSON") != std::string::npos);
  CHECK(&scene_graph_prompt() == &scene_graph_prompt());
}

TEST_CASE("config layering and validation") {
  Config c;
  CHECK(c.get_int("batch_size") == 64);
  CHECK(c.get_double("base_lr") == doctest::Approx(0.00035));
  c.load_text("# comment\nbatch_size = 16  # trailing\n\ninstances_per_id=4\n");
  CHECK(c.get_int("batch_size") == 16);
  CHECK_THROWS_AS(c.load_text("bogus = 1"), ConfigError);
  CHECK_THROWS_AS(c.load_text("no equals sign"), ConfigError);
  CHECK_THROWS_AS(c.get("bogus"), ConfigError);

  ::setenv("REID_EPOCHS", "7", 1);
  c.load_env();
  ::unsetenv("REID_EPOCHS");
  CHECK(c.train_config().epochs == 7);
  c.set("epochs", "9");
  CHECK(c.train_config().epochs == 9);
  c.set("k1", "abc");
  CHECK_THROWS_AS(c.rerank_params(), ConfigError);
  CHECK(c.dump().find("batch_size = 16\n") != std::string::npos);
}

TEST_CASE("synthetic generator layout and counts") {
  test::TempDir dir("synth");
  SynthConfig sc;
  sc.seed = 11;
  const SynthTruth t = generate_synthetic(dir.path(), sc);
  CHECK(t.train == 80);
  CHECK(t.query == 16);
  CHECK(t.gallery == 64);
  CHECK(t.train_identities.size() == 8);
  CHECK(t.test_identities.size() == 8);
  const DatasetManifest m = ingest(dir.path(), DatasetKind::market1501);
  CHECK(m.count(Split::train) == t.train);
  CHECK(m.count(Split::query) == t.query);
  CHECK(m.count(Split::gallery) == t.gallery);
  CHECK(std::filesystem::exists(dir / "ground_truth.json"));
  // same seed, same bytes
  test::TempDir again("synth");
  generate_synthetic(again.path(), sc);
  const auto name = m.samples.front().path.filename();
  CHECK(read_file(dir / "bounding_box_train" / name) == read_file(again / "bounding_box_train" / name));
}

TEST_CASE("risk report sections") {
  EvalReport same;
  same.rank1 = 0.9;
  same.rank5 = 0.95;
  same.mean_ap = 0.8;
  same.num_queries = 10;
  same.num_valid_queries = 9;
  same.num_gallery = 50;
  same.target_dataset = "cuhk03_np";
  EvalReport cross = same;
  cross.rank1 = 0.1;
  cross.cross_dataset = true;
  cross.source_dataset = "market1501";
  EvalReport rr = same;
  rr.rank1 = 0.92;
  rr.reranked = true;
  rr.rerank = RerankParams{};
  const std::vector<AttributedNode> attrs{
      {"a", "red", true, 0.5}, {"b", "red", true, 0.25}, {"a", "hat", false, 1.0}, {"b", "walking", true, 0.5}};
  const std::string md = risk_report({{"in-domain", same, rr}, {"m2c", cross, std::nullopt}}, attrs, 5);
  CHECK(md.starts_with("# Re-identification risk report\n"));
  CHECK(md.find("| R@1 | 0.9000 | 0.9200 |") != std::string::npos);
  CHECK(md.find("| R@1 | 0.1000 | - |") != std::string::npos);
  CHECK(md.find("re-ranking: k1=20 k2=6 lambda=0.3000") != std::string::npos);
  CHECK(md.find("- m2c vs in-domain: R@1 -0.8000, R@5 +0.0000, mAP +0.0000") != std::string::npos);
  CHECK(md.find("| 1 | red | 0.7500 | 2 |\n| 2 | walking | 0.5000 | 1 |") != std::string::npos);
  CHECK(md.find("hat") == std::string::npos);
}

TEST_CASE("short end-to-end run on synthetic data") {
  test::TempDir dir("e2e");
  const test::SyntheticRun run = test::run_synthetic(dir.path(), 0, 20, dir / "metrics.jsonl");
  CHECK(run.graphgen.dropped == 0);
  CHECK(run.result.metrics.size() == 20);
  CHECK(run.trained.num_valid_queries == 16);
  CHECK(run.trained.rank1 >= 0.5);
  std::ifstream in(dir / "metrics.jsonl");
  int n = 0;
  for (std::string l; std::getline(in, l);) ++n;
  CHECK(n == 20);
}
