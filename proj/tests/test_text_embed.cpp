#include <doctest.h>

#include <fstream>

#include "reid/errors.hpp"
#include "reid/scene_graph.hpp"
#include "reid/text_embed.hpp"
#include "support.hpp"

using namespace reid;

namespace {

SceneGraph canonical(const char* text) {
  ParseResult r = parse_scene_graph(text, "img_1");
  REQUIRE(r);
  return reverse_flow(expand_attributes(*r.graph));
}

class CountingEmbed : public EmbedClient {
 public:
  TextVector embed(const std::string& s) override {
    ++calls;
    return stub.embed(s);
  }
  StubEmbedClient stub;
  int calls = 0;
};

}  // namespace

TEST_CASE("stub embeddings are deterministic unit vectors") {
  StubEmbedClient a;
  StubEmbedClient b;
  const Eigen::VectorXd v = a.embed("red shirt").values();
  CHECK(v.size() == kTextDim);
  CHECK(v.norm() == doctest::Approx(1.0));
  CHECK(v == b.embed("red shirt").values());
  CHECK(v != a.embed("blue shirt").values());
  CHECK(v != StubEmbedClient(1).embed("red shirt").values());
}

TEST_CASE("text vectors enforce width and finiteness") {
  CHECK_THROWS_AS(TextVector(Eigen::VectorXd::Zero(10)), ShapeMismatch);
  Eigen::VectorXd bad = Eigen::VectorXd::Zero(kTextDim);
  bad[3] = std::nan("");
  CHECK_THROWS_AS(TextVector{bad}, Error);
}

TEST_CASE("empty text is a contract violation") {
  StubEmbedClient c;
  CHECK_THROWS_AS(embed_text("", c), ContractViolation);
}

TEST_CASE("fixture client replays recorded vectors and misses loudly") {
  test::TempDir dir("embed");
  StubEmbedClient stub;
  CachedEmbedClient cache(stub);
  cache.embed("wearing");
  cache.embed("person");
  cache.embed("wearing");
  CHECK(cache.size() == 2);
  cache.save(dir / "emb.jsonl");

  FixtureEmbedClient fx(dir / "emb.jsonl");
  CHECK(fx.size() == 2);
  CHECK(fx.embed("person").values() == stub.embed("person").values());
  CHECK_THROWS_AS(fx.embed("hat"), EmbedUnavailable);
  CHECK_THROWS_AS(FixtureEmbedClient(dir / "missing.jsonl"), EmbedUnavailable);

  std::ofstream(dir / "bad.jsonl") << "{\"text\": \"x\"}\n";
  CHECK_THROWS_AS(FixtureEmbedClient(dir / "bad.jsonl"), EmbedUnavailable);
}

TEST_CASE("cache asks the inner client once per distinct string") {
  CountingEmbed inner;
  CachedEmbedClient cache(inner);
  for (int i = 0; i < 5; ++i) cache.embed("same");
  cache.embed("other");
  CHECK(inner.calls == 2);
}

TEST_CASE("numerify keeps node order and message orientation") {
  const SceneGraph g = canonical(
      R"({"nodes": [{"id": "bag", "attributes": ["red"]}, {"id": "person", "attributes": []}],
          "edges": [{"source": "person", "target": "bag", "relation": "carrying"}]})");
  StubEmbedClient c;
  const NumericGraph n = numerify_graph(g, c);
  REQUIRE(n.num_nodes() == 3);
  CHECK(n.person_node_index == 1);
  CHECK(n.source_image_id == "img_1");
  CHECK(n.node_features.row(2).transpose() == c.embed("red").values());
  REQUIRE(n.num_edges() == 2);
  CHECK(n.edge_index[0] == std::pair{0, 1});  // bag -> person after reversal
  CHECK(n.edge_index[1] == std::pair{2, 0});  // red -> bag
  CHECK(n.edge_features.row(0).transpose() == c.embed("carrying").values());
  CHECK(n.edge_features.row(1).transpose() == c.embed(std::string(kAttributeRelation)).values());
}

TEST_CASE("suffixed attribute ids embed the raw attribute text") {
  const SceneGraph g = canonical(
      R"({"nodes": [{"id": "person", "attributes": ["red"]}, {"id": "hat", "attributes": ["red"]}], "edges": []})");
  StubEmbedClient c;
  const NumericGraph n = numerify_graph(g, c);
  CHECK(n.node_features.row(2) == n.node_features.row(3));
}

TEST_CASE("person policy") {
  const SceneGraph g = canonical(R"({"nodes": [{"id": "dog", "attributes": []}], "edges": []})");
  StubEmbedClient c;
  CHECK_THROWS_AS(numerify_graph(g, c, PersonPolicy::strict), MissingPersonNode);
  CHECK(numerify_graph(g, c, PersonPolicy::lenient).person_node_index == 0);
}

TEST_CASE("numerify requires canonical graphs") {
  ParseResult r = parse_scene_graph(R"({"nodes": [{"id": "person"}], "edges": []})");
  StubEmbedClient c;
  CHECK_THROWS_AS(numerify_graph(*r.graph, c), ContractViolation);
  CHECK_THROWS_AS(numerify_graph(expand_attributes(*r.graph), c), ContractViolation);
}

TEST_CASE("unreachable embedding endpoint raises EmbedUnavailable") {
  HttpEmbedClient c("127.0.0.1", 1);
  CHECK_THROWS_AS(c.embed("x"), EmbedUnavailable);
}
