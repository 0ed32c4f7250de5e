#include <doctest.h>

#include "oracles.hpp"
#include "reid/errors.hpp"
#include "reid/eval.hpp"
#include "support.hpp"

using namespace reid;

namespace {

EvalReport run(const test::RetrievalInstance& r, int max_rank = 50) {
  return cmc_map(r.dist, r.ql, r.gl, r.qc, r.gc, max_rank);
}

// Two queries and four gallery points on a line.
struct Toy {
  Eigen::MatrixXd qf{2, 2};
  Eigen::MatrixXd gf{4, 2};
  Toy() {
    qf << 0.0, 0.0, 3.0, 0.1;
    gf << 0.2, 0.1, 2.8, 0.0, 1.0, 0.5, 3.5, -0.2;
  }
};

}  // namespace

TEST_CASE("pairwise distances are squared euclidean") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd q = test::random_matrix(rng, 3, 4);
  const Eigen::MatrixXd g = test::random_matrix(rng, 5, 4);
  const DistMatrix d = pairwise_distances(q, g);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) CHECK(d(i, j) == doctest::Approx((q.row(i) - g.row(j)).squaredNorm()).epsilon(1e-12));
  CHECK(pairwise_distances(q, q).diagonal().minCoeff() >= 0.0);
}

TEST_CASE("hand-checked ranking with same-camera and junk filtering") {
  // query id 1 cam 1; gallery: [id1 cam1 (filtered), junk, id2, id1 cam2, id1 cam3]
  DistMatrix d(1, 5);
  d << 0.0, 0.1, 0.2, 0.3, 0.5;
  const std::vector<int> ql{1}, qc{1}, gl{1, -1, 2, 1, 1}, gc{1, 2, 2, 2, 3};
  const EvalReport r = cmc_map(d, ql, gl, qc, gc);
  REQUIRE(r.num_valid_queries == 1);
  // filtered ranking: id2, id1, id1 -> hits at ranks 2 and 3
  CHECK(r.queries[0].ranking == std::vector<int>{2, 3, 4});
  CHECK(r.queries[0].first_hit_rank == 2);
  CHECK(r.rank1 == 0.0);
  CHECK(r.cmc[1] == 1.0);
  CHECK(r.mean_ap == doctest::Approx((1.0 / 2.0 + 2.0 / 3.0) / 2.0));
  CHECK(r.cmc.size() == 5);
}

TEST_CASE("queries without cross-camera positives are excluded") {
  DistMatrix d(2, 2);
  d << 0.1, 0.2, 0.3, 0.4;
  const std::vector<int> ql{1, 2}, qc{1, 1}, gl{1, 2}, gc{1, 2};
  const EvalReport r = cmc_map(d, ql, gl, qc, gc);
  CHECK(r.num_queries == 2);
  CHECK(r.num_valid_queries == 1);
  CHECK_FALSE(r.queries[0].valid);
  // the remaining query finds its positive behind the other identity
  CHECK(r.rank1 == 0.0);
  CHECK(r.cmc[1] == 1.0);
}

TEST_CASE("cmc and mAP equal the counting oracle bit for bit") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const int nq = 1 + static_cast<int>(uniform01(rng) * 20);
    const int ng = 1 + static_cast<int>(uniform01(rng) * 60);
    const auto inst = test::random_retrieval(rng, nq, ng, 6);
    const EvalReport r = run(inst);
    const oracle::Metrics m = oracle::cmc_map(inst.dist, inst.ql, inst.gl, inst.qc, inst.gc, 50);
    CHECK(r.cmc == m.cmc);
    CHECK(r.mean_ap == m.map);
    CHECK(r.num_valid_queries == m.valid);
  }
}

TEST_CASE("lambda one leaves distances untouched") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd qf = test::random_matrix(rng, 4, 3);
  const Eigen::MatrixXd gf = test::random_matrix(rng, 9, 3);
  const DistMatrix d = pairwise_distances(qf, gf);
  CHECK(k_reciprocal_rerank(d, qf, gf, RerankParams{5, 3, 1.0}) == d);
}

TEST_CASE("toy re-ranking matches the dense transcription") {
  const Toy t;
  const DistMatrix d = pairwise_distances(t.qf, t.gf);
  for (auto [k1, k2] : {std::pair{4, 2}, std::pair{3, 1}, std::pair{2, 3}}) {
    const DistMatrix got = k_reciprocal_rerank(d, t.qf, t.gf, RerankParams{k1, k2, 0.3});
    const Eigen::MatrixXd want = oracle::rerank(d, t.qf, t.gf, k1, k2, 0.3);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("re-ranking matches the dense transcription on random data") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int nq = 2 + static_cast<int>(uniform01(rng) * 8);
    const int ng = 5 + static_cast<int>(uniform01(rng) * 30);
    const Eigen::MatrixXd qf = test::random_matrix(rng, nq, 4);
    const Eigen::MatrixXd gf = test::random_matrix(rng, ng, 4);
    const DistMatrix d = pairwise_distances(qf, gf);
    const DistMatrix got = k_reciprocal_rerank(d, qf, gf, RerankParams{6, 3, 0.3});
    CHECK((got - oracle::rerank(d, qf, gf, 6, 3, 0.3)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("oversized k values are clamped rather than rejected") {
  const Toy t;
  const DistMatrix d = pairwise_distances(t.qf, t.gf);
  const DistMatrix big = k_reciprocal_rerank(d, t.qf, t.gf, RerankParams{50, 50, 0.3});
  const DistMatrix clamped = k_reciprocal_rerank(d, t.qf, t.gf, RerankParams{5, 6, 0.3});
  CHECK(big == clamped);
}

TEST_CASE("report json round-trips and csv has one line per query") {
  std::mt19937_64 rng(4);
  const auto inst = test::random_retrieval(rng, 5, 30);
  EvalReport r = run(inst);
  r.reranked = true;
  r.rerank = RerankParams{20, 6, 0.3};
  r.cross_dataset = true;
  r.source_dataset = "market1501";
  r.target_dataset = "cuhk03_np";
  const EvalReport back = report_from_json(report_to_json(r, true));
  CHECK(back.rank1 == r.rank1);
  CHECK(back.mean_ap == r.mean_ap);
  CHECK(back.cmc == r.cmc);
  CHECK(back.rerank->k1 == 20);
  CHECK(back.target_dataset == "cuhk03_np");
  CHECK(back.queries.size() == r.queries.size());
  CHECK(back.queries[2].ranking == r.queries[2].ranking);
  const std::string csv = report_to_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}
