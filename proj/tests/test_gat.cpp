#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "reid/errors.hpp"
#include "reid/gat.hpp"
#include "support.hpp"

using namespace reid;

namespace {

// Two nodes, one edge 0 -> 1 with feature 1.0, self-loops with feature 0.
struct TwoNode {
  GATLayerParams p;
  NumericGraph g;
};

TwoNode two_node_fixture() {
  TwoNode f;
  f.p.source_weight = Eigen::MatrixXd::Identity(2, 2);
  f.p.target_weight = 0.5 * Eigen::MatrixXd::Identity(2, 2);
  f.p.edge_weight.resize(2, 1);
  f.p.edge_weight << 1.0, -1.0;
  f.p.attention = Eigen::Vector2d(1.0, 1.0);
  f.p.bias = Eigen::Vector2d::Zero();
  f.g.node_features = Eigen::MatrixXd::Identity(2, 2);
  f.g.edge_index = {{0, 1}};
  f.g.edge_features = Eigen::MatrixXd::Ones(1, 1);
  f.g = with_self_loops(f.g, Eigen::VectorXd::Zero(1));
  return f;
}

}  // namespace

TEST_CASE("two-node layer matches the hand computation") {
  const TwoNode f = two_node_fixture();
  // Edge 0->1: z = [1,0] + [0,0.5] + [1,-1] = [2,-0.5], LReLU -> [2,-0.1], logit 1.9.
  // Loop 1->1: z = [0,1] + [0,0.5] = [0,1.5], logit 1.5.
  // alpha(0->1) = 1 / (1 + e^-0.4); messages [2,-1] and [0,1].
  const double a01 = 0.598687660112452;
  const Eigen::VectorXd alpha = gatv2_attention(f.p, f.g, f.g.node_features);
  REQUIRE(alpha.size() == 3);
  CHECK(alpha[0] == doctest::Approx(a01).epsilon(1e-12));
  CHECK(alpha[1] == doctest::Approx(1.0));  // node 0 only hears itself
  CHECK(alpha[2] == doctest::Approx(1.0 - a01).epsilon(1e-12));

  const Eigen::MatrixXd h = gatv2_layer_forward(f.p, f.g, f.g.node_features);
  CHECK(h(0, 0) == doctest::Approx(1.0));
  CHECK(h(0, 1) == doctest::Approx(0.0));
  CHECK(h(1, 0) == doctest::Approx(1.197375320224904).epsilon(1e-12));
  CHECK(h(1, 1) == doctest::Approx(-0.197375320224904).epsilon(1e-12));
}

TEST_CASE("swapping source and target weights changes the two-node output") {
  TwoNode f = two_node_fixture();
  const Eigen::MatrixXd before = gatv2_layer_forward(f.p, f.g, f.g.node_features);
  std::swap(f.p.source_weight, f.p.target_weight);
  const Eigen::MatrixXd after = gatv2_layer_forward(f.p, f.g, f.g.node_features);
  CHECK((before - after).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("attention sums to one per destination and matches the edge-wise oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + static_cast<int>(uniform01(rng) * 10);
    const NumericGraph g = with_self_loops(test::random_graph(rng, n, 6, 4), Eigen::VectorXd::Zero(4));
    const GATLayerParams p = GATLayerParams::init(6, 5, 4, rng);
    Eigen::VectorXd oracle_alpha;
    const Eigen::MatrixXd expect = oracle::gatv2_layer(p, g, g.node_features, &oracle_alpha);
    const Eigen::VectorXd alpha = gatv2_attention(p, g, g.node_features);
    std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
    for (std::size_t e = 0; e < g.edge_index.size(); ++e) sums[static_cast<std::size_t>(g.edge_index[e].second)] += alpha[static_cast<Eigen::Index>(e)];
    for (double s : sums) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((alpha - oracle_alpha).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((gatv2_layer_forward(p, g, g.node_features) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("single node with only a self-loop returns its own message") {
  std::mt19937_64 rng(3);
  NumericGraph g;
  g.node_features = test::random_matrix(rng, 1, 6);
  g.edge_features.resize(0, 4);
  g = with_self_loops(g, Eigen::VectorXd::Zero(4));
  const GATLayerParams p = GATLayerParams::init(6, 5, 4, rng);
  const Eigen::MatrixXd h = gatv2_layer_forward(p, g, g.node_features);
  const Eigen::VectorXd expect = p.source_weight * g.node_features.row(0).transpose() + p.bias;
  CHECK((h.row(0).transpose() - expect).norm() < 1e-12);
}

TEST_CASE("layer rejects mismatched feature widths") {
  std::mt19937_64 rng(5);
  const NumericGraph g = with_self_loops(test::random_graph(rng, 4, 7, 4), Eigen::VectorXd::Zero(4));
  const GATLayerParams p = GATLayerParams::init(6, 5, 4, rng);
  CHECK_THROWS_AS(gatv2_layer_forward(p, g, g.node_features), ShapeMismatch);
}

TEST_CASE("layer backward matches finite differences") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const NumericGraph g = with_self_loops(test::random_graph(rng, 6, 5, 3, 0.4), Eigen::VectorXd::Zero(3));
    GATLayerParams p = GATLayerParams::init(5, 4, 3, rng);
    p.bias = test::random_matrix(rng, 4, 1);
    Eigen::MatrixXd x = g.node_features;
    const Eigen::MatrixXd w = test::random_matrix(rng, 6, 4);
    auto loss = [&] { return (gatv2_layer_forward(p, g, x).array() * w.array()).sum(); };

    GATLayerCache cache;
    gatv2_layer_forward(p, g, x, &cache);
    GATLayerParams grads = p.zeros_like();
    const Eigen::MatrixXd dx = gatv2_layer_backward(p, g, cache, w, grads);

    CHECK(test::fd_relative_error(loss, x.data(), x.size(), Eigen::Map<const Eigen::VectorXd>(dx.data(), dx.size())) < 1e-6);
    TensorList pt = p.tensors("");
    TensorList gt = grads.tensors("");
    for (std::size_t i = 0; i < pt.size(); ++i) {
      INFO(pt[i].name);
      CHECK(test::fd_relative_error(loss, pt[i].data, pt[i].size(), gt[i].flat()) < 1e-6);
    }
  }
}

TEST_CASE("encoder backward matches finite differences") {
  std::mt19937_64 rng(8);
  GraphEncoderParams p = GraphEncoderParams::init(rng, 5, 6, 4, 3);
  p.norm_gain = Eigen::VectorXd::Ones(4) + 0.3 * test::random_matrix(rng, 4, 1);
  p.norm_bias = test::random_matrix(rng, 4, 1);
  const NumericGraph a = test::random_graph(rng, 5, 5, 3, 0.4);
  const NumericGraph b = test::random_graph(rng, 3, 5, 3, 0.5);
  const NumericGraph* graphs[] = {&a, &b};
  const GraphBatch batch = make_batch(graphs, p.self_loop_fill);
  const Eigen::MatrixXd w = test::random_matrix(rng, 2, 4);
  auto loss = [&] { return (encode_batch(p, batch).array() * w.array()).sum(); };

  EncoderCache cache;
  encode_batch(p, batch, &cache);
  GraphEncoderParams grads = p.zeros_like();
  encode_batch_backward(p, batch, cache, w, grads);
  TensorList pt = p.tensors("");
  TensorList gt = grads.tensors("");
  for (std::size_t i = 0; i < pt.size(); ++i) {
    INFO(pt[i].name);
    CHECK(test::fd_relative_error(loss, pt[i].data, pt[i].size(), gt[i].flat()) < 1e-5);
  }
}

TEST_CASE("batched encoding equals encoding graphs one at a time") {
  std::mt19937_64 rng(13);
  const GraphEncoderParams p = GraphEncoderParams::init(rng, 8, 8, 6, 4);
  std::vector<NumericGraph> gs;
  for (int i = 0; i < 4; ++i) gs.push_back(test::random_graph(rng, 2 + i, 8, 4));
  std::vector<const NumericGraph*> ptrs;
  for (const auto& g : gs) ptrs.push_back(&g);
  const Eigen::MatrixXd all = encode_batch(p, make_batch(ptrs, p.self_loop_fill));
  for (std::size_t i = 0; i < gs.size(); ++i)
    CHECK((all.row(static_cast<Eigen::Index>(i)).transpose() - graph_encode(p, gs[i])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("graph embedding is layer-normalized and has the configured width") {
  std::mt19937_64 rng(17);
  const GraphEncoderParams p = GraphEncoderParams::init(rng);
  const NumericGraph g = test::random_graph(rng, 6, kTextDim, kTextDim);
  const Eigen::VectorXd h = graph_encode(p, g);
  REQUIRE(h.size() == kGraphDim);
  CHECK(std::abs(h.mean()) < 1e-9);
  CHECK(std::sqrt((h.array() - h.mean()).square().mean()) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("flipping edge direction changes the graph embedding") {
  std::mt19937_64 rng(19);
  const GraphEncoderParams p = GraphEncoderParams::init(rng);
  NumericGraph g = test::random_graph(rng, 5, kTextDim, kTextDim, 0.25);
  NumericGraph flipped = g;
  for (auto& e : flipped.edge_index) std::swap(e.first, e.second);
  CHECK((graph_encode(p, g) - graph_encode(p, flipped)).cwiseAbs().maxCoeff() > 1e-6);
}
