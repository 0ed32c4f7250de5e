#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "reid/errors.hpp"
#include "reid/losses.hpp"
#include "support.hpp"

using namespace reid;

namespace {

std::vector<int> pk_labels(int p, int k) {
  std::vector<int> y;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < k; ++j) y.push_back(i);
  return y;
}

}  // namespace

TEST_CASE("batch-hard triplet equals the brute-force oracle") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto y = pk_labels(3, 3);
    const Eigen::MatrixXd f = test::random_matrix(rng, 9, 5, 0.3);
    CHECK(triplet_batch_hard(f, y, 0.3) == doctest::Approx(oracle::triplet(f, y, 0.3)).epsilon(1e-12));
  }
}

TEST_CASE("triplet hand case") {
  // 1-d features: class 0 at {0, 1}, class 1 at {3, 5}.
  Eigen::MatrixXd f(4, 1);
  f << 0.0, 1.0, 3.0, 5.0;
  const std::vector<int> y{0, 0, 1, 1};
  // anchors: 0 -> max(0, .3+1-3)=0; 1 -> .3+1-2=0; 3 -> .3+2-2=.3; 5 -> .3+2-4=0
  CHECK(triplet_batch_hard(f, y, 0.3) == doctest::Approx(0.3 / 4.0));
}

TEST_CASE("triplet rejects degenerate batches") {
  const Eigen::MatrixXd f = Eigen::MatrixXd::Ones(4, 2);
  CHECK_THROWS_AS(triplet_batch_hard(f, std::vector<int>{0, 0, 0, 0}, 0.3), DegenerateBatch);
  CHECK_THROWS_AS(triplet_batch_hard(f, std::vector<int>{0, 0, 1, 2}, 0.3), DegenerateBatch);
  CHECK_THROWS_AS(triplet_batch_hard(f, std::vector<int>{0, 0, 1}, 0.3), ShapeMismatch);
}

TEST_CASE("center loss hand case and gradients") {
  CenterTable c;
  c.centers = Eigen::MatrixXd::Zero(2, 2);
  c.centers.row(1) << 1.0, 1.0;
  Eigen::MatrixXd f(2, 2);
  f << 3.0, 4.0, 1.0, 2.0;
  Eigen::MatrixXd gf;
  Eigen::MatrixXd gc;
  // (0.5*25 + 0.5*1) / 2
  CHECK(center_loss(f, std::vector<int>{0, 1}, c, &gf, &gc) == doctest::Approx(6.5));
  CHECK(gf(0, 1) == doctest::Approx(2.0));
  CHECK(gc(1, 1) == doctest::Approx(-0.5));
  CHECK_THROWS_AS(center_loss(f, std::vector<int>{0, 2}, c), ContractViolation);
}

TEST_CASE("id loss hand case") {
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 3);
  // uniform logits: -log(1/3) regardless of targets
  CHECK(id_loss(z, std::vector<int>{1}, 0.1) == doctest::Approx(std::log(3.0)));
  z << 2.0, 0.0, 0.0;
  const double lse = std::log(std::exp(2.0) + 2.0);
  const double expect = -(0.9 * (2.0 - lse) + 0.05 * (0.0 - lse) * 2.0);
  CHECK(id_loss(z, std::vector<int>{0}, 0.1) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(id_loss(z, std::vector<int>{0}, 0.0) == doctest::Approx(lse - 2.0).epsilon(1e-12));
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(2);
  const auto y = pk_labels(3, 2);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd f = test::random_matrix(rng, 6, 4);
    Eigen::MatrixXd g;
    triplet_batch_hard(f, y, 0.3, &g);
    CHECK(test::fd_relative_error([&] { return triplet_batch_hard(f, y, 0.3); }, f.data(), f.size(),
                                  Eigen::Map<const Eigen::VectorXd>(g.data(), g.size())) < 1e-6);

    CenterTable c = CenterTable::init(3, 4, rng);
    Eigen::MatrixXd gc;
    center_loss(f, y, c, &g, &gc);
    CHECK(test::fd_relative_error([&] { return center_loss(f, y, c); }, f.data(), f.size(),
                                  Eigen::Map<const Eigen::VectorXd>(g.data(), g.size())) < 1e-6);
    CHECK(test::fd_relative_error([&] { return center_loss(f, y, c); }, c.centers.data(), c.centers.size(),
                                  Eigen::Map<const Eigen::VectorXd>(gc.data(), gc.size())) < 1e-6);

    Eigen::MatrixXd z = test::random_matrix(rng, 6, 3, 2.0);
    id_loss(z, y, 0.1, &g);
    CHECK(test::fd_relative_error([&] { return id_loss(z, y, 0.1); }, z.data(), z.size(),
                                  Eigen::Map<const Eigen::VectorXd>(g.data(), g.size())) < 1e-6);
  }
}

TEST_CASE("combined loss weights the center term") {
  CHECK(combined_loss(LossParts{1.0, 100.0, 2.0}, 0.0005) == doctest::Approx(3.05));
}

TEST_CASE("loss config validation") {
  LossConfig c;
  c.validate();
  c.smoothing = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = LossConfig{};
  c.margin = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
