#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "reid/text_embed.hpp"
#include "reid/train.hpp"
#include "reid/util.hpp"

namespace reid::test {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "reid") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / (tag + "_" + hex64((std::uint64_t{rd()} << 32) | rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * (2.0 * uniform01(rng) - 1.0);
  return m;
}

/// Random directed graph without self-loops or parallel edges; every node
/// gets at least one edge so nothing is isolated.
inline NumericGraph random_graph(std::mt19937_64& rng, int nodes, int feat_dim, int edge_dim, double edge_prob = 0.3) {
  NumericGraph g;
  g.node_features = random_matrix(rng, nodes, feat_dim);
  for (int u = 0; u < nodes; ++u)
    for (int v = 0; v < nodes; ++v)
      if (u != v && uniform01(rng) < edge_prob) g.edge_index.emplace_back(u, v);
  for (int u = 1; u < nodes; ++u) {
    bool touched = false;
    for (auto [a, b] : g.edge_index) touched = touched || a == u || b == u;
    if (!touched) g.edge_index.emplace_back(u, 0);
  }
  g.edge_features = random_matrix(rng, static_cast<Eigen::Index>(g.edge_index.size()), edge_dim);
  g.person_node_index = 0;
  g.source_image_id = "random";
  return g;
}

/// Central finite differences of `loss` with respect to `n` entries starting
/// at `data`, compared with `analytic` as ||a - n|| / max(||a||, ||n||).
/// `stride` > 1 checks every stride-th entry only.
inline double fd_relative_error(const std::function<double()>& loss, double* data, Eigen::Index n,
                                const Eigen::Ref<const Eigen::VectorXd>& analytic, Eigen::Index stride = 1,
                                double h = 1e-6) {
  Eigen::VectorXd a_sel, n_sel;
  std::vector<double> av, nv;
  for (Eigen::Index i = 0; i < n; i += stride) {
    const double keep = data[i];
    data[i] = keep + h;
    const double up = loss();
    data[i] = keep - h;
    const double down = loss();
    data[i] = keep;
    nv.push_back((up - down) / (2.0 * h));
    av.push_back(analytic[i]);
  }
  a_sel = Eigen::Map<Eigen::VectorXd>(av.data(), static_cast<Eigen::Index>(av.size()));
  n_sel = Eigen::Map<Eigen::VectorXd>(nv.data(), static_cast<Eigen::Index>(nv.size()));
  const double denom = std::max({a_sel.norm(), n_sel.norm(), 1e-12});
  return (a_sel - n_sel).norm() / denom;
}

/// Labelled toy training set: each identity has its own visual prototype
/// and a fixed graph whose node features get per-image noise.
inline std::vector<TrainSample> toy_train_set(std::mt19937_64& rng, int identities, int per_id, int visual_dim,
                                              double noise = 0.1) {
  std::vector<TrainSample> out;
  for (int p = 0; p < identities; ++p) {
    const Eigen::VectorXd proto = random_matrix(rng, visual_dim, 1);
    const NumericGraph base = random_graph(rng, 3 + p % 3, kTextDim, kTextDim, 0.4);
    for (int j = 0; j < per_id; ++j) {
      TrainSample s;
      s.image_id = "id" + std::to_string(p) + "_" + std::to_string(j);
      s.label = p;
      s.camera = j % 6 + 1;
      s.graph = base;
      s.graph.node_features += random_matrix(rng, base.node_features.rows(), kTextDim, noise);
      s.visual = proto + random_matrix(rng, visual_dim, 1, noise);
      out.push_back(std::move(s));
    }
  }
  return out;
}

struct RetrievalInstance {
  Eigen::MatrixXd dist;
  std::vector<int> ql, gl, qc, gc;
};

/// Random retrieval problem with junk entries, same-camera positives and
/// tied distances (values are drawn from a small integer grid).
inline RetrievalInstance random_retrieval(std::mt19937_64& rng, int nq, int ng, int ids = 8, int cams = 3) {
  auto draw = [&](int n) { return static_cast<int>(uniform01(rng) * n); };
  RetrievalInstance r;
  r.dist.resize(nq, ng);
  for (int i = 0; i < nq; ++i)
    for (int j = 0; j < ng; ++j) r.dist(i, j) = static_cast<double>(draw(25)) / 8.0;
  for (int i = 0; i < nq; ++i) {
    r.ql.push_back(1 + draw(ids));
    r.qc.push_back(1 + draw(cams));
  }
  for (int j = 0; j < ng; ++j) {
    r.gl.push_back(uniform01(rng) < 0.1 ? -1 : 1 + draw(ids));
    r.gc.push_back(1 + draw(cams));
  }
  return r;
}

}  // namespace reid::test
