#pragma once

// Slow, literal reference implementations used to cross-check the library.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "reid/gat.hpp"

namespace reid::oracle {

inline double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }

/// GATv2 layer written edge by edge. `g` must already contain self-loops.
inline Eigen::MatrixXd gatv2_layer(const GATLayerParams& p, const NumericGraph& g, const Eigen::MatrixXd& x,
                                   Eigen::VectorXd* alpha_out = nullptr) {
  const int n = static_cast<int>(x.rows());
  const int m = static_cast<int>(g.edge_index.size());
  const int out = static_cast<int>(p.source_weight.rows());
  std::vector<double> logit(static_cast<std::size_t>(m));
  for (int e = 0; e < m; ++e) {
    const auto [u, v] = g.edge_index[static_cast<std::size_t>(e)];
    double s = 0.0;
    for (int k = 0; k < out; ++k) {
      double z = 0.0;
      for (int c = 0; c < x.cols(); ++c) z += p.source_weight(k, c) * x(u, c) + p.target_weight(k, c) * x(v, c);
      for (int c = 0; c < g.edge_features.cols(); ++c) z += p.edge_weight(k, c) * g.edge_features(e, c);
      s += p.attention[k] * leaky(z, p.negative_slope);
    }
    logit[static_cast<std::size_t>(e)] = s;
  }
  Eigen::VectorXd alpha(m);
  for (int v = 0; v < n; ++v) {
    double mx = -1e300;
    for (int e = 0; e < m; ++e)
      if (g.edge_index[static_cast<std::size_t>(e)].second == v) mx = std::max(mx, logit[static_cast<std::size_t>(e)]);
    double z = 0.0;
    for (int e = 0; e < m; ++e)
      if (g.edge_index[static_cast<std::size_t>(e)].second == v) z += std::exp(logit[static_cast<std::size_t>(e)] - mx);
    for (int e = 0; e < m; ++e)
      if (g.edge_index[static_cast<std::size_t>(e)].second == v)
        alpha[e] = std::exp(logit[static_cast<std::size_t>(e)] - mx) / z;
  }
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, out);
  for (int e = 0; e < m; ++e) {
    const auto [u, v] = g.edge_index[static_cast<std::size_t>(e)];
    for (int k = 0; k < out; ++k) {
      double msg = 0.0;
      for (int c = 0; c < x.cols(); ++c) msg += p.source_weight(k, c) * x(u, c);
      for (int c = 0; c < g.edge_features.cols(); ++c) msg += p.edge_weight(k, c) * g.edge_features(e, c);
      h(v, k) += alpha[e] * msg;
    }
  }
  for (int v = 0; v < n; ++v)
    for (int k = 0; k < out; ++k) h(v, k) += p.bias[k];
  if (alpha_out) *alpha_out = alpha;
  return h;
}

inline double euclid(const Eigen::MatrixXd& f, int i, int j) {
  double s = 0.0;
  for (int c = 0; c < f.cols(); ++c) s += (f(i, c) - f(j, c)) * (f(i, c) - f(j, c));
  return std::sqrt(s);
}

/// Batch-hard triplet loss by enumerating every (anchor, positive, negative).
inline double triplet(const Eigen::MatrixXd& f, const std::vector<int>& labels, double margin) {
  const int b = static_cast<int>(f.rows());
  double total = 0.0;
  for (int a = 0; a < b; ++a) {
    double worst = 0.0;
    for (int p = 0; p < b; ++p) {
      if (p == a || labels[static_cast<std::size_t>(p)] != labels[static_cast<std::size_t>(a)]) continue;
      for (int n = 0; n < b; ++n) {
        if (labels[static_cast<std::size_t>(n)] == labels[static_cast<std::size_t>(a)]) continue;
        worst = std::max(worst, margin + euclid(f, a, p) - euclid(f, a, n));
      }
    }
    total += worst;
  }
  return total / b;
}

struct Metrics {
  std::vector<double> cmc;
  double map = 0.0;
  int valid = 0;
  std::vector<double> ap;  // per query, 0 for invalid ones
};

/// CMC / mAP where each gallery item's rank is obtained by counting the
/// valid items ahead of it (ties resolved by gallery index) instead of sorting.
inline Metrics cmc_map(const Eigen::MatrixXd& dist, const std::vector<int>& ql, const std::vector<int>& gl,
                       const std::vector<int>& qc, const std::vector<int>& gc, int max_rank) {
  const int nq = static_cast<int>(ql.size());
  const int ng = static_cast<int>(gl.size());
  const int len = std::max(1, std::min(max_rank, std::max(ng, 1)));
  Metrics out;
  std::vector<long> first_hits(static_cast<std::size_t>(len), 0);
  double ap_sum = 0.0;
  for (int q = 0; q < nq; ++q) {
    auto usable = [&](int g) {
      if (gl[static_cast<std::size_t>(g)] == -1) return false;
      return !(gl[static_cast<std::size_t>(g)] == ql[static_cast<std::size_t>(q)] &&
               gc[static_cast<std::size_t>(g)] == qc[static_cast<std::size_t>(q)]);
    };
    std::vector<int> ranks;
    for (int g = 0; g < ng; ++g) {
      if (!usable(g) || gl[static_cast<std::size_t>(g)] != ql[static_cast<std::size_t>(q)]) continue;
      int ahead = 0;
      for (int o = 0; o < ng; ++o)
        if (usable(o) && (dist(q, o) < dist(q, g) || (dist(q, o) == dist(q, g) && o < g))) ++ahead;
      ranks.push_back(ahead + 1);
    }
    if (ranks.empty()) {
      out.ap.push_back(0.0);
      continue;
    }
    std::sort(ranks.begin(), ranks.end());
    double s = 0.0;
    for (std::size_t i = 0; i < ranks.size(); ++i) s += static_cast<double>(i + 1) / static_cast<double>(ranks[i]);
    const double ap = s / static_cast<double>(ranks.size());
    out.ap.push_back(ap);
    ap_sum += ap;
    ++out.valid;
    if (ranks.front() <= len) ++first_hits[static_cast<std::size_t>(ranks.front() - 1)];
  }
  out.cmc.assign(static_cast<std::size_t>(len), 0.0);
  if (out.valid > 0) {
    long cum = 0;
    for (int k = 0; k < len; ++k) {
      cum += first_hits[static_cast<std::size_t>(k)];
      out.cmc[static_cast<std::size_t>(k)] = static_cast<double>(cum) / out.valid;
    }
    out.map = ap_sum / out.valid;
  }
  return out;
}

/// k-reciprocal re-ranking on dense matrices, following the published
/// reference code statement by statement. Query-gallery entries come from
/// `qg`; the rest are squared Euclidean distances of the features. The final
/// blend uses the unnormalized `qg`.
inline Eigen::MatrixXd rerank(const Eigen::MatrixXd& qg, const Eigen::MatrixXd& qf, const Eigen::MatrixXd& gf, int k1,
                              int k2, double lambda) {
  const int nq = static_cast<int>(qg.rows());
  const int ng = static_cast<int>(qg.cols());
  const int all = nq + ng;
  Eigen::MatrixXd feats(all, qf.cols());
  feats << qf, gf;
  Eigen::MatrixXd original(all, all);
  for (int i = 0; i < all; ++i)
    for (int j = 0; j < all; ++j) {
      if (i < nq && j >= nq) {
        original(i, j) = qg(i, j - nq);
      } else if (i >= nq && j < nq) {
        original(i, j) = qg(j, i - nq);
      } else {
        double s = 0.0;
        for (int c = 0; c < feats.cols(); ++c) s += (feats(i, c) - feats(j, c)) * (feats(i, c) - feats(j, c));
        original(i, j) = s;
      }
    }
  // original = transpose(original / max(original, axis=0))
  Eigen::MatrixXd scaled(all, all);
  for (int c = 0; c < all; ++c) {
    const double mx = original.col(c).maxCoeff();
    for (int r = 0; r < all; ++r) scaled(r, c) = original(r, c) / mx;
  }
  const Eigen::MatrixXd od = scaled.transpose();

  std::vector<std::vector<int>> initial_rank(static_cast<std::size_t>(all));
  for (int i = 0; i < all; ++i) {
    std::vector<int> idx(static_cast<std::size_t>(all));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return od(i, a) < od(i, b); });
    initial_rank[static_cast<std::size_t>(i)] = idx;
  }
  auto k_recip = [&](int i, int k) {
    std::vector<int> forward(initial_rank[static_cast<std::size_t>(i)].begin(),
                             initial_rank[static_cast<std::size_t>(i)].begin() + k + 1);
    std::vector<int> out;
    for (int f : forward) {
      const auto& back = initial_rank[static_cast<std::size_t>(f)];
      if (std::find(back.begin(), back.begin() + k + 1, i) != back.begin() + k + 1) out.push_back(f);
    }
    return out;
  };

  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(all, all);
  const int half = static_cast<int>(std::nearbyint(k1 / 2.0));
  for (int i = 0; i < all; ++i) {
    const std::vector<int> kr = k_recip(i, k1);
    std::vector<int> expansion = kr;
    for (int cand : kr) {
      const std::vector<int> ckr = k_recip(cand, half);
      std::set<int> a(ckr.begin(), ckr.end());
      std::set<int> b(kr.begin(), kr.end());
      std::vector<int> inter;
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
      if (static_cast<double>(inter.size()) > 2.0 / 3.0 * static_cast<double>(ckr.size()))
        expansion.insert(expansion.end(), ckr.begin(), ckr.end());
    }
    std::set<int> uniq(expansion.begin(), expansion.end());
    double total = 0.0;
    for (int j : uniq) total += std::exp(-od(i, j));
    for (int j : uniq) V(i, j) = std::exp(-od(i, j)) / total;
  }
  if (k2 != 1) {
    Eigen::MatrixXd vqe = Eigen::MatrixXd::Zero(all, all);
    for (int i = 0; i < all; ++i) {
      for (int n = 0; n < k2; ++n) vqe.row(i) += V.row(initial_rank[static_cast<std::size_t>(i)][static_cast<std::size_t>(n)]);
      vqe.row(i) /= k2;
    }
    V = vqe;
  }
  Eigen::MatrixXd jaccard(nq, all);
  for (int i = 0; i < nq; ++i) {
    Eigen::VectorXd temp_min = Eigen::VectorXd::Zero(all);
    for (int j = 0; j < all; ++j) {
      if (V(i, j) == 0.0) continue;
      for (int r = 0; r < all; ++r)
        if (V(r, j) != 0.0) temp_min[r] += std::min(V(i, j), V(r, j));
    }
    for (int j = 0; j < all; ++j) jaccard(i, j) = 1.0 - temp_min[j] / (2.0 - temp_min[j]);
  }
  Eigen::MatrixXd out(nq, ng);
  for (int i = 0; i < nq; ++i)
    for (int j = 0; j < ng; ++j) out(i, j) = jaccard(i, nq + j) * (1.0 - lambda) + qg(i, j) * lambda;
  return out;
}

struct PathScores {
  Eigen::VectorXd edge;
  Eigen::VectorXd node;
};

/// Enumerates every path of one or two hops ending at `target` and credits
/// the product of its coefficients to the path's first edge.
inline PathScores gatt_paths(int nodes, const std::vector<std::pair<int, int>>& edges, const Eigen::VectorXd& a1,
                             const Eigen::VectorXd& a2, int target) {
  const auto m = static_cast<Eigen::Index>(edges.size());
  PathScores s{Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(nodes)};
  for (Eigen::Index e1 = 0; e1 < m; ++e1) {
    for (Eigen::Index e2 = 0; e2 < m; ++e2) {
      if (edges[static_cast<std::size_t>(e1)].second != edges[static_cast<std::size_t>(e2)].first) continue;
      if (edges[static_cast<std::size_t>(e2)].second != target) continue;
      s.edge[e1] += a1[e1] * a2[e2];
    }
    if (edges[static_cast<std::size_t>(e1)].second == target) s.edge[e1] += a2[e1];
  }
  for (Eigen::Index e = 0; e < m; ++e) s.node[edges[static_cast<std::size_t>(e)].first] += s.edge[e];
  return s;
}

}  // namespace reid::oracle
