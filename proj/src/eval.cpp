#include "reid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "reid/errors.hpp"

namespace reid {

using ojson = nlohmann::ordered_json;

DistMatrix pairwise_distances(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& gallery) {
  if (queries.cols() != gallery.cols()) throw ShapeMismatch("query and gallery feature widths differ");
  const Eigen::VectorXd qn = queries.rowwise().squaredNorm();
  const Eigen::VectorXd gn = gallery.rowwise().squaredNorm();
  DistMatrix d = -2.0 * queries * gallery.transpose();
  d.colwise() += qn;
  d.rowwise() += gn.transpose();
  return d.cwiseMax(0.0);
}

EvalReport cmc_map(const DistMatrix& dist, std::span<const int> query_labels, std::span<const int> gallery_labels,
                   std::span<const int> query_cams, std::span<const int> gallery_cams, int max_rank) {
  const auto nq = static_cast<Eigen::Index>(query_labels.size());
  const auto ng = static_cast<Eigen::Index>(gallery_labels.size());
  if (dist.rows() != nq || dist.cols() != ng || static_cast<Eigen::Index>(query_cams.size()) != nq ||
      static_cast<Eigen::Index>(gallery_cams.size()) != ng)
    throw ShapeMismatch("cmc_map: distance matrix and label/camera lists disagree");

  EvalReport r;
  r.num_queries = static_cast<int>(nq);
  r.num_gallery = static_cast<int>(ng);
  const int curve_len = std::max(1, std::min<int>(max_rank, static_cast<int>(std::max<Eigen::Index>(ng, 1))));
  std::vector<long> hits_at(static_cast<std::size_t>(curve_len), 0);
  double ap_sum = 0.0;

  std::vector<int> order(static_cast<std::size_t>(ng));
  for (Eigen::Index q = 0; q < nq; ++q) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist(q, a) < dist(q, b); });

    QueryResult qr;
    qr.query_index = static_cast<int>(q);
    qr.label = query_labels[q];
    qr.camera = query_cams[q];
    int kept = 0;
    int hits = 0;
    double precision_sum = 0.0;
    for (int g : order) {
      if (gallery_labels[g] == kJunkLabel) continue;
      if (gallery_labels[g] == qr.label && gallery_cams[g] == qr.camera) continue;
      ++kept;
      if (static_cast<int>(qr.ranking.size()) < max_rank) qr.ranking.push_back(g);
      if (gallery_labels[g] == qr.label) {
        ++hits;
        if (hits == 1) qr.first_hit_rank = kept;
        precision_sum += static_cast<double>(hits) / static_cast<double>(kept);
      }
    }
    if (hits == 0) {
      spdlog::warn("query {} (label {}) has no valid positives; excluded", q, qr.label);
    } else {
      qr.valid = true;
      qr.average_precision = precision_sum / static_cast<double>(hits);
      ap_sum += qr.average_precision;
      ++r.num_valid_queries;
      if (qr.first_hit_rank <= curve_len) ++hits_at[static_cast<std::size_t>(qr.first_hit_rank - 1)];
    }
    r.queries.push_back(std::move(qr));
  }

  r.cmc.assign(static_cast<std::size_t>(curve_len), 0.0);
  if (r.num_valid_queries > 0) {
    long cum = 0;
    for (int k = 0; k < curve_len; ++k) {
      cum += hits_at[static_cast<std::size_t>(k)];
      r.cmc[static_cast<std::size_t>(k)] = static_cast<double>(cum) / r.num_valid_queries;
    }
    r.mean_ap = ap_sum / r.num_valid_queries;
  }
  r.rank1 = r.cmc.front();
  r.rank5 = r.cmc[static_cast<std::size_t>(std::min(4, curve_len - 1))];
  return r;
}

namespace {

using SparseRow = std::vector<std::pair<int, double>>;  // sorted by column

// Indices of the `count` smallest entries of `row`, ties broken by index.
std::vector<int> smallest(const Eigen::VectorXd& row, int count) {
  std::vector<int> idx(static_cast<std::size_t>(row.size()));
  std::iota(idx.begin(), idx.end(), 0);
  auto less = [&](int a, int b) { return row[a] < row[b] || (row[a] == row[b] && a < b); };
  std::partial_sort(idx.begin(), idx.begin() + count, idx.end(), less);
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

// k-reciprocal neighbours of `i` given top-(k+1) lists.
std::vector<int> reciprocal(const std::vector<std::vector<int>>& rank, int i, int k) {
  std::vector<int> out;
  for (int n = 0; n <= k; ++n) {
    const int cand = rank[static_cast<std::size_t>(i)][static_cast<std::size_t>(n)];
    const auto& back = rank[static_cast<std::size_t>(cand)];
    if (std::find(back.begin(), back.begin() + k + 1, i) != back.begin() + k + 1) out.push_back(cand);
  }
  return out;
}

}  // namespace

DistMatrix k_reciprocal_rerank(const DistMatrix& dist, const Eigen::MatrixXd& query_features,
                               const Eigen::MatrixXd& gallery_features, RerankParams params) {
  const int nq = static_cast<int>(dist.rows());
  const int ng = static_cast<int>(dist.cols());
  if (query_features.rows() != nq || gallery_features.rows() != ng)
    throw ShapeMismatch("k_reciprocal_rerank: feature rows do not match the distance matrix");
  const int all = nq + ng;
  if (params.lambda < 0.0 || params.lambda > 1.0) throw ContractViolation("re-ranking lambda must lie in [0, 1]");
  if (params.k1 < 1 || params.k2 < 1) throw ContractViolation("re-ranking k1/k2 must be positive");
  if (params.k1 >= all) {
    spdlog::warn("re-ranking k1={} exceeds population {}; clamped to {}", params.k1, all, all - 1);
    params.k1 = all - 1;
  }
  if (params.k2 > all) {
    spdlog::warn("re-ranking k2={} exceeds population {}; clamped to {}", params.k2, all, all);
    params.k2 = all;
  }
  if (params.k1 < 1) return dist;  // single point: nothing to re-rank

  const DistMatrix qq = pairwise_distances(query_features, query_features);
  const DistMatrix gg = pairwise_distances(gallery_features, gallery_features);
  auto row_of = [&](int i) {
    Eigen::VectorXd row(all);
    if (i < nq) {
      row.head(nq) = qq.row(i).transpose();
      row.tail(ng) = dist.row(i).transpose();
    } else {
      row.head(nq) = dist.col(i - nq);
      row.tail(ng) = gg.row(i - nq).transpose();
    }
    return row;
  };

  // Rows are scaled by their maximum before they feed the neighbour weights.
  const int keep = std::max(params.k1 + 1, params.k2);
  std::vector<std::vector<int>> rank(static_cast<std::size_t>(all));
  std::vector<double> row_max(static_cast<std::size_t>(all));
  for (int i = 0; i < all; ++i) {
    const Eigen::VectorXd row = row_of(i);
    row_max[static_cast<std::size_t>(i)] = row.maxCoeff();
    rank[static_cast<std::size_t>(i)] = smallest(row, keep);
  }

  const int half = static_cast<int>(std::nearbyint(params.k1 / 2.0));
  std::vector<SparseRow> v(static_cast<std::size_t>(all));
  for (int i = 0; i < all; ++i) {
    const std::vector<int> recip = reciprocal(rank, i, params.k1);
    std::vector<int> expanded = recip;
    for (int cand : recip) {
      const std::vector<int> cand_recip = reciprocal(rank, cand, half);
      std::size_t common = 0;
      for (int c : cand_recip)
        if (std::find(recip.begin(), recip.end(), c) != recip.end()) ++common;
      if (static_cast<double>(common) > 2.0 / 3.0 * static_cast<double>(cand_recip.size()))
        expanded.insert(expanded.end(), cand_recip.begin(), cand_recip.end());
    }
    std::sort(expanded.begin(), expanded.end());
    expanded.erase(std::unique(expanded.begin(), expanded.end()), expanded.end());

    const Eigen::VectorXd row = row_of(i);
    const double scale = row_max[static_cast<std::size_t>(i)] > 0.0 ? row_max[static_cast<std::size_t>(i)] : 1.0;
    SparseRow& vi = v[static_cast<std::size_t>(i)];
    double total = 0.0;
    for (int j : expanded) {
      const double w = std::exp(-row[j] / scale);
      vi.emplace_back(j, w);
      total += w;
    }
    for (auto& e : vi) e.second /= total;
  }

  if (params.k2 != 1) {
    std::vector<SparseRow> averaged(static_cast<std::size_t>(all));
    for (int i = 0; i < all; ++i) {
      std::vector<double> acc(static_cast<std::size_t>(all), 0.0);
      std::vector<char> touched(static_cast<std::size_t>(all), 0);
      for (int n = 0; n < params.k2; ++n)
        for (auto [j, w] : v[static_cast<std::size_t>(rank[static_cast<std::size_t>(i)][static_cast<std::size_t>(n)])]) {
          acc[static_cast<std::size_t>(j)] += w;
          touched[static_cast<std::size_t>(j)] = 1;
        }
      for (int j = 0; j < all; ++j)
        if (touched[static_cast<std::size_t>(j)])
          averaged[static_cast<std::size_t>(i)].emplace_back(j, acc[static_cast<std::size_t>(j)] / params.k2);
    }
    v = std::move(averaged);
  }

  // Column-wise inverted index of the non-zero entries.
  std::vector<std::vector<std::pair<int, double>>> inverted(static_cast<std::size_t>(all));
  for (int i = 0; i < all; ++i)
    for (auto [j, w] : v[static_cast<std::size_t>(i)]) inverted[static_cast<std::size_t>(j)].emplace_back(i, w);

  DistMatrix out(nq, ng);
  std::vector<double> overlap(static_cast<std::size_t>(all));
  for (int q = 0; q < nq; ++q) {
    std::fill(overlap.begin(), overlap.end(), 0.0);
    for (auto [j, wq] : v[static_cast<std::size_t>(q)])
      for (auto [other, wo] : inverted[static_cast<std::size_t>(j)]) overlap[static_cast<std::size_t>(other)] += std::min(wq, wo);
    for (int g = 0; g < ng; ++g) {
      const double m = overlap[static_cast<std::size_t>(nq + g)];
      const double jaccard = 1.0 - m / (2.0 - m);
      out(q, g) = params.lambda * dist(q, g) + (1.0 - params.lambda) * jaccard;
    }
  }
  return out;
}

std::string report_to_json(const EvalReport& r, bool include_rankings) {
  ojson doc;
  doc["rank1"] = r.rank1;
  doc["rank5"] = r.rank5;
  doc["mAP"] = r.mean_ap;
  doc["cmc"] = r.cmc;
  doc["num_queries"] = r.num_queries;
  doc["num_valid_queries"] = r.num_valid_queries;
  doc["num_excluded_queries"] = r.num_queries - r.num_valid_queries;
  doc["num_gallery"] = r.num_gallery;
  doc["reranked"] = r.reranked;
  if (r.rerank) doc["rerank"] = {{"k1", r.rerank->k1}, {"k2", r.rerank->k2}, {"lambda", r.rerank->lambda}};
  doc["cross_dataset"] = r.cross_dataset;
  doc["source_dataset"] = r.source_dataset;
  doc["target_dataset"] = r.target_dataset;
  if (include_rankings) {
    ojson qs = ojson::array();
    for (const auto& q : r.queries)
      qs.push_back({{"query", q.query_index}, {"label", q.label}, {"camera", q.camera}, {"valid", q.valid},
                    {"first_hit_rank", q.first_hit_rank}, {"ap", q.average_precision}, {"ranking", q.ranking}});
    doc["queries"] = std::move(qs);
  }
  return doc.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  const ojson doc = ojson::parse(text);
  EvalReport r;
  r.rank1 = doc.at("rank1").get<double>();
  r.rank5 = doc.at("rank5").get<double>();
  r.mean_ap = doc.at("mAP").get<double>();
  r.cmc = doc.at("cmc").get<std::vector<double>>();
  r.num_queries = doc.at("num_queries").get<int>();
  r.num_valid_queries = doc.at("num_valid_queries").get<int>();
  r.num_gallery = doc.at("num_gallery").get<int>();
  r.reranked = doc.at("reranked").get<bool>();
  if (doc.contains("rerank"))
    r.rerank = RerankParams{doc["rerank"].at("k1").get<int>(), doc["rerank"].at("k2").get<int>(),
                            doc["rerank"].at("lambda").get<double>()};
  r.cross_dataset = doc.at("cross_dataset").get<bool>();
  r.source_dataset = doc.value("source_dataset", "");
  r.target_dataset = doc.value("target_dataset", "");
  if (doc.contains("queries")) {
    for (const auto& q : doc["queries"]) {
      QueryResult qr;
      qr.query_index = q.at("query").get<int>();
      qr.label = q.at("label").get<int>();
      qr.camera = q.at("camera").get<int>();
      qr.valid = q.at("valid").get<bool>();
      qr.first_hit_rank = q.at("first_hit_rank").get<int>();
      qr.average_precision = q.at("ap").get<double>();
      qr.ranking = q.at("ranking").get<std::vector<int>>();
      r.queries.push_back(std::move(qr));
    }
  }
  return r;
}

std::string report_to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "query,label,camera,valid,first_hit_rank,ap,top10\n";
  for (const auto& q : r.queries) {
    out << q.query_index << ',' << q.label << ',' << q.camera << ',' << (q.valid ? 1 : 0) << ',' << q.first_hit_rank
        << ',' << q.average_precision << ',';
    for (std::size_t i = 0; i < std::min<std::size_t>(10, q.ranking.size()); ++i) out << (i ? " " : "") << q.ranking[i];
    out << '\n';
  }
  return out.str();
}

}  // namespace reid
