#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace reid {

/// Rows are queries, columns gallery entries.
using DistMatrix = Eigen::MatrixXd;

/// Market-1501 junk label: never a positive, removed from the ranking.
inline constexpr int kJunkLabel = -1;

/// Squared Euclidean distances; for unit-norm rows this is 2 - 2 cos.
DistMatrix pairwise_distances(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& gallery);

struct RerankParams {
  int k1 = 20;
  int k2 = 6;
  double lambda = 0.3;
};

struct QueryResult {
  int query_index = 0;
  int label = 0;
  int camera = 0;
  bool valid = false;         // at least one positive survived filtering
  int first_hit_rank = 0;     // 1-based, 0 when invalid
  double average_precision = 0.0;
  std::vector<int> ranking;   // filtered gallery indices, best first, truncated to max_rank
};

struct EvalReport {
  double rank1 = 0.0;
  double rank5 = 0.0;
  double mean_ap = 0.0;
  std::vector<double> cmc;  // cmc[k-1] = R@k
  int num_queries = 0;
  int num_valid_queries = 0;
  int num_gallery = 0;
  bool reranked = false;
  std::optional<RerankParams> rerank;
  bool cross_dataset = false;
  std::string source_dataset;
  std::string target_dataset;
  std::vector<QueryResult> queries;
};

/// CMC and mAP under the cross-camera protocol: for each query, gallery
/// entries with the same label and camera and junk entries are removed;
/// queries left without positives are excluded from the averages.
EvalReport cmc_map(const DistMatrix& dist, std::span<const int> query_labels, std::span<const int> gallery_labels,
                   std::span<const int> query_cams, std::span<const int> gallery_cams, int max_rank = 50);

/// k-reciprocal re-ranking. Neighbourhoods are built over the joint
/// query+gallery set (query-gallery distances from `dist`, the rest from the
/// features), and the result is lambda * dist + (1 - lambda) * Jaccard.
/// k1 / k2 larger than the population are clamped with a warning.
DistMatrix k_reciprocal_rerank(const DistMatrix& dist, const Eigen::MatrixXd& query_features,
                               const Eigen::MatrixXd& gallery_features, RerankParams params);

/// JSON document with metrics, protocol flags and counts.
std::string report_to_json(const EvalReport& r, bool include_rankings = false);
EvalReport report_from_json(const std::string& text);
/// One line per query: index, label, camera, valid, first hit rank, AP, top-10 ranking.
std::string report_to_csv(const EvalReport& r);

}  // namespace reid
