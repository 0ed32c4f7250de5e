#pragma once

#include <random>
#include <span>

#include <Eigen/Dense>

namespace reid {

struct LossConfig {
  double margin = 0.3;             // triplet margin
  double lambda_center = 0.0005;   // weight of the center loss
  double smoothing = 0.1;          // label smoothing for the ID loss
  int num_classes = 0;

  void validate() const;
};

struct CenterTable {
  Eigen::MatrixXd centers;  // P x dim

  static CenterTable init(int num_classes, int dim, std::mt19937_64& rng);
};

/// Batch-hard triplet loss on Euclidean distances, averaged over anchors.
/// Every label must occur at least twice and at least two labels must be
/// present (DegenerateBatch otherwise). Writes dL/df when `grad` is given.
double triplet_batch_hard(const Eigen::MatrixXd& features, std::span<const int> labels, double margin,
                          Eigen::MatrixXd* grad = nullptr);

/// 1/(2B) * sum_i |f_i - c_{y_i}|^2.
double center_loss(const Eigen::MatrixXd& features, std::span<const int> labels, const CenterTable& centers,
                   Eigen::MatrixXd* grad_features = nullptr, Eigen::MatrixXd* grad_centers = nullptr);

/// Cross-entropy against smoothed targets: 1 - eps on the true class,
/// eps / (P - 1) on every other class; averaged over the batch.
double id_loss(const Eigen::MatrixXd& logits, std::span<const int> labels, double smoothing,
               Eigen::MatrixXd* grad = nullptr);

struct LossParts {
  double triplet = 0.0;
  double center = 0.0;
  double id = 0.0;
};

/// triplet + lambda * center + id.
double combined_loss(const LossParts& parts, double lambda_center);

}  // namespace reid
