#include "reid/losses.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "reid/errors.hpp"
#include "reid/util.hpp"

namespace reid {

void LossConfig::validate() const {
  if (margin < 0.0) throw ConfigError("triplet margin must be non-negative");
  if (lambda_center < 0.0) throw ConfigError("center loss weight must be non-negative");
  if (smoothing < 0.0 || smoothing >= 1.0) throw ConfigError("label smoothing must lie in [0, 1)");
}

CenterTable CenterTable::init(int num_classes, int dim, std::mt19937_64& rng) {
  CenterTable t;
  t.centers.resize(num_classes, dim);
  for (Eigen::Index j = 0; j < t.centers.cols(); ++j)
    for (Eigen::Index i = 0; i < t.centers.rows(); ++i) t.centers(i, j) = 2.0 * uniform01(rng) - 1.0;
  return t;
}

namespace {

void check_labels(const Eigen::MatrixXd& m, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != m.rows()) throw ShapeMismatch("label count does not match batch size");
}

}  // namespace

double triplet_batch_hard(const Eigen::MatrixXd& features, std::span<const int> labels, double margin,
                          Eigen::MatrixXd* grad) {
  check_labels(features, labels);
  const Eigen::Index b = features.rows();
  std::map<int, int> counts;
  for (int y : labels) ++counts[y];
  if (counts.size() < 2) throw DegenerateBatch("triplet loss needs at least two identities in the batch");
  for (auto [y, c] : counts)
    if (c < 2) throw DegenerateBatch("identity " + std::to_string(y) + " appears once in the batch");

  Eigen::MatrixXd dist(b, b);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < b; ++j) dist(i, j) = (features.row(i) - features.row(j)).norm();

  if (grad) *grad = Eigen::MatrixXd::Zero(b, features.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    Eigen::Index pos = -1;
    Eigen::Index neg = -1;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        if (pos < 0 || dist(i, j) > dist(i, pos)) pos = j;
      } else if (neg < 0 || dist(i, j) < dist(i, neg)) {
        neg = j;
      }
    }
    const double hinge = margin + dist(i, pos) - dist(i, neg);
    if (hinge <= 0.0) continue;
    total += hinge;
    if (!grad) continue;
    const double scale = 1.0 / static_cast<double>(b);
    if (dist(i, pos) > 1e-12) {
      const Eigen::RowVectorXd d = (features.row(i) - features.row(pos)) / dist(i, pos);
      grad->row(i) += scale * d;
      grad->row(pos) -= scale * d;
    }
    if (dist(i, neg) > 1e-12) {
      const Eigen::RowVectorXd d = (features.row(i) - features.row(neg)) / dist(i, neg);
      grad->row(i) -= scale * d;
      grad->row(neg) += scale * d;
    }
  }
  return total / static_cast<double>(b);
}

double center_loss(const Eigen::MatrixXd& features, std::span<const int> labels, const CenterTable& centers,
                   Eigen::MatrixXd* grad_features, Eigen::MatrixXd* grad_centers) {
  check_labels(features, labels);
  const Eigen::Index b = features.rows();
  if (features.cols() != centers.centers.cols()) throw ShapeMismatch("center table width mismatch");
  if (grad_features) *grad_features = Eigen::MatrixXd::Zero(b, features.cols());
  if (grad_centers) *grad_centers = Eigen::MatrixXd::Zero(centers.centers.rows(), centers.centers.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= centers.centers.rows())
      throw ContractViolation("label " + std::to_string(y) + " outside the center table");
    const Eigen::RowVectorXd diff = features.row(i) - centers.centers.row(y);
    total += 0.5 * diff.squaredNorm();
    if (grad_features) grad_features->row(i) = diff / static_cast<double>(b);
    if (grad_centers) grad_centers->row(y) -= diff / static_cast<double>(b);
  }
  return total / static_cast<double>(b);
}

double id_loss(const Eigen::MatrixXd& logits, std::span<const int> labels, double smoothing, Eigen::MatrixXd* grad) {
  check_labels(logits, labels);
  const Eigen::Index b = logits.rows();
  const Eigen::Index p = logits.cols();
  if (p < 2) throw ContractViolation("ID loss needs at least two classes");
  const double off = smoothing / static_cast<double>(p - 1);
  const double on = 1.0 - smoothing;
  if (grad) grad->resize(b, p);
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= p) throw ContractViolation("label " + std::to_string(y) + " outside the classifier");
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    double row = 0.0;
    for (Eigen::Index c = 0; c < p; ++c) {
      const double target = c == y ? on : off;
      const double log_prob = logits(i, c) - lse;
      row -= target * log_prob;
      if (grad) (*grad)(i, c) = (std::exp(log_prob) - target) / static_cast<double>(b);
    }
    total += row;
  }
  return total / static_cast<double>(b);
}

double combined_loss(const LossParts& parts, double lambda_center) {
  return parts.triplet + lambda_center * parts.center + parts.id;
}

}  // namespace reid
