#pragma once

#include <random>
#include <span>

#include <Eigen/Dense>

#include "reid/fusion_head.hpp"
#include "reid/gat.hpp"
#include "reid/losses.hpp"

namespace reid {

/// Graph encoder, fusion layer, BNNeck head and center table.
struct ReidModel {
  GraphEncoderParams encoder;
  FusionParams fusion;
  HeadParams head;
  CenterTable centers;

  static ReidModel init(int num_classes, int visual_dim, FusionMode mode, std::mt19937_64& rng,
                        int hidden_dim = kTextDim);
  [[nodiscard]] ReidModel zeros_like() const;
  [[nodiscard]] int num_classes() const { return head.num_classes(); }
  /// Tensors updated by the optimizer, in a fixed order.
  TensorList parameters();
  /// Non-trainable state: head running statistics and the center table.
  TensorList buffers();
};

struct StepLosses {
  LossParts parts;
  double total = 0.0;
};

/// One training forward/backward pass. Parameter gradients are written to
/// `grads` (overwritten), and dL_center/dcenters to `center_grad`. The head's
/// running statistics are updated as a side effect.
StepLosses forward_backward(ReidModel& model, std::span<const NumericGraph* const> graphs,
                            const Eigen::MatrixXd& visual, std::span<const int> labels, const LossConfig& loss,
                            ReidModel& grads, Eigen::MatrixXd& center_grad);

/// Eval-mode embeddings (post-BN, L2-normalized), one row per graph.
Eigen::MatrixXd embed_batch(ReidModel& model, std::span<const NumericGraph* const> graphs,
                            const Eigen::MatrixXd& visual, int chunk = 64);

}  // namespace reid
