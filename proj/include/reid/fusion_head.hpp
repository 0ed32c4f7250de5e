#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reid/tensor.hpp"

namespace reid {

inline constexpr int kEmbeddingDim = 128;

/// Which branches feed the fusion layer. Single-branch modes reproduce the
/// graph-only / visual-only ablations.
enum class FusionMode { joint, graph_only, visual_only };

std::string to_string(FusionMode m);
FusionMode fusion_mode_from_string(const std::string& s);

/// One linear layer over concat(visual, graph) -> 128.
struct FusionParams {
  Eigen::MatrixXd weight;  // 128 x input_dim
  Eigen::VectorXd bias;    // 128
  FusionMode mode = FusionMode::joint;
  int visual_dim = 0;
  int graph_dim = 0;

  static FusionParams init(int visual_dim, int graph_dim, FusionMode mode, std::mt19937_64& rng);
  [[nodiscard]] int input_dim() const;
  [[nodiscard]] FusionParams zeros_like() const;
  TensorList tensors(const std::string& prefix);
};

/// Concatenates the branches the mode uses, row-wise for a batch.
Eigen::MatrixXd fusion_input(const FusionParams& p, const Eigen::MatrixXd& visual, const Eigen::MatrixXd& graph);

Eigen::VectorXd fuse(const Eigen::VectorXd& visual, const Eigen::VectorXd& graph, const FusionParams& p);
Eigen::MatrixXd fuse_batch(const Eigen::MatrixXd& visual, const Eigen::MatrixXd& graph, const FusionParams& p);

/// Accumulates into `grads`; returns dL/d(graph) (B x graph_dim, zero in visual-only mode).
Eigen::MatrixXd fuse_backward(const Eigen::MatrixXd& visual, const Eigen::MatrixXd& graph, const FusionParams& p,
                              const Eigen::MatrixXd& grad_output, FusionParams& grads);

/// BatchNorm neck followed by a bias-free identity classifier.
struct HeadParams {
  Eigen::VectorXd bn_gain;
  Eigen::VectorXd bn_bias;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
  Eigen::MatrixXd classifier;  // P x 128
  double momentum = 0.1;
  double eps = 1e-5;

  static HeadParams init(int num_classes, std::mt19937_64& rng, int dim = kEmbeddingDim);
  [[nodiscard]] int num_classes() const { return static_cast<int>(classifier.rows()); }
  [[nodiscard]] HeadParams zeros_like() const;
  /// Trainable tensors only.
  TensorList tensors(const std::string& prefix);
  /// Running statistics.
  TensorList buffers(const std::string& prefix);
};

enum class HeadMode { train, eval };

struct HeadOutput {
  Eigen::MatrixXd bn_feature;             // B x 128
  std::optional<Eigen::MatrixXd> logits;  // B x P, train mode only
  std::optional<Eigen::MatrixXd> embedding;  // B x 128, L2-normalized bn_feature, eval mode only
};

struct HeadCache {
  Eigen::MatrixXd normalized;  // xhat
  Eigen::VectorXd inv_std;
};

/// Train mode normalizes with batch statistics and updates the running ones;
/// eval mode uses the running statistics and emits no logits.
HeadOutput head_forward(const Eigen::MatrixXd& features, HeadParams& h, HeadMode mode, HeadCache* cache = nullptr);

/// Backward through the train-mode head; returns dL/d(features).
Eigen::MatrixXd head_backward(const Eigen::MatrixXd& grad_logits, const Eigen::MatrixXd& bn_feature,
                              const HeadParams& h, const HeadCache& cache, HeadParams& grads);

enum class Split : std::uint8_t { train = 0, query = 1, gallery = 2 };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct EmbeddingRecord {
  std::string image_id;
  int label = 0;
  int camera = 0;
  Eigen::VectorXd feature;  // 128, unit norm
  Split split = Split::query;
};

/// Binary table: magic "REIDEMB1", u32 count, u32 dim, then per record
/// u16 id length, id bytes, i32 label, i32 camera, u8 split, dim x f32.
void write_embedding_table(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> read_embedding_table(const std::filesystem::path& path);

}  // namespace reid
