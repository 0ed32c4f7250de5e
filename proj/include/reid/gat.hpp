#pragma once

#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "reid/tensor.hpp"
#include "reid/text_embed.hpp"

namespace reid {

inline constexpr int kGraphDim = 128;

/// One single-head GATv2 layer with edge features. Attention logits for a
/// message edge u -> v are  a . LReLU(Ws x_u + Wt x_v + We e_uv); the message
/// value is Ws x_u + We e_uv.
struct GATLayerParams {
  Eigen::MatrixXd source_weight;  // out x in
  Eigen::MatrixXd target_weight;  // out x in
  Eigen::MatrixXd edge_weight;    // out x edge_dim
  Eigen::VectorXd attention;      // out
  Eigen::VectorXd bias;           // out
  double negative_slope = 0.2;

  [[nodiscard]] int in_dim() const { return static_cast<int>(source_weight.cols()); }
  [[nodiscard]] int out_dim() const { return static_cast<int>(source_weight.rows()); }
  [[nodiscard]] int edge_dim() const { return static_cast<int>(edge_weight.cols()); }

  /// Fan-in scaled uniform matrices, zero bias.
  static GATLayerParams init(int in_dim, int out_dim, int edge_dim, std::mt19937_64& rng);
  /// Same shapes, all zeros (gradient accumulator).
  [[nodiscard]] GATLayerParams zeros_like() const;
  void validate() const;
  TensorList tensors(const std::string& prefix);
};

/// Intermediate values of one layer forward pass, kept for backprop.
struct GATLayerCache {
  Eigen::MatrixXd input;      // N x in
  Eigen::MatrixXd pre_act;    // M x out, Ws x_u + Wt x_v + We e_uv
  Eigen::MatrixXd messages;   // M x out, Ws x_u + We e_uv
  Eigen::VectorXd alpha;      // M
  Eigen::MatrixXd output;     // N x out
};

/// Appends one self-loop per node carrying `fill` as its edge feature.
NumericGraph with_self_loops(const NumericGraph& g, const Eigen::VectorXd& fill);

/// Attention coefficients, one per message edge, normalized over each
/// destination's incoming edges. Expects self-loops to be present.
Eigen::VectorXd gatv2_attention(const GATLayerParams& p, const NumericGraph& g, const Eigen::MatrixXd& node_states);

Eigen::MatrixXd gatv2_layer_forward(const GATLayerParams& p, const NumericGraph& g, const Eigen::MatrixXd& node_states,
                                    GATLayerCache* cache = nullptr);

/// Accumulates parameter gradients into `grads` and returns dL/d(node_states).
Eigen::MatrixXd gatv2_layer_backward(const GATLayerParams& p, const NumericGraph& g, const GATLayerCache& cache,
                                     const Eigen::MatrixXd& grad_output, GATLayerParams& grads);

struct GraphEncoderParams {
  GATLayerParams layer1;  // 384 -> hidden
  GATLayerParams layer2;  // hidden -> 128
  Eigen::VectorXd norm_gain;
  Eigen::VectorXd norm_bias;
  Eigen::VectorXd self_loop_fill;  // edge feature used on self-loops
  double hidden_slope = 0.2;
  double norm_eps = 1e-5;

  static GraphEncoderParams init(std::mt19937_64& rng, int in_dim = kTextDim, int hidden_dim = kTextDim,
                                 int out_dim = kGraphDim, int edge_dim = kTextDim);
  [[nodiscard]] GraphEncoderParams zeros_like() const;
  [[nodiscard]] int out_dim() const { return layer2.out_dim(); }
  TensorList tensors(const std::string& prefix);
};

/// Several graphs merged into one disjoint union; `graph_of_node` maps every
/// node back to its graph for pooling.
struct GraphBatch {
  NumericGraph merged;  // self-loops included
  std::vector<int> graph_of_node;
  std::vector<int> node_offset;  // first node of each graph
  int num_graphs = 0;
};

GraphBatch make_batch(std::span<const NumericGraph* const> graphs, const Eigen::VectorXd& self_loop_fill);

struct EncoderCache {
  GATLayerCache layer1;
  GATLayerCache layer2;
  Eigen::MatrixXd hidden_pre;             // layer1 output before the activation
  Eigen::MatrixXi argmax;                 // B x out, winning node per pooled entry
  Eigen::MatrixXd normalized;             // B x out, (pooled - mean) / std
  Eigen::VectorXd inv_std;                // B
};

/// layer1 -> LeakyReLU -> layer2 -> per-graph max pool -> layer norm. One row per graph.
Eigen::MatrixXd encode_batch(const GraphEncoderParams& p, const GraphBatch& batch, EncoderCache* cache = nullptr);

void encode_batch_backward(const GraphEncoderParams& p, const GraphBatch& batch, const EncoderCache& cache,
                           const Eigen::MatrixXd& grad_output, GraphEncoderParams& grads);

/// 128-dim representation of a single graph.
Eigen::VectorXd graph_encode(const GraphEncoderParams& p, const NumericGraph& g);

/// Per-layer attention coefficients on the self-loop augmented graph.
struct LayerAttention {
  NumericGraph graph;  // with self-loops
  Eigen::VectorXd layer1;
  Eigen::VectorXd layer2;
};
LayerAttention encoder_attention(const GraphEncoderParams& p, const NumericGraph& g);

}  // namespace reid
