#include "reid/model.hpp"

#include "reid/errors.hpp"

namespace reid {

ReidModel ReidModel::init(int num_classes, int visual_dim, FusionMode mode, std::mt19937_64& rng, int hidden_dim) {
  ReidModel m;
  m.encoder = GraphEncoderParams::init(rng, kTextDim, hidden_dim, kGraphDim, kTextDim);
  m.fusion = FusionParams::init(visual_dim, kGraphDim, mode, rng);
  m.head = HeadParams::init(num_classes, rng, kEmbeddingDim);
  m.centers = CenterTable::init(num_classes, kEmbeddingDim, rng);
  return m;
}

ReidModel ReidModel::zeros_like() const {
  ReidModel z;
  z.encoder = encoder.zeros_like();
  z.fusion = fusion.zeros_like();
  z.head = head.zeros_like();
  z.centers.centers = Eigen::MatrixXd::Zero(centers.centers.rows(), centers.centers.cols());
  return z;
}

TensorList ReidModel::parameters() {
  TensorList out;
  append(out, encoder.tensors("encoder."));
  append(out, fusion.tensors("fusion."));
  append(out, head.tensors("head."));
  return out;
}

TensorList ReidModel::buffers() {
  TensorList out = head.buffers("head.");
  out.push_back(tensor_ref("centers", centers.centers));
  return out;
}

namespace {

bool uses_graph(const ReidModel& m) { return m.fusion.mode != FusionMode::visual_only; }

}  // namespace

StepLosses forward_backward(ReidModel& model, std::span<const NumericGraph* const> graphs,
                            const Eigen::MatrixXd& visual, std::span<const int> labels, const LossConfig& loss,
                            ReidModel& grads, Eigen::MatrixXd& center_grad) {
  const auto b = static_cast<Eigen::Index>(labels.size());
  if (static_cast<Eigen::Index>(graphs.size()) != b) throw ShapeMismatch("graph count does not match label count");
  grads = model.zeros_like();

  GraphBatch batch;
  EncoderCache enc_cache;
  Eigen::MatrixXd graph_feat = Eigen::MatrixXd::Zero(b, kGraphDim);
  if (uses_graph(model)) {
    batch = make_batch(graphs, model.encoder.self_loop_fill);
    graph_feat = encode_batch(model.encoder, batch, &enc_cache);
  }
  const Eigen::MatrixXd fused = fuse_batch(visual, graph_feat, model.fusion);

  HeadCache head_cache;
  const HeadOutput out = head_forward(fused, model.head, HeadMode::train, &head_cache);

  StepLosses r;
  Eigen::MatrixXd g_tri;
  Eigen::MatrixXd g_cen;
  Eigen::MatrixXd g_id;
  r.parts.triplet = triplet_batch_hard(fused, labels, loss.margin, &g_tri);
  r.parts.center = center_loss(fused, labels, model.centers, &g_cen, &center_grad);
  r.parts.id = id_loss(*out.logits, labels, loss.smoothing, &g_id);
  r.total = combined_loss(r.parts, loss.lambda_center);

  Eigen::MatrixXd g_fused = g_tri + loss.lambda_center * g_cen;
  g_fused += head_backward(g_id, out.bn_feature, model.head, head_cache, grads.head);
  const Eigen::MatrixXd g_graph = fuse_backward(visual, graph_feat, model.fusion, g_fused, grads.fusion);
  if (uses_graph(model)) encode_batch_backward(model.encoder, batch, enc_cache, g_graph, grads.encoder);
  return r;
}

Eigen::MatrixXd embed_batch(ReidModel& model, std::span<const NumericGraph* const> graphs,
                            const Eigen::MatrixXd& visual, int chunk) {
  const auto n = static_cast<Eigen::Index>(graphs.size());
  Eigen::MatrixXd out(n, kEmbeddingDim);
  const bool need_visual = model.fusion.mode != FusionMode::graph_only;
  for (Eigen::Index start = 0; start < n; start += chunk) {
    const Eigen::Index len = std::min<Eigen::Index>(chunk, n - start);
    Eigen::MatrixXd graph_feat = Eigen::MatrixXd::Zero(len, kGraphDim);
    if (uses_graph(model)) {
      const GraphBatch batch = make_batch(graphs.subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(len)),
                                          model.encoder.self_loop_fill);
      graph_feat = encode_batch(model.encoder, batch);
    }
    const Eigen::MatrixXd vis = need_visual ? Eigen::MatrixXd(visual.middleRows(start, len)) : Eigen::MatrixXd();
    const Eigen::MatrixXd fused = fuse_batch(vis, graph_feat, model.fusion);
    out.middleRows(start, len) = *head_forward(fused, model.head, HeadMode::eval).embedding;
  }
  return out;
}

}  // namespace reid
