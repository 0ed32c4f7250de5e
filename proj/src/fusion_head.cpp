#include "reid/fusion_head.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "reid/errors.hpp"
#include "reid/util.hpp"

namespace reid {

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::joint: return "joint";
    case FusionMode::graph_only: return "graph_only";
    case FusionMode::visual_only: return "visual_only";
  }
  return "joint";
}

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "joint") return FusionMode::joint;
  if (s == "graph_only") return FusionMode::graph_only;
  if (s == "visual_only") return FusionMode::visual_only;
  throw ConfigError("unknown fusion mode \"" + s + "\"");
}

int FusionParams::input_dim() const {
  switch (mode) {
    case FusionMode::joint: return visual_dim + graph_dim;
    case FusionMode::graph_only: return graph_dim;
    case FusionMode::visual_only: return visual_dim;
  }
  return 0;
}

FusionParams FusionParams::init(int visual_dim, int graph_dim, FusionMode mode, std::mt19937_64& rng) {
  FusionParams p;
  p.mode = mode;
  p.visual_dim = visual_dim;
  p.graph_dim = graph_dim;
  const int in = p.input_dim();
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  p.weight.resize(kEmbeddingDim, in);
  for (Eigen::Index j = 0; j < p.weight.cols(); ++j)
    for (Eigen::Index i = 0; i < p.weight.rows(); ++i) p.weight(i, j) = bound * (2.0 * uniform01(rng) - 1.0);
  p.bias = Eigen::VectorXd::Zero(kEmbeddingDim);
  return p;
}

FusionParams FusionParams::zeros_like() const {
  FusionParams z = *this;
  z.weight.setZero();
  z.bias.setZero();
  return z;
}

TensorList FusionParams::tensors(const std::string& prefix) {
  return {tensor_ref(prefix + "weight", weight), tensor_ref(prefix + "bias", bias)};
}

Eigen::MatrixXd fusion_input(const FusionParams& p, const Eigen::MatrixXd& visual, const Eigen::MatrixXd& graph) {
  const bool use_visual = p.mode != FusionMode::graph_only;
  const bool use_graph = p.mode != FusionMode::visual_only;
  if (use_visual && visual.cols() != p.visual_dim) throw ShapeMismatch("visual feature width does not match fusion layer");
  if (use_graph && graph.cols() != p.graph_dim) throw ShapeMismatch("graph feature width does not match fusion layer");
  if (use_visual && use_graph && visual.rows() != graph.rows()) throw ShapeMismatch("visual/graph batch sizes differ");
  if (!use_graph) return visual;
  if (!use_visual) return graph;
  Eigen::MatrixXd x(visual.rows(), p.visual_dim + p.graph_dim);
  x << visual, graph;
  return x;
}

Eigen::MatrixXd fuse_batch(const Eigen::MatrixXd& visual, const Eigen::MatrixXd& graph, const FusionParams& p) {
  const Eigen::MatrixXd x = fusion_input(p, visual, graph);
  Eigen::MatrixXd out = x * p.weight.transpose();
  out.rowwise() += p.bias.transpose();
  return out;
}

Eigen::VectorXd fuse(const Eigen::VectorXd& visual, const Eigen::VectorXd& graph, const FusionParams& p) {
  return fuse_batch(visual.transpose(), graph.transpose(), p).row(0).transpose();
}

Eigen::MatrixXd fuse_backward(const Eigen::MatrixXd& visual, const Eigen::MatrixXd& graph, const FusionParams& p,
                              const Eigen::MatrixXd& grad_output, FusionParams& grads) {
  const Eigen::MatrixXd x = fusion_input(p, visual, graph);
  grads.weight += grad_output.transpose() * x;
  grads.bias += grad_output.colwise().sum().transpose();
  const Eigen::MatrixXd grad_x = grad_output * p.weight;
  switch (p.mode) {
    case FusionMode::joint: return grad_x.rightCols(p.graph_dim);
    case FusionMode::graph_only: return grad_x;
    case FusionMode::visual_only: return Eigen::MatrixXd::Zero(grad_output.rows(), p.graph_dim);
  }
  return grad_x;
}

HeadParams HeadParams::init(int num_classes, std::mt19937_64& rng, int dim) {
  if (num_classes < 2) throw ContractViolation("identity classifier needs at least two classes");
  HeadParams h;
  h.bn_gain = Eigen::VectorXd::Ones(dim);
  h.bn_bias = Eigen::VectorXd::Zero(dim);
  h.running_mean = Eigen::VectorXd::Zero(dim);
  h.running_var = Eigen::VectorXd::Ones(dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  h.classifier.resize(num_classes, dim);
  for (Eigen::Index j = 0; j < h.classifier.cols(); ++j)
    for (Eigen::Index i = 0; i < h.classifier.rows(); ++i) h.classifier(i, j) = bound * (2.0 * uniform01(rng) - 1.0);
  return h;
}

HeadParams HeadParams::zeros_like() const {
  HeadParams z = *this;
  z.bn_gain.setZero();
  z.bn_bias.setZero();
  z.classifier.setZero();
  return z;
}

TensorList HeadParams::tensors(const std::string& prefix) {
  return {tensor_ref(prefix + "bn_gain", bn_gain), tensor_ref(prefix + "bn_bias", bn_bias),
          tensor_ref(prefix + "classifier", classifier)};
}

TensorList HeadParams::buffers(const std::string& prefix) {
  return {tensor_ref(prefix + "running_mean", running_mean), tensor_ref(prefix + "running_var", running_var)};
}

HeadOutput head_forward(const Eigen::MatrixXd& features, HeadParams& h, HeadMode mode, HeadCache* cache) {
  const Eigen::Index b = features.rows();
  const Eigen::Index d = features.cols();
  if (d != h.bn_gain.size()) throw ShapeMismatch("head input width mismatch");
  HeadOutput out;
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd var;
  if (mode == HeadMode::train) {
    if (b < 1) throw ContractViolation("train-mode batch norm needs a non-empty batch");
    mean = features.colwise().mean();
    var = (features.rowwise() - mean).array().square().colwise().mean();
    const double unbias = b > 1 ? static_cast<double>(b) / static_cast<double>(b - 1) : 1.0;
    h.running_mean = (1.0 - h.momentum) * h.running_mean + h.momentum * mean.transpose();
    h.running_var = (1.0 - h.momentum) * h.running_var + h.momentum * unbias * var.transpose();
  } else {
    mean = h.running_mean.transpose();
    var = h.running_var.transpose();
  }
  const Eigen::RowVectorXd inv_std = (var.array() + h.eps).rsqrt();
  Eigen::MatrixXd xhat = (features.rowwise() - mean).array().rowwise() * inv_std.array();
  out.bn_feature = (xhat.array().rowwise() * h.bn_gain.transpose().array()).rowwise() + h.bn_bias.transpose().array();

  if (mode == HeadMode::train) {
    out.logits = out.bn_feature * h.classifier.transpose();
    if (cache) {
      cache->normalized = std::move(xhat);
      cache->inv_std = inv_std.transpose();
    }
  } else {
    Eigen::MatrixXd emb = out.bn_feature;
    for (Eigen::Index i = 0; i < b; ++i) {
      const double n = emb.row(i).norm();
      if (n > 0.0) emb.row(i) /= n;
    }
    out.embedding = std::move(emb);
  }
  return out;
}

Eigen::MatrixXd head_backward(const Eigen::MatrixXd& grad_logits, const Eigen::MatrixXd& bn_feature,
                              const HeadParams& h, const HeadCache& cache, HeadParams& grads) {
  const auto b = static_cast<double>(bn_feature.rows());
  grads.classifier += grad_logits.transpose() * bn_feature;
  const Eigen::MatrixXd grad_bn = grad_logits * h.classifier;
  grads.bn_gain += (grad_bn.array() * cache.normalized.array()).colwise().sum().transpose().matrix();
  grads.bn_bias += grad_bn.colwise().sum().transpose();

  const Eigen::ArrayXXd dxhat = grad_bn.array().rowwise() * h.bn_gain.transpose().array();
  const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum().matrix();
  const Eigen::RowVectorXd sum_dxhat_xhat = (dxhat * cache.normalized.array()).colwise().sum().matrix();
  Eigen::ArrayXXd grad = (b * dxhat).rowwise() - sum_dxhat.array();
  grad -= cache.normalized.array().rowwise() * sum_dxhat_xhat.array();
  grad.rowwise() *= (cache.inv_std.transpose().array() / b);
  return grad.matrix();
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::query: return "query";
    case Split::gallery: return "gallery";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "query") return Split::query;
  if (s == "gallery") return Split::gallery;
  throw ManifestError("unknown split \"" + s + "\"");
}

namespace {

template <class T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <class T>
T take(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw Error("truncated embedding table");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

constexpr char kMagic[8] = {'R', 'E', 'I', 'D', 'E', 'M', 'B', '1'};

}  // namespace

void write_embedding_table(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records) {
  std::string buf(kMagic, sizeof kMagic);
  const auto dim = records.empty() ? static_cast<std::uint32_t>(kEmbeddingDim)
                                   : static_cast<std::uint32_t>(records.front().feature.size());
  put(buf, static_cast<std::uint32_t>(records.size()));
  put(buf, dim);
  for (const auto& r : records) {
    if (r.feature.size() != static_cast<Eigen::Index>(dim)) throw ShapeMismatch("embedding records differ in width");
    if (r.image_id.size() > 0xffff) throw Error("image id too long");
    put(buf, static_cast<std::uint16_t>(r.image_id.size()));
    buf += r.image_id;
    put(buf, static_cast<std::int32_t>(r.label));
    put(buf, static_cast<std::int32_t>(r.camera));
    put(buf, static_cast<std::uint8_t>(r.split));
    for (Eigen::Index i = 0; i < r.feature.size(); ++i) put(buf, static_cast<float>(r.feature[i]));
  }
  write_file(path, buf);
}

std::vector<EmbeddingRecord> read_embedding_table(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  if (buf.size() < sizeof kMagic || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
    throw Error(path.string() + " is not an embedding table");
  std::size_t pos = sizeof kMagic;
  const auto count = take<std::uint32_t>(buf, pos);
  const auto dim = take<std::uint32_t>(buf, pos);
  std::vector<EmbeddingRecord> out(count);
  for (auto& r : out) {
    const auto len = take<std::uint16_t>(buf, pos);
    if (pos + len > buf.size()) throw Error("truncated embedding table");
    r.image_id = buf.substr(pos, len);
    pos += len;
    r.label = take<std::int32_t>(buf, pos);
    r.camera = take<std::int32_t>(buf, pos);
    r.split = static_cast<Split>(take<std::uint8_t>(buf, pos));
    r.feature.resize(dim);
    for (std::uint32_t i = 0; i < dim; ++i) r.feature[i] = take<float>(buf, pos);
  }
  return out;
}

}  // namespace reid
