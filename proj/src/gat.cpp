#include "reid/gat.hpp"

#include <cmath>
#include <limits>

#include "reid/errors.hpp"
#include "reid/util.hpp"

namespace reid {

namespace {

Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = bound * (2.0 * uniform01(rng) - 1.0);
  return m;
}

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }
double leaky_grad(double x, double slope) { return x > 0.0 ? 1.0 : slope; }

void check_graph(const GATLayerParams& p, const NumericGraph& g, const Eigen::MatrixXd& x) {
  if (x.cols() != p.in_dim())
    throw ShapeMismatch("node states have " + std::to_string(x.cols()) + " columns, layer expects " +
                        std::to_string(p.in_dim()));
  if (g.num_edges() > 0 && g.edge_features.cols() != p.edge_dim())
    throw ShapeMismatch("edge features have " + std::to_string(g.edge_features.cols()) + " columns, layer expects " +
                        std::to_string(p.edge_dim()));
  if (g.edge_features.rows() != g.num_edges()) throw ShapeMismatch("edge feature rows do not match edge count");
  for (auto [u, v] : g.edge_index)
    if (u < 0 || v < 0 || u >= x.rows() || v >= x.rows()) throw ShapeMismatch("edge index out of range");
}

// Softmax of `logits` grouped by destination node.
Eigen::VectorXd grouped_softmax(const Eigen::VectorXd& logits, const NumericGraph& g, Eigen::Index num_nodes) {
  Eigen::VectorXd max_in = Eigen::VectorXd::Constant(num_nodes, -std::numeric_limits<double>::infinity());
  for (int k = 0; k < g.num_edges(); ++k) {
    const int v = g.edge_index[k].second;
    max_in[v] = std::max(max_in[v], logits[k]);
  }
  Eigen::VectorXd alpha(g.num_edges());
  Eigen::VectorXd denom = Eigen::VectorXd::Zero(num_nodes);
  for (int k = 0; k < g.num_edges(); ++k) {
    const int v = g.edge_index[k].second;
    alpha[k] = std::exp(logits[k] - max_in[v]);
    denom[v] += alpha[k];
  }
  for (int k = 0; k < g.num_edges(); ++k) alpha[k] /= denom[g.edge_index[k].second];
  return alpha;
}

struct LayerTerms {
  Eigen::MatrixXd pre_act;
  Eigen::MatrixXd messages;
  Eigen::VectorXd alpha;
};

LayerTerms layer_terms(const GATLayerParams& p, const NumericGraph& g, const Eigen::MatrixXd& x) {
  check_graph(p, g, x);
  const Eigen::MatrixXd from_source = x * p.source_weight.transpose();
  const Eigen::MatrixXd from_target = x * p.target_weight.transpose();
  const Eigen::MatrixXd from_edge =
      g.num_edges() > 0 ? Eigen::MatrixXd(g.edge_features * p.edge_weight.transpose()) : Eigen::MatrixXd(0, p.out_dim());

  LayerTerms t;
  t.pre_act.resize(g.num_edges(), p.out_dim());
  t.messages.resize(g.num_edges(), p.out_dim());
  Eigen::VectorXd logits(g.num_edges());
  for (int k = 0; k < g.num_edges(); ++k) {
    const auto [u, v] = g.edge_index[k];
    t.messages.row(k) = from_source.row(u) + from_edge.row(k);
    t.pre_act.row(k) = t.messages.row(k) + from_target.row(v);
    double s = 0.0;
    for (int c = 0; c < p.out_dim(); ++c) s += p.attention[c] * leaky(t.pre_act(k, c), p.negative_slope);
    logits[k] = s;
  }
  t.alpha = grouped_softmax(logits, g, x.rows());
  return t;
}

}  // namespace

GATLayerParams GATLayerParams::init(int in_dim, int out_dim, int edge_dim, std::mt19937_64& rng) {
  GATLayerParams p;
  p.source_weight = uniform_matrix(out_dim, in_dim, 1.0 / std::sqrt(in_dim), rng);
  p.target_weight = uniform_matrix(out_dim, in_dim, 1.0 / std::sqrt(in_dim), rng);
  p.edge_weight = uniform_matrix(out_dim, edge_dim, 1.0 / std::sqrt(edge_dim), rng);
  p.attention = uniform_matrix(out_dim, 1, 1.0 / std::sqrt(out_dim), rng);
  p.bias = Eigen::VectorXd::Zero(out_dim);
  return p;
}

GATLayerParams GATLayerParams::zeros_like() const {
  GATLayerParams z;
  z.source_weight = Eigen::MatrixXd::Zero(source_weight.rows(), source_weight.cols());
  z.target_weight = Eigen::MatrixXd::Zero(target_weight.rows(), target_weight.cols());
  z.edge_weight = Eigen::MatrixXd::Zero(edge_weight.rows(), edge_weight.cols());
  z.attention = Eigen::VectorXd::Zero(attention.size());
  z.bias = Eigen::VectorXd::Zero(bias.size());
  z.negative_slope = negative_slope;
  return z;
}

void GATLayerParams::validate() const {
  const auto out = source_weight.rows();
  if (target_weight.rows() != out || edge_weight.rows() != out || attention.size() != out || bias.size() != out ||
      target_weight.cols() != source_weight.cols())
    throw ShapeMismatch("inconsistent GAT layer parameter shapes");
  if (!source_weight.allFinite() || !target_weight.allFinite() || !edge_weight.allFinite() || !attention.allFinite() ||
      !bias.allFinite())
    throw Error("non-finite GAT layer parameters");
}

TensorList GATLayerParams::tensors(const std::string& prefix) {
  return {tensor_ref(prefix + "source_weight", source_weight), tensor_ref(prefix + "target_weight", target_weight),
          tensor_ref(prefix + "edge_weight", edge_weight), tensor_ref(prefix + "attention", attention),
          tensor_ref(prefix + "bias", bias)};
}

NumericGraph with_self_loops(const NumericGraph& g, const Eigen::VectorXd& fill) {
  NumericGraph out = g;
  const int n = g.num_nodes();
  const int m = g.num_edges();
  const Eigen::Index dim = m > 0 ? g.edge_features.cols() : fill.size();
  if (fill.size() != dim) throw ShapeMismatch("self-loop fill does not match edge feature width");
  out.edge_features.resize(m + n, dim);
  if (m > 0) out.edge_features.topRows(m) = g.edge_features;
  for (int i = 0; i < n; ++i) {
    out.edge_index.emplace_back(i, i);
    out.edge_features.row(m + i) = fill.transpose();
  }
  return out;
}

Eigen::VectorXd gatv2_attention(const GATLayerParams& p, const NumericGraph& g, const Eigen::MatrixXd& node_states) {
  return layer_terms(p, g, node_states).alpha;
}

Eigen::MatrixXd gatv2_layer_forward(const GATLayerParams& p, const NumericGraph& g, const Eigen::MatrixXd& node_states,
                                    GATLayerCache* cache) {
  LayerTerms t = layer_terms(p, g, node_states);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(node_states.rows(), p.out_dim());
  for (int k = 0; k < g.num_edges(); ++k) out.row(g.edge_index[k].second) += t.alpha[k] * t.messages.row(k);
  out.rowwise() += p.bias.transpose();
  if (cache) {
    cache->input = node_states;
    cache->pre_act = std::move(t.pre_act);
    cache->messages = std::move(t.messages);
    cache->alpha = std::move(t.alpha);
    cache->output = out;
  }
  return out;
}

Eigen::MatrixXd gatv2_layer_backward(const GATLayerParams& p, const NumericGraph& g, const GATLayerCache& cache,
                                     const Eigen::MatrixXd& grad_output, GATLayerParams& grads) {
  const Eigen::Index n = cache.input.rows();
  const int m = g.num_edges();
  const int out = p.out_dim();
  if (grad_output.rows() != n || grad_output.cols() != out) throw ShapeMismatch("gradient shape mismatch");

  grads.bias += grad_output.colwise().sum().transpose();

  // d alpha_k = dH_v . msg_k, then softmax backward per destination.
  Eigen::VectorXd grad_alpha(m);
  Eigen::VectorXd weighted = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < m; ++k) {
    const int v = g.edge_index[k].second;
    grad_alpha[k] = grad_output.row(v).dot(cache.messages.row(k));
    weighted[v] += cache.alpha[k] * grad_alpha[k];
  }

  Eigen::MatrixXd grad_from_source = Eigen::MatrixXd::Zero(n, out);
  Eigen::MatrixXd grad_from_target = Eigen::MatrixXd::Zero(n, out);
  Eigen::MatrixXd grad_from_edge(m, out);
  for (int k = 0; k < m; ++k) {
    const auto [u, v] = g.edge_index[k];
    const double grad_logit = cache.alpha[k] * (grad_alpha[k] - weighted[v]);
    Eigen::RowVectorXd grad_pre(out);
    for (int c = 0; c < out; ++c) {
      const double z = cache.pre_act(k, c);
      grads.attention[c] += grad_logit * leaky(z, p.negative_slope);
      grad_pre[c] = grad_logit * p.attention[c] * leaky_grad(z, p.negative_slope);
    }
    const Eigen::RowVectorXd grad_msg = cache.alpha[k] * grad_output.row(v);
    grad_from_source.row(u) += grad_pre + grad_msg;
    grad_from_target.row(v) += grad_pre;
    grad_from_edge.row(k) = grad_pre + grad_msg;
  }

  grads.source_weight += grad_from_source.transpose() * cache.input;
  grads.target_weight += grad_from_target.transpose() * cache.input;
  if (m > 0) grads.edge_weight += grad_from_edge.transpose() * g.edge_features;
  return grad_from_source * p.source_weight + grad_from_target * p.target_weight;
}

GraphEncoderParams GraphEncoderParams::init(std::mt19937_64& rng, int in_dim, int hidden_dim, int out_dim,
                                            int edge_dim) {
  GraphEncoderParams p;
  p.layer1 = GATLayerParams::init(in_dim, hidden_dim, edge_dim, rng);
  p.layer2 = GATLayerParams::init(hidden_dim, out_dim, edge_dim, rng);
  p.norm_gain = Eigen::VectorXd::Ones(out_dim);
  p.norm_bias = Eigen::VectorXd::Zero(out_dim);
  p.self_loop_fill = Eigen::VectorXd::Zero(edge_dim);
  return p;
}

GraphEncoderParams GraphEncoderParams::zeros_like() const {
  GraphEncoderParams z = *this;
  z.layer1 = layer1.zeros_like();
  z.layer2 = layer2.zeros_like();
  z.norm_gain.setZero();
  z.norm_bias.setZero();
  return z;
}

TensorList GraphEncoderParams::tensors(const std::string& prefix) {
  TensorList out = layer1.tensors(prefix + "layer1.");
  append(out, layer2.tensors(prefix + "layer2."));
  out.push_back(tensor_ref(prefix + "norm_gain", norm_gain));
  out.push_back(tensor_ref(prefix + "norm_bias", norm_bias));
  return out;
}

GraphBatch make_batch(std::span<const NumericGraph* const> graphs, const Eigen::VectorXd& self_loop_fill) {
  GraphBatch b;
  b.num_graphs = static_cast<int>(graphs.size());
  int total_nodes = 0;
  int total_edges = 0;
  Eigen::Index feat_dim = 0;
  for (const NumericGraph* g : graphs) {
    if (g->num_nodes() == 0) throw ContractViolation("make_batch: graph without nodes");
    total_nodes += g->num_nodes();
    total_edges += g->num_edges() + g->num_nodes();
    feat_dim = g->node_features.cols();
  }
  const Eigen::Index edge_dim = self_loop_fill.size();
  NumericGraph& m = b.merged;
  m.node_features.resize(total_nodes, feat_dim);
  m.edge_features.resize(total_edges, edge_dim);
  m.edge_index.reserve(static_cast<std::size_t>(total_edges));
  b.graph_of_node.reserve(static_cast<std::size_t>(total_nodes));

  int node_base = 0;
  int edge_row = 0;
  for (int gi = 0; gi < b.num_graphs; ++gi) {
    const NumericGraph& g = *graphs[static_cast<std::size_t>(gi)];
    if (g.node_features.cols() != feat_dim) throw ShapeMismatch("make_batch: node feature widths differ");
    if (g.num_edges() > 0 && g.edge_features.cols() != edge_dim)
      throw ShapeMismatch("make_batch: edge feature width differs from self-loop fill");
    b.node_offset.push_back(node_base);
    m.node_features.middleRows(node_base, g.num_nodes()) = g.node_features;
    for (int k = 0; k < g.num_edges(); ++k) {
      m.edge_index.emplace_back(g.edge_index[k].first + node_base, g.edge_index[k].second + node_base);
      m.edge_features.row(edge_row++) = g.edge_features.row(k);
    }
    for (int i = 0; i < g.num_nodes(); ++i) {
      m.edge_index.emplace_back(node_base + i, node_base + i);
      m.edge_features.row(edge_row++) = self_loop_fill.transpose();
      b.graph_of_node.push_back(gi);
    }
    node_base += g.num_nodes();
  }
  return b;
}

Eigen::MatrixXd encode_batch(const GraphEncoderParams& p, const GraphBatch& batch, EncoderCache* cache) {
  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;
  const NumericGraph& g = batch.merged;

  c.hidden_pre = gatv2_layer_forward(p.layer1, g, g.node_features, &c.layer1);
  const Eigen::MatrixXd hidden = c.hidden_pre.unaryExpr([&](double x) { return leaky(x, p.hidden_slope); });
  const Eigen::MatrixXd states = gatv2_layer_forward(p.layer2, g, hidden, &c.layer2);

  const int out = p.layer2.out_dim();
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Constant(batch.num_graphs, out, -std::numeric_limits<double>::infinity());
  c.argmax = Eigen::MatrixXi::Constant(batch.num_graphs, out, -1);
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    const int gi = batch.graph_of_node[static_cast<std::size_t>(i)];
    for (int d = 0; d < out; ++d) {
      if (states(i, d) > pooled(gi, d)) {
        pooled(gi, d) = states(i, d);
        c.argmax(gi, d) = static_cast<int>(i);
      }
    }
  }

  c.normalized.resize(batch.num_graphs, out);
  c.inv_std.resize(batch.num_graphs);
  Eigen::MatrixXd result(batch.num_graphs, out);
  for (int gi = 0; gi < batch.num_graphs; ++gi) {
    const double mean = pooled.row(gi).mean();
    const double var = (pooled.row(gi).array() - mean).square().mean();
    c.inv_std[gi] = 1.0 / std::sqrt(var + p.norm_eps);
    c.normalized.row(gi) = (pooled.row(gi).array() - mean) * c.inv_std[gi];
    result.row(gi) = c.normalized.row(gi).cwiseProduct(p.norm_gain.transpose()) + p.norm_bias.transpose();
  }
  return result;
}

void encode_batch_backward(const GraphEncoderParams& p, const GraphBatch& batch, const EncoderCache& cache,
                           const Eigen::MatrixXd& grad_output, GraphEncoderParams& grads) {
  const int out = p.layer2.out_dim();
  const NumericGraph& g = batch.merged;

  Eigen::MatrixXd grad_states = Eigen::MatrixXd::Zero(g.num_nodes(), out);
  for (int gi = 0; gi < batch.num_graphs; ++gi) {
    const Eigen::RowVectorXd dy = grad_output.row(gi);
    const Eigen::RowVectorXd xhat = cache.normalized.row(gi);
    grads.norm_gain += dy.cwiseProduct(xhat).transpose();
    grads.norm_bias += dy.transpose();
    const Eigen::RowVectorXd dxhat = dy.cwiseProduct(p.norm_gain.transpose());
    const double mean_dxhat = dxhat.mean();
    const double mean_dxhat_xhat = dxhat.cwiseProduct(xhat).mean();
    const Eigen::RowVectorXd dpooled =
        cache.inv_std[gi] * (dxhat.array() - mean_dxhat - xhat.array() * mean_dxhat_xhat).matrix();
    for (int d = 0; d < out; ++d) grad_states(cache.argmax(gi, d), d) += dpooled[d];
  }

  Eigen::MatrixXd grad_hidden = gatv2_layer_backward(p.layer2, g, cache.layer2, grad_states, grads.layer2);
  grad_hidden.array() *= cache.hidden_pre.unaryExpr([&](double x) { return leaky_grad(x, p.hidden_slope); }).array();
  gatv2_layer_backward(p.layer1, g, cache.layer1, grad_hidden, grads.layer1);
}

Eigen::VectorXd graph_encode(const GraphEncoderParams& p, const NumericGraph& g) {
  const NumericGraph* one[] = {&g};
  const GraphBatch batch = make_batch(one, p.self_loop_fill);
  return encode_batch(p, batch).row(0).transpose();
}

LayerAttention encoder_attention(const GraphEncoderParams& p, const NumericGraph& g) {
  LayerAttention a;
  a.graph = with_self_loops(g, p.self_loop_fill);
  GATLayerCache c1;
  const Eigen::MatrixXd h1 = gatv2_layer_forward(p.layer1, a.graph, a.graph.node_features, &c1);
  a.layer1 = c1.alpha;
  const Eigen::MatrixXd hidden = h1.unaryExpr([&](double x) { return leaky(x, p.hidden_slope); });
  a.layer2 = gatv2_attention(p.layer2, a.graph, hidden);
  return a;
}

}  // namespace reid
