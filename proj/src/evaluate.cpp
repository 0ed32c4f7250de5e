#include "reid/evaluate.hpp"

#include <set>

#include <spdlog/spdlog.h>

#include "reid/errors.hpp"
#include "reid/graphgen.hpp"

namespace reid {

NumericGraph canonical_numeric_graph(const SceneGraph& g, EmbedClient& text, PersonPolicy policy) {
  return numerify_graph(reverse_flow(expand_attributes(g)), text, policy);
}

std::vector<TrainSample> build_samples(const DatasetManifest& manifest, Split split, const SampleSources& src) {
  if (src.text == nullptr) throw ContractViolation("build_samples needs a text embedding client");
  std::vector<TrainSample> out;
  int skipped = 0;
  for (const PersonSample* p : manifest.split(split)) {
    const auto graph = load_stored_graph(src.graph_store, p->image_id);
    if (!graph) {
      ++skipped;
      continue;
    }
    TrainSample s;
    s.image_id = p->image_id;
    s.camera = p->camera;
    if (split == Split::train) {
      auto it = manifest.label_map.find(p->identity);
      if (it == manifest.label_map.end()) throw ManifestError("training identity without dense label");
      s.label = it->second;
    } else {
      s.label = p->identity;
    }
    s.graph = canonical_numeric_graph(*graph, *src.text, src.policy);
    if (src.backbone != nullptr) {
      const bool needs_pixels = dynamic_cast<FixtureBackbone*>(src.backbone) == nullptr;
      const ImageTensor image = needs_pixels ? preprocess_file(p->path) : ImageTensor{};
      s.visual = encode_image(image, p->image_id, *src.backbone).values;
    }
    out.push_back(std::move(s));
  }
  if (skipped > 0) spdlog::warn("{} {} images have no stored scene graph and were skipped", skipped, to_string(split));
  return out;
}

namespace {

Eigen::MatrixXd embeddings(ReidModel& model, std::span<const TrainSample> samples) {
  std::vector<const NumericGraph*> graphs;
  const bool need_visual = model.fusion.mode != FusionMode::graph_only;
  Eigen::MatrixXd visual(need_visual ? static_cast<Eigen::Index>(samples.size()) : 0,
                         need_visual ? model.fusion.visual_dim : 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    graphs.push_back(&samples[i].graph);
    if (need_visual) {
      if (samples[i].visual.size() != model.fusion.visual_dim)
        throw ShapeMismatch("visual feature of " + samples[i].image_id + " does not match the model");
      visual.row(static_cast<Eigen::Index>(i)) = samples[i].visual.transpose();
    }
  }
  return embed_batch(model, graphs, visual);
}

}  // namespace

EvalReport evaluate(ReidModel& model, std::span<const TrainSample> query, std::span<const TrainSample> gallery,
                    const EvalOptions& options) {
  if (query.empty() || gallery.empty()) throw ContractViolation("evaluation needs query and gallery samples");
  std::vector<int> ql, gl, qc, gc;
  for (const auto& s : query) {
    ql.push_back(s.label);
    qc.push_back(s.camera);
  }
  for (const auto& s : gallery) {
    gl.push_back(s.label);
    gc.push_back(s.camera);
  }
  if (!options.cross_dataset) {
    const std::set<int> train(options.train_identities.begin(), options.train_identities.end());
    for (const auto* ids : {&ql, &gl})
      for (int id : *ids)
        if (id > 0 && train.count(id))
          throw ManifestError("identity " + std::to_string(id) + " occurs in both training and evaluation data");
  }

  const Eigen::MatrixXd qf = embeddings(model, query);
  const Eigen::MatrixXd gf = embeddings(model, gallery);
  DistMatrix dist = pairwise_distances(qf, gf);
  if (options.rerank) dist = k_reciprocal_rerank(dist, qf, gf, options.rerank_params);

  EvalReport r = cmc_map(dist, ql, gl, qc, gc, options.max_rank);
  r.reranked = options.rerank;
  if (options.rerank) r.rerank = options.rerank_params;
  r.cross_dataset = options.cross_dataset;
  r.source_dataset = options.source_dataset;
  r.target_dataset = options.target_dataset;
  return r;
}

}  // namespace reid
