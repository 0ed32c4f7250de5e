#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "reid/dataset.hpp"
#include "reid/eval.hpp"
#include "reid/model.hpp"
#include "reid/scene_graph.hpp"
#include "reid/text_embed.hpp"
#include "reid/train.hpp"
#include "reid/visual.hpp"

namespace reid {

/// Attribute expansion, flow reversal and text embedding.
NumericGraph canonical_numeric_graph(const SceneGraph& g, EmbedClient& text, PersonPolicy policy);

struct SampleSources {
  std::filesystem::path graph_store;
  EmbedClient* text = nullptr;
  BackboneAdapter* backbone = nullptr;  // may be null in graph-only mode
  PersonPolicy policy = PersonPolicy::lenient;
};

/// Samples of one split with numeric graphs and visual features. Training
/// samples carry dense labels, query/gallery samples raw identities. Images
/// whose graph was dropped during generation are skipped with a warning.
std::vector<TrainSample> build_samples(const DatasetManifest& manifest, Split split, const SampleSources& src);

struct EvalOptions {
  bool rerank = false;
  RerankParams rerank_params;
  bool cross_dataset = false;
  std::string source_dataset;
  std::string target_dataset;
  /// Same-dataset mode: any identity shared with this set is a hard error.
  std::vector<int> train_identities;
  int max_rank = 50;
};

/// Post-BN normalized embeddings, optional re-ranking, CMC and mAP.
EvalReport evaluate(ReidModel& model, std::span<const TrainSample> query, std::span<const TrainSample> gallery,
                    const EvalOptions& options);

}  // namespace reid
