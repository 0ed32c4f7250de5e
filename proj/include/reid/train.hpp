#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reid/losses.hpp"
#include "reid/model.hpp"
#include "reid/text_embed.hpp"

namespace reid {

struct TrainConfig {
  int batch_size = 64;
  int instances_per_id = 4;
  int epochs = 120;
  double base_lr = 0.00035;
  int warmup_epochs = 10;
  int decay_epoch1 = 40;
  int decay_epoch2 = 70;
  std::uint64_t seed = 0;
  LossConfig loss;
  double center_lr = 0.5;
  FusionMode fusion_mode = FusionMode::joint;
  int hidden_dim = kTextDim;
  /// Stop after this many optimizer steps (0 = run every epoch).
  int max_steps = 0;
  /// Steps per epoch; 0 derives it as max(1, train size / batch size).
  int steps_per_epoch = 0;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::filesystem::path metrics_path;    // empty: no log file

  void validate() const;
};

/// Linear warm-up from base/100 to base over the warm-up epochs, then base,
/// base/10 after the first milestone and base/100 after the second.
double lr_at(int epoch, const TrainConfig& cfg);

/// B/K distinct identities, K sample indices each, drawn from `labels`
/// (one label per training sample). Identities with fewer than K samples
/// are filled with replacement.
std::vector<int> pk_sample(std::span<const int> labels, int batch_size, int instances_per_id, std::mt19937_64& rng);

struct TrainSample {
  std::string image_id;
  int label = 0;  // dense, 0..P-1
  int camera = 0;
  NumericGraph graph;
  Eigen::VectorXd visual;
};

/// Adam with bias correction, no weight decay.
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Eigen::VectorXd> m;
  std::vector<Eigen::VectorXd> v;

  void update(const TensorList& params, const TensorList& grads, double lr);
};

struct MetricsRecord {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  LossParts parts;
  double total = 0.0;
};
std::string to_json_line(const MetricsRecord& r);

struct TrainState {
  ReidModel model;
  Adam optimizer;
  std::mt19937_64 rng;
  int epoch = 0;  // last completed epoch
  long step = 0;
};

struct TrainResult {
  TrainState state;
  std::vector<MetricsRecord> metrics;
};

/// Fresh state: parameters initialized from cfg.seed.
TrainState init_train_state(const TrainConfig& cfg, int num_classes, int visual_dim);

/// Runs epochs state.epoch+1 .. cfg.epochs (or until cfg.max_steps). After
/// each epoch a checkpoint is written when cfg.checkpoint_dir is set. The
/// metrics log is truncated on a fresh start and appended to on resume.
TrainResult train(std::span<const TrainSample> data, const TrainConfig& cfg, std::optional<TrainState> resume = {});

/// ckpt/epoch_<n>/{params.bin, manifest.json}
std::filesystem::path save_checkpoint(const std::filesystem::path& dir, TrainState& state, const TrainConfig& cfg);
TrainState load_checkpoint(const std::filesystem::path& epoch_dir);

/// Named tensor archive: magic "REIDPAR1", u32 count, then per tensor
/// u32 name length, name, u32 rows, u32 cols, rows*cols f64 (column-major).
void write_tensor_archive(const std::filesystem::path& path, const TensorList& tensors);
void read_tensor_archive(const std::filesystem::path& path, const TensorList& tensors);

}  // namespace reid
