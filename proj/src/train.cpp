#include "reid/train.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "reid/errors.hpp"
#include "reid/util.hpp"

namespace reid {

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (instances_per_id < 2) throw ConfigError("instances_per_id must be at least 2");
  if (batch_size <= 0 || batch_size % instances_per_id != 0)
    throw ConfigError("batch_size must be a positive multiple of instances_per_id");
  if (batch_size / instances_per_id < 2) throw ConfigError("a batch needs at least two identities");
  if (base_lr <= 0.0) throw ConfigError("base_lr must be positive");
  if (warmup_epochs < 1 || decay_epoch1 < warmup_epochs || decay_epoch2 < decay_epoch1)
    throw ConfigError("schedule milestones must satisfy 1 <= warmup <= decay1 <= decay2");
  if (max_steps < 0 || steps_per_epoch < 0) throw ConfigError("step counts must be non-negative");
  if (center_lr < 0.0) throw ConfigError("center_lr must be non-negative");
  loss.validate();
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 1 || epoch > cfg.epochs) throw ContractViolation("epoch " + std::to_string(epoch) + " out of range");
  const double base = cfg.base_lr;
  if (epoch <= cfg.warmup_epochs) {
    if (cfg.warmup_epochs == 1) return base;
    const double start = base / 100.0;
    return start + (base - start) * static_cast<double>(epoch - 1) / static_cast<double>(cfg.warmup_epochs - 1);
  }
  if (epoch <= cfg.decay_epoch1) return base;
  if (epoch <= cfg.decay_epoch2) return base / 10.0;
  return base / 100.0;
}

namespace {

// Uniform integer in [0, n) from the raw generator, identical on every platform.
std::size_t draw(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

}  // namespace

std::vector<int> pk_sample(std::span<const int> labels, int batch_size, int instances_per_id, std::mt19937_64& rng) {
  if (instances_per_id < 1 || batch_size % instances_per_id != 0)
    throw ContractViolation("batch size must be a multiple of instances per identity");
  std::map<int, std::vector<int>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(static_cast<int>(i));
  const auto ids_needed = static_cast<std::size_t>(batch_size / instances_per_id);
  if (by_label.size() < ids_needed)
    throw InsufficientIdentities("need " + std::to_string(ids_needed) + " identities, have " +
                                 std::to_string(by_label.size()));

  std::vector<int> ids;
  ids.reserve(by_label.size());
  for (const auto& kv : by_label) ids.push_back(kv.first);
  for (std::size_t i = 0; i < ids_needed; ++i) std::swap(ids[i], ids[i + draw(rng, ids.size() - i)]);

  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  const auto k = static_cast<std::size_t>(instances_per_id);
  for (std::size_t i = 0; i < ids_needed; ++i) {
    std::vector<int> pool = by_label[ids[i]];
    if (pool.size() >= k) {
      for (std::size_t j = 0; j < k; ++j) std::swap(pool[j], pool[j + draw(rng, pool.size() - j)]);
      out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
      out.insert(out.end(), pool.begin(), pool.end());
      for (std::size_t j = pool.size(); j < k; ++j) out.push_back(pool[draw(rng, pool.size())]);
    }
  }
  return out;
}

void Adam::update(const TensorList& params, const TensorList& grads, double lr) {
  if (params.size() != grads.size()) throw ShapeMismatch("parameter and gradient lists differ");
  if (m.empty()) {
    for (const auto& p : params) {
      m.push_back(Eigen::VectorXd::Zero(p.size()));
      v.push_back(Eigen::VectorXd::Zero(p.size()));
    }
  }
  if (m.size() != params.size()) throw ShapeMismatch("optimizer state does not match parameters");
  ++step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || m[i].size() != params[i].size())
      throw ShapeMismatch("tensor " + params[i].name + " changed size");
    auto p = params[i].flat();
    const auto g = grads[i].flat();
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseAbs2();
    p.array() -= lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + eps);
  }
}

std::string to_json_line(const MetricsRecord& r) {
  std::string s = "{\"step\":" + std::to_string(r.step) + ",\"epoch\":" + std::to_string(r.epoch);
  s += ",\"lr\":" + format_double(r.lr);
  s += ",\"L_triplet\":" + format_double(r.parts.triplet);
  s += ",\"L_center\":" + format_double(r.parts.center);
  s += ",\"L_id\":" + format_double(r.parts.id);
  s += ",\"L_total\":" + format_double(r.total) + "}";
  return s;
}

TrainState init_train_state(const TrainConfig& cfg, int num_classes, int visual_dim) {
  TrainState s;
  s.rng.seed(cfg.seed);
  s.model = ReidModel::init(num_classes, visual_dim, cfg.fusion_mode, s.rng, cfg.hidden_dim);
  return s;
}

TrainResult train(std::span<const TrainSample> data, const TrainConfig& cfg, std::optional<TrainState> resume) {
  cfg.validate();
  if (data.empty()) throw ContractViolation("training set is empty");
  std::vector<int> labels;
  labels.reserve(data.size());
  int num_classes = 0;
  for (const auto& s : data) {
    if (s.label < 0) throw ContractViolation("training labels must be dense and non-negative");
    labels.push_back(s.label);
    num_classes = std::max(num_classes, s.label + 1);
  }
  const int visual_dim = static_cast<int>(data.front().visual.size());

  TrainResult result;
  const bool resuming = resume.has_value();
  result.state = resuming ? std::move(*resume) : init_train_state(cfg, num_classes, visual_dim);
  TrainState& st = result.state;
  if (st.model.num_classes() < num_classes) throw ContractViolation("labels exceed the classifier size");

  std::ofstream log;
  if (!cfg.metrics_path.empty()) {
    if (cfg.metrics_path.has_parent_path()) std::filesystem::create_directories(cfg.metrics_path.parent_path());
    log.open(cfg.metrics_path, resuming ? std::ios::app : std::ios::trunc);
    if (!log) throw Error("cannot open metrics log " + cfg.metrics_path.string());
  }

  const int steps_per_epoch =
      cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch
                              : std::max(1, static_cast<int>(data.size()) / cfg.batch_size);
  const bool need_visual = cfg.fusion_mode != FusionMode::graph_only;

  ReidModel grads;
  Eigen::MatrixXd center_grad;
  std::vector<const NumericGraph*> graphs;
  std::vector<int> batch_labels;
  while (st.epoch < cfg.epochs) {
    if (cfg.max_steps > 0 && st.step >= cfg.max_steps) break;
    const int epoch = st.epoch + 1;
    const double lr = lr_at(epoch, cfg);
    for (int it = 0; it < steps_per_epoch; ++it) {
      if (cfg.max_steps > 0 && st.step >= cfg.max_steps) break;
      const std::vector<int> idx = pk_sample(labels, cfg.batch_size, cfg.instances_per_id, st.rng);
      graphs.clear();
      batch_labels.clear();
      Eigen::MatrixXd visual(need_visual ? static_cast<Eigen::Index>(idx.size()) : 0, need_visual ? visual_dim : 0);
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const TrainSample& s = data[static_cast<std::size_t>(idx[j])];
        graphs.push_back(&s.graph);
        batch_labels.push_back(s.label);
        if (need_visual) visual.row(static_cast<Eigen::Index>(j)) = s.visual.transpose();
      }
      const StepLosses losses =
          forward_backward(st.model, graphs, visual, batch_labels, cfg.loss, grads, center_grad);
      st.optimizer.update(st.model.parameters(), grads.parameters(), lr);
      st.model.centers.centers -= cfg.center_lr * center_grad;
      ++st.step;

      MetricsRecord rec{st.step, epoch, lr, losses.parts, losses.total};
      if (log) log << to_json_line(rec) << '\n';
      result.metrics.push_back(rec);
    }
    st.epoch = epoch;
    if (log) log.flush();
    if (!cfg.checkpoint_dir.empty()) save_checkpoint(cfg.checkpoint_dir, st, cfg);
  }
  return result;
}

namespace {

constexpr char kParamMagic[8] = {'R', 'E', 'I', 'D', 'P', 'A', 'R', '1'};

template <class T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <class T>
T take(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw CheckpointError("truncated tensor archive");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

TensorList optimizer_tensors(Adam& opt) {
  TensorList out;
  for (std::size_t i = 0; i < opt.m.size(); ++i) {
    out.push_back(tensor_ref("adam.m." + std::to_string(i), opt.m[i]));
    out.push_back(tensor_ref("adam.v." + std::to_string(i), opt.v[i]));
  }
  return out;
}

}  // namespace

void write_tensor_archive(const std::filesystem::path& path, const TensorList& tensors) {
  std::string buf(kParamMagic, sizeof kParamMagic);
  put(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put(buf, static_cast<std::uint32_t>(t.name.size()));
    buf += t.name;
    put(buf, static_cast<std::uint32_t>(t.rows));
    put(buf, static_cast<std::uint32_t>(t.cols));
    buf.append(reinterpret_cast<const char*>(t.data), static_cast<std::size_t>(t.size()) * sizeof(double));
  }
  write_file(path, buf);
}

void read_tensor_archive(const std::filesystem::path& path, const TensorList& tensors) {
  const std::string buf = read_file(path);
  if (buf.size() < sizeof kParamMagic || std::memcmp(buf.data(), kParamMagic, sizeof kParamMagic) != 0)
    throw CheckpointError(path.string() + " is not a tensor archive");
  std::size_t pos = sizeof kParamMagic;
  const auto count = take<std::uint32_t>(buf, pos);
  if (count != tensors.size())
    throw CheckpointError("archive holds " + std::to_string(count) + " tensors, expected " +
                          std::to_string(tensors.size()));
  for (const auto& t : tensors) {
    const auto len = take<std::uint32_t>(buf, pos);
    if (pos + len > buf.size()) throw CheckpointError("truncated tensor archive");
    const std::string name = buf.substr(pos, len);
    pos += len;
    const auto rows = take<std::uint32_t>(buf, pos);
    const auto cols = take<std::uint32_t>(buf, pos);
    if (name != t.name || rows != t.rows || cols != t.cols)
      throw CheckpointError("tensor " + name + " does not match expected " + t.name);
    const std::size_t bytes = static_cast<std::size_t>(t.size()) * sizeof(double);
    if (pos + bytes > buf.size()) throw CheckpointError("truncated tensor archive");
    std::memcpy(t.data, buf.data() + pos, bytes);
    pos += bytes;
  }
}

std::filesystem::path save_checkpoint(const std::filesystem::path& dir, TrainState& state, const TrainConfig& cfg) {
  const std::filesystem::path out = dir / ("epoch_" + std::to_string(state.epoch));
  std::filesystem::create_directories(out);
  TensorList all = state.model.parameters();
  append(all, state.model.buffers());
  append(all, optimizer_tensors(state.optimizer));
  write_tensor_archive(out / "params.bin", all);

  std::ostringstream rng_state;
  rng_state << state.rng;
  nlohmann::ordered_json doc;
  doc["epoch"] = state.epoch;
  doc["step"] = state.step;
  doc["seed"] = cfg.seed;
  doc["num_classes"] = state.model.num_classes();
  doc["visual_dim"] = state.model.fusion.visual_dim;
  doc["hidden_dim"] = state.model.encoder.layer1.out_dim();
  doc["fusion_mode"] = to_string(state.model.fusion.mode);
  doc["optimizer"] = {{"beta1", state.optimizer.beta1}, {"beta2", state.optimizer.beta2},
                      {"eps", state.optimizer.eps}, {"step", state.optimizer.step},
                      {"slots", state.optimizer.m.size()}};
  doc["rng_state"] = rng_state.str();
  doc["config"] = {{"batch_size", cfg.batch_size}, {"instances_per_id", cfg.instances_per_id},
                   {"epochs", cfg.epochs},         {"base_lr", cfg.base_lr},
                   {"margin", cfg.loss.margin},    {"lambda_center", cfg.loss.lambda_center},
                   {"smoothing", cfg.loss.smoothing}};
  write_file(out / "manifest.json", doc.dump(2) + "\n");
  return out;
}

TrainState load_checkpoint(const std::filesystem::path& epoch_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(epoch_dir / "manifest.json"));
  } catch (const std::exception& e) {
    throw CheckpointError("cannot read checkpoint manifest in " + epoch_dir.string() + ": " + e.what());
  }
  TrainState s;
  std::mt19937_64 scratch(0);
  s.model = ReidModel::init(doc.at("num_classes").get<int>(), doc.at("visual_dim").get<int>(),
                            fusion_mode_from_string(doc.at("fusion_mode").get<std::string>()), scratch,
                            doc.at("hidden_dim").get<int>());
  s.epoch = doc.at("epoch").get<int>();
  s.step = doc.at("step").get<long>();
  const auto& opt = doc.at("optimizer");
  s.optimizer.beta1 = opt.at("beta1").get<double>();
  s.optimizer.beta2 = opt.at("beta2").get<double>();
  s.optimizer.eps = opt.at("eps").get<double>();
  s.optimizer.step = opt.at("step").get<long>();
  if (opt.at("slots").get<std::size_t>() > 0) {
    for (const auto& p : s.model.parameters()) {
      s.optimizer.m.push_back(Eigen::VectorXd::Zero(p.size()));
      s.optimizer.v.push_back(Eigen::VectorXd::Zero(p.size()));
    }
  }
  TensorList all = s.model.parameters();
  append(all, s.model.buffers());
  append(all, optimizer_tensors(s.optimizer));
  read_tensor_archive(epoch_dir / "params.bin", all);
  std::istringstream rng_state(doc.at("rng_state").get<std::string>());
  rng_state >> s.rng;
  if (!rng_state) throw CheckpointError("corrupt rng state in " + epoch_dir.string());
  return s;
}

}  // namespace reid
