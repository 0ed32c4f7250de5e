#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "reid/eval.hpp"
#include "reid/train.hpp"

namespace reid {

/// Flat `key = value` settings. Every key has a default; files and the
/// environment (REID_<KEY> in upper case) may only set known keys.
class Config {
 public:
  Config();

  /// Lines are `key = value`; blank lines and `#` comments are ignored.
  void load_text(const std::string& text, const std::string& origin = "<text>");
  void load_file(const std::filesystem::path& path);
  /// Applies REID_<KEY> environment variables.
  void load_env();
  void set(const std::string& key, const std::string& value);

  [[nodiscard]] const std::string& get(const std::string& key) const;
  [[nodiscard]] int get_int(const std::string& key) const;
  [[nodiscard]] double get_double(const std::string& key) const;
  [[nodiscard]] bool get_bool(const std::string& key) const;
  [[nodiscard]] std::filesystem::path get_path(const std::string& key) const { return get(key); }

  /// Every key with its current value, in declaration order.
  [[nodiscard]] std::string dump() const;

  [[nodiscard]] TrainConfig train_config() const;
  [[nodiscard]] RerankParams rerank_params() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::pair<std::string, std::string>* find(const std::string& key);
  [[nodiscard]] const std::pair<std::string, std::string>* find(const std::string& key) const;
};

}  // namespace reid
