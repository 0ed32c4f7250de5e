#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace reid {

/// Named, mutable window onto a parameter tensor. Parameter structs and their
/// gradient counterparts list tensors in the same order, so lists can be
/// zipped by position.
struct TensorRef {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  [[nodiscard]] Eigen::Index size() const { return rows * cols; }
  [[nodiscard]] Eigen::Map<Eigen::VectorXd> flat() const { return {data, size()}; }
};

using TensorList = std::vector<TensorRef>;

inline TensorRef tensor_ref(std::string name, Eigen::MatrixXd& m) { return {std::move(name), m.data(), m.rows(), m.cols()}; }
inline TensorRef tensor_ref(std::string name, Eigen::VectorXd& v) { return {std::move(name), v.data(), v.size(), 1}; }

inline void append(TensorList& dst, TensorList src) {
  for (auto& t : src) dst.push_back(std::move(t));
}

}  // namespace reid
