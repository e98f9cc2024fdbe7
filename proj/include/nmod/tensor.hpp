#pragma once

#include <vector>

namespace nmod::nn {

// Dense row-major array of doubles with an explicit shape.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);

  static int element_count(const std::vector<int>& shape);

  int size() const { return static_cast<int>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  double& operator[](int i) { return data[static_cast<size_t>(i)]; }
  double operator[](int i) const { return data[static_cast<size_t>(i)]; }
};

}  // namespace nmod::nn
