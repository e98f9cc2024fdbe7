#include "nmod/tensor.hpp"

#include <stdexcept>

namespace nmod::nn {

int Tensor::element_count(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(element_count(shape)), 0.0);
}

}  // namespace nmod::nn
