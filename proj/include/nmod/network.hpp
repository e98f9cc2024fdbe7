#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nmod/tensor.hpp"

namespace nmod::nn {

enum class LayerKind {
  Conv,     // 3x3 kernel, stride 1, zero padding 1, followed by ReLU
  MaxPool,  // 2x2 window, stride 2
  Dense,    // fully connected; ReLU except on the final layer
};

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int out_channels = 0;  // Conv
  int out_units = 0;     // Dense
};

inline LayerSpec conv(int out_channels) { return LayerSpec{LayerKind::Conv, out_channels, 0}; }
inline LayerSpec maxpool() { return LayerSpec{LayerKind::MaxPool, 0, 0}; }
inline LayerSpec dense(int out_units) { return LayerSpec{LayerKind::Dense, 0, out_units}; }

struct ModelSpec {
  std::string name;
  std::vector<LayerSpec> layers;
  int n_out = 0;
  // input plane: channels x height x width (vector data uses 1 x 1 x features)
  int in_channels = 0;
  int in_height = 0;
  int in_width = 0;
};

enum class GroupKind { Weights, Biases };

struct ParamGroup {
  int layer_index = 0;  // 0-based over weighted layers only
  GroupKind group = GroupKind::Weights;
  Tensor values;

  int size() const { return values.size(); }
};

struct Gradients {
  std::vector<Tensor> groups;  // index-aligned with Network::param_groups
};

// Per-layer activation geometry, tracked while validating a spec.
struct LayerShape {
  bool spatial = true;  // false once a Dense layer flattened the activations
  int c = 0, h = 0, w = 0;
  int units = 0;

  int count() const { return spatial ? c * h * w : units; }
};

struct Network {
  ModelSpec spec;
  std::vector<ParamGroup> param_groups;  // two per weighted layer: weights, biases
  int weighted_layer_count = 0;
  std::vector<LayerShape> shapes;        // shapes[0] = input, shapes[i+1] = after layer i
  std::vector<int> weighted_of_layer;    // per spec layer: weighted index or -1
};

enum class LossKind { MSE, CrossEntropy };

// throws std::invalid_argument naming the offending layer index
Network build_network(const ModelSpec& spec, std::uint64_t seed);

// batch has shape (n, c, h, w); returns logits of shape (n, n_out)
Tensor forward(const Network& net, const Tensor& batch);

Tensor one_hot(const std::vector<int>& labels, int n_classes);

// mean over samples of the summed squared error against one-hot targets
double loss_mse(const Tensor& logits, const Tensor& one_hot_targets);

// mean negative log softmax probability of the target class
double loss_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// exact gradients of the chosen loss for every parameter group, plus the loss
std::pair<double, Gradients> backward(const Network& net, const Tensor& batch,
                                      const std::vector<int>& labels, LossKind loss);

// fraction of samples whose argmax logit hits the label; ties resolve to the
// lowest class index; evaluation is chunked but order-independent
double accuracy(const Network& net, const Tensor& inputs, const std::vector<int>& labels,
                int batch_size = 256);

// 2x2/stride-2 max pooling exposed for direct use; `argmax` records, per output
// element, the flat input index that won (ties to the lowest index)
std::pair<Tensor, std::vector<int>> maxpool_forward(const Tensor& in);
Tensor maxpool_backward(const Tensor& grad_out, const std::vector<int>& argmax,
                        const std::vector<int>& in_shape);

}  // namespace nmod::nn
