#include "nmod/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "nmod/rng.hpp"

namespace nmod::nn {

namespace {

std::string layer_msg(int index, const std::string& what) {
  return "layer " + std::to_string(index) + ": " + what;
}

std::vector<LayerShape> trace_shapes(const ModelSpec& spec) {
  if (spec.n_out <= 0) throw std::invalid_argument("model spec: n_out must be positive");
  if (spec.in_channels <= 0 || spec.in_height <= 0 || spec.in_width <= 0)
    throw std::invalid_argument("model spec: input plane dimensions must be positive");
  if (spec.layers.empty())
    throw std::invalid_argument("model spec: needs at least one layer");

  std::vector<LayerShape> shapes;
  shapes.push_back(LayerShape{true, spec.in_channels, spec.in_height, spec.in_width, 0});
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const LayerShape& cur = shapes.back();
    const int idx = static_cast<int>(i);
    switch (l.kind) {
      case LayerKind::Conv: {
        if (!cur.spatial)
          throw std::invalid_argument(layer_msg(idx, "convolution after flattening"));
        if (l.out_channels <= 0)
          throw std::invalid_argument(layer_msg(idx, "convolution needs positive channels"));
        shapes.push_back(LayerShape{true, l.out_channels, cur.h, cur.w, 0});
        break;
      }
      case LayerKind::MaxPool: {
        if (!cur.spatial)
          throw std::invalid_argument(layer_msg(idx, "pooling after flattening"));
        if (cur.h < 2 || cur.w < 2)
          throw std::invalid_argument(
              layer_msg(idx, "pooling needs a 2x2 input, got " + std::to_string(cur.h) + "x" +
                                 std::to_string(cur.w)));
        shapes.push_back(LayerShape{true, cur.c, cur.h / 2, cur.w / 2, 0});
        break;
      }
      case LayerKind::Dense: {
        if (l.out_units <= 0)
          throw std::invalid_argument(layer_msg(idx, "dense layer needs positive units"));
        shapes.push_back(LayerShape{false, 0, 0, 0, l.out_units});
        break;
      }
    }
  }
  const LayerSpec& last = spec.layers.back();
  if (last.kind != LayerKind::Dense || last.out_units != spec.n_out)
    throw std::invalid_argument("model spec: final layer must be dense with n_out units");
  return shapes;
}

struct Cache {
  std::vector<Tensor> acts;                 // acts[0] = batch, acts[i+1] = after layer i
  std::vector<std::vector<int>> pool_argmax;  // per spec layer (empty when not a pool)
};

Tensor conv_forward(const Tensor& in, const Tensor& weights, const Tensor& biases) {
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const int oc = weights.dim(0);
  Tensor out(std::vector<int>{n, oc, h, w});
  for (int s = 0; s < n; ++s)
    for (int o = 0; o < oc; ++o)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double acc = biases[o];
          for (int ci = 0; ci < c; ++ci)
            for (int ky = 0; ky < 3; ++ky) {
              const int iy = y + ky - 1;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int ix = x + kx - 1;
                if (ix < 0 || ix >= w) continue;
                acc += weights[((o * c + ci) * 3 + ky) * 3 + kx] *
                       in[((s * c + ci) * h + iy) * w + ix];
              }
            }
          out[((s * oc + o) * h + y) * w + x] = std::max(0.0, acc);
        }
  return out;
}

Tensor dense_forward(const Tensor& in, const Tensor& weights, const Tensor& biases,
                     bool relu) {
  const int n = in.dim(0);
  const int f = in.size() / n;
  const int u = weights.dim(0);
  Tensor out(std::vector<int>{n, u});
  for (int s = 0; s < n; ++s)
    for (int j = 0; j < u; ++j) {
      double acc = biases[j];
      for (int k = 0; k < f; ++k) acc += weights[j * f + k] * in[s * f + k];
      out[s * u + j] = relu ? std::max(0.0, acc) : acc;
    }
  return out;
}

Tensor run_forward(const Network& net, const Tensor& batch, Cache* cache) {
  if (batch.rank() != 4)
    throw std::invalid_argument("batch must have shape (n, channels, height, width)");
  if (batch.dim(0) < 1 || batch.dim(1) != net.spec.in_channels ||
      batch.dim(2) != net.spec.in_height || batch.dim(3) != net.spec.in_width)
    throw std::invalid_argument("batch shape does not match the model input plane");

  Tensor cur = batch;
  if (cache) {
    cache->acts.clear();
    cache->pool_argmax.assign(net.spec.layers.size(), {});
    cache->acts.push_back(cur);
  }
  for (size_t i = 0; i < net.spec.layers.size(); ++i) {
    const LayerSpec& l = net.spec.layers[i];
    const bool final_layer = i + 1 == net.spec.layers.size();
    switch (l.kind) {
      case LayerKind::Conv: {
        const int wi = net.weighted_of_layer[i];
        cur = conv_forward(cur, net.param_groups[2 * wi].values,
                           net.param_groups[2 * wi + 1].values);
        break;
      }
      case LayerKind::MaxPool: {
        auto [pooled, argmax] = maxpool_forward(cur);
        cur = std::move(pooled);
        if (cache) cache->pool_argmax[i] = std::move(argmax);
        break;
      }
      case LayerKind::Dense: {
        const int wi = net.weighted_of_layer[i];
        cur = dense_forward(cur, net.param_groups[2 * wi].values,
                            net.param_groups[2 * wi + 1].values, !final_layer);
        break;
      }
    }
    if (cache) cache->acts.push_back(cur);
  }
  return cur;
}

void check_logit_pair(const Tensor& logits, size_t n_labels) {
  if (logits.rank() != 2)
    throw std::invalid_argument("logits must have shape (n, classes)");
  if (static_cast<size_t>(logits.dim(0)) != n_labels)
    throw std::invalid_argument("label count does not match the batch size");
}

// softmax rows of `logits`; also the mean negative log-likelihood if labels given
Tensor softmax_rows(const Tensor& logits) {
  const int n = logits.dim(0), k = logits.dim(1);
  Tensor p(std::vector<int>{n, k});
  for (int s = 0; s < n; ++s) {
    double m = logits[s * k];
    for (int j = 1; j < k; ++j) m = std::max(m, logits[s * k + j]);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(logits[s * k + j] - m);
    for (int j = 0; j < k; ++j) p[s * k + j] = std::exp(logits[s * k + j] - m) / z;
  }
  return p;
}

}  // namespace

Network build_network(const ModelSpec& spec, std::uint64_t seed) {
  Network net;
  net.spec = spec;
  net.shapes = trace_shapes(spec);
  net.weighted_of_layer.assign(spec.layers.size(), -1);

  Rng rng(seed);
  int wi = 0;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.kind == LayerKind::MaxPool) continue;
    net.weighted_of_layer[i] = wi;

    Tensor weights, biases;
    int fan_in = 0, fan_out = 0;
    if (l.kind == LayerKind::Conv) {
      const int in_c = net.shapes[i].c;
      weights = Tensor(std::vector<int>{l.out_channels, in_c, 3, 3});
      biases = Tensor(std::vector<int>{l.out_channels});
      fan_in = in_c * 9;
      fan_out = l.out_channels * 9;
    } else {
      const int f = net.shapes[i].count();
      weights = Tensor(std::vector<int>{l.out_units, f});
      biases = Tensor(std::vector<int>{l.out_units});
      fan_in = f;
      fan_out = l.out_units;
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (int k = 0; k < weights.size(); ++k) weights[k] = rng.uniform(-limit, limit);

    net.param_groups.push_back(ParamGroup{wi, GroupKind::Weights, std::move(weights)});
    net.param_groups.push_back(ParamGroup{wi, GroupKind::Biases, std::move(biases)});
    ++wi;
  }
  net.weighted_layer_count = wi;
  return net;
}

Tensor forward(const Network& net, const Tensor& batch) {
  return run_forward(net, batch, nullptr);
}

Tensor one_hot(const std::vector<int>& labels, int n_classes) {
  if (n_classes < 1) throw std::invalid_argument("one_hot needs at least one class");
  Tensor out(std::vector<int>{static_cast<int>(labels.size()), n_classes});
  for (size_t s = 0; s < labels.size(); ++s) {
    if (labels[s] < 0 || labels[s] >= n_classes)
      throw std::invalid_argument("label out of range");
    out[static_cast<int>(s) * n_classes + labels[s]] = 1.0;
  }
  return out;
}

double loss_mse(const Tensor& logits, const Tensor& one_hot_targets) {
  if (logits.shape != one_hot_targets.shape)
    throw std::invalid_argument("logits and targets must have identical shapes");
  if (logits.rank() != 2)
    throw std::invalid_argument("logits must have shape (n, classes)");
  const int n = logits.dim(0);
  double total = 0.0;
  for (int i = 0; i < logits.size(); ++i) {
    const double d = logits[i] - one_hot_targets[i];
    total += d * d;
  }
  return total / n;
}

double loss_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  check_logit_pair(logits, labels.size());
  const int n = logits.dim(0), k = logits.dim(1);
  for (int lbl : labels)
    if (lbl < 0 || lbl >= k) throw std::invalid_argument("label out of range");
  const Tensor p = softmax_rows(logits);
  double total = 0.0;
  for (int s = 0; s < n; ++s) total += -std::log(p[s * k + labels[s]]);
  return total / n;
}

std::pair<Tensor, std::vector<int>> maxpool_forward(const Tensor& in) {
  if (in.rank() != 4) throw std::invalid_argument("maxpool input must be 4-d");
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  if (h < 2 || w < 2) throw std::invalid_argument("maxpool needs at least a 2x2 plane");
  const int oh = h / 2, ow = w / 2;
  Tensor out(std::vector<int>{n, c, oh, ow});
  std::vector<int> argmax(static_cast<size_t>(out.size()), 0);
  for (int s = 0; s < n; ++s)
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          int best = -1;
          double best_v = 0.0;
          for (int ky = 0; ky < 2; ++ky)
            for (int kx = 0; kx < 2; ++kx) {
              const int idx = ((s * c + ci) * h + 2 * y + ky) * w + 2 * x + kx;
              if (best < 0 || in[idx] > best_v) {
                best = idx;
                best_v = in[idx];
              }
            }
          const int o = ((s * c + ci) * oh + y) * ow + x;
          out[o] = best_v;
          argmax[static_cast<size_t>(o)] = best;
        }
  return {std::move(out), std::move(argmax)};
}

Tensor maxpool_backward(const Tensor& grad_out, const std::vector<int>& argmax,
                        const std::vector<int>& in_shape) {
  if (static_cast<size_t>(grad_out.size()) != argmax.size())
    throw std::invalid_argument("maxpool gradient does not match the routing table");
  Tensor grad_in(in_shape);
  for (int o = 0; o < grad_out.size(); ++o)
    grad_in[argmax[static_cast<size_t>(o)]] += grad_out[o];
  return grad_in;
}

std::pair<double, Gradients> backward(const Network& net, const Tensor& batch,
                                      const std::vector<int>& labels, LossKind loss) {
  Cache cache;
  const Tensor logits = run_forward(net, batch, &cache);
  check_logit_pair(logits, labels.size());

  const int n = logits.dim(0), k = logits.dim(1);
  const Tensor targets = one_hot(labels, k);

  double loss_value = 0.0;
  Tensor dcur(std::vector<int>{n, k});
  if (loss == LossKind::MSE) {
    loss_value = loss_mse(logits, targets);
    for (int i = 0; i < logits.size(); ++i)
      dcur[i] = 2.0 * (logits[i] - targets[i]) / n;
  } else {
    const Tensor p = softmax_rows(logits);
    for (int s = 0; s < n; ++s) loss_value += -std::log(p[s * k + labels[s]]);
    loss_value /= n;
    for (int i = 0; i < logits.size(); ++i) dcur[i] = (p[i] - targets[i]) / n;
  }

  Gradients grads;
  grads.groups.resize(net.param_groups.size());
  for (size_t g = 0; g < net.param_groups.size(); ++g)
    grads.groups[g] = Tensor(net.param_groups[g].values.shape);

  for (int i = static_cast<int>(net.spec.layers.size()) - 1; i >= 0; --i) {
    const LayerSpec& l = net.spec.layers[i];
    const Tensor& a_in = cache.acts[static_cast<size_t>(i)];
    const Tensor& a_out = cache.acts[static_cast<size_t>(i) + 1];
    const bool final_layer = static_cast<size_t>(i) + 1 == net.spec.layers.size();

    switch (l.kind) {
      case LayerKind::MaxPool: {
        dcur = maxpool_backward(dcur, cache.pool_argmax[static_cast<size_t>(i)], a_in.shape);
        break;
      }
      case LayerKind::Dense: {
        const int wi = net.weighted_of_layer[static_cast<size_t>(i)];
        const Tensor& weights = net.param_groups[2 * wi].values;
        Tensor& dw = grads.groups[2 * wi];
        Tensor& db = grads.groups[2 * wi + 1];
        const int u = weights.dim(0), f = weights.dim(1);

        Tensor dpre = dcur;  // shape (n, u)
        if (!final_layer)
          for (int idx = 0; idx < dpre.size(); ++idx)
            if (a_out[idx] <= 0.0) dpre[idx] = 0.0;

        for (int j = 0; j < u; ++j)
          for (int s = 0; s < n; ++s) {
            const double g = dpre[s * u + j];
            if (g == 0.0) continue;
            db[j] += g;
            for (int x = 0; x < f; ++x) dw[j * f + x] += g * a_in[s * f + x];
          }
        Tensor din(a_in.shape);
        for (int s = 0; s < n; ++s)
          for (int x = 0; x < f; ++x) {
            double acc = 0.0;
            for (int j = 0; j < u; ++j) acc += dpre[s * u + j] * weights[j * f + x];
            din[s * f + x] = acc;
          }
        dcur = std::move(din);
        break;
      }
      case LayerKind::Conv: {
        const int wi = net.weighted_of_layer[static_cast<size_t>(i)];
        const Tensor& weights = net.param_groups[2 * wi].values;
        Tensor& dw = grads.groups[2 * wi];
        Tensor& db = grads.groups[2 * wi + 1];
        const int c = a_in.dim(1), h = a_in.dim(2), w = a_in.dim(3);
        const int oc = weights.dim(0);

        Tensor din(a_in.shape);
        for (int s = 0; s < n; ++s)
          for (int o = 0; o < oc; ++o)
            for (int y = 0; y < h; ++y)
              for (int x = 0; x < w; ++x) {
                const int oidx = ((s * oc + o) * h + y) * w + x;
                if (a_out[oidx] <= 0.0) continue;  // ReLU gate
                const double g = dcur[oidx];
                if (g == 0.0) continue;
                db[o] += g;
                for (int ci = 0; ci < c; ++ci)
                  for (int ky = 0; ky < 3; ++ky) {
                    const int iy = y + ky - 1;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                      const int ix = x + kx - 1;
                      if (ix < 0 || ix >= w) continue;
                      const int widx = ((o * c + ci) * 3 + ky) * 3 + kx;
                      const int iidx = ((s * c + ci) * h + iy) * w + ix;
                      dw[widx] += g * a_in[iidx];
                      din[iidx] += g * weights[widx];
                    }
                  }
              }
        dcur = std::move(din);
        break;
      }
    }
  }
  return {loss_value, std::move(grads)};
}

double accuracy(const Network& net, const Tensor& inputs, const std::vector<int>& labels,
                int batch_size) {
  if (inputs.rank() != 4) throw std::invalid_argument("inputs must be 4-d");
  const int n = inputs.dim(0);
  if (n == 0 || labels.empty()) throw std::invalid_argument("accuracy needs a nonempty dataset");
  if (static_cast<size_t>(n) != labels.size())
    throw std::invalid_argument("label count does not match the sample count");
  if (batch_size < 1) batch_size = 1;

  const int c = inputs.dim(1), h = inputs.dim(2), w = inputs.dim(3);
  const int plane = c * h * w;
  int hits = 0;
  for (int start = 0; start < n; start += batch_size) {
    const int count = std::min(batch_size, n - start);
    Tensor chunk(std::vector<int>{count, c, h, w});
    std::copy(inputs.data.begin() + static_cast<size_t>(start) * plane,
              inputs.data.begin() + static_cast<size_t>(start + count) * plane,
              chunk.data.begin());
    const Tensor logits = forward(net, chunk);
    const int k = logits.dim(1);
    for (int s = 0; s < count; ++s) {
      int arg = 0;
      for (int j = 1; j < k; ++j)
        if (logits[s * k + j] > logits[s * k + arg]) arg = j;
      if (arg == labels[static_cast<size_t>(start + s)]) ++hits;
    }
  }
  return static_cast<double>(hits) / n;
}

}  // namespace nmod::nn
