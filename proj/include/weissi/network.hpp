/*
 * Copyright 2026 The weissi Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "weissi/ops.hpp"

namespace weissi {

enum class LayerKind { dense, conv2d, maxpool, avgpool, relu, tanh, flatten, residual_block };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::relu: return "relu";
    case LayerKind::tanh: return "tanh";
    case LayerKind::flatten: return "flatten";
    case LayerKind::residual_block: return "residual_block";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(std::string_view s) {
  for (auto k : {LayerKind::dense, LayerKind::conv2d, LayerKind::maxpool, LayerKind::avgpool,
                 LayerKind::relu, LayerKind::tanh, LayerKind::flatten, LayerKind::residual_block})
    if (to_string(k) == s) return k;
  throw ContractError("unknown layer kind '" + std::string(s) + "'");
}

/// How a residual block combines its shortcut and branch.
enum class Aggregation {
  convex,    ///< alpha * shortcut + beta * branch, alpha + beta = 1, learnable logits
  standard,  ///< shortcut + branch
};

/// Static description of one layer. Only the fields relevant to `kind` are
/// meaningful.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;

  // dense: in -> out
  std::size_t in = 0;
  std::size_t out = 0;

  // conv2d
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  // pooling
  std::size_t window = 0;

  // residual_block: width -> hidden -> width. A first block projects an
  // `in`-dimensional input with its own shortcut matrix.
  std::size_t width = 0;
  std::size_t hidden = 0;
  bool first = false;
  Aggregation aggregation = Aggregation::convex;
  /// Whether the first block also aggregates convexly; without it the block
  /// computes W3 x + W2 relu(W1 x).
  bool first_aggregates = false;

  bool has_bias = true;

  static LayerSpec dense_layer(std::size_t in, std::size_t out, bool bias = true) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in = in;
    s.out = out;
    s.has_bias = bias;
    return s;
  }
  static LayerSpec conv(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride = 1,
                        std::size_t pad = 0, bool bias = true) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_channels = cin;
    s.out_channels = cout;
    s.kernel = k;
    s.stride = stride;
    s.padding = pad;
    s.has_bias = bias;
    return s;
  }
  static LayerSpec pool(LayerKind kind, std::size_t window, std::size_t stride) {
    LayerSpec s;
    s.kind = kind;
    s.window = window;
    s.stride = stride;
    s.has_bias = false;
    return s;
  }
  static LayerSpec activation(LayerKind kind) {
    LayerSpec s;
    s.kind = kind;
    s.has_bias = false;
    return s;
  }
  static LayerSpec residual(std::size_t width, std::size_t hidden, Aggregation agg,
                            bool first = false, std::size_t in = 0, bool bias = false) {
    LayerSpec s;
    s.kind = LayerKind::residual_block;
    s.width = width;
    s.hidden = hidden;
    s.aggregation = agg;
    s.first = first;
    s.in = first ? in : width;
    s.has_bias = bias;
    return s;
  }

  bool has_weights() const {
    return kind == LayerKind::dense || kind == LayerKind::conv2d || kind == LayerKind::residual_block;
  }
  bool positively_homogeneous() const { return kind != LayerKind::tanh; }
  /// Whether this block learns convex aggregation logits.
  bool learns_aggregation() const {
    return kind == LayerKind::residual_block && aggregation == Aggregation::convex &&
           (!first || first_aggregates);
  }
};

/// Layer parameters. Dense and conv layers use `weight`/`bias`; residual
/// blocks use w1/w2 (branch), w3 (first-block shortcut), b1/b2 and the
/// aggregation logits.
struct Layer {
  LayerSpec spec;
  Tensor weight;
  Tensor bias;
  Tensor w1, w2, w3, b1, b2;
  Tensor agg_logits;
  /// Fixed multiplier on the shortcut path; absorbs scale shifts of the
  /// branch weights.
  double shortcut_scale = 1.0;

  /// Trainable tensors in a fixed order.
  std::vector<Tensor*> params() {
    std::vector<Tensor*> p;
    for_each_param([&](Tensor& t, std::string_view) { p.push_back(&t); });
    return p;
  }

  template <typename F>
  void for_each_param(F&& f) {
    for_each_param_impl(*this, f);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    for_each_param_impl(*this, f);
  }

 private:
  template <typename Self, typename F>
  static void for_each_param_impl(Self& self, F& f) {
    const LayerSpec& s = self.spec;
    switch (s.kind) {
      case LayerKind::dense:
      case LayerKind::conv2d:
        f(self.weight, "weight");
        if (s.has_bias) f(self.bias, "bias");
        break;
      case LayerKind::residual_block:
        f(self.w1, "w1");
        f(self.w2, "w2");
        if (s.first) f(self.w3, "w3");
        if (s.has_bias) {
          f(self.b1, "b1");
          f(self.b2, "b2");
        }
        if (s.learns_aggregation()) f(self.agg_logits, "agg_logits");
        break;
      default:
        break;
    }
  }
};

/// Reference to one weight matrix or kernel; biases and aggregation logits
/// are never weight factors.
struct WeightRef {
  std::size_t layer;
  std::string_view role;  // "weight", "w1", "w2", "w3"
  LayerKind kind;
};

class Network {
 public:
  Network() = default;
  Network(Shape input_shape, std::vector<LayerSpec> specs) : input_shape_(std::move(input_shape)) {
    Shape cur = input_shape_;
    for (auto& s : specs) {
      cur = validate_and_propagate(s, cur, layers_.size());
      Layer l;
      l.spec = s;
      allocate(l);
      layers_.push_back(std::move(l));
    }
    output_shape_ = cur;
  }

  const Shape& input_shape() const noexcept { return input_shape_; }
  const Shape& output_shape() const noexcept { return output_shape_; }
  std::size_t input_size() const { return shape_size(input_shape_); }
  std::size_t output_size() const { return shape_size(output_shape_); }
  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> s;
    for (const auto& l : layers_) s.push_back(l.spec);
    return s;
  }

  std::vector<Tensor*> params() {
    std::vector<Tensor*> p;
    for (auto& l : layers_)
      for (Tensor* t : l.params()) p.push_back(t);
    return p;
  }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) l.for_each_param([&](const Tensor& t, std::string_view) { n += t.size(); });
    return n;
  }
  void zero_grad() {
    for (Tensor* t : params()) t->zero_grad();
  }

  /// Every weight matrix / kernel in forward order (W3 of a first residual
  /// block precedes its branch).
  std::vector<WeightRef> weight_refs() const {
    std::vector<WeightRef> refs;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& s = layers_[i].spec;
      if (s.kind == LayerKind::dense || s.kind == LayerKind::conv2d) {
        refs.push_back({i, "weight", s.kind});
      } else if (s.kind == LayerKind::residual_block) {
        if (s.first) refs.push_back({i, "w3", s.kind});
        refs.push_back({i, "w1", s.kind});
        refs.push_back({i, "w2", s.kind});
      }
    }
    return refs;
  }

  /// Weight factors that take part in a scale shift. The first block's
  /// shortcut projection W3 is excluded: its scale is carried by the
  /// block's shortcut multiplier.
  std::vector<WeightRef> shift_refs() const {
    std::vector<WeightRef> refs;
    for (const auto& r : weight_refs())
      if (r.role != "w3") refs.push_back(r);
    return refs;
  }

  Tensor& weight(const WeightRef& r) { return select(layers_[r.layer], r.role); }
  const Tensor& weight(const WeightRef& r) const {
    return select(const_cast<Layer&>(layers_[r.layer]), r.role);
  }

  std::vector<const Tensor*> weights() const {
    std::vector<const Tensor*> w;
    for (const auto& r : weight_refs()) w.push_back(&weight(r));
    return w;
  }

  /// True for a chain of dense layers separated by single ReLUs (the
  /// topology the product-norm bound is derived for).
  bool is_relu_mlp() const {
    if (layers_.empty() || layers_.back().spec.kind != LayerKind::dense) return false;
    bool expect_dense = true;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto k = layers_[i].spec.kind;
      if (i == 0 && k == LayerKind::flatten) continue;
      if (expect_dense && k != LayerKind::dense) return false;
      if (!expect_dense && k != LayerKind::relu) return false;
      expect_dense = !expect_dense;
    }
    return true;
  }

 private:
  static Tensor& select(Layer& l, std::string_view role) {
    if (role == "weight") return l.weight;
    if (role == "w1") return l.w1;
    if (role == "w2") return l.w2;
    if (role == "w3") return l.w3;
    throw ContractError("unknown weight role");
  }

  static Shape validate_and_propagate(const LayerSpec& s, const Shape& cur, std::size_t idx) {
    auto fail = [&](const std::string& what) {
      throw ShapeError("layer " + std::to_string(idx) + " (" + std::string(to_string(s.kind)) +
                       "): " + what + ", incoming shape " + shape_str(cur));
    };
    switch (s.kind) {
      case LayerKind::dense:
        if (cur.size() != 1 || cur[0] != s.in) fail("expects flat input of size " + std::to_string(s.in));
        if (s.out == 0) fail("zero output width");
        return Shape{s.out};
      case LayerKind::conv2d: {
        if (cur.size() != 3 || cur[0] != s.in_channels) fail("expects [C x H x W] with C = " + std::to_string(s.in_channels));
        if (s.kernel % 2 == 0) fail("kernel size must be odd");
        if (s.stride < 1) fail("stride must be >= 1");
        const std::size_t ph = cur[1] + 2 * s.padding, pw = cur[2] + 2 * s.padding;
        if (s.kernel > ph || s.kernel > pw) fail("kernel larger than padded input");
        return Shape{s.out_channels, (ph - s.kernel) / s.stride + 1, (pw - s.kernel) / s.stride + 1};
      }
      case LayerKind::maxpool:
      case LayerKind::avgpool:
        if (cur.size() != 3) fail("pooling expects [C x H x W]");
        if (s.window < 1 || s.stride < 1 || s.window > cur[1] || s.window > cur[2]) fail("bad window");
        return Shape{cur[0], (cur[1] - s.window) / s.stride + 1, (cur[2] - s.window) / s.stride + 1};
      case LayerKind::relu:
      case LayerKind::tanh:
        return cur;
      case LayerKind::flatten:
        return Shape{shape_size(cur)};
      case LayerKind::residual_block:
        if (cur.size() != 1) fail("residual blocks expect flat input");
        if (s.first ? cur[0] != s.in : cur[0] != s.width) fail("input and output dims must agree");
        if (s.width == 0 || s.hidden == 0) fail("zero width");
        return Shape{s.width};
    }
    return cur;
  }

  static void allocate(Layer& l) {
    const LayerSpec& s = l.spec;
    switch (s.kind) {
      case LayerKind::dense:
        l.weight = Tensor(Shape{s.out, s.in});
        if (s.has_bias) l.bias = Tensor(Shape{s.out});
        break;
      case LayerKind::conv2d:
        l.weight = Tensor(Shape{s.kernel, s.kernel, s.in_channels, s.out_channels});
        if (s.has_bias) l.bias = Tensor(Shape{s.out_channels});
        break;
      case LayerKind::residual_block:
        l.w1 = Tensor(Shape{s.hidden, s.first ? s.in : s.width});
        l.w2 = Tensor(Shape{s.width, s.hidden});
        if (s.first) l.w3 = Tensor(Shape{s.width, s.in});
        if (s.has_bias) {
          l.b1 = Tensor(Shape{s.hidden});
          l.b2 = Tensor(Shape{s.width});
        }
        if (s.learns_aggregation()) l.agg_logits = Tensor(Shape{2});
        break;
      default:
        break;
    }
  }

  Shape input_shape_;
  Shape output_shape_;
  std::vector<Layer> layers_;
};

// Forward pass ---------------------------------------------------------------

/// Tape handles of a network's parameters for one forward pass.
struct BoundParams {
  struct LayerVars {
    std::optional<Var> weight, bias, w1, w2, w3, b1, b2, agg;
  };
  std::vector<LayerVars> layers;
};

/// Registers every parameter on the tape: as trainable leaves when
/// `trainable`, otherwise as read-only inputs.
inline BoundParams bind(Tape& tape, Network& net, bool trainable) {
  BoundParams b;
  for (auto& l : net.layers()) {
    BoundParams::LayerVars v;
    auto reg = [&](Tensor& t) { return trainable ? tape.param(t) : tape.input(t); };
    l.for_each_param([&](Tensor& t, std::string_view role) {
      Var var = reg(t);
      if (role == "weight") v.weight = var;
      else if (role == "bias") v.bias = var;
      else if (role == "w1") v.w1 = var;
      else if (role == "w2") v.w2 = var;
      else if (role == "w3") v.w3 = var;
      else if (role == "b1") v.b1 = var;
      else if (role == "b2") v.b2 = var;
      else if (role == "agg_logits") v.agg = var;
    });
    b.layers.push_back(v);
  }
  return b;
}

inline BoundParams bind(Tape& tape, const Network& net) {
  BoundParams b;
  for (const auto& l : net.layers()) {
    BoundParams::LayerVars v;
    l.for_each_param([&](const Tensor& t, std::string_view role) {
      Var var = tape.input(t);
      if (role == "weight") v.weight = var;
      else if (role == "bias") v.bias = var;
      else if (role == "w1") v.w1 = var;
      else if (role == "w2") v.w2 = var;
      else if (role == "w3") v.w3 = var;
      else if (role == "b1") v.b1 = var;
      else if (role == "b2") v.b2 = var;
      else if (role == "agg_logits") v.agg = var;
    });
    b.layers.push_back(v);
  }
  return b;
}

/// Overrides applied during a forward pass, used by the bound analysis to
/// evaluate a residual chain as a standard (alpha = beta = 1) network.
struct ForwardOptions {
  bool force_standard_aggregation = false;
};

/// Forward pass of a batch. x is [N x input_shape...]; returns logits
/// [N x P]. The output layer is linear.
inline Var forward(const Network& net, const BoundParams& p, Var x, ForwardOptions opt = {}) {
  const Shape& xs = x.value().shape;
  const Shape& in = net.input_shape();
  if (xs.size() != in.size() + 1 || !std::equal(in.begin(), in.end(), xs.begin() + 1)) {
    throw ShapeError("forward: input " + shape_str(xs) + " does not match [N x " +
                     shape_str(in) + "]");
  }
  const std::size_t n = xs[0];
  Var h = x;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const Layer& l = net.layers()[i];
    const auto& v = p.layers[i];
    const LayerSpec& s = l.spec;
    switch (s.kind) {
      case LayerKind::dense:
        h = ops::linear(h, *v.weight, v.bias);
        break;
      case LayerKind::conv2d:
        h = ops::conv2d(h, *v.weight, v.bias, s.stride, s.padding);
        break;
      case LayerKind::maxpool:
        h = ops::maxpool2d(h, s.window, s.stride);
        break;
      case LayerKind::avgpool:
        h = ops::avgpool2d(h, s.window, s.stride);
        break;
      case LayerKind::relu:
        h = ops::relu(h);
        break;
      case LayerKind::tanh:
        h = ops::tanh(h);
        break;
      case LayerKind::flatten:
        h = ops::reshape(h, Shape{n, shape_size(h.value().shape) / n});
        break;
      case LayerKind::residual_block: {
        Var pre = s.first ? h : ops::relu(h);
        Var branch = ops::linear(ops::relu(ops::linear(pre, *v.w1, v.b1)), *v.w2, v.b2);
        Var shortcut = s.first ? ops::linear(h, *v.w3) : h;
        if (s.learns_aggregation() && !opt.force_standard_aggregation) {
          h = ops::aggregate_convex(shortcut, branch, *v.agg, l.shortcut_scale);
        } else {
          h = ops::aggregate_fixed(shortcut, branch, l.shortcut_scale, 1.0);
        }
        break;
      }
    }
  }
  return h;
}

/// Logits for a batch without recording gradients for the parameters.
inline Tensor predict(const Network& net, const Tensor& x) {
  Tape tape;
  BoundParams p = bind(tape, net);
  return forward(net, p, tape.input(x)).value();
}

/// Convenience for a single unbatched example.
inline Tensor predict_one(const Network& net, const Tensor& x) {
  Shape s = x.shape;
  s.insert(s.begin(), 1);
  Tensor out = predict(net, x.reshaped(s));
  return out.reshaped(net.output_shape());
}

/// Current (alpha, beta) of a residual block.
inline std::pair<double, double> aggregation_weights(const Layer& l) {
  if (l.spec.kind != LayerKind::residual_block) throw ContractError("not a residual block");
  if (!l.spec.learns_aggregation()) return {1.0, 1.0};
  return ops::convex_pair(l.agg_logits[0], l.agg_logits[1]);
}

// Initialization ---------------------------------------------------------------

enum class InitScheme { he, fixup_like, constant };

struct InitConfig {
  InitScheme scheme = InitScheme::he;
  double constant = 0.0;
};

/// he: W ~ Normal(0, 2 / fan_in), biases zero. fixup_like: as he, but the
/// second branch matrix of every residual block is zero so each block starts
/// as alpha times its shortcut. constant(c): every parameter set to c.
inline void init(Network& net, InitConfig cfg, std::uint64_t seed) {
  Rng rng(seed);
  auto he = [&](Tensor& t, std::size_t fan_in) {
    std::normal_distribution<double> d(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& x : t.data) x = d(rng);
  };
  for (auto& l : net.layers()) {
    l.shortcut_scale = 1.0;
    if (cfg.scheme == InitScheme::constant) {
      for (Tensor* t : l.params()) std::fill(t->data.begin(), t->data.end(), cfg.constant);
      continue;
    }
    for (Tensor* t : l.params()) std::fill(t->data.begin(), t->data.end(), 0.0);
    const LayerSpec& s = l.spec;
    switch (s.kind) {
      case LayerKind::dense:
        he(l.weight, s.in);
        break;
      case LayerKind::conv2d:
        he(l.weight, s.kernel * s.kernel * s.in_channels);
        break;
      case LayerKind::residual_block:
        if (s.first) he(l.w3, s.in);
        he(l.w1, s.first ? s.in : s.width);
        if (cfg.scheme == InitScheme::he) he(l.w2, s.hidden);
        break;
      default:
        break;
    }
  }
}

// Presets ------------------------------------------------------------------------

/// 784 -> 1024 -> 1024 -> 10 ReLU MLP on flattened 28 x 28 images.
inline Network mlp_mnist() {
  return Network(Shape{784}, {LayerSpec::dense_layer(784, 1024),
                              LayerSpec::activation(LayerKind::relu),
                              LayerSpec::dense_layer(1024, 1024),
                              LayerSpec::activation(LayerKind::relu),
                              LayerSpec::dense_layer(1024, 10)});
}

/// Two 3x3 stride-1 convolutions with 128 filters, each followed by ReLU and
/// 2x2 max pooling, then a dense head on [1 x 28 x 28] images.
inline Network cnn_mnist() {
  return Network(Shape{1, 28, 28},
                 {LayerSpec::conv(1, 128, 3, 1, 1), LayerSpec::activation(LayerKind::relu),
                  LayerSpec::pool(LayerKind::maxpool, 2, 2), LayerSpec::conv(128, 128, 3, 1, 1),
                  LayerSpec::activation(LayerKind::relu), LayerSpec::pool(LayerKind::maxpool, 2, 2),
                  LayerSpec::activation(LayerKind::flatten), LayerSpec::dense_layer(128 * 7 * 7, 10)});
}

/// Dense ReLU MLP with the given layer widths (widths.front() is the input).
inline Network mlp(const std::vector<std::size_t>& widths, bool bias = true) {
  if (widths.size() < 2) throw ContractError("mlp: need at least input and output widths");
  std::vector<LayerSpec> specs;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (i) specs.push_back(LayerSpec::activation(LayerKind::relu));
    specs.push_back(LayerSpec::dense_layer(widths[i], widths[i + 1], bias));
  }
  return Network(Shape{widths.front()}, std::move(specs));
}

/// Residual chain: a first block projecting `in` to `width`, then `blocks - 1`
/// dimension-preserving blocks, a ReLU and a dense output layer.
inline Network residual_chain(std::size_t in, std::size_t width, std::size_t hidden,
                              std::size_t blocks, std::size_t classes, Aggregation agg,
                              bool first_aggregates = false, bool block_bias = false) {
  if (blocks < 1) throw ContractError("residual_chain: need at least one block");
  std::vector<LayerSpec> specs;
  auto first = LayerSpec::residual(width, hidden, agg, true, in, block_bias);
  first.first_aggregates = first_aggregates;
  specs.push_back(first);
  for (std::size_t b = 1; b < blocks; ++b)
    specs.push_back(LayerSpec::residual(width, hidden, agg, false, 0, block_bias));
  specs.push_back(LayerSpec::activation(LayerKind::relu));
  specs.push_back(LayerSpec::dense_layer(width, classes));
  return Network(Shape{in}, std::move(specs));
}

}  // namespace weissi
