#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcepl/bitmask.hpp"
#include "mcepl/error.hpp"
#include "mcepl/rng.hpp"
#include "mcepl/tensor.hpp"

namespace mcepl {

// ---------------------------------------------------------------------------
// Architecture description
// ---------------------------------------------------------------------------

enum class LayerKind { conv2d, linear, relu, maxpool2d, flatten };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::linear: return "linear";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

/// One layer of a biasless feed-forward network. Only conv2d and linear own
/// parameters. Convolutions are stride 1 with symmetric zero padding.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t out_channels = 0;  // conv2d: O, linear: output features
  std::size_t in_channels = 0;   // conv2d: I, linear: input features
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t padding = 0;
  std::size_t window = 0;  // maxpool2d
  std::size_t stride = 0;  // maxpool2d

  static LayerSpec conv2d(std::size_t out, std::size_t in, std::size_t kernel, std::size_t padding) {
    return {LayerKind::conv2d, out, in, kernel, kernel, padding, 0, 0};
  }
  static LayerSpec linear(std::size_t out, std::size_t in) { return {LayerKind::linear, out, in}; }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec maxpool2d(std::size_t window, std::size_t stride) {
    return {LayerKind::maxpool2d, 0, 0, 0, 0, 0, window, stride};
  }
  static LayerSpec flatten() { return {LayerKind::flatten}; }

  bool has_params() const noexcept { return kind == LayerKind::conv2d || kind == LayerKind::linear; }

  Shape param_shape() const {
    if (kind == LayerKind::conv2d) return {out_channels, in_channels, kernel_h, kernel_w};
    if (kind == LayerKind::linear) return {out_channels, in_channels};
    return {};
  }
};

/// Ordered layer list plus the per-sample input shape [C, H, W].
/// Construction validates shape compatibility through the whole stack.
class ModelArch {
 public:
  ModelArch() = default;

  ModelArch(std::vector<LayerSpec> layers, Shape input, std::size_t classes)
      : layers_(std::move(layers)), input_(std::move(input)), classes_(classes) {
    if (input_.size() != 3) throw ConfigError("input shape must be [channels, height, width]");
    for (auto e : input_) {
      if (e == 0) throw ConfigError("input extents must be positive");
    }
    shapes_.push_back(input_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      shapes_.push_back(propagate(l, layers_[l], shapes_.back()));
    }
    const Shape& out = shapes_.back();
    if (out.size() != 1 || out[0] != classes_) {
      throw ConfigError("network output " + shape_string(out) + " does not match class count " +
                        std::to_string(classes_));
    }
  }

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const LayerSpec& layer(std::size_t l) const { return layers_.at(l); }
  const Shape& input_shape() const noexcept { return input_; }
  std::size_t classes() const noexcept { return classes_; }

  /// Per-sample shape of the tensor entering layer l (l == layers().size() is the output).
  const Shape& activation_shape(std::size_t l) const { return shapes_.at(l); }

  std::vector<std::size_t> param_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (layers_[l].has_params()) out.push_back(l);
    }
    return out;
  }

  LayerMap<Shape> param_shapes() const {
    LayerMap<Shape> out;
    for (auto l : param_layers()) out.emplace(l, layers_[l].param_shape());
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (auto& [l, s] : param_shapes()) n += shape_size(s);
    return n;
  }

 private:
  static Shape propagate(std::size_t l, const LayerSpec& spec, const Shape& in) {
    auto fail = [&](const std::string& why) {
      return ConfigError("layer " + std::to_string(l) + " (" + layer_kind_name(spec.kind) + "): " + why +
                         ", input " + shape_string(in));
    };
    switch (spec.kind) {
      case LayerKind::conv2d: {
        if (in.size() != 3) throw fail("expects [C,H,W] input");
        if (spec.in_channels != in[0]) throw fail("in_channels mismatch");
        if (spec.out_channels == 0 || spec.kernel_h == 0 || spec.kernel_w == 0) throw fail("zero extent");
        if (in[1] + 2 * spec.padding < spec.kernel_h || in[2] + 2 * spec.padding < spec.kernel_w) {
          throw fail("kernel larger than padded input");
        }
        return {spec.out_channels, in[1] + 2 * spec.padding - spec.kernel_h + 1,
                in[2] + 2 * spec.padding - spec.kernel_w + 1};
      }
      case LayerKind::linear:
        if (in.size() != 1) throw fail("expects flat input (insert a flatten layer)");
        if (spec.in_channels != in[0]) throw fail("in_features mismatch");
        if (spec.out_channels == 0) throw fail("zero extent");
        return {spec.out_channels};
      case LayerKind::relu:
        return in;
      case LayerKind::maxpool2d:
        if (in.size() != 3) throw fail("expects [C,H,W] input");
        if (spec.window == 0 || spec.stride == 0) throw fail("window and stride must be positive");
        if (in[1] < spec.window || in[2] < spec.window) throw fail("window larger than input");
        return {in[0], (in[1] - spec.window) / spec.stride + 1, (in[2] - spec.window) / spec.stride + 1};
      case LayerKind::flatten:
        return {shape_size(in)};
    }
    throw fail("unknown layer kind");
  }

  std::vector<LayerSpec> layers_;
  Shape input_;
  std::size_t classes_ = 0;
  std::vector<Shape> shapes_;
};

/// Biasless desk-scale network: two 5x5 convolutions with 3x3/2 max-pooling,
/// then two fully connected layers.
inline ModelArch desk_arch(const Shape& input, std::size_t classes, std::size_t hidden = 128,
                           std::size_t conv1 = 16, std::size_t conv2 = 32) {
  std::vector<LayerSpec> layers{
      LayerSpec::conv2d(conv1, input.at(0), 5, 2), LayerSpec::relu(), LayerSpec::maxpool2d(3, 2),
      LayerSpec::conv2d(conv2, conv1, 5, 2),       LayerSpec::relu(), LayerSpec::maxpool2d(3, 2),
      LayerSpec::flatten()};
  // Probe the flattened width by building the conv stack first.
  Shape s = input;
  auto conv_out = [](const Shape& in, std::size_t o) { return Shape{o, in[1], in[2]}; };
  auto pool_out = [](const Shape& in) {
    if (in[1] < 3 || in[2] < 3) throw ConfigError("input too small for the desk architecture");
    return Shape{in[0], (in[1] - 3) / 2 + 1, (in[2] - 3) / 2 + 1};
  };
  s = pool_out(conv_out(s, conv1));
  s = pool_out(conv_out(s, conv2));
  const std::size_t flat = shape_size(s);
  layers.push_back(LayerSpec::linear(hidden, flat));
  layers.push_back(LayerSpec::relu());
  layers.push_back(LayerSpec::linear(classes, hidden));
  return ModelArch(std::move(layers), input, classes);
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Every entry i.i.d. uniform on [-1, 1]; each layer has its own substream
/// keyed by (seed, layer index).
inline ParamSet init_uniform(const ModelArch& arch, std::uint64_t seed, std::string_view stream) {
  ParamSet out;
  for (auto& [l, shape] : arch.param_shapes()) {
    Tensor t(shape);
    auto eng = make_engine(seed, stream, l);
    for (auto& x : t) x = uniform(eng, -1.0, 1.0);
    out.emplace(l, std::move(t));
  }
  return out;
}

inline ParamSet init_params(const ModelArch& arch, std::uint64_t seed) {
  return init_uniform(arch, seed, "params");
}

inline void check_params(const ModelArch& arch, const ParamSet& p, const char* what) {
  auto shapes = arch.param_shapes();
  if (p.size() != shapes.size()) throw ConfigError(std::string(what) + ": wrong number of layers");
  for (auto& [l, s] : shapes) {
    auto it = p.find(l);
    if (it == p.end() || it->second.shape() != s) {
      throw ConfigError(std::string(what) + ": layer " + std::to_string(l) + " expected shape " +
                        shape_string(s));
    }
  }
}

/// Effective parameters v_l = w_l ⊙ m_l for every parameterized layer.
inline ParamSet masked_params(const ParamSet& w, const BitMaskSet& m) {
  if (w.size() != m.size()) throw ConfigError("mask set does not cover the parameter set");
  ParamSet v;
  for (auto& [l, t] : w) {
    auto it = m.find(l);
    if (it == m.end()) throw ConfigError("mask missing for layer " + std::to_string(l));
    if (it->second.shape() != t.shape()) {
      throw ConfigError("mask shape mismatch at layer " + std::to_string(l));
    }
    v.emplace(l, apply_mask(t, it->second));
  }
  return v;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// Everything backward needs: the input to every layer and the max-pool routes.
struct ForwardCache {
  std::vector<Tensor> inputs;
  std::vector<std::vector<std::size_t>> argmax;
  ParamSet effective;
};

struct ForwardResult {
  Tensor logits;
  ForwardCache cache;
};

namespace detail {

inline Tensor conv2d_forward(const Tensor& in, const Tensor& v, std::size_t pad) {
  const std::size_t B = in.dim(0), I = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t O = v.dim(0), KH = v.dim(2), KW = v.dim(3);
  const std::size_t OH = H + 2 * pad - KH + 1, OW = W + 2 * pad - KW + 1;
  Tensor out({B, O, OH, OW});
  const double* x = in.data();
  const double* wt = v.data();
  double* y = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < O; ++o) {
      double* yp = y + (b * O + o) * OH * OW;
      for (std::size_t i = 0; i < I; ++i) {
        const double* xp = x + (b * I + i) * H * W;
        for (std::size_t ky = 0; ky < KH; ++ky) {
          for (std::size_t kx = 0; kx < KW; ++kx) {
            const double wv = wt[((o * I + i) * KH + ky) * KW + kx];
            if (wv == 0.0) continue;
            const std::size_t ox0 = kx < pad ? pad - kx : 0;
            const std::size_t ox1 = std::min(OW, W + pad - kx);
            for (std::size_t oy = 0; oy < OH; ++oy) {
              const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              const double* xr = xp + static_cast<std::size_t>(iy) * W;
              double* yr = yp + oy * OW;
              for (std::size_t ox = ox0; ox < ox1; ++ox) yr[ox] += wv * xr[ox + kx - pad];
            }
          }
        }
      }
    }
  }
  return out;
}

// grad_v always dense (every entry of v gets its gradient, masked or not);
// grad_in only when requested.
inline void conv2d_backward(const Tensor& in, const Tensor& v, std::size_t pad, const Tensor& gout,
                            Tensor& grad_v, Tensor* grad_in) {
  const std::size_t B = in.dim(0), I = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t O = v.dim(0), KH = v.dim(2), KW = v.dim(3);
  const std::size_t OH = gout.dim(2), OW = gout.dim(3);
  const double* x = in.data();
  const double* wt = v.data();
  const double* g = gout.data();
  double* gw = grad_v.data();
  double* gx = grad_in ? grad_in->data() : nullptr;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < O; ++o) {
      const double* gp = g + (b * O + o) * OH * OW;
      for (std::size_t i = 0; i < I; ++i) {
        const double* xp = x + (b * I + i) * H * W;
        double* gxp = gx ? gx + (b * I + i) * H * W : nullptr;
        for (std::size_t ky = 0; ky < KH; ++ky) {
          for (std::size_t kx = 0; kx < KW; ++kx) {
            const std::size_t widx = ((o * I + i) * KH + ky) * KW + kx;
            const double wv = wt[widx];
            const std::size_t ox0 = kx < pad ? pad - kx : 0;
            const std::size_t ox1 = std::min(OW, W + pad - kx);
            double acc = 0.0;
            for (std::size_t oy = 0; oy < OH; ++oy) {
              const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              const std::size_t row = static_cast<std::size_t>(iy) * W;
              const double* xr = xp + row;
              const double* gr = gp + oy * OW;
              for (std::size_t ox = ox0; ox < ox1; ++ox) acc += gr[ox] * xr[ox + kx - pad];
              if (gxp && wv != 0.0) {
                double* gxr = gxp + row;
                for (std::size_t ox = ox0; ox < ox1; ++ox) gxr[ox + kx - pad] += gr[ox] * wv;
              }
            }
            gw[widx] += acc;
          }
        }
      }
    }
  }
}

inline Tensor linear_forward(const Tensor& in, const Tensor& v) {
  const std::size_t B = in.dim(0), I = in.dim(1), O = v.dim(0);
  Tensor out({B, O});
  for (std::size_t b = 0; b < B; ++b) {
    const double* x = in.data() + b * I;
    for (std::size_t o = 0; o < O; ++o) {
      const double* w = v.data() + o * I;
      double acc = 0.0;
      for (std::size_t i = 0; i < I; ++i) acc += w[i] * x[i];
      out[b * O + o] = acc;
    }
  }
  return out;
}

inline void linear_backward(const Tensor& in, const Tensor& v, const Tensor& gout, Tensor& grad_v,
                            Tensor* grad_in) {
  const std::size_t B = in.dim(0), I = in.dim(1), O = v.dim(0);
  for (std::size_t b = 0; b < B; ++b) {
    const double* x = in.data() + b * I;
    for (std::size_t o = 0; o < O; ++o) {
      const double g = gout[b * O + o];
      if (g == 0.0) continue;
      double* gw = grad_v.data() + o * I;
      for (std::size_t i = 0; i < I; ++i) gw[i] += g * x[i];
      if (grad_in) {
        const double* w = v.data() + o * I;
        double* gx = grad_in->data() + b * I;
        for (std::size_t i = 0; i < I; ++i) gx[i] += g * w[i];
      }
    }
  }
}

// Ties resolve to the lowest flat input index (strict > while scanning the
// window in row-major order).
inline Tensor maxpool_forward(const Tensor& in, std::size_t window, std::size_t stride,
                              std::vector<std::size_t>& argmax) {
  const std::size_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t OH = (H - window) / stride + 1, OW = (W - window) / stride + 1;
  Tensor out({B, C, OH, OW});
  argmax.assign(out.size(), 0);
  std::size_t k = 0;
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const std::size_t base = bc * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox, ++k) {
        std::size_t best = base + oy * stride * W + ox * stride;
        double best_v = in[best];
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = base + (oy * stride + dy) * W + ox * stride + dx;
            if (in[idx] > best_v) {
              best_v = in[idx];
              best = idx;
            }
          }
        }
        out[k] = best_v;
        argmax[k] = best;
      }
    }
  }
  return out;
}

inline Shape with_batch(std::size_t batch, const Shape& s) {
  Shape out{batch};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

}  // namespace detail

/// Forward pass on effective (already masked) parameters v.
inline ForwardResult forward_effective(const ModelArch& arch, ParamSet v, const Tensor& batch) {
  const Shape& in_shape = arch.input_shape();
  if (batch.rank() != 4 || Shape(batch.shape().begin() + 1, batch.shape().end()) != in_shape) {
    throw ConfigError("batch shape " + shape_string(batch.shape()) + " does not match network input " +
                      shape_string(in_shape));
  }
  check_params(arch, v, "forward");
  const std::size_t B = batch.dim(0);
  ForwardResult res;
  auto& cache = res.cache;
  cache.inputs.reserve(arch.layers().size());
  cache.argmax.resize(arch.layers().size());
  Tensor x = batch;
  for (std::size_t l = 0; l < arch.layers().size(); ++l) {
    const LayerSpec& spec = arch.layer(l);
    cache.inputs.push_back(x);
    switch (spec.kind) {
      case LayerKind::conv2d:
        x = detail::conv2d_forward(x, v.at(l), spec.padding);
        break;
      case LayerKind::linear:
        x = detail::linear_forward(x, v.at(l));
        break;
      case LayerKind::relu:
        for (auto& e : x) e = e > 0.0 ? e : 0.0;
        break;
      case LayerKind::maxpool2d:
        x = detail::maxpool_forward(x, spec.window, spec.stride, cache.argmax[l]);
        break;
      case LayerKind::flatten:
        x = x.reshaped({B, shape_size(arch.activation_shape(l))});
        break;
    }
  }
  res.logits = std::move(x);
  cache.effective = std::move(v);
  return res;
}

/// Forward pass of the masked network, v_l = w_l ⊙ m_l.
inline ForwardResult forward(const ModelArch& arch, const ParamSet& w, const BitMaskSet& m,
                             const Tensor& batch) {
  check_params(arch, w, "forward");
  return forward_effective(arch, masked_params(w, m), batch);
}

/// Reverse pass: gradient with respect to the effective parameters v.
inline ParamSet backward(const ModelArch& arch, const ForwardCache& cache, Tensor grad_logits) {
  ParamSet grad;
  for (auto& [l, t] : cache.effective) grad.emplace(l, Tensor(t.shape()));
  Tensor g = std::move(grad_logits);
  for (std::size_t l = arch.layers().size(); l-- > 0;) {
    const LayerSpec& spec = arch.layer(l);
    const Tensor& in = cache.inputs[l];
    const bool need_input_grad = l > 0;
    switch (spec.kind) {
      case LayerKind::conv2d: {
        Tensor gin(in.shape());
        detail::conv2d_backward(in, cache.effective.at(l), spec.padding, g, grad.at(l),
                                need_input_grad ? &gin : nullptr);
        g = std::move(gin);
        break;
      }
      case LayerKind::linear: {
        Tensor gin(in.shape());
        detail::linear_backward(in, cache.effective.at(l), g, grad.at(l), need_input_grad ? &gin : nullptr);
        g = std::move(gin);
        break;
      }
      case LayerKind::relu:
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (!(in[i] > 0.0)) g[i] = 0.0;
        }
        break;
      case LayerKind::maxpool2d: {
        Tensor gin(in.shape());
        const auto& route = cache.argmax[l];
        for (std::size_t k = 0; k < g.size(); ++k) gin[route[k]] += g[k];
        g = std::move(gin);
        break;
      }
      case LayerKind::flatten:
        g = g.reshaped(in.shape());
        break;
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  Tensor grad_logits;
};

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. logits.
inline LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  if (B == 0 || labels.empty()) throw ArgumentError("empty batch");
  if (labels.size() != B) throw ArgumentError("label count does not match batch size");
  LossResult res{0.0, Tensor(logits.shape())};
  const double inv_b = 1.0 / static_cast<double>(B);
  for (std::size_t b = 0; b < B; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= C) {
      throw ArgumentError("label " + std::to_string(y) + " outside [0, " + std::to_string(C) + ")");
    }
    const double* z = logits.data() + b * C;
    const double mx = *std::max_element(z, z + C);
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - mx);
    const double lse = mx + std::log(sum);
    res.loss += (lse - z[y]) * inv_b;
    double* g = res.grad_logits.data() + b * C;
    for (std::size_t c = 0; c < C; ++c) {
      g[c] = std::exp(z[c] - lse) * inv_b;
    }
    g[y] -= inv_b;
  }
  return res;
}

struct LossAndGrad {
  double loss = 0.0;
  ParamSet grad_v;
};

inline LossAndGrad loss_and_grad_effective(const ModelArch& arch, const ParamSet& v, const Tensor& batch,
                                           std::span<const int> labels) {
  if (batch.empty() || labels.empty()) throw ArgumentError("empty batch");
  auto fwd = forward_effective(arch, v, batch);
  auto ce = softmax_cross_entropy(fwd.logits, labels);
  return {ce.loss, backward(arch, fwd.cache, std::move(ce.grad_logits))};
}

/// Mean cross-entropy of the masked network and its gradient w.r.t. v = w ⊙ m.
inline LossAndGrad loss_and_grad_v(const ModelArch& arch, const ParamSet& w, const BitMaskSet& m,
                                   const Tensor& batch, std::span<const int> labels) {
  check_params(arch, w, "loss_and_grad_v");
  return loss_and_grad_effective(arch, masked_params(w, m), batch, labels);
}

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

/// Accuracy and mean cross-entropy over a whole sample set, processed in chunks.
inline Evaluation evaluate(const ModelArch& arch, const ParamSet& v, const Tensor& features,
                           std::span<const int> labels, std::size_t chunk = 256) {
  const std::size_t n = labels.size();
  if (n == 0) return {};
  const std::size_t per = shape_size(arch.input_shape());
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t len = std::min(chunk, n - start);
    std::vector<double> buf(features.data() + start * per, features.data() + (start + len) * per);
    Tensor batch(detail::with_batch(len, arch.input_shape()), std::move(buf));
    auto fwd = forward_effective(arch, v, batch);
    const std::size_t C = arch.classes();
    auto ce = softmax_cross_entropy(fwd.logits, labels.subspan(start, len));
    loss += ce.loss * static_cast<double>(len);
    for (std::size_t b = 0; b < len; ++b) {
      const double* z = fwd.logits.data() + b * C;
      const auto pred = static_cast<int>(std::max_element(z, z + C) - z);
      if (pred == labels[start + b]) ++correct;
    }
  }
  return {static_cast<double>(correct) / static_cast<double>(n), loss / static_cast<double>(n)};
}

// ---------------------------------------------------------------------------
// Straight-through z gradient
// ---------------------------------------------------------------------------

inline double sign(double x) noexcept { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// G(z) = grad_v ⊙ w ⊙ sign(z): dv/dm = w, and dm/dz is replaced by sign(z).
inline Tensor grad_z(const Tensor& grad_v, const Tensor& w, const Tensor& z) {
  require_same_shape(grad_v, w, "grad_z");
  require_same_shape(grad_v, z, "grad_z");
  Tensor out(grad_v.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = grad_v[i] * w[i] * sign(z[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Compares `analytic` against central differences of `fn` at `point` over the
/// given coordinates (all coordinates when `coords` is empty) and returns the
/// largest relative error.
template <class Fn>
double finite_diff_check(Fn&& fn, const Tensor& point, const Tensor& analytic, double step,
                         std::span<const std::size_t> coords = {}) {
  if (!(step > 0.0)) throw ArgumentError("finite difference step must be positive");
  require_same_shape(point, analytic, "finite_diff_check");
  Tensor x = point;
  double worst = 0.0;
  auto probe = [&](std::size_t i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = fn(static_cast<const Tensor&>(x));
    x[i] = orig - step;
    const double fm = fn(static_cast<const Tensor&>(x));
    x[i] = orig;
    worst = std::max(worst, relative_error((fp - fm) / (2.0 * step), analytic[i]));
  };
  if (coords.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) probe(i);
  } else {
    for (auto i : coords) probe(i);
  }
  return worst;
}

/// `count` coordinates of a tensor of `n` entries, sampled with replacement.
inline std::vector<std::size_t> sample_coords(std::size_t n, std::size_t count, std::uint64_t seed) {
  Engine eng{derive_seed(seed, "coords")};
  std::vector<std::size_t> out(count);
  for (auto& c : out) c = static_cast<std::size_t>(uniform_index(eng, n));
  return out;
}

}  // namespace mcepl
