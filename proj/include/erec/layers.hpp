// Neural-network layers with explicit forward/backward passes. The inventory
// is exactly what the encoder/decoder/critic stacks need: strided conv,
// nearest-upsample conv, fully-connected, batch-norm, dropout, activation.
//
// Conventions: activations are NHWC ([N,H,W,C]), fully-connected data is
// [N,features]. Conv kernels are stored patch-major [kh*kw*in_c, out_c] so
// forward is a single im2col + matmul per sample. "same" padding follows the
// ceil(in/stride) rule, so a stride-2 4x4 conv halves even spatial dims.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "erec/tensor.hpp"

namespace erec {

enum class Mode { train, eval };

enum class LayerKind { conv, upsample_conv, fully_connected, batch_norm, dropout, activation };

enum class Activation { identity, relu, leaky_relu, sigmoid, tanh_unit };

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::upsample_conv: return "upsample-conv";
    case LayerKind::fully_connected: return "fully-connected";
    case LayerKind::batch_norm: return "batch-norm";
    case LayerKind::dropout: return "dropout";
    case LayerKind::activation: return "activation";
  }
  return "?";
}

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky-relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh_unit: return "tanh-unit";
  }
  return "?";
}

// Architecture descriptor for one layer. kind-specific fields are ignored by
// the other kinds.
struct LayerSpec {
  LayerKind kind = LayerKind::activation;
  int kernel_h = 1, kernel_w = 1;
  int stride = 1;               // conv stride; upsample-conv scale factor
  int output_depth = 0;         // conv/upsample/fully-connected
  bool same_padding = true;     // conv only; false = valid (no padding)
  double rate = 0.5;            // dropout
  double momentum = 0.9;        // batch-norm running-stat update
  double epsilon = 1e-5;        // batch-norm
  Activation activation = Activation::identity;
  double leak = 0.2;            // leaky-relu slope
  std::string name;             // diagnostic label, e.g. "enc.conv3"

  static LayerSpec conv(int kernel, int stride, int depth, bool same = true) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.kernel_h = s.kernel_w = kernel;
    s.stride = stride;
    s.output_depth = depth;
    s.same_padding = same;
    return s;
  }
  static LayerSpec upsample_conv(int kernel, int scale, int depth) {
    LayerSpec s;
    s.kind = LayerKind::upsample_conv;
    s.kernel_h = s.kernel_w = kernel;
    s.stride = scale;
    s.output_depth = depth;
    return s;
  }
  static LayerSpec fully_connected(int depth) {
    LayerSpec s;
    s.kind = LayerKind::fully_connected;
    s.output_depth = depth;
    return s;
  }
  static LayerSpec batch_norm(double momentum = 0.9, double epsilon = 1e-5) {
    LayerSpec s;
    s.kind = LayerKind::batch_norm;
    s.momentum = momentum;
    s.epsilon = epsilon;
    return s;
  }
  static LayerSpec dropout(double rate = 0.5) {
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.rate = rate;
    return s;
  }
  static LayerSpec act(Activation a, double leak = 0.2) {
    LayerSpec s;
    s.kind = LayerKind::activation;
    s.activation = a;
    s.leak = leak;
    return s;
  }

  void validate() const {
    if (kernel_h <= 0 || kernel_w <= 0) throw std::invalid_argument("layer " + name + ": kernel size must be positive");
    if (stride <= 0) throw std::invalid_argument("layer " + name + ": stride must be positive");
    const bool needs_depth =
        kind == LayerKind::conv || kind == LayerKind::upsample_conv || kind == LayerKind::fully_connected;
    if (needs_depth && output_depth <= 0)
      throw std::invalid_argument("layer " + name + ": output depth must be positive");
    if (kind == LayerKind::dropout && (rate < 0.0 || rate >= 1.0))
      throw std::invalid_argument("layer " + name + ": dropout rate must be in [0,1)");
  }
};

namespace detail {

// "same" padding total for one spatial axis (TF convention: out = ceil(in/s)).
inline int same_pad_total(int in, int kernel, int stride) {
  const int out = (in + stride - 1) / stride;
  return std::max((out - 1) * stride + kernel - in, 0);
}

template <class T>
void im2col(const T* img, int h, int w, int c, int kh, int kw, int stride, int pad_top, int pad_left, int oh, int ow,
            T* cols) {
  // cols is [oh*ow, kh*kw*c]
  std::int64_t r = 0;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox, ++r) {
      T* dst = cols + r * (static_cast<std::int64_t>(kh) * kw * c);
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - pad_top + ky;
        for (int kx = 0; kx < kw; ++kx, dst += c) {
          const int ix = ox * stride - pad_left + kx;
          if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
            for (int ch = 0; ch < c; ++ch) dst[ch] = T(0);
          } else {
            const T* src = img + (static_cast<std::int64_t>(iy) * w + ix) * c;
            for (int ch = 0; ch < c; ++ch) dst[ch] = src[ch];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, int h, int w, int c, int kh, int kw, int stride, int pad_top, int pad_left, int oh,
                int ow, T* img) {
  std::int64_t r = 0;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox, ++r) {
      const T* src = cols + r * (static_cast<std::int64_t>(kh) * kw * c);
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = oy * stride - pad_top + ky;
        for (int kx = 0; kx < kw; ++kx, src += c) {
          const int ix = ox * stride - pad_left + kx;
          if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
          T* dst = img + (static_cast<std::int64_t>(iy) * w + ix) * c;
          for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

}  // namespace detail

// One layer instance: spec, parameters, gradient accumulators, and the caches
// backward needs. Parameter layout per kind:
//   conv/upsample-conv: {W [kh*kw*in_c, out_c], b [out_c]}
//   fully-connected:    {W [in, out], b [out]}
//   batch-norm:         {gamma [c], beta [c]} plus untrained running stats
template <class T>
class Layer {
 public:
  LayerSpec spec;
  std::vector<Tensor<T>> params;
  std::vector<Tensor<T>> grads;
  Tensor<T> running_mean, running_var;  // batch-norm only

  // Sets up parameters for the given input shape ([H,W,C] or [features]).
  // Returns the output shape. Weights ~ N(0, 0.02^2), biases zero.
  std::vector<int> build(const std::vector<int>& in_shape, Rng& rng, double weight_std = 0.02) {
    spec.validate();
    in_shape_ = in_shape;
    const int in_c = in_shape.back();
    switch (spec.kind) {
      case LayerKind::conv:
      case LayerKind::upsample_conv: {
        require(in_shape.size() == 3, "expects [H,W,C] input, got " + shape_string(in_shape));
        const int k = spec.kernel_h * spec.kernel_w * in_c;
        params = {Tensor<T>({k, spec.output_depth}), Tensor<T>({spec.output_depth})};
        for (std::int64_t i = 0; i < params[0].size(); ++i) params[0][i] = static_cast<T>(weight_std * rng.normal());
        break;
      }
      case LayerKind::fully_connected: {
        const int in = static_cast<int>(element_count(in_shape));
        params = {Tensor<T>({in, spec.output_depth}), Tensor<T>({spec.output_depth})};
        for (std::int64_t i = 0; i < params[0].size(); ++i) params[0][i] = static_cast<T>(weight_std * rng.normal());
        break;
      }
      case LayerKind::batch_norm: {
        params = {Tensor<T>::full({in_c}, T(1)), Tensor<T>({in_c})};
        running_mean = Tensor<T>({in_c});
        running_var = Tensor<T>::full({in_c}, T(1));
        break;
      }
      case LayerKind::dropout:
      case LayerKind::activation:
        break;
    }
    grads.clear();
    for (const auto& p : params) grads.emplace_back(p.shape());
    out_shape_ = infer_out_shape(in_shape);
    return out_shape_;
  }

  const std::vector<int>& input_shape() const { return in_shape_; }
  const std::vector<int>& output_shape() const { return out_shape_; }

  std::vector<int> infer_out_shape(const std::vector<int>& in) const {
    switch (spec.kind) {
      case LayerKind::conv: {
        const int h = in[0], w = in[1];
        int oh, ow;
        if (spec.same_padding) {
          oh = (h + spec.stride - 1) / spec.stride;
          ow = (w + spec.stride - 1) / spec.stride;
        } else {
          require(h >= spec.kernel_h && w >= spec.kernel_w, "valid-padding kernel larger than input");
          oh = (h - spec.kernel_h) / spec.stride + 1;
          ow = (w - spec.kernel_w) / spec.stride + 1;
        }
        return {oh, ow, spec.output_depth};
      }
      case LayerKind::upsample_conv:
        return {in[0] * spec.stride, in[1] * spec.stride, spec.output_depth};
      case LayerKind::fully_connected:
        return {spec.output_depth};
      default:
        return in;
    }
  }

  void zero_grads() {
    for (auto& g : grads)
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] = T(0);
  }

  // x is [N, ...in_shape]. rng supplies dropout masks and may be null in eval
  // mode or for layers that never draw.
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng = nullptr) {
    check_input(x);
    switch (spec.kind) {
      case LayerKind::conv: return forward_conv(x, /*upsampled=*/false);
      case LayerKind::upsample_conv: return forward_conv(upsample_nearest(x), /*upsampled=*/true);
      case LayerKind::fully_connected: return forward_fc(x);
      case LayerKind::batch_norm: return forward_bn(x, mode);
      case LayerKind::dropout: return forward_dropout(x, mode, rng);
      case LayerKind::activation: return forward_act(x);
    }
    throw std::logic_error("unreachable");
  }

  // dy matches the last forward's output; returns dL/dx and accumulates
  // parameter gradients.
  Tensor<T> backward(const Tensor<T>& dy) {
    switch (spec.kind) {
      case LayerKind::conv: return backward_conv(dy, false);
      case LayerKind::upsample_conv: return downsample_sum(backward_conv(dy, true));
      case LayerKind::fully_connected: return backward_fc(dy);
      case LayerKind::batch_norm: return backward_bn(dy);
      case LayerKind::dropout: return backward_dropout(dy);
      case LayerKind::activation: return backward_act(dy);
    }
    throw std::logic_error("unreachable");
  }

 private:
  std::vector<int> in_shape_, out_shape_;

  // caches
  Tensor<T> cache_cols_;       // conv: im2col of the (possibly upsampled) input, all samples
  Tensor<T> cache_input_;      // fc input (flattened), activation input, bn input
  Tensor<T> cache_norm_;       // bn normalized values
  std::vector<T> cache_mean_, cache_inv_std_;
  Tensor<T> cache_mask_;       // dropout mask (already scaled)
  Mode cache_mode_ = Mode::train;
  int cache_n_ = 0;

  void require(bool ok, const std::string& what) const {
    if (!ok) throw std::invalid_argument("layer " + (spec.name.empty() ? kind_name(spec.kind) : spec.name) + ": " + what);
  }

  void check_input(const Tensor<T>& x) const {
    require(x.ndim() >= 2, "expects a batched input, got " + shape_string(x.shape()));
    std::vector<int> rest(x.shape().begin() + 1, x.shape().end());
    if (spec.kind == LayerKind::fully_connected) {
      require(element_count(rest) == element_count(in_shape_),
              "input " + shape_string(x.shape()) + " does not flatten to " + shape_string(in_shape_));
    } else if (spec.kind == LayerKind::conv || spec.kind == LayerKind::upsample_conv) {
      require(rest.size() == 3 && rest[2] == in_shape_[2],
              "input " + shape_string(x.shape()) + " incompatible with built shape " + shape_string(in_shape_));
    }
  }

  // ---- conv ----

  Tensor<T> forward_conv(const Tensor<T>& x, bool upsampled) {
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int kh = spec.kernel_h, kw = spec.kernel_w;
    const int stride = upsampled ? 1 : spec.stride;
    int pad_h = 0, pad_w = 0;
    if (spec.same_padding || upsampled) {
      pad_h = detail::same_pad_total(h, kh, stride);
      pad_w = detail::same_pad_total(w, kw, stride);
    }
    const int oh = spec.same_padding || upsampled ? (h + stride - 1) / stride : (h - kh) / stride + 1;
    const int ow = spec.same_padding || upsampled ? (w + stride - 1) / stride : (w - kw) / stride + 1;
    const int patch = kh * kw * c;
    const int oc = spec.output_depth;

    cache_cols_ = Tensor<T>({n, oh * ow, patch});
    conv_geom_ = {h, w, c, stride, pad_h / 2, pad_w / 2, oh, ow};
    cache_n_ = n;

    Tensor<T> y({n, oh, ow, oc});
    const T* wgt = params[0].data();
    const T* bias = params[1].data();
    for (int s = 0; s < n; ++s) {
      T* cols = cache_cols_.data() + static_cast<std::int64_t>(s) * oh * ow * patch;
      detail::im2col(x.data() + static_cast<std::int64_t>(s) * h * w * c, h, w, c, kh, kw, stride, pad_h / 2, pad_w / 2,
                     oh, ow, cols);
      T* out = y.data() + static_cast<std::int64_t>(s) * oh * ow * oc;
      gemm(cols, wgt, out, oh * ow, patch, oc);
      for (std::int64_t r = 0; r < static_cast<std::int64_t>(oh) * ow; ++r)
        for (int j = 0; j < oc; ++j) out[r * oc + j] += bias[j];
    }
    return y;
  }

  struct ConvGeom {
    int h, w, c, stride, pad_top, pad_left, oh, ow;
  };
  ConvGeom conv_geom_{};

  Tensor<T> backward_conv(const Tensor<T>& dy, bool upsampled) {
    const auto& g = conv_geom_;
    const int n = cache_n_;
    const int kh = spec.kernel_h, kw = spec.kernel_w;
    const int patch = kh * kw * g.c;
    const int oc = spec.output_depth;
    require(dy.ndim() == 4 && dy.dim(0) == n && dy.dim(1) == g.oh && dy.dim(2) == g.ow && dy.dim(3) == oc,
            "gradient shape " + shape_string(dy.shape()) + " does not match forward output");

    Tensor<T> dx({n, g.h, g.w, g.c});
    std::vector<T> dcols(static_cast<std::size_t>(g.oh) * g.ow * patch);
    T* dwgt = grads[0].data();
    T* dbias = grads[1].data();
    const T* wgt = params[0].data();
    for (int s = 0; s < n; ++s) {
      const T* dout = dy.data() + static_cast<std::int64_t>(s) * g.oh * g.ow * oc;
      const T* cols = cache_cols_.data() + static_cast<std::int64_t>(s) * g.oh * g.ow * patch;
      // dW += cols^T * dy
      gemm_at(cols, dout, dwgt, patch, g.oh * g.ow, oc, /*accumulate=*/true);
      for (std::int64_t r = 0; r < static_cast<std::int64_t>(g.oh) * g.ow; ++r)
        for (int j = 0; j < oc; ++j) dbias[j] += dout[r * oc + j];
      // dcols = dy * W^T, then scatter back
      gemm_bt(dout, wgt, dcols.data(), g.oh * g.ow, oc, patch);
      detail::col2im_add(dcols.data(), g.h, g.w, g.c, kh, kw, g.stride, g.pad_top, g.pad_left, g.oh, g.ow,
                         dx.data() + static_cast<std::int64_t>(s) * g.h * g.w * g.c);
    }
    return dx;
  }

  Tensor<T> upsample_nearest(const Tensor<T>& x) {
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int f = spec.stride;
    Tensor<T> y({n, h * f, w * f, c});
    for (int s = 0; s < n; ++s)
      for (int oy = 0; oy < h * f; ++oy) {
        const T* src = x.data() + ((static_cast<std::int64_t>(s) * h + oy / f) * w) * c;
        T* dst = y.data() + ((static_cast<std::int64_t>(s) * h * f + oy) * (w * f)) * c;
        for (int ox = 0; ox < w * f; ++ox)
          for (int ch = 0; ch < c; ++ch) dst[ox * c + ch] = src[(ox / f) * c + ch];
      }
    return y;
  }

  Tensor<T> downsample_sum(const Tensor<T>& dy) {
    // adjoint of nearest-neighbour upsampling: sum each f x f block
    const int n = dy.dim(0), hf = dy.dim(1), wf = dy.dim(2), c = dy.dim(3);
    const int f = spec.stride, h = hf / f, w = wf / f;
    Tensor<T> dx({n, h, w, c});
    for (int s = 0; s < n; ++s)
      for (int oy = 0; oy < hf; ++oy) {
        const T* src = dy.data() + ((static_cast<std::int64_t>(s) * hf + oy) * wf) * c;
        T* dst = dx.data() + ((static_cast<std::int64_t>(s) * h + oy / f) * w) * c;
        for (int ox = 0; ox < wf; ++ox)
          for (int ch = 0; ch < c; ++ch) dst[(ox / f) * c + ch] += src[ox * c + ch];
      }
    return dx;
  }

  // ---- fully connected ----

  Tensor<T> forward_fc(const Tensor<T>& x) {
    const int n = x.dim(0);
    const int in = static_cast<int>(x.size() / n);
    cache_input_ = x.reshaped({n, in});
    cache_n_ = n;
    Tensor<T> y({n, spec.output_depth});
    gemm(cache_input_.data(), params[0].data(), y.data(), n, in, spec.output_depth);
    const T* bias = params[1].data();
    for (int s = 0; s < n; ++s)
      for (int j = 0; j < spec.output_depth; ++j) y[static_cast<std::int64_t>(s) * spec.output_depth + j] += bias[j];
    return y;
  }

  Tensor<T> backward_fc(const Tensor<T>& dy) {
    const int n = cache_n_;
    const int in = cache_input_.dim(1), out = spec.output_depth;
    require(dy.ndim() == 2 && dy.dim(0) == n && dy.dim(1) == out,
            "gradient shape " + shape_string(dy.shape()) + " does not match forward output");
    gemm_at(cache_input_.data(), dy.data(), grads[0].data(), in, n, out, /*accumulate=*/true);
    T* dbias = grads[1].data();
    for (int s = 0; s < n; ++s)
      for (int j = 0; j < out; ++j) dbias[j] += dy[static_cast<std::int64_t>(s) * out + j];
    Tensor<T> dx({n, in});
    gemm_bt(dy.data(), params[0].data(), dx.data(), n, out, in);
    // hand back the caller's original (possibly 4-d) shape
    std::vector<int> full = {n};
    for (int d : in_shape_) full.push_back(d);
    return dx.reshaped(full);
  }

  // ---- batch norm ----

  Tensor<T> forward_bn(const Tensor<T>& x, Mode mode) {
    const int c = x.dim(x.ndim() - 1);
    const std::int64_t rows = x.size() / c;
    cache_mode_ = mode;
    cache_n_ = x.dim(0);
    Tensor<T> y(x.shape());
    cache_mean_.assign(c, T(0));
    cache_inv_std_.assign(c, T(0));
    const T* px = x.data();
    if (mode == Mode::train) {
      std::vector<T> var(c, T(0));
      for (std::int64_t r = 0; r < rows; ++r)
        for (int ch = 0; ch < c; ++ch) cache_mean_[ch] += px[r * c + ch];
      for (int ch = 0; ch < c; ++ch) cache_mean_[ch] /= static_cast<T>(rows);
      for (std::int64_t r = 0; r < rows; ++r)
        for (int ch = 0; ch < c; ++ch) {
          const T d = px[r * c + ch] - cache_mean_[ch];
          var[ch] += d * d;
        }
      for (int ch = 0; ch < c; ++ch) var[ch] /= static_cast<T>(rows);
      for (int ch = 0; ch < c; ++ch) {
        cache_inv_std_[ch] = T(1) / std::sqrt(var[ch] + static_cast<T>(spec.epsilon));
        const T m = static_cast<T>(spec.momentum);
        running_mean[ch] = m * running_mean[ch] + (T(1) - m) * cache_mean_[ch];
        running_var[ch] = m * running_var[ch] + (T(1) - m) * var[ch];
      }
      cache_input_ = x;
      cache_norm_ = Tensor<T>(x.shape());
      T* pn = cache_norm_.data();
      T* py = y.data();
      const T* gamma = params[0].data();
      const T* beta = params[1].data();
      for (std::int64_t r = 0; r < rows; ++r)
        for (int ch = 0; ch < c; ++ch) {
          const T xn = (px[r * c + ch] - cache_mean_[ch]) * cache_inv_std_[ch];
          pn[r * c + ch] = xn;
          py[r * c + ch] = gamma[ch] * xn + beta[ch];
        }
    } else {
      for (int ch = 0; ch < c; ++ch) {
        cache_mean_[ch] = running_mean[ch];
        cache_inv_std_[ch] = T(1) / std::sqrt(running_var[ch] + static_cast<T>(spec.epsilon));
      }
      cache_norm_ = Tensor<T>(x.shape());
      T* pn = cache_norm_.data();
      T* py = y.data();
      const T* gamma = params[0].data();
      const T* beta = params[1].data();
      for (std::int64_t r = 0; r < rows; ++r)
        for (int ch = 0; ch < c; ++ch) {
          const T xn = (px[r * c + ch] - cache_mean_[ch]) * cache_inv_std_[ch];
          pn[r * c + ch] = xn;
          py[r * c + ch] = gamma[ch] * xn + beta[ch];
        }
    }
    return y;
  }

  Tensor<T> backward_bn(const Tensor<T>& dy) {
    const int c = dy.dim(dy.ndim() - 1);
    const std::int64_t rows = dy.size() / c;
    const T* pdy = dy.data();
    const T* gamma = params[0].data();
    Tensor<T> dx(dy.shape());
    if (cache_mode_ == Mode::eval) {
      // running stats are constants in eval mode
      const T* pn = cache_norm_.data();
      T* dgamma = grads[0].data();
      T* dbeta = grads[1].data();
      T* pdx = dx.data();
      for (std::int64_t r = 0; r < rows; ++r)
        for (int ch = 0; ch < c; ++ch) {
          dgamma[ch] += pdy[r * c + ch] * pn[r * c + ch];
          dbeta[ch] += pdy[r * c + ch];
          pdx[r * c + ch] = pdy[r * c + ch] * gamma[ch] * cache_inv_std_[ch];
        }
      return dx;
    }
    const T* pn = cache_norm_.data();
    T* dgamma = grads[0].data();
    T* dbeta = grads[1].data();
    std::vector<T> sum_dy(c, T(0)), sum_dy_xn(c, T(0));
    for (std::int64_t r = 0; r < rows; ++r)
      for (int ch = 0; ch < c; ++ch) {
        sum_dy[ch] += pdy[r * c + ch];
        sum_dy_xn[ch] += pdy[r * c + ch] * pn[r * c + ch];
      }
    for (int ch = 0; ch < c; ++ch) {
      dgamma[ch] += sum_dy_xn[ch];
      dbeta[ch] += sum_dy[ch];
    }
    // dx = gamma*inv_std/rows * (rows*dy - sum_dy - xn*sum_dy_xn)
    T* pdx = dx.data();
    const T inv_rows = T(1) / static_cast<T>(rows);
    for (std::int64_t r = 0; r < rows; ++r)
      for (int ch = 0; ch < c; ++ch) {
        const T t = static_cast<T>(rows) * pdy[r * c + ch] - sum_dy[ch] - pn[r * c + ch] * sum_dy_xn[ch];
        pdx[r * c + ch] = gamma[ch] * cache_inv_std_[ch] * inv_rows * t;
      }
    return dx;
  }

  // ---- dropout ----

  Tensor<T> forward_dropout(const Tensor<T>& x, Mode mode, Rng* rng) {
    cache_mode_ = mode;
    if (mode == Mode::eval || spec.rate == 0.0) {
      cache_mask_ = Tensor<T>();
      return x;
    }
    require(rng != nullptr, "dropout in train mode needs an rng");
    const T keep = static_cast<T>(1.0 - spec.rate);
    cache_mask_ = Tensor<T>(x.shape());
    Tensor<T> y(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) {
      const T m = rng->uniform() < spec.rate ? T(0) : T(1) / keep;
      cache_mask_[i] = m;
      y[i] = x[i] * m;
    }
    return y;
  }

  Tensor<T> backward_dropout(const Tensor<T>& dy) {
    if (cache_mask_.empty()) return dy;
    Tensor<T> dx(dy.shape());
    for (std::int64_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * cache_mask_[i];
    return dx;
  }

  // ---- activation ----

  Tensor<T> forward_act(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    switch (spec.activation) {
      case Activation::identity:
        y = x;
        break;
      case Activation::relu:
        for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
        break;
      case Activation::leaky_relu: {
        const T a = static_cast<T>(spec.leak);
        for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : a * x[i];
        break;
      }
      case Activation::sigmoid:
        for (std::int64_t i = 0; i < x.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
        break;
      case Activation::tanh_unit:
        for (std::int64_t i = 0; i < x.size(); ++i) y[i] = (std::tanh(x[i]) + T(1)) / T(2);
        break;
    }
    cache_input_ = x;
    cache_norm_ = y;  // reuse slot for the outputs sigmoid/tanh need
    return y;
  }

  Tensor<T> backward_act(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape());
    const Tensor<T>& x = cache_input_;
    const Tensor<T>& y = cache_norm_;
    switch (spec.activation) {
      case Activation::identity:
        dx = dy;
        break;
      case Activation::relu:
        for (std::int64_t i = 0; i < dy.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
        break;
      case Activation::leaky_relu: {
        const T a = static_cast<T>(spec.leak);
        for (std::int64_t i = 0; i < dy.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : a * dy[i];
        break;
      }
      case Activation::sigmoid:
        for (std::int64_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * y[i] * (T(1) - y[i]);
        break;
      case Activation::tanh_unit:
        for (std::int64_t i = 0; i < dy.size(); ++i) {
          const T t = T(2) * y[i] - T(1);  // tanh(x)
          dx[i] = dy[i] * (T(1) - t * t) / T(2);
        }
        break;
    }
    return dx;
  }
};

// An ordered list of layers applied in sequence. Owns the parameters; the
// caches inside each layer make backward() valid right after a train-mode
// forward().
template <class T>
class Stack {
 public:
  std::vector<Layer<T>> layers;

  // in_shape excludes the batch dimension.
  void build(const std::vector<LayerSpec>& specs, std::vector<int> in_shape, Rng& rng, double weight_std = 0.02) {
    layers.clear();
    in_shape_ = in_shape;
    for (const auto& s : specs) {
      Layer<T> layer;
      layer.spec = s;
      in_shape = layer.build(in_shape, rng, weight_std);
      layers.push_back(std::move(layer));
    }
    out_shape_ = in_shape;
  }

  const std::vector<int>& input_shape() const { return in_shape_; }
  const std::vector<int>& output_shape() const { return out_shape_; }

  Tensor<T> forward(Tensor<T> x, Mode mode, Rng* rng = nullptr) {
    for (auto& l : layers) x = l.forward(x, mode, rng);
    return x;
  }

  Tensor<T> backward(Tensor<T> dy) {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) dy = it->backward(dy);
    return dy;
  }

  void zero_grads() {
    for (auto& l : layers) l.zero_grads();
  }

  std::vector<Tensor<T>*> param_tensors() {
    std::vector<Tensor<T>*> out;
    for (auto& l : layers)
      for (auto& p : l.params) out.push_back(&p);
    return out;
  }

  std::vector<Tensor<T>*> grad_tensors() {
    std::vector<Tensor<T>*> out;
    for (auto& l : layers)
      for (auto& g : l.grads) out.push_back(&g);
    return out;
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& l : layers)
      for (const auto& p : l.params) n += p.size();
    return n;
  }

 private:
  std::vector<int> in_shape_, out_shape_;
};

}  // namespace erec
