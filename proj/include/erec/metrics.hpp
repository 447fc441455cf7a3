// Image-fidelity metrics and small distributional utilities. Image metrics
// operate on the 8-bit-quantized view of frames (0..255 scale); SSIM uses
// whole-image statistics rather than a sliding window. Divergences use
// natural log.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "erec/image.hpp"
#include "erec/tensor.hpp"

namespace erec {

namespace detail {

inline void check_image_pair(const char* op, const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  if (a.shape().size() != 2 && a.shape().size() != 3)
    throw std::invalid_argument(std::string(op) + ": expected [H,W] or [H,W,C] image, got " + shape_string(a.shape()));
  if (a.size() == 0) throw std::invalid_argument(std::string(op) + ": empty image");
}

// Applies fn(channel_values_a, channel_values_b) per channel and averages.
template <class Fn>
double per_channel_mean(const Tensor<double>& a, const Tensor<double>& b, Fn fn) {
  const std::size_t channels = a.shape().size() == 3 ? a.shape()[2] : 1;
  const std::size_t pixels = a.size() / channels;
  std::vector<double> ca(pixels), cb(pixels);
  double acc = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t p = 0; p < pixels; ++p) {
      ca[p] = a.data()[p * channels + c];
      cb[p] = b.data()[p * channels + c];
    }
    acc += fn(ca, cb);
  }
  return acc / static_cast<double>(channels);
}

}  // namespace detail

// 0..255 integer view of a unit-interval pixel tensor, kept in doubles so the
// metric formulas below apply directly.
template <class T>
Tensor<double> quantized_image(const Tensor<T>& pixels) {
  Tensor<double> out(pixels.shape());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    out.data()[i] = static_cast<double>(quantize_byte(static_cast<double>(pixels.data()[i])));
  return out;
}

// Mean squared pixel difference, per channel then averaged.
inline double mse_image(const Tensor<double>& a, const Tensor<double>& b) {
  detail::check_image_pair("mse_image", a, b);
  return detail::per_channel_mean(a, b, [](const std::vector<double>& x, const std::vector<double>& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
    return acc / static_cast<double>(x.size());
  });
}

// Peak signal-to-noise ratio against a 255 ceiling; identical images give the
// infinite sentinel.
inline double psnr(const Tensor<double>& a, const Tensor<double>& b) {
  const double mse = mse_image(a, b);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(255.0) - 10.0 * std::log10(mse);
}

// Whole-image SSIM with L=255, k1=0.01, k2=0.03; per channel then averaged.
inline double ssim(const Tensor<double>& a, const Tensor<double>& b) {
  detail::check_image_pair("ssim", a, b);
  constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);
  return detail::per_channel_mean(a, b, [](const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      mx += x[i];
      my += y[i];
    }
    mx /= n;
    my /= n;
    double vx = 0.0, vy = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      vx += (x[i] - mx) * (x[i] - mx);
      vy += (y[i] - my) * (y[i] - my);
      cov += (x[i] - mx) * (y[i] - my);
    }
    vx /= n;
    vy /= n;
    cov /= n;
    return ((2.0 * mx * my + kC1) * (2.0 * cov + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
  });
}

struct MetricsReport {
  double mse = 0.0;
  double psnr_db = 0.0;  // +infinity when mse is zero
  double ssim = 0.0;

  // One text line: mse,psnr_db,ssim with "inf" for the infinite sentinel.
  std::string to_line() const {
    char buf[96];
    if (std::isinf(psnr_db)) {
      std::snprintf(buf, sizeof(buf), "%.12g,inf,%.12g", mse, ssim);
    } else {
      std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g", mse, psnr_db, ssim);
    }
    return buf;
  }
};

// All three metrics on the quantized views of two unit-interval pixel tensors.
template <class T>
MetricsReport compare_images(const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<double> qa = quantized_image(a);
  const Tensor<double> qb = quantized_image(b);
  MetricsReport rep;
  rep.mse = mse_image(qa, qb);
  rep.psnr_db = rep.mse == 0.0 ? std::numeric_limits<double>::infinity()
                               : 20.0 * std::log10(255.0) - 10.0 * std::log10(rep.mse);
  rep.ssim = ssim(qa, qb);
  return rep;
}

// Exp-normalization with max subtraction for overflow safety.
inline std::vector<double> softmax(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  const double peak = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - peak);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

namespace detail {

inline void check_distribution(const char* op, const std::vector<double>& p) {
  if (p.empty()) throw std::invalid_argument(std::string(op) + ": empty distribution");
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw std::invalid_argument(std::string(op) + ": negative probability " + std::to_string(x));
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument(std::string(op) + ": probabilities sum to " + std::to_string(sum) + ", expected 1");
}

}  // namespace detail

// Relative entropy in nats; requires q > 0 wherever p > 0.
inline double kl_discrete(const std::vector<double>& p, const std::vector<double>& q) {
  detail::check_distribution("kl_discrete", p);
  detail::check_distribution("kl_discrete", q);
  if (p.size() != q.size())
    throw std::invalid_argument("kl_discrete: length mismatch " + std::to_string(p.size()) + " vs " +
                                std::to_string(q.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0)
      throw std::invalid_argument("kl_discrete: support violation at index " + std::to_string(i));
    acc += p[i] * std::log(p[i] / q[i]);
  }
  return acc;
}

// Symmetrized divergence via the midpoint distribution; bounded by ln 2.
inline double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  detail::check_distribution("js_divergence", p);
  detail::check_distribution("js_divergence", q);
  if (p.size() != q.size())
    throw std::invalid_argument("js_divergence: length mismatch " + std::to_string(p.size()) + " vs " +
                                std::to_string(q.size()));
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * kl_discrete(p, m) + 0.5 * kl_discrete(q, m);
}

// Empirical 1-D optimal transport cost: mean gap between sorted samples.
inline double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein_1d: empty sample set");
  if (a.size() != b.size())
    throw std::invalid_argument("wasserstein_1d: sample count mismatch " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

}  // namespace erec
