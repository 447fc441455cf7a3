// Plain SGD and Adam over flat lists of parameter/gradient tensors. Moment
// buffers are allocated on first use and keyed by position, so a given
// optimizer instance must always see the same tensor list.

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "erec/tensor.hpp"

namespace erec {

enum class OptimizerKind { sgd, adam };

template <class T>
class Optimizer {
 public:
  static Optimizer sgd(double lr) {
    Optimizer o;
    o.kind_ = OptimizerKind::sgd;
    o.lr_ = lr;
    return o;
  }
  // GAN-style defaults; bias correction is always on.
  static Optimizer adam(double lr = 2e-4, double beta1 = 0.5, double beta2 = 0.999, double epsilon = 1e-8) {
    Optimizer o;
    o.kind_ = OptimizerKind::adam;
    o.lr_ = lr;
    o.beta1_ = beta1;
    o.beta2_ = beta2;
    o.epsilon_ = epsilon;
    return o;
  }

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }
  long step_count() const { return steps_; }

  void apply(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>*>& grads) {
    if (params.size() != grads.size())
      throw std::invalid_argument("optimizer: " + std::to_string(params.size()) + " params vs " +
                                  std::to_string(grads.size()) + " grads");
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        const Tensor<T>& g = *grads[i];
        for (std::int64_t j = 0; j < p.size(); ++j) p[j] -= static_cast<T>(lr_) * g[j];
      }
      ++steps_;
      return;
    }
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.emplace_back(std::vector<T>(static_cast<std::size_t>(p->size()), T(0)));
        v_.emplace_back(std::vector<T>(static_cast<std::size_t>(p->size()), T(0)));
      }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("optimizer: tensor list changed between steps");
    ++steps_;
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T corr1 = T(1) - static_cast<T>(std::pow(beta1_, steps_));
    const T corr2 = T(1) - static_cast<T>(std::pow(beta2_, steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = *params[i];
      const Tensor<T>& g = *grads[i];
      if (g.size() != static_cast<std::int64_t>(m_[i].size()))
        throw std::invalid_argument("optimizer: gradient size changed for tensor " + std::to_string(i));
      T* m = m_[i].data();
      T* v = v_[i].data();
      for (std::int64_t j = 0; j < p.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        const T mh = m[j] / corr1;
        const T vh = v[j] / corr2;
        p[j] -= static_cast<T>(lr_) * mh / (std::sqrt(vh) + static_cast<T>(epsilon_));
      }
    }
  }

 private:
  OptimizerKind kind_ = OptimizerKind::sgd;
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, epsilon_ = 1e-8;
  long steps_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

// Clamp every element of every tensor into [lo, hi]; used for critic weight
// clipping.
template <class T>
void clip_tensors(const std::vector<Tensor<T>*>& tensors, T lo, T hi) {
  for (auto* t : tensors)
    for (std::int64_t i = 0; i < t->size(); ++i) t->operator[](i) = std::min(hi, std::max(lo, t->operator[](i)));
}

}  // namespace erec
