// Adversarial variational autoencoder. The encoder maps a frame to the mean
// and log-variance of a Gaussian latent, the decoder maps a reparameterized
// draw back to a frame, and an unbounded critic scores real versus decoded
// frames. Training alternates a clipped critic update with a VAE update whose
// loss optionally carries a small adversarial term. With the critic disabled
// the same loop trains the plain-VAE ablation.

#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "erec/image.hpp"
#include "erec/layers.hpp"
#include "erec/optimizer.hpp"
#include "erec/tensor.hpp"
#include "erec/weights_io.hpp"

namespace erec {

struct AvaeShape {
  int input_size = 64;  // square frame edge; six stride-2 stages need a multiple of 64
  int base_width = 16;  // channel multiplier; 32 reproduces the published 256-scale stack
  int feature_dim = 1;

  void validate() const {
    if (input_size < 64 || input_size % 64 != 0)
      throw std::invalid_argument("avae: input size must be a positive multiple of 64, got " +
                                  std::to_string(input_size));
    if (base_width < 1) throw std::invalid_argument("avae: base width must be >= 1");
    if (feature_dim < 1) throw std::invalid_argument("avae: feature dim must be >= 1");
  }

  int bottleneck_side() const { return input_size / 64; }
  int bottleneck_elements() const { return bottleneck_side() * bottleneck_side() * base_width; }
};

namespace detail {

inline std::vector<LayerSpec> avae_encoder_specs(const AvaeShape& s) {
  const int mult[6] = {1, 2, 4, 8, 16, 1};
  std::vector<LayerSpec> specs;
  for (int i = 0; i < 6; ++i) {
    auto conv = LayerSpec::conv(4, 2, s.base_width * mult[i]);
    conv.name = "enc.conv" + std::to_string(i + 1);
    specs.push_back(conv);
    auto bn = LayerSpec::batch_norm();
    bn.name = "enc.bn" + std::to_string(i + 1);
    specs.push_back(bn);
    auto act = LayerSpec::act(Activation::leaky_relu, 0.2);
    act.name = "enc.act" + std::to_string(i + 1);
    specs.push_back(act);
  }
  auto fc = LayerSpec::fully_connected(2 * s.feature_dim);  // first half mean, second half log-variance
  fc.name = "enc.fc";
  specs.push_back(fc);
  return specs;
}

inline std::vector<LayerSpec> avae_decoder_head_specs(const AvaeShape& s) {
  auto fc = LayerSpec::fully_connected(s.bottleneck_elements());
  fc.name = "dec.fc";
  auto act = LayerSpec::act(Activation::relu);
  act.name = "dec.fc_act";
  return {fc, act};
}

inline std::vector<LayerSpec> avae_decoder_body_specs(const AvaeShape& s) {
  const int mult[5] = {16, 8, 4, 2, 1};
  std::vector<LayerSpec> specs;
  for (int i = 0; i < 5; ++i) {
    auto up = LayerSpec::upsample_conv(4, 2, s.base_width * mult[i]);
    up.name = "dec.up" + std::to_string(i + 1);
    specs.push_back(up);
    auto act = LayerSpec::act(Activation::relu);
    act.name = "dec.act" + std::to_string(i + 1);
    specs.push_back(act);
    auto drop = LayerSpec::dropout(0.5);
    drop.name = "dec.drop" + std::to_string(i + 1);
    specs.push_back(drop);
  }
  auto up = LayerSpec::upsample_conv(4, 2, 3);
  up.name = "dec.up6";
  specs.push_back(up);
  auto act = LayerSpec::act(Activation::tanh_unit);  // pixels land in [0,1]
  act.name = "dec.out";
  specs.push_back(act);
  return specs;
}

inline std::vector<LayerSpec> avae_critic_specs(const AvaeShape& s) {
  const int mult[5] = {1, 2, 4, 8, 16};
  std::vector<LayerSpec> specs;
  for (int i = 0; i < 5; ++i) {
    auto conv = LayerSpec::conv(4, 2, s.base_width * mult[i]);
    conv.name = "disc.conv" + std::to_string(i + 1);
    specs.push_back(conv);
    auto bn = LayerSpec::batch_norm();
    bn.name = "disc.bn" + std::to_string(i + 1);
    specs.push_back(bn);
    auto act = LayerSpec::act(Activation::leaky_relu, 0.2);
    act.name = "disc.act" + std::to_string(i + 1);
    specs.push_back(act);
  }
  auto conv = LayerSpec::conv(4, 2, 1);  // unbounded score map, no norm on the last stage
  conv.name = "disc.conv6";
  specs.push_back(conv);
  auto drop = LayerSpec::dropout(0.5);
  drop.name = "disc.drop";
  specs.push_back(drop);
  return specs;
}

}  // namespace detail

// z = mu + eps * exp(log_var / 2), elementwise.
inline std::vector<double> reparameterize(const std::vector<double>& mu, const std::vector<double>& log_var,
                                          const std::vector<double>& eps) {
  if (mu.size() != log_var.size() || mu.size() != eps.size())
    throw std::invalid_argument("reparameterize: length mismatch " + std::to_string(mu.size()) + "/" +
                                std::to_string(log_var.size()) + "/" + std::to_string(eps.size()));
  std::vector<double> z(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) z[i] = mu[i] + eps[i] * std::exp(0.5 * log_var[i]);
  return z;
}

// 0.5 * pixel MSE - 0.5 * sum(1 + log_var - mu^2 - exp(log_var)) / pixel
// count; the second term is zero at the standard normal and negative
// elsewhere. Both terms share the pixel-count divisor so their ratio matches
// the summed form; a per-latent divisor overweights the prior by the pixel
// count and collapses small latent spaces.
template <class T>
double vae_loss(const Tensor<T>& target, const Tensor<T>& recon, const Tensor<T>& mu, const Tensor<T>& log_var) {
  if (target.shape() != recon.shape())
    throw std::invalid_argument("vae_loss: frame shape mismatch " + shape_string(target.shape()) + " vs " +
                                shape_string(recon.shape()));
  if (mu.shape() != log_var.shape())
    throw std::invalid_argument("vae_loss: moment shape mismatch " + shape_string(mu.shape()) + " vs " +
                                shape_string(log_var.shape()));
  double mse = 0.0;
  for (std::int64_t i = 0; i < target.size(); ++i) {
    const double d = static_cast<double>(recon[i]) - static_cast<double>(target[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(target.size());
  double kl = 0.0;
  for (std::int64_t i = 0; i < mu.size(); ++i) {
    const double m = static_cast<double>(mu[i]);
    const double lv = static_cast<double>(log_var[i]);
    kl += 1.0 + lv - m * m - std::exp(lv);
  }
  kl /= static_cast<double>(target.size());
  return 0.5 * mse - 0.5 * kl;
}

// Mean critic score on real frames minus mean on decoded frames (the quantity
// the critic drives up).
inline double critic_objective(const std::vector<double>& real_scores, const std::vector<double>& decoded_scores) {
  if (real_scores.empty() || decoded_scores.empty()) throw std::invalid_argument("critic_objective: empty batch");
  double r = 0.0, f = 0.0;
  for (double s : real_scores) r += s;
  for (double s : decoded_scores) f += s;
  return r / static_cast<double>(real_scores.size()) - f / static_cast<double>(decoded_scores.size());
}

template <class T>
class Avae {
 public:
  using value_type = T;

  Avae(const AvaeShape& shape, unsigned long long init_seed) : shape_(shape) {
    shape_.validate();
    Rng rng(init_seed);
    encoder_.build(detail::avae_encoder_specs(shape_), {shape_.input_size, shape_.input_size, 3}, rng);
    dec_head_.build(detail::avae_decoder_head_specs(shape_), {shape_.feature_dim}, rng);
    dec_body_.build(detail::avae_decoder_body_specs(shape_),
                    {shape_.bottleneck_side(), shape_.bottleneck_side(), shape_.base_width}, rng);
    critic_.build(detail::avae_critic_specs(shape_), {shape_.input_size, shape_.input_size, 3}, rng);
    critic_map_elems_ = element_count(critic_.output_shape());
  }

  const AvaeShape& shape() const { return shape_; }
  int input_height() const { return shape_.input_size; }
  int input_width() const { return shape_.input_size; }
  int feature_dim() const { return shape_.feature_dim; }

  // activations entering the encoder's fully connected head, from the built stack
  std::int64_t pre_fc_elements() const { return element_count(encoder_.layers.back().input_shape()); }

  Stack<T>& encoder() { return encoder_; }
  Stack<T>& decoder_head() { return dec_head_; }
  Stack<T>& decoder_body() { return dec_body_; }
  Stack<T>& critic() { return critic_; }

  // ---- batched paths (trainer) ----

  // frames [N,H,W,3] -> [N, 2*feature_dim]; columns 0..fd-1 are means,
  // fd..2fd-1 log-variances.
  Tensor<T> encode_moments(const Tensor<T>& frames, Mode mode) { return encoder_.forward(frames, mode); }

  Tensor<T> decode_batch(const Tensor<T>& z, Mode mode, Rng* rng = nullptr) {
    const int n = z.dim(0);
    Tensor<T> y = dec_head_.forward(z, mode, rng);
    y = y.reshaped({n, shape_.bottleneck_side(), shape_.bottleneck_side(), shape_.base_width});
    return dec_body_.forward(std::move(y), mode, rng);
  }

  // gradient of the last decode_batch; returns d/dz [N, feature_dim]
  Tensor<T> decode_backward(const Tensor<T>& d_frames) {
    const int n = d_frames.dim(0);
    Tensor<T> d = dec_body_.backward(d_frames);
    d = d.reshaped({n, shape_.bottleneck_elements()});
    return dec_head_.backward(d);
  }

  std::vector<double> critic_scores(const Tensor<T>& frames, Mode mode, Rng* rng = nullptr) {
    const Tensor<T> maps = critic_.forward(frames, mode, rng);
    const int n = maps.dim(0);
    const std::int64_t per = maps.size() / n;
    std::vector<double> scores(n, 0.0);
    for (int s = 0; s < n; ++s) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < per; ++i) acc += static_cast<double>(maps[s * per + i]);
      scores[s] = acc / static_cast<double>(per);
    }
    return scores;
  }

  // gradient of the last critic_scores; returns d/d frames
  Tensor<T> critic_backward(const std::vector<double>& d_scores) {
    const int n = static_cast<int>(d_scores.size());
    std::vector<int> map_shape = critic_.output_shape();
    map_shape.insert(map_shape.begin(), n);
    Tensor<T> dy(map_shape);
    const std::int64_t per = critic_map_elems_;
    for (int s = 0; s < n; ++s) {
      const T g = static_cast<T>(d_scores[s] / static_cast<double>(per));
      for (std::int64_t i = 0; i < per; ++i) dy[s * per + i] = g;
    }
    return critic_.backward(dy);
  }

  // ---- single-frame paths (eval mode, deterministic) ----

  std::pair<std::vector<double>, std::vector<double>> encode(const Tensor<T>& pixels) {
    Tensor<T> m = encode_moments(batch_of_one(pixels), Mode::eval);
    const int fd = shape_.feature_dim;
    std::vector<double> mu(fd), log_var(fd);
    for (int k = 0; k < fd; ++k) {
      mu[k] = static_cast<double>(m[k]);
      log_var[k] = static_cast<double>(m[fd + k]);
    }
    return {std::move(mu), std::move(log_var)};
  }

  std::vector<double> encode_mean(const Tensor<T>& pixels) { return encode(pixels).first; }

  Tensor<T> decode(const std::vector<double>& z) {
    const int fd = shape_.feature_dim;
    if (static_cast<int>(z.size()) != fd)
      throw std::invalid_argument("decode: latent has " + std::to_string(z.size()) + " entries, model expects " +
                                  std::to_string(fd));
    Tensor<T> zb({1, fd});
    for (int k = 0; k < fd; ++k) zb[k] = static_cast<T>(z[k]);
    Tensor<T> out = decode_batch(zb, Mode::eval);
    return out.reshaped({shape_.input_size, shape_.input_size, 3});
  }

  double discriminator_loss(const Tensor<T>& real, const Tensor<T>& decoded) {
    return critic_objective(critic_scores(real, Mode::eval), critic_scores(decoded, Mode::eval));
  }

  void save(const std::string& path) const {
    save_weights<T>(path, {&encoder_, &dec_head_, &dec_body_, &critic_});
  }
  void load(const std::string& path) { load_weights<T>(path, {&encoder_, &dec_head_, &dec_body_, &critic_}); }

 private:
  Tensor<T> batch_of_one(const Tensor<T>& pixels) const {
    const std::vector<int> want = {shape_.input_size, shape_.input_size, 3};
    if (pixels.shape() != want)
      throw std::invalid_argument("encode: frame is " + shape_string(pixels.shape()) + ", model expects " +
                                  shape_string(want));
    Tensor<T> batch({1, want[0], want[1], want[2]});
    for (std::int64_t i = 0; i < pixels.size(); ++i) batch[i] = pixels[i];
    return batch;
  }

  AvaeShape shape_;
  Stack<T> encoder_, dec_head_, dec_body_, critic_;
  std::int64_t critic_map_elems_ = 0;
};

struct TrainConfig {
  int epochs = 150;
  int batch_size = 16;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double lambda_adv = 0.05;
  double critic_clip = 0.01;
  bool adversarial = true;
  unsigned long long seed = 1;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("train: learning rate must be positive");
    if (lambda_adv < 0.0) throw std::invalid_argument("train: adversarial weight must be >= 0");
    if (critic_clip <= 0.0) throw std::invalid_argument("train: critic clip must be positive");
  }
};

struct EpochStats {
  int epoch = 0;
  double vae_loss = 0.0;
  double critic_loss = 0.0;  // zero when the critic is disabled
};

// One VAE update's forward and backward passes over a prepared batch: zeroes
// the encoder/decoder gradient accumulators, refills them, and returns the
// batch VAE loss. eps holds the standard-normal reparameterization draws
// ([batch, feature_dim]). With lambda_adv > 0 the gradients additionally
// carry -lambda_adv * mean critic score (the critic's own accumulators become
// scratch); the returned value excludes that term. Critic parameters are
// never changed here.
template <class T>
double vae_step_gradients(Avae<T>& model, const Tensor<T>& x, const Tensor<T>& eps, double lambda_adv,
                          Rng* rng_gen, Rng* rng_critic) {
  const int nb = x.dim(0);
  const int fd = model.feature_dim();
  if (eps.shape() != std::vector<int>{nb, fd})
    throw std::invalid_argument("vae_step_gradients: eps is " + shape_string(eps.shape()) + ", expected [" +
                                std::to_string(nb) + "," + std::to_string(fd) + "]");
  for (Stack<T>* s : {&model.encoder(), &model.decoder_head(), &model.decoder_body()}) s->zero_grads();

  const Tensor<T> m = model.encode_moments(x, Mode::train);
  Tensor<T> mu({nb, fd}), lv({nb, fd}), z({nb, fd});
  for (int s = 0; s < nb; ++s)
    for (int k = 0; k < fd; ++k) {
      mu[s * fd + k] = m[s * 2 * fd + k];
      lv[s * fd + k] = m[s * 2 * fd + fd + k];
      z[s * fd + k] = static_cast<T>(static_cast<double>(mu[s * fd + k]) +
                                     static_cast<double>(eps[s * fd + k]) *
                                         std::exp(0.5 * static_cast<double>(lv[s * fd + k])));
    }
  const Tensor<T> recon = model.decode_batch(z, Mode::train, rng_gen);
  const double loss = vae_loss(x, recon, mu, lv);

  Tensor<T> d_recon(recon.shape());
  const T inv_px = static_cast<T>(1.0 / static_cast<double>(recon.size()));
  for (std::int64_t i = 0; i < recon.size(); ++i) d_recon[i] = (recon[i] - x[i]) * inv_px;
  if (lambda_adv > 0.0) {
    model.critic_scores(recon, Mode::train, rng_critic);
    const Tensor<T> d_adv = model.critic_backward(std::vector<double>(nb, -lambda_adv / nb));
    for (std::int64_t i = 0; i < d_recon.size(); ++i) d_recon[i] += d_adv[i];
  }

  const Tensor<T> dz = model.decode_backward(d_recon);
  Tensor<T> dm({nb, 2 * fd});
  const double kl_scale = 1.0 / static_cast<double>(recon.size());
  for (int s = 0; s < nb; ++s)
    for (int k = 0; k < fd; ++k) {
      const double g = static_cast<double>(dz[s * fd + k]);
      const double mv = static_cast<double>(mu[s * fd + k]);
      const double lvv = static_cast<double>(lv[s * fd + k]);
      const double ev = static_cast<double>(eps[s * fd + k]);
      dm[s * 2 * fd + k] = static_cast<T>(g + mv * kl_scale);
      dm[s * 2 * fd + fd + k] =
          static_cast<T>(g * ev * 0.5 * std::exp(0.5 * lvv) + 0.5 * (std::exp(lvv) - 1.0) * kl_scale);
    }
  model.encoder().backward(dm);
  return loss;
}

// Matching forward-only evaluation of the loss vae_step_gradients
// differentiates, for gradient checking.
template <class T>
double vae_step_loss(Avae<T>& model, const Tensor<T>& x, const Tensor<T>& eps, double lambda_adv, Rng* rng_gen,
                     Rng* rng_critic) {
  const int nb = x.dim(0);
  const int fd = model.feature_dim();
  const Tensor<T> m = model.encode_moments(x, Mode::train);
  Tensor<T> mu({nb, fd}), lv({nb, fd}), z({nb, fd});
  for (int s = 0; s < nb; ++s)
    for (int k = 0; k < fd; ++k) {
      mu[s * fd + k] = m[s * 2 * fd + k];
      lv[s * fd + k] = m[s * 2 * fd + fd + k];
      z[s * fd + k] = static_cast<T>(static_cast<double>(mu[s * fd + k]) +
                                     static_cast<double>(eps[s * fd + k]) *
                                         std::exp(0.5 * static_cast<double>(lv[s * fd + k])));
    }
  const Tensor<T> recon = model.decode_batch(z, Mode::train, rng_gen);
  double loss = vae_loss(x, recon, mu, lv);
  if (lambda_adv > 0.0) {
    const auto scores = model.critic_scores(recon, Mode::train, rng_critic);
    double mean = 0.0;
    for (double s : scores) mean += s;
    loss -= lambda_adv * mean / static_cast<double>(scores.size());
  }
  return loss;
}

namespace detail {

template <class T>
Tensor<T> gather_batch(const FrameSequence<T>& data, const std::vector<int>& order, int start, int count) {
  const int h = data.frames[0].height(), w = data.frames[0].width();
  Tensor<T> batch({count, h, w, 3});
  const std::int64_t per = static_cast<std::int64_t>(h) * w * 3;
  for (int s = 0; s < count; ++s) {
    const auto& src = data.frames[order[start + s]].pixels;
    for (std::int64_t i = 0; i < per; ++i) batch[s * per + i] = src[i];
  }
  return batch;
}

}  // namespace detail

// Alternating critic/VAE training over shuffled full batches (remainder
// dropped). Separate random streams feed shuffling, latent draws, decoder
// dropout, and everything critic-related, so a run with lambda_adv = 0 leaves
// the encoder and decoder bitwise identical to a critic-disabled run.
template <class T>
std::vector<EpochStats> train_avae(Avae<T>& model, const FrameSequence<T>& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  const int n_frames = static_cast<int>(data.frames.size());
  if (n_frames < 2 * cfg.batch_size)
    throw std::invalid_argument("train_avae: need at least " + std::to_string(2 * cfg.batch_size) + " frames, got " +
                                std::to_string(n_frames));
  if (data.frames[0].height() != model.input_height() || data.frames[0].width() != model.input_width())
    throw std::invalid_argument("train_avae: frames are " + std::to_string(data.frames[0].height()) + "x" +
                                std::to_string(data.frames[0].width()) + ", model expects " +
                                std::to_string(model.input_height()) + "x" + std::to_string(model.input_width()));

  Rng root(cfg.seed);
  Rng rng_shuffle = root.fork();
  Rng rng_eps = root.fork();
  Rng rng_gen = root.fork();
  Rng rng_critic = root.fork();

  std::vector<Tensor<T>*> gen_params, gen_grads;
  for (Stack<T>* s : {&model.encoder(), &model.decoder_head(), &model.decoder_body()}) {
    for (auto* p : s->param_tensors()) gen_params.push_back(p);
    for (auto* g : s->grad_tensors()) gen_grads.push_back(g);
  }
  auto critic_params = model.critic().param_tensors();
  auto critic_grads = model.critic().grad_tensors();

  Optimizer<T> opt_gen = Optimizer<T>::adam(cfg.learning_rate, cfg.beta1, cfg.beta2);
  Optimizer<T> opt_critic = Optimizer<T>::adam(cfg.learning_rate, cfg.beta1, cfg.beta2);

  const int fd = model.feature_dim();
  const int nb = cfg.batch_size;
  std::vector<int> order(n_frames);
  for (int i = 0; i < n_frames; ++i) order[i] = i;

  auto draw_eps = [&](Rng& rng) {
    Tensor<T> eps({nb, fd});
    for (std::int64_t i = 0; i < eps.size(); ++i) eps[i] = static_cast<T>(rng.normal());
    return eps;
  };

  std::vector<EpochStats> history;
  history.reserve(cfg.epochs);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng_shuffle.shuffle(order);
    double vae_sum = 0.0, critic_sum = 0.0;
    int batches = 0;
    for (int start = 0; start + nb <= n_frames; start += nb, ++batches) {
      const Tensor<T> x = detail::gather_batch(data, order, start, nb);
      const auto diag = [&](const char* what) {
        return std::string("train_avae: ") + what + " at epoch " + std::to_string(epoch) + ", batch " +
               std::to_string(batches);
      };

      if (cfg.adversarial) {
        // Fakes come from the generator in eval mode: the critic step must not
        // touch encoder statistics, so a lambda_adv of zero stays equivalent
        // to disabling the critic outright.
        const Tensor<T> m = model.encode_moments(x, Mode::eval);
        const Tensor<T> eps = draw_eps(rng_critic);
        Tensor<T> z({nb, fd});
        for (int s = 0; s < nb; ++s)
          for (int k = 0; k < fd; ++k)
            z[s * fd + k] = static_cast<T>(static_cast<double>(m[s * 2 * fd + k]) +
                                           static_cast<double>(eps[s * fd + k]) *
                                               std::exp(0.5 * static_cast<double>(m[s * 2 * fd + fd + k])));
        const Tensor<T> fakes = model.decode_batch(z, Mode::eval);

        model.critic().zero_grads();
        const auto real_scores = model.critic_scores(x, Mode::train, &rng_critic);
        model.critic_backward(std::vector<double>(nb, -1.0 / nb));
        const auto fake_scores = model.critic_scores(fakes, Mode::train, &rng_critic);
        model.critic_backward(std::vector<double>(nb, 1.0 / nb));
        opt_critic.apply(critic_params, critic_grads);
        clip_tensors(critic_params, static_cast<T>(-cfg.critic_clip), static_cast<T>(cfg.critic_clip));

        const double obj = critic_objective(real_scores, fake_scores);
        if (!std::isfinite(obj)) throw std::runtime_error(diag("non-finite critic objective"));
        critic_sum += obj;
      }

      const double loss = vae_step_gradients(model, x, draw_eps(rng_eps),
                                             cfg.adversarial ? cfg.lambda_adv : 0.0, &rng_gen, &rng_critic);
      if (!std::isfinite(loss)) throw std::runtime_error(diag("non-finite loss"));
      vae_sum += loss;
      opt_gen.apply(gen_params, gen_grads);
    }
    history.push_back({epoch, vae_sum / batches, cfg.adversarial ? critic_sum / batches : 0.0});
  }
  return history;
}

// ---- history file: epoch,vae_loss,critic_loss ----

inline void save_history(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_history: cannot open " + path);
  os << "epoch,vae_loss,critic_loss\n";
  char buf[96];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", e.epoch, e.vae_loss, e.critic_loss);
    os << buf;
  }
  if (!os) throw std::runtime_error("save_history: write failed for " + path);
}

inline std::vector<EpochStats> load_history(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_history: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != "epoch,vae_loss,critic_loss")
    throw std::runtime_error("load_history: missing header in " + path);
  std::vector<EpochStats> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    EpochStats e;
    char* end = nullptr;
    e.epoch = static_cast<int>(std::strtol(line.c_str(), &end, 10));
    if (!end || *end != ',') throw std::runtime_error("load_history: bad row '" + line + "'");
    e.vae_loss = std::strtod(end + 1, &end);
    if (!end || *end != ',') throw std::runtime_error("load_history: bad row '" + line + "'");
    e.critic_loss = std::strtod(end + 1, nullptr);
    out.push_back(e);
  }
  return out;
}

}  // namespace erec
