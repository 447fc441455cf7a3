// Conditional enhancement network. The generator is an encoder-decoder over
// the blurry condition frame with the encoder output of every level
// depth-concatenated into the matching decoder level, plus Gaussian noise
// channels at the bottleneck (zeroed in eval so generation is deterministic).
// The discriminator scores the depth-concatenation of candidate and condition
// through a sigmoid. Generator training mixes the adversarial term with a
// heavily weighted L1 pull toward the target frame.

#pragma once

#include <algorithm>
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

namespace detail {

template <class T>
Tensor<T> concat_depth(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 4 || b.ndim() != 4 || a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw std::invalid_argument("concat_depth: incompatible shapes " + shape_string(a.shape()) + " and " +
                                shape_string(b.shape()));
  const int n = a.dim(0), h = a.dim(1), w = a.dim(2), ca = a.dim(3), cb = b.dim(3);
  Tensor<T> out({n, h, w, ca + cb});
  const std::int64_t pixels = static_cast<std::int64_t>(n) * h * w;
  for (std::int64_t p = 0; p < pixels; ++p) {
    T* dst = out.data() + p * (ca + cb);
    const T* pa = a.data() + p * ca;
    const T* pb = b.data() + p * cb;
    for (int c = 0; c < ca; ++c) dst[c] = pa[c];
    for (int c = 0; c < cb; ++c) dst[ca + c] = pb[c];
  }
  return out;
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> split_depth(const Tensor<T>& x, int c_first) {
  if (x.ndim() != 4 || c_first <= 0 || c_first >= x.dim(3))
    throw std::invalid_argument("split_depth: cannot take " + std::to_string(c_first) + " channels of " +
                                shape_string(x.shape()));
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor<T> a({n, h, w, c_first}), b({n, h, w, c - c_first});
  const std::int64_t pixels = static_cast<std::int64_t>(n) * h * w;
  for (std::int64_t p = 0; p < pixels; ++p) {
    const T* src = x.data() + p * c;
    T* pa = a.data() + p * c_first;
    T* pb = b.data() + p * (c - c_first);
    for (int i = 0; i < c_first; ++i) pa[i] = src[i];
    for (int i = 0; i < c - c_first; ++i) pb[i] = src[c_first + i];
  }
  return {std::move(a), std::move(b)};
}

}  // namespace detail

struct CganShape {
  int input_size = 64;   // square frames, multiple of 64 (six stride-2 levels)
  int base_width = 16;
  int noise_channels = 4;

  void validate() const {
    if (input_size < 64 || input_size % 64 != 0)
      throw std::invalid_argument("cgan: input size must be a positive multiple of 64, got " +
                                  std::to_string(input_size));
    if (base_width < 1) throw std::invalid_argument("cgan: base width must be >= 1");
    if (noise_channels < 1) throw std::invalid_argument("cgan: noise channels must be >= 1");
  }

  int bottleneck_side() const { return input_size / 64; }
};

template <class T>
class Cgan {
 public:
  using value_type = T;
  static constexpr int kLevels = 6;

  Cgan(const CganShape& shape, unsigned long long init_seed) : shape_(shape) {
    shape_.validate();
    Rng rng(init_seed);
    const int b = shape_.base_width;
    const int down_depth[kLevels] = {b, 2 * b, 4 * b, 8 * b, 16 * b, 16 * b};
    const int up_depth[kLevels] = {16 * b, 8 * b, 4 * b, 2 * b, b, 3};

    std::vector<int> in_shape = {shape_.input_size, shape_.input_size, 3};
    for (int i = 0; i < kLevels; ++i) {
      std::vector<LayerSpec> specs;
      auto conv = LayerSpec::conv(4, 2, down_depth[i]);
      conv.name = "gen.down" + std::to_string(i + 1);
      specs.push_back(conv);
      auto bn = LayerSpec::batch_norm();
      bn.name = "gen.down_bn" + std::to_string(i + 1);
      specs.push_back(bn);
      auto act = LayerSpec::act(Activation::leaky_relu, 0.2);
      act.name = "gen.down_act" + std::to_string(i + 1);
      specs.push_back(act);
      down_[i].build(specs, in_shape, rng);
      in_shape = down_[i].output_shape();
    }

    in_shape[2] += shape_.noise_channels;  // bottleneck noise concat
    for (int i = 0; i < kLevels; ++i) {
      std::vector<LayerSpec> specs;
      auto up = LayerSpec::upsample_conv(4, 2, up_depth[i]);
      up.name = "gen.up" + std::to_string(i + 1);
      specs.push_back(up);
      if (i + 1 < kLevels) {
        auto bn = LayerSpec::batch_norm();
        bn.name = "gen.up_bn" + std::to_string(i + 1);
        specs.push_back(bn);
        auto act = LayerSpec::act(Activation::relu);
        act.name = "gen.up_act" + std::to_string(i + 1);
        specs.push_back(act);
      } else {
        auto act = LayerSpec::act(Activation::tanh_unit);
        act.name = "gen.out";
        specs.push_back(act);
      }
      up_[i].build(specs, in_shape, rng);
      in_shape = up_[i].output_shape();
      if (i + 1 < kLevels) in_shape[2] += down_[kLevels - 2 - i].output_shape()[2];  // skip feed
    }

    const int disc_depth[kLevels] = {b, 2 * b, 4 * b, 8 * b, 16 * b, 1};
    std::vector<LayerSpec> specs;
    for (int i = 0; i < kLevels; ++i) {
      auto conv = LayerSpec::conv(4, 2, disc_depth[i]);
      conv.name = "disc.conv" + std::to_string(i + 1);
      specs.push_back(conv);
      if (i + 1 < kLevels) {
        auto bn = LayerSpec::batch_norm();
        bn.name = "disc.bn" + std::to_string(i + 1);
        specs.push_back(bn);
        auto act = LayerSpec::act(Activation::leaky_relu, 0.2);
        act.name = "disc.act" + std::to_string(i + 1);
        specs.push_back(act);
      }
    }
    disc_.build(specs, {shape_.input_size, shape_.input_size, 6}, rng);  // candidate + condition
  }

  const CganShape& shape() const { return shape_; }
  int input_height() const { return shape_.input_size; }
  int input_width() const { return shape_.input_size; }
  int discriminator_input_channels() const { return disc_.input_shape()[2]; }

  Stack<T>& down(int i) { return down_[i]; }
  Stack<T>& up(int i) { return up_[i]; }
  Stack<T>& discriminator() { return disc_; }

  std::vector<Stack<T>*> generator_stacks() {
    std::vector<Stack<T>*> out;
    for (int i = 0; i < kLevels; ++i) out.push_back(&down_[i]);
    for (int i = 0; i < kLevels; ++i) out.push_back(&up_[i]);
    return out;
  }

  // ---- batched generator paths ----

  // conditions [N,S,S,3] -> frames [N,S,S,3]; in train mode the bottleneck
  // noise comes from rng, in eval it is zero.
  Tensor<T> generate_batch(const Tensor<T>& conditions, Mode mode, Rng* rng = nullptr) {
    check_batch(conditions, 3, "generate");
    const int n = conditions.dim(0);
    Tensor<T> x = conditions;
    for (int i = 0; i < kLevels; ++i) {
      x = down_[i].forward(std::move(x), mode, rng);
      skips_[i] = x;
    }
    Tensor<T> noise({n, shape_.bottleneck_side(), shape_.bottleneck_side(), shape_.noise_channels});
    if (mode == Mode::train) {
      if (!rng) throw std::invalid_argument("generate: train mode needs a random stream");
      for (std::int64_t i = 0; i < noise.size(); ++i) noise[i] = static_cast<T>(rng->normal());
    }
    x = detail::concat_depth(skips_[kLevels - 1], noise);
    for (int i = 0; i < kLevels; ++i) {
      x = up_[i].forward(std::move(x), mode, rng);
      if (i + 1 < kLevels) x = detail::concat_depth(x, skips_[kLevels - 2 - i]);
    }
    return x;
  }

  // gradient of the last generate_batch; returns d/d conditions
  Tensor<T> generate_backward(const Tensor<T>& d_out) {
    Tensor<T> d = d_out;
    std::vector<Tensor<T>> d_skip(kLevels);
    for (int i = kLevels - 1; i >= 0; --i) {
      if (i + 1 < kLevels) {
        auto [d_up, d_sk] = detail::split_depth(d, up_[i].output_shape()[2]);
        d_skip[kLevels - 2 - i] = std::move(d_sk);
        d = up_[i].backward(std::move(d_up));
      } else {
        d = up_[i].backward(std::move(d));
      }
    }
    {
      auto [d_bottleneck, d_noise] = detail::split_depth(d, down_[kLevels - 1].output_shape()[2]);
      d = std::move(d_bottleneck);  // noise gradient has nowhere to go
    }
    for (int i = kLevels - 1; i >= 0; --i) {
      if (i < kLevels - 1)
        for (std::int64_t k = 0; k < d.size(); ++k) d[k] += d_skip[i][k];
      d = down_[i].backward(std::move(d));
    }
    return d;
  }

  // ---- discriminator paths; outputs are pre-sigmoid logit maps ----

  Tensor<T> discriminate_logits(const Tensor<T>& candidates, const Tensor<T>& conditions, Mode mode,
                                Rng* rng = nullptr) {
    check_batch(candidates, 3, "discriminate");
    check_batch(conditions, 3, "discriminate");
    return disc_.forward(detail::concat_depth(candidates, conditions), mode, rng);
  }

  // gradient of the last discriminate_logits wrt the candidate frames
  Tensor<T> discriminate_backward(const Tensor<T>& d_logits) {
    return detail::split_depth(disc_.backward(d_logits), 3).first;
  }

  // ---- single-frame eval paths ----

  Tensor<T> generate(const Tensor<T>& condition) {
    return generate_batch(batch_of_one(condition, "generate"), Mode::eval)
        .reshaped({shape_.input_size, shape_.input_size, 3});
  }

  // mean sigmoid of the logit map, strictly inside (0,1)
  double discriminate(const Tensor<T>& frame, const Tensor<T>& condition) {
    const Tensor<T> logits = discriminate_logits(batch_of_one(frame, "discriminate"),
                                                 batch_of_one(condition, "discriminate"), Mode::eval);
    double acc = 0.0;
    for (std::int64_t i = 0; i < logits.size(); ++i)
      acc += 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
    return acc / static_cast<double>(logits.size());
  }

  void save(const std::string& path) const {
    std::vector<const Stack<T>*> stacks;
    for (int i = 0; i < kLevels; ++i) stacks.push_back(&down_[i]);
    for (int i = 0; i < kLevels; ++i) stacks.push_back(&up_[i]);
    stacks.push_back(&disc_);
    save_weights<T>(path, stacks);
  }
  void load(const std::string& path) {
    std::vector<Stack<T>*> stacks;
    for (int i = 0; i < kLevels; ++i) stacks.push_back(&down_[i]);
    for (int i = 0; i < kLevels; ++i) stacks.push_back(&up_[i]);
    stacks.push_back(&disc_);
    load_weights<T>(path, stacks);
  }

 private:
  void check_batch(const Tensor<T>& x, int channels, const char* op) const {
    if (x.ndim() != 4 || x.dim(1) != shape_.input_size || x.dim(2) != shape_.input_size || x.dim(3) != channels)
      throw std::invalid_argument(std::string(op) + ": batch is " + shape_string(x.shape()) + ", model expects [N," +
                                  std::to_string(shape_.input_size) + "," + std::to_string(shape_.input_size) + "," +
                                  std::to_string(channels) + "]");
  }

  Tensor<T> batch_of_one(const Tensor<T>& pixels, const char* op) const {
    const std::vector<int> want = {shape_.input_size, shape_.input_size, 3};
    if (pixels.shape() != want)
      throw std::invalid_argument(std::string(op) + ": frame is " + shape_string(pixels.shape()) +
                                  ", model expects " + shape_string(want));
    Tensor<T> batch({1, want[0], want[1], want[2]});
    for (std::int64_t i = 0; i < pixels.size(); ++i) batch[i] = pixels[i];
    return batch;
  }

  CganShape shape_;
  Stack<T> down_[kLevels], up_[kLevels], disc_;
  Tensor<T> skips_[kLevels];  // per-level encoder outputs from the last generate_batch
};

// Condition/target frames aligned by iteration index.
template <class T>
struct PairedSet {
  struct Item {
    Frame<T> condition;
    Frame<T> target;
  };
  std::vector<Item> items;

  void validate() const {
    if (items.empty()) throw std::invalid_argument("paired set: empty");
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& it = items[i];
      if (it.condition.pixels.shape() != it.target.pixels.shape())
        throw std::invalid_argument("paired set: pair " + std::to_string(i) + " mixes " +
                                    shape_string(it.condition.pixels.shape()) + " and " +
                                    shape_string(it.target.pixels.shape()));
      if (it.condition.pixels.shape() != items[0].condition.pixels.shape())
        throw std::invalid_argument("paired set: pair " + std::to_string(i) + " dims differ from pair 0");
      for (std::size_t j = i + 1; j < items.size(); ++j)
        if (items[j].condition.meta.iteration_index == it.condition.meta.iteration_index)
          throw std::invalid_argument("paired set: duplicate iteration index " +
                                      std::to_string(it.condition.meta.iteration_index));
    }
  }
};

// Pairs every condition frame with the target frame carrying the same
// iteration index.
template <class T>
PairedSet<T> make_paired_set(const FrameSequence<T>& conditions, const FrameSequence<T>& targets) {
  PairedSet<T> out;
  for (const auto& c : conditions.frames) {
    const Frame<T>* match = nullptr;
    for (const auto& t : targets.frames)
      if (t.meta.iteration_index == c.meta.iteration_index) {
        match = &t;
        break;
      }
    if (!match)
      throw std::invalid_argument("paired set: no target frame for iteration index " +
                                  std::to_string(c.meta.iteration_index));
    out.items.push_back({c, *match});
  }
  out.validate();
  return out;
}

struct CganTrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double lambda_rec = 100.0;        // L1 weight in the generator loss
  double adversarial_weight = 1.0;  // 0 turns training into pure regression
  unsigned long long seed = 1;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("cgan train: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("cgan train: batch size must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("cgan train: learning rate must be positive");
    if (lambda_rec < 0.0 || adversarial_weight < 0.0)
      throw std::invalid_argument("cgan train: loss weights must be >= 0");
  }
};

struct CganEpochStats {
  int epoch = 0;
  double g_loss = 0.0;
  double d_loss = 0.0;
};

namespace detail {

// mean over elements of the stable logit form of binary cross-entropy against
// a constant label; fills d_logits with the per-element gradient scaled by
// `weight`.
template <class T>
double bce_with_logits(const Tensor<T>& logits, double label, double weight, Tensor<T>& d_logits) {
  double acc = 0.0;
  const double inv = 1.0 / static_cast<double>(logits.size());
  for (std::int64_t i = 0; i < logits.size(); ++i) {
    const double l = static_cast<double>(logits[i]);
    acc += std::max(l, 0.0) - l * label + std::log1p(std::exp(-std::abs(l)));
    const double sig = 1.0 / (1.0 + std::exp(-l));
    d_logits[i] = static_cast<T>(weight * (sig - label) * inv);
  }
  return acc * inv;
}

}  // namespace detail

// Alternating discriminator/generator updates over shuffled full batches.
// History records per-epoch means of the generator loss
// (adversarial_weight * BCE + lambda_rec * L1) and the discriminator loss
// (BCE real-as-real plus fake-as-fake).
template <class T>
std::vector<CganEpochStats> train_cgan(Cgan<T>& model, const PairedSet<T>& pairs, const CganTrainConfig& cfg) {
  cfg.validate();
  pairs.validate();
  const int n_pairs = static_cast<int>(pairs.items.size());
  if (n_pairs < 2 * cfg.batch_size)
    throw std::invalid_argument("train_cgan: need at least " + std::to_string(2 * cfg.batch_size) + " pairs, got " +
                                std::to_string(n_pairs));
  if (pairs.items[0].condition.height() != model.input_height() ||
      pairs.items[0].condition.width() != model.input_width())
    throw std::invalid_argument("train_cgan: pairs are " + std::to_string(pairs.items[0].condition.height()) + "x" +
                                std::to_string(pairs.items[0].condition.width()) + ", model expects " +
                                std::to_string(model.input_height()) + "x" + std::to_string(model.input_width()));

  Rng root(cfg.seed);
  Rng rng_shuffle = root.fork();
  Rng rng_gen = root.fork();
  Rng rng_disc = root.fork();

  std::vector<Tensor<T>*> gen_params, gen_grads;
  for (Stack<T>* s : model.generator_stacks()) {
    for (auto* p : s->param_tensors()) gen_params.push_back(p);
    for (auto* g : s->grad_tensors()) gen_grads.push_back(g);
  }
  auto disc_params = model.discriminator().param_tensors();
  auto disc_grads = model.discriminator().grad_tensors();
  Optimizer<T> opt_gen = Optimizer<T>::adam(cfg.learning_rate, cfg.beta1, cfg.beta2);
  Optimizer<T> opt_disc = Optimizer<T>::adam(cfg.learning_rate, cfg.beta1, cfg.beta2);

  const int nb = cfg.batch_size;
  const int h = model.input_height(), w = model.input_width();
  const std::int64_t per = static_cast<std::int64_t>(h) * w * 3;
  std::vector<int> order(n_pairs);
  for (int i = 0; i < n_pairs; ++i) order[i] = i;

  auto gather = [&](int start, bool condition) {
    Tensor<T> batch({nb, h, w, 3});
    for (int s = 0; s < nb; ++s) {
      const auto& item = pairs.items[order[start + s]];
      const auto& px = condition ? item.condition.pixels : item.target.pixels;
      for (std::int64_t i = 0; i < per; ++i) batch[s * per + i] = px[i];
    }
    return batch;
  };

  std::vector<CganEpochStats> history;
  history.reserve(cfg.epochs);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng_shuffle.shuffle(order);
    double g_sum = 0.0, d_sum = 0.0;
    int batches = 0;
    for (int start = 0; start + nb <= n_pairs; start += nb, ++batches) {
      const Tensor<T> cond = gather(start, true);
      const Tensor<T> target = gather(start, false);
      const auto diag = [&](const char* what) {
        return std::string("train_cgan: ") + what + " at epoch " + std::to_string(epoch) + ", batch " +
               std::to_string(batches);
      };

      if (cfg.adversarial_weight > 0.0) {
        const Tensor<T> fake = model.generate_batch(cond, Mode::train, &rng_disc);
        model.discriminator().zero_grads();
        Tensor<T> real_logits = model.discriminate_logits(target, cond, Mode::train);
        Tensor<T> d_l(real_logits.shape());
        const double loss_real = detail::bce_with_logits(real_logits, 1.0, 1.0, d_l);
        model.discriminator().backward(d_l);
        Tensor<T> fake_logits = model.discriminate_logits(fake, cond, Mode::train);
        const double loss_fake = detail::bce_with_logits(fake_logits, 0.0, 1.0, d_l);
        model.discriminator().backward(d_l);
        opt_disc.apply(disc_params, disc_grads);
        const double d_loss = loss_real + loss_fake;
        if (!std::isfinite(d_loss)) throw std::runtime_error(diag("non-finite discriminator loss"));
        d_sum += d_loss;
      }

      for (Stack<T>* s : model.generator_stacks()) s->zero_grads();
      const Tensor<T> fake = model.generate_batch(cond, Mode::train, &rng_gen);
      double l1 = 0.0;
      Tensor<T> d_fake(fake.shape());
      const double inv_px = 1.0 / static_cast<double>(fake.size());
      for (std::int64_t i = 0; i < fake.size(); ++i) {
        const double diff = static_cast<double>(fake[i]) - static_cast<double>(target[i]);
        l1 += std::abs(diff);
        d_fake[i] = static_cast<T>(cfg.lambda_rec * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) * inv_px);
      }
      l1 *= inv_px;
      double g_loss = cfg.lambda_rec * l1;
      if (cfg.adversarial_weight > 0.0) {
        Tensor<T> logits = model.discriminate_logits(fake, cond, Mode::train);
        Tensor<T> d_l(logits.shape());
        g_loss += cfg.adversarial_weight * detail::bce_with_logits(logits, 1.0, cfg.adversarial_weight, d_l);
        const Tensor<T> d_adv = model.discriminate_backward(d_l);
        for (std::int64_t i = 0; i < d_fake.size(); ++i) d_fake[i] += d_adv[i];
      }
      if (!std::isfinite(g_loss)) throw std::runtime_error(diag("non-finite generator loss"));
      model.generate_backward(d_fake);
      opt_gen.apply(gen_params, gen_grads);
      g_sum += g_loss;
    }
    history.push_back({epoch, g_sum / batches, cfg.adversarial_weight > 0.0 ? d_sum / batches : 0.0});
  }
  return history;
}

// ---- history file: epoch,g_loss,d_loss ----

inline void save_cgan_history(const std::string& path, const std::vector<CganEpochStats>& history) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_cgan_history: cannot open " + path);
  os << "epoch,g_loss,d_loss\n";
  char buf[96];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", e.epoch, e.g_loss, e.d_loss);
    os << buf;
  }
  if (!os) throw std::runtime_error("save_cgan_history: write failed for " + path);
}

inline std::vector<CganEpochStats> load_cgan_history(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_cgan_history: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != "epoch,g_loss,d_loss")
    throw std::runtime_error("load_cgan_history: missing header in " + path);
  std::vector<CganEpochStats> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    CganEpochStats e;
    char* end = nullptr;
    e.epoch = static_cast<int>(std::strtol(line.c_str(), &end, 10));
    if (!end || *end != ',') throw std::runtime_error("load_cgan_history: bad row '" + line + "'");
    e.g_loss = std::strtod(end + 1, &end);
    if (!end || *end != ',') throw std::runtime_error("load_cgan_history: bad row '" + line + "'");
    e.d_loss = std::strtod(end + 1, nullptr);
    out.push_back(e);
  }
  return out;
}

}  // namespace erec
