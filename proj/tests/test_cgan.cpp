#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "erec/cgan.hpp"
#include "erec/metrics.hpp"

using namespace erec;

namespace {

CganShape desk_shape() {
  CganShape s;
  s.input_size = 64;
  s.base_width = 4;
  s.noise_channels = 4;
  return s;
}

// vertical 3px bar whose column and color slide with the index
Tensor<float> bar_frame(int i, int n) {
  Tensor<float> px({64, 64, 3});
  const int col = 8 + i % 48;
  const float g = float(i) / float(n), b = 1.0f - g;
  for (int y = 0; y < 64; ++y)
    for (int dx = -1; dx <= 1; ++dx) {
      const int x = col + dx;
      if (x < 0 || x >= 64) continue;
      px[(y * 64 + x) * 3 + 0] = 1.0f;
      px[(y * 64 + x) * 3 + 1] = g;
      px[(y * 64 + x) * 3 + 2] = b;
    }
  return px;
}

Tensor<float> box_blur(const Tensor<float>& src) {
  Tensor<float> out(src.shape());
  const int h = src.dim(0), w = src.dim(1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        float acc = 0.0f;
        int cnt = 0;
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            acc += src[(yy * w + xx) * 3 + c];
            ++cnt;
          }
        out[(y * w + x) * 3 + c] = acc / cnt;
      }
  return out;
}

PairedSet<float> make_pairs(int n, bool identity) {
  PairedSet<float> out;
  for (int i = 0; i < n; ++i) {
    Frame<float> t, c;
    t.pixels = bar_frame(i, n);
    t.meta.iteration_index = i;
    t.meta.time = 1e-3 * i;
    c.pixels = identity ? t.pixels : box_blur(t.pixels);
    c.meta = t.meta;
    out.items.push_back({c, t});
  }
  return out;
}

double median_generated_mse(Cgan<float>& m, const PairedSet<float>& pairs, bool vs_target) {
  std::vector<double> v;
  for (std::size_t i = 0; i < pairs.items.size(); i += 3) {
    const auto out = m.generate(pairs.items[i].condition.pixels);
    const auto& ref = vs_target ? pairs.items[i].target.pixels : pairs.items[i].condition.pixels;
    v.push_back(compare_images(out, ref).mse);
  }
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

double median_ssim(Cgan<float>& m, const PairedSet<float>& pairs, bool enhanced) {
  std::vector<double> v;
  for (const auto& item : pairs.items) {
    const auto& candidate = enhanced ? m.generate(item.condition.pixels) : item.condition.pixels;
    v.push_back(compare_images(candidate, item.target.pixels).ssim);
  }
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

template <class T>
bool stacks_equal(Stack<T>& a, Stack<T>& b) {
  auto pa = a.param_tensors(), pb = b.param_tensors();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->shape() != pb[i]->shape()) return false;
    if (std::memcmp(pa[i]->data(), pb[i]->data(), sizeof(T) * pa[i]->size()) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("depth concat and split are exact inverses") {
  Tensor<double> a({1, 2, 2, 2}), b({1, 2, 2, 1});
  for (std::int64_t i = 0; i < a.size(); ++i) a[i] = 10.0 + i;
  for (std::int64_t i = 0; i < b.size(); ++i) b[i] = 100.0 + i;
  const auto cat = detail::concat_depth(a, b);
  REQUIRE(cat.shape() == std::vector<int>{1, 2, 2, 3});
  // first pixel carries a's then b's channels
  CHECK(cat[0] == 10.0);
  CHECK(cat[1] == 11.0);
  CHECK(cat[2] == 100.0);
  CHECK(cat[3] == 12.0);
  CHECK(cat[5] == 101.0);
  const auto [back_a, back_b] = detail::split_depth(cat, 2);
  REQUIRE(back_a.shape() == a.shape());
  REQUIRE(back_b.shape() == b.shape());
  CHECK(std::memcmp(back_a.data(), a.data(), sizeof(double) * a.size()) == 0);
  CHECK(std::memcmp(back_b.data(), b.data(), sizeof(double) * b.size()) == 0);

  Tensor<double> mismatched({1, 3, 2, 2});
  CHECK_THROWS_WITH(detail::concat_depth(a, mismatched), Catch::Matchers::ContainsSubstring("incompatible"));
  CHECK_THROWS_WITH(detail::split_depth(cat, 3), Catch::Matchers::ContainsSubstring("channels"));
}

TEST_CASE("shape validation rejects bad geometry") {
  CganShape s;
  s.input_size = 96;
  CHECK_THROWS_WITH(s.validate(), Catch::Matchers::ContainsSubstring("multiple of 64"));
  s.input_size = 64;
  s.base_width = 0;
  CHECK_THROWS_WITH(s.validate(), Catch::Matchers::ContainsSubstring("base width"));
  s.base_width = 4;
  s.noise_channels = 0;
  CHECK_THROWS_WITH(s.validate(), Catch::Matchers::ContainsSubstring("noise channels"));
}

TEST_CASE("published-scale geometry lines up") {
  CganShape s;
  s.input_size = 256;
  s.base_width = 32;
  Cgan<float> m(s, 1);
  CHECK(s.bottleneck_side() == 4);
  CHECK(m.down(5).output_shape() == std::vector<int>{4, 4, 512});
  CHECK(m.up(0).input_shape() == std::vector<int>{4, 4, 512 + s.noise_channels});
  CHECK(m.up(5).output_shape() == std::vector<int>{256, 256, 3});
  CHECK(m.discriminator().input_shape() == std::vector<int>{256, 256, 6});
  CHECK(m.discriminator().output_shape() == std::vector<int>{4, 4, 1});
  CHECK(m.discriminator_input_channels() == 6);
}

TEST_CASE("generator preserves frame shape and pixel range") {
  Cgan<float> m(desk_shape(), 5);
  Rng rng(17);
  Tensor<float> cond({64, 64, 3});
  for (std::int64_t i = 0; i < cond.size(); ++i) cond[i] = float(rng.uniform());
  const auto out = m.generate(cond);
  REQUIRE(out.shape() == std::vector<int>{64, 64, 3});
  for (std::int64_t i = 0; i < out.size(); ++i) {
    REQUIRE(out[i] >= 0.0f);
    REQUIRE(out[i] <= 1.0f);
  }
}

TEST_CASE("generation is deterministic in eval mode") {
  Cgan<float> m(desk_shape(), 5);
  Rng rng(23);
  Tensor<float> cond({64, 64, 3});
  for (std::int64_t i = 0; i < cond.size(); ++i) cond[i] = float(rng.uniform());
  const auto a = m.generate(cond);
  const auto b = m.generate(cond);
  REQUIRE(std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0);
}

TEST_CASE("discriminator score stays inside the open unit interval") {
  Cgan<float> m(desk_shape(), 9);
  Rng rng(31);
  Tensor<float> frame({64, 64, 3}), cond({64, 64, 3});
  for (std::int64_t i = 0; i < frame.size(); ++i) {
    frame[i] = float(rng.uniform());
    cond[i] = float(rng.uniform());
  }
  const double score = m.discriminate(frame, cond);
  CHECK(score > 0.0);
  CHECK(score < 1.0);
  const double again = m.discriminate(frame, cond);
  CHECK(score == again);
}

TEST_CASE("frame shape mismatches are rejected") {
  Cgan<float> m(desk_shape(), 2);
  Tensor<float> wrong({32, 32, 3}), ok({64, 64, 3});
  CHECK_THROWS_WITH(m.generate(wrong), Catch::Matchers::ContainsSubstring("model expects"));
  CHECK_THROWS_WITH(m.discriminate(wrong, ok), Catch::Matchers::ContainsSubstring("model expects"));
  CHECK_THROWS_WITH(m.discriminate(ok, wrong), Catch::Matchers::ContainsSubstring("model expects"));
}

TEST_CASE("binary cross-entropy on logits matches closed forms") {
  Tensor<double> logits({3});
  logits[0] = 0.0;
  logits[1] = 2.0;
  logits[2] = -2.0;
  Tensor<double> d(logits.shape());

  const double loss1 = detail::bce_with_logits(logits, 1.0, 1.0, d);
  // -log sigmoid(l) averaged
  const double want1 = (-std::log(0.5) - std::log(1.0 / (1.0 + std::exp(-2.0))) -
                        std::log(1.0 / (1.0 + std::exp(2.0)))) / 3.0;
  CHECK_THAT(loss1, Catch::Matchers::WithinAbs(want1, 1e-12));
  CHECK_THAT(d[0], Catch::Matchers::WithinAbs((0.5 - 1.0) / 3.0, 1e-12));

  const double loss0 = detail::bce_with_logits(logits, 0.0, 1.0, d);
  const double want0 = (-std::log(0.5) - std::log(1.0 / (1.0 + std::exp(2.0))) -
                        std::log(1.0 / (1.0 + std::exp(-2.0)))) / 3.0;
  CHECK_THAT(loss0, Catch::Matchers::WithinAbs(want0, 1e-12));
  CHECK_THAT(d[0], Catch::Matchers::WithinAbs(0.5 / 3.0, 1e-12));

  // the gradient scale knob multiplies d but not the returned loss
  Tensor<double> d2(logits.shape());
  detail::bce_with_logits(logits, 0.0, 0.25, d2);
  CHECK_THAT(d2[0], Catch::Matchers::WithinAbs(0.25 * 0.5 / 3.0, 1e-12));
}

TEST_CASE("generator loss gradient matches finite differences") {
  CganShape s;
  s.input_size = 64;
  s.base_width = 2;
  s.noise_channels = 2;
  Cgan<double> m(s, 11);
  const double lambda_rec = 100.0, adv = 1.0;

  const int n = 2;
  Tensor<double> cond({n, 64, 64, 3}), target({n, 64, 64, 3});
  Rng data(21);
  for (std::int64_t i = 0; i < cond.size(); ++i) {
    cond[i] = data.uniform();
    target[i] = data.uniform();
  }

  // forward-only loss with the noise stream re-seeded per call
  auto eval_loss = [&]() {
    Rng r(91);
    const Tensor<double> fake = m.generate_batch(cond, Mode::train, &r);
    double l1 = 0.0;
    for (std::int64_t i = 0; i < fake.size(); ++i) l1 += std::abs(fake[i] - target[i]);
    l1 /= double(fake.size());
    const Tensor<double> logits = m.discriminate_logits(fake, cond, Mode::train);
    Tensor<double> scratch(logits.shape());
    return lambda_rec * l1 + adv * detail::bce_with_logits(logits, 1.0, adv, scratch);
  };

  // analytic pass mirroring the training generator step
  for (Stack<double>* st : m.generator_stacks()) st->zero_grads();
  m.discriminator().zero_grads();
  {
    Rng r(91);
    const Tensor<double> fake = m.generate_batch(cond, Mode::train, &r);
    Tensor<double> d_fake(fake.shape());
    const double inv = 1.0 / double(fake.size());
    for (std::int64_t i = 0; i < fake.size(); ++i) {
      const double diff = fake[i] - target[i];
      d_fake[i] = lambda_rec * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) * inv;
    }
    const Tensor<double> logits = m.discriminate_logits(fake, cond, Mode::train);
    Tensor<double> d_l(logits.shape());
    detail::bce_with_logits(logits, 1.0, adv, d_l);
    const Tensor<double> d_adv = m.discriminate_backward(d_l);
    for (std::int64_t i = 0; i < d_fake.size(); ++i) d_fake[i] += d_adv[i];
    m.generate_backward(d_fake);
  }

  std::vector<Tensor<double>*> params, grads;
  for (Stack<double>* st : m.generator_stacks()) {
    for (auto* p : st->param_tensors()) params.push_back(p);
    for (auto* g : st->grad_tensors()) grads.push_back(g);
  }
  for (auto* p : m.discriminator().param_tensors()) params.push_back(p);
  for (auto* g : m.discriminator().grad_tensors()) grads.push_back(g);

  struct Slot {
    double mag;
    std::size_t tensor;
    std::int64_t index;
  };
  std::vector<Slot> slots;
  for (std::size_t t = 0; t < grads.size(); ++t)
    for (std::int64_t i = 0; i < grads[t]->size(); ++i)
      slots.push_back({std::abs((*grads[t])[i]), t, i});
  std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) { return a.mag > b.mag; });

  // central differences on the largest-gradient slots; those sit on smooth
  // paths, so agreement should be tight
  const double h = 1e-6;
  REQUIRE(slots.size() > 30);
  for (int k = 0; k < 30; ++k) {
    const auto& s2 = slots[k];
    double& w = (*params[s2.tensor])[s2.index];
    const double saved = w;
    w = saved + h;
    const double up = eval_loss();
    w = saved - h;
    const double down = eval_loss();
    w = saved;
    const double fd = (up - down) / (2.0 * h);
    const double an = (*grads[s2.tensor])[s2.index];
    REQUIRE(std::abs(fd - an) / std::max(1.0, std::abs(an)) < 1e-6);
  }
}

TEST_CASE("identity pairs push generated output toward the condition") {
  Cgan<float> model(desk_shape(), 3);
  const auto pairs = make_pairs(24, true);
  const double before = median_generated_mse(model, pairs, false);

  CganTrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.seed = 7;
  const auto history = train_cgan(model, pairs, cfg);
  REQUIRE(history.size() == 8);
  for (const auto& e : history) {
    CHECK(std::isfinite(e.g_loss));
    CHECK(e.d_loss > 0.0);
  }

  const double after = median_generated_mse(model, pairs, false);
  INFO("mse before " << before << " after " << after);
  CHECK(after * 10.0 < before);
}

TEST_CASE("zero adversarial weight reduces training to regression") {
  Cgan<float> model(desk_shape(), 3);
  const auto pairs = make_pairs(24, true);

  CganTrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.adversarial_weight = 0.0;
  cfg.seed = 7;
  const auto history = train_cgan(model, pairs, cfg);
  REQUIRE(history.size() == 10);
  for (const auto& e : history) CHECK(e.d_loss == 0.0);

  // medians of consecutive five-epoch windows must fall
  auto window_median = [&](int start) {
    std::vector<double> w;
    for (int i = start; i < start + 5; ++i) w.push_back(history[i].g_loss);
    std::sort(w.begin(), w.end());
    return w[2];
  };
  CHECK(window_median(5) < window_median(0));
}

TEST_CASE("enhancement does not degrade median structural similarity") {
  Cgan<float> model(desk_shape(), 3);
  const auto pairs = make_pairs(24, false);
  const double condition_ssim = median_ssim(model, pairs, false);
  REQUIRE(condition_ssim > 0.0);
  REQUIRE(condition_ssim < 1.0);

  CganTrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.seed = 7;
  train_cgan(model, pairs, cfg);

  const double enhanced_ssim = median_ssim(model, pairs, true);
  INFO("condition " << condition_ssim << " enhanced " << enhanced_ssim);
  CHECK(enhanced_ssim >= condition_ssim);
}

TEST_CASE("training is reproducible for a fixed seed") {
  const auto pairs = make_pairs(16, true);
  CganTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 13;

  Cgan<float> a(desk_shape(), 5), b(desk_shape(), 5);
  const auto ha = train_cgan(a, pairs, cfg);
  const auto hb = train_cgan(b, pairs, cfg);
  REQUIRE(ha.size() == hb.size());
  for (std::size_t i = 0; i < ha.size(); ++i) {
    CHECK(ha[i].g_loss == hb[i].g_loss);
    CHECK(ha[i].d_loss == hb[i].d_loss);
  }
  for (int i = 0; i < Cgan<float>::kLevels; ++i) {
    CHECK(stacks_equal(a.down(i), b.down(i)));
    CHECK(stacks_equal(a.up(i), b.up(i)));
  }
  CHECK(stacks_equal(a.discriminator(), b.discriminator()));
}

TEST_CASE("training rejects undersized sets and reports divergence") {
  Cgan<float> model(desk_shape(), 2);
  CganTrainConfig cfg;
  cfg.batch_size = 8;
  CHECK_THROWS_WITH(train_cgan(model, make_pairs(15, true), cfg),
                    Catch::Matchers::ContainsSubstring("need at least 16"));

  cfg.epochs = 0;
  CHECK_THROWS_WITH(train_cgan(model, make_pairs(16, true), cfg),
                    Catch::Matchers::ContainsSubstring("epochs"));

  cfg.epochs = 1;
  cfg.batch_size = 4;
  auto pairs = make_pairs(16, true);
  model.discriminator().layers[0].params[0][0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH(train_cgan(model, pairs, cfg),
                    Catch::Matchers::ContainsSubstring("epoch 1"));

  Cgan<float> gen_poisoned(desk_shape(), 2);
  cfg.adversarial_weight = 0.0;
  gen_poisoned.down(0).layers[0].params[0][0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH(train_cgan(gen_poisoned, pairs, cfg),
                    Catch::Matchers::ContainsSubstring("generator loss"));
}

TEST_CASE("paired set alignment and invariants") {
  FrameSequence<float> conds, targets;
  for (int i = 0; i < 3; ++i) {
    Frame<float> f;
    f.pixels = bar_frame(i, 3);
    f.meta.iteration_index = i;
    conds.frames.push_back(f);
  }
  // targets arrive out of order; alignment must go by iteration index
  for (int i : {2, 0, 1}) {
    Frame<float> f;
    f.pixels = bar_frame(i + 10, 3);
    f.meta.iteration_index = i;
    targets.frames.push_back(f);
  }
  const auto pairs = make_paired_set(conds, targets);
  REQUIRE(pairs.items.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(pairs.items[i].condition.meta.iteration_index == i);
    CHECK(pairs.items[i].target.meta.iteration_index == i);
    CHECK(std::memcmp(pairs.items[i].target.pixels.data(), bar_frame(i + 10, 3).data(),
                      sizeof(float) * pairs.items[i].target.pixels.size()) == 0);
  }

  targets.frames.pop_back();
  CHECK_THROWS_WITH(make_paired_set(conds, targets), Catch::Matchers::ContainsSubstring("no target frame"));

  PairedSet<float> dup = pairs;
  dup.items[2].condition.meta.iteration_index = 0;
  CHECK_THROWS_WITH(dup.validate(), Catch::Matchers::ContainsSubstring("duplicate iteration index"));

  PairedSet<float> mixed = pairs;
  mixed.items[1].target.pixels = Tensor<float>({32, 32, 3});
  CHECK_THROWS_WITH(mixed.validate(), Catch::Matchers::ContainsSubstring("mixes"));

  PairedSet<float> empty;
  CHECK_THROWS_WITH(empty.validate(), Catch::Matchers::ContainsSubstring("empty"));
}

TEST_CASE("weights survive a save and load round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "erec_cgan_io";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "model.erec").string();

  Cgan<float> a(desk_shape(), 3), b(desk_shape(), 99);
  Rng rng(41);
  Tensor<float> cond({64, 64, 3});
  for (std::int64_t i = 0; i < cond.size(); ++i) cond[i] = float(rng.uniform());

  a.save(path);
  b.load(path);
  const auto ga = a.generate(cond), gb = b.generate(cond);
  REQUIRE(std::memcmp(ga.data(), gb.data(), sizeof(float) * ga.size()) == 0);
  CHECK(a.discriminate(cond, cond) == b.discriminate(cond, cond));
  std::filesystem::remove_all(dir);
}

TEST_CASE("history files round trip exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "erec_cgan_hist";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "history.csv").string();

  std::vector<CganEpochStats> hist = {{1, 47.69513702392578, 1.3416748046875},
                                      {2, 38.3126, 0.9696}};
  save_cgan_history(path, hist);
  const auto back = load_cgan_history(path);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < hist.size(); ++i) {
    CHECK(back[i].epoch == hist[i].epoch);
    CHECK(back[i].g_loss == hist[i].g_loss);
    CHECK(back[i].d_loss == hist[i].d_loss);
  }

  std::ofstream bad(path);
  bad << "g_loss,epoch\n";
  bad.close();
  CHECK_THROWS_WITH(load_cgan_history(path), Catch::Matchers::ContainsSubstring("header"));
  std::filesystem::remove_all(dir);
}
