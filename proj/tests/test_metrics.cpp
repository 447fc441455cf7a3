#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "erec/metrics.hpp"

using Catch::Matchers::WithinAbs;
using erec::Tensor;

namespace {

Tensor<double> uniform_image(int h, int w, int c, double value) { return Tensor<double>::full({h, w, c}, value); }

Tensor<double> random_image(erec::Rng& rng, int h, int w, int c) {
  Tensor<double> img({h, w, c});
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = 255.0 * rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("mse on uniform images") {
  auto zero = uniform_image(8, 8, 3, 0.0);
  REQUIRE(erec::mse_image(zero, zero) == 0.0);
  REQUIRE_THAT(erec::mse_image(zero, uniform_image(8, 8, 3, 16.0)), WithinAbs(256.0, 1e-12));
  REQUIRE_THAT(erec::mse_image(zero, uniform_image(8, 8, 3, 255.0)), WithinAbs(65025.0, 1e-12));
  REQUIRE_THROWS_WITH(erec::mse_image(zero, uniform_image(8, 9, 3, 0.0)),
                      Catch::Matchers::ContainsSubstring("mismatch"));
}

TEST_CASE("psnr values and sentinel") {
  auto zero = uniform_image(6, 6, 3, 0.0);
  REQUIRE(std::isinf(erec::psnr(zero, zero)));
  // MSE 256: 20 log10 255 - 10 log10 256
  REQUIRE_THAT(erec::psnr(zero, uniform_image(6, 6, 3, 16.0)), WithinAbs(24.0484039556, 1e-9));
  // MSE = 255^2 cancels the peak term exactly
  REQUIRE_THAT(erec::psnr(zero, uniform_image(6, 6, 3, 255.0)), WithinAbs(0.0, 1e-12));
}

TEST_CASE("psnr decreases as uniform offset grows") {
  auto zero = uniform_image(4, 4, 1, 0.0);
  double prev = erec::psnr(zero, uniform_image(4, 4, 1, 1.0));
  for (int k = 2; k <= 32; ++k) {
    const double cur = erec::psnr(zero, uniform_image(4, 4, 1, double(k)));
    REQUIRE(cur < prev);
    prev = cur;
  }
}

TEST_CASE("ssim fixed points") {
  erec::Rng rng(5);
  auto img = random_image(rng, 12, 10, 3);
  REQUIRE_THAT(erec::ssim(img, img), WithinAbs(1.0, 1e-12));

  // flat black vs flat white: variances vanish, the mean term dominates
  const double v = erec::ssim(uniform_image(9, 9, 3, 0.0), uniform_image(9, 9, 3, 255.0));
  const double expected = 6.5025 / (255.0 * 255.0 + 6.5025);
  REQUIRE_THAT(v, WithinAbs(expected, 1e-12));
  REQUIRE(std::abs(v - 1.0e-4) < 0.05e-4);

  auto other = random_image(rng, 12, 10, 3);
  REQUIRE_THAT(erec::ssim(img, other), WithinAbs(erec::ssim(other, img), 1e-15));
}

TEST_CASE("ssim stays in range and detects perturbations") {
  erec::Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = random_image(rng, 7, 9, 1);
    auto b = random_image(rng, 7, 9, 1);
    const double s = erec::ssim(a, b);
    REQUIRE(s >= -1.0);
    REQUIRE(s <= 1.0);
  }
  auto a = random_image(rng, 7, 9, 1);
  auto b = a;
  b.data()[17] += 40.0;
  REQUIRE(erec::ssim(a, b) < 1.0 - 1e-9);
}

TEST_CASE("compare_images quantizes unit-interval pixels first") {
  auto a = Tensor<double>::full({4, 4, 3}, 0.0);
  auto b = Tensor<double>::full({4, 4, 3}, 16.0 / 255.0);
  auto rep = erec::compare_images(a, b);
  REQUIRE_THAT(rep.mse, WithinAbs(256.0, 1e-12));
  REQUIRE_THAT(rep.psnr_db, WithinAbs(24.0484039556, 1e-9));
  auto same = erec::compare_images(a, a);
  REQUIRE(same.mse == 0.0);
  REQUIRE(std::isinf(same.psnr_db));
  REQUIRE_THAT(same.ssim, WithinAbs(1.0, 1e-12));
  REQUIRE(same.to_line().find("0,inf,1") == 0);
  REQUIRE(rep.to_line().find("256,24.0484") == 0);
}

TEST_CASE("softmax oracle values") {
  auto sym = erec::softmax({0.0, 0.0});
  REQUIRE_THAT(sym[0], WithinAbs(0.5, 1e-15));
  REQUIRE_THAT(sym[1], WithinAbs(0.5, 1e-15));

  auto p = erec::softmax({1.0, 2.0, 3.0});
  REQUIRE_THAT(p[0], WithinAbs(0.09003057, 1e-8));
  REQUIRE_THAT(p[1], WithinAbs(0.24472847, 1e-8));
  REQUIRE_THAT(p[2], WithinAbs(0.66524096, 1e-8));

  auto shifted = erec::softmax({1.0 + 7.5, 2.0 + 7.5, 3.0 + 7.5});
  for (int i = 0; i < 3; ++i) REQUIRE_THAT(shifted[i], WithinAbs(p[i], 1e-12));

  REQUIRE_THROWS_AS(erec::softmax({}), std::invalid_argument);
}

TEST_CASE("softmax is stable for large magnitudes") {
  erec::Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(5);
    for (double& x : v) x = rng.uniform(-1e4, 1e4);
    auto p = erec::softmax(v);
    double sum = 0.0;
    for (double x : p) {
      REQUIRE(x >= 0.0);
      sum += x;
    }
    REQUIRE_THAT(sum, WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("kl divergence oracle and support checks") {
  REQUIRE_THAT(erec::kl_discrete({0.25, 0.75}, {0.25, 0.75}), WithinAbs(0.0, 1e-15));
  REQUIRE_THAT(erec::kl_discrete({0.5, 0.5}, {0.25, 0.75}), WithinAbs(0.1438410362258904, 1e-12));
  // zero-probability entries contribute nothing
  REQUIRE_THAT(erec::kl_discrete({0.0, 1.0}, {0.5, 0.5}), WithinAbs(std::log(2.0), 1e-15));
  REQUIRE_THROWS_WITH(erec::kl_discrete({0.5, 0.5}, {1.0, 0.0}), Catch::Matchers::ContainsSubstring("support"));
  REQUIRE_THROWS_WITH(erec::kl_discrete({0.5, 0.6}, {0.5, 0.5}), Catch::Matchers::ContainsSubstring("sum"));
  REQUIRE_THROWS_WITH(erec::kl_discrete({1.5, -0.5}, {0.5, 0.5}), Catch::Matchers::ContainsSubstring("negative"));
  REQUIRE_THROWS_WITH(erec::kl_discrete({1.0}, {0.5, 0.5}), Catch::Matchers::ContainsSubstring("length"));
}

TEST_CASE("kl is non-negative on random distribution pairs") {
  erec::Rng rng(8);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> p(6), q(6);
    double sp = 0.0, sq = 0.0;
    for (int i = 0; i < 6; ++i) {
      p[i] = 0.05 + rng.uniform();
      q[i] = 0.05 + rng.uniform();
      sp += p[i];
      sq += q[i];
    }
    for (int i = 0; i < 6; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    REQUIRE(erec::kl_discrete(p, q) >= -1e-15);
  }
}

TEST_CASE("js divergence endpoints and symmetry") {
  REQUIRE_THAT(erec::js_divergence({0.3, 0.7}, {0.3, 0.7}), WithinAbs(0.0, 1e-15));
  REQUIRE_THAT(erec::js_divergence({1.0, 0.0}, {0.0, 1.0}), WithinAbs(std::log(2.0), 1e-9));
  erec::Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> p(4), q(4);
    double sp = 0.0, sq = 0.0;
    for (int i = 0; i < 4; ++i) {
      p[i] = rng.uniform();
      q[i] = rng.uniform();
      sp += p[i];
      sq += q[i];
    }
    for (int i = 0; i < 4; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    const double pq = erec::js_divergence(p, q);
    REQUIRE_THAT(pq, WithinAbs(erec::js_divergence(q, p), 1e-15));
    REQUIRE(pq >= 0.0);
    REQUIRE(pq <= std::log(2.0) + 1e-15);
  }
}

TEST_CASE("wasserstein distance on small sample sets") {
  REQUIRE(erec::wasserstein_1d({1.0, 2.0, 3.0}, {3.0, 1.0, 2.0}) == 0.0);
  REQUIRE_THAT(erec::wasserstein_1d({0.0}, {3.0}), WithinAbs(3.0, 1e-15));
  REQUIRE_THAT(erec::wasserstein_1d({1.0, 2.0, 3.0}, {2.0, 3.0, 4.0}), WithinAbs(1.0, 1e-15));
  REQUIRE_THROWS_AS(erec::wasserstein_1d({}, {}), std::invalid_argument);
  REQUIRE_THROWS_WITH(erec::wasserstein_1d({1.0}, {1.0, 2.0}), Catch::Matchers::ContainsSubstring("count"));
}

TEST_CASE("wasserstein triangle inequality on random triples") {
  erec::Rng rng(10);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> a(8), b(8), c(8);
    for (int i = 0; i < 8; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
      c[i] = rng.normal();
    }
    const double ab = erec::wasserstein_1d(a, b);
    const double bc = erec::wasserstein_1d(b, c);
    const double ac = erec::wasserstein_1d(a, c);
    REQUIRE(ac <= ab + bc + 1e-12);
  }
}
