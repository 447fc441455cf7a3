#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "erec/image.hpp"

using Catch::Matchers::WithinAbs;
using erec::Frame;
using erec::FrameSequence;
using erec::Tensor;

TEST_CASE("bilinear_sample blends the four surrounding samples") {
  Tensor<double> img({2, 2}, {10, 20, 30, 40});
  REQUIRE_THAT(erec::bilinear_sample(img, 0.25, 0.75), WithinAbs(27.5, 1e-12));
}

TEST_CASE("bilinear_sample reproduces grid nodes") {
  Tensor<double> img({3, 4});
  erec::Rng rng(4);
  for (std::int64_t i = 0; i < img.size(); ++i) img[i] = rng.normal();
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x)
      REQUIRE_THAT(erec::bilinear_sample(img, double(x), double(y)), WithinAbs(img[y * 4 + x], 1e-12));
}

TEST_CASE("bilinear functions are fixed points of bilinear_sample") {
  Tensor<double> img({5, 7});
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) img[y * 7 + x] = x + y;
  erec::Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const double x = rng.uniform(0.0, 6.0), y = rng.uniform(0.0, 4.0);
    REQUIRE_THAT(erec::bilinear_sample(img, x, y), WithinAbs(x + y, 1e-12));
  }
  // general a + bx + cy + dxy within one cell
  Tensor<double> cell({2, 2});
  const double a = 0.3, b = -1.2, c = 2.5, d = 0.7;
  cell[0] = a;
  cell[1] = a + b;
  cell[2] = a + c;
  cell[3] = a + b + c + d;
  for (int i = 0; i < 20; ++i) {
    const double x = rng.uniform(), y = rng.uniform();
    REQUIRE_THAT(erec::bilinear_sample(cell, x, y), WithinAbs(a + b * x + c * y + d * x * y, 1e-12));
  }
}

TEST_CASE("bilinear_sample rejects out-of-grid queries") {
  Tensor<float> img({2, 2});
  REQUIRE_THROWS_AS(erec::bilinear_sample(img, -0.1, 0.0), std::out_of_range);
  REQUIRE_THROWS_AS(erec::bilinear_sample(img, 0.0, 1.5), std::out_of_range);
  REQUIRE_NOTHROW(erec::bilinear_sample(img, 1.0, 1.0));
}

TEST_CASE("resize preserves constants and ramps") {
  auto img = Tensor<float>::full({4, 6, 3}, 0.37f);
  auto out = erec::resize(img, 9, 5);
  REQUIRE(out.shape() == std::vector<int>{9, 5, 3});
  for (std::int64_t i = 0; i < out.size(); ++i) REQUIRE_THAT(out[i], WithinAbs(0.37f, 1e-6f));

  Tensor<double> row({1, 2}, {0.0, 1.0});
  auto wide = erec::resize(row, 1, 3);
  REQUIRE(wide.shape() == std::vector<int>{1, 3});
  REQUIRE_THAT(wide[0], WithinAbs(0.0, 1e-12));
  REQUIRE_THAT(wide[1], WithinAbs(0.5, 1e-12));
  REQUIRE_THAT(wide[2], WithinAbs(1.0, 1e-12));
}

TEST_CASE("resize at identical dimensions is a bitwise copy") {
  Tensor<double> img({3, 3});
  erec::Rng rng(5);
  for (std::int64_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  auto out = erec::resize(img, 3, 3);
  for (std::int64_t i = 0; i < img.size(); ++i) REQUIRE(out[i] == img[i]);
}

TEST_CASE("resize rejects degenerate resized axes") {
  Tensor<float> img({1, 2});
  REQUIRE_THROWS_AS(erec::resize(img, 3, 2), std::invalid_argument);  // 1 -> 3 on height
  Tensor<float> ok({2, 2});
  REQUIRE_THROWS_AS(erec::resize(ok, 1, 2), std::invalid_argument);  // 2 -> 1 on height
}

TEST_CASE("resize commutes with constant shifts") {
  Tensor<double> img({4, 4});
  erec::Rng rng(6);
  for (std::int64_t i = 0; i < img.size(); ++i) img[i] = 0.25 + 0.5 * rng.uniform();
  auto shifted = img;
  for (std::int64_t i = 0; i < shifted.size(); ++i) shifted[i] += 0.1;
  auto a = erec::resize(img, 7, 7);
  auto b = erec::resize(shifted, 7, 7);
  for (std::int64_t i = 0; i < a.size(); ++i) REQUIRE_THAT(b[i] - a[i], WithinAbs(0.1, 1e-12));
}

TEST_CASE("render_field maps range endpoints to pure blue and red") {
  erec::ValueRange range{0.0, 100.0};
  auto lo = erec::render_field<double>({0.0, 0.0, 0.0}, range, 4, 6);
  for (int p = 0; p < 4 * 6; ++p) {
    REQUIRE(lo.pixels[p * 3 + 0] == 0.0);
    REQUIRE(lo.pixels[p * 3 + 1] == 0.0);
    REQUIRE(lo.pixels[p * 3 + 2] == 1.0);
  }
  auto hi = erec::render_field<double>({100.0, 150.0}, range, 2, 2);  // above max clamps
  for (int p = 0; p < 4; ++p) {
    REQUIRE(hi.pixels[p * 3 + 0] == 1.0);
    REQUIRE(hi.pixels[p * 3 + 2] == 0.0);
  }
  auto mid = erec::render_field<double>({50.0}, range, 1, 1);
  REQUIRE_THAT(mid.pixels[0], WithinAbs(0.5, 1e-12));
  REQUIRE_THAT(mid.pixels[1], WithinAbs(0.0, 1e-12));
  REQUIRE_THAT(mid.pixels[2], WithinAbs(0.5, 1e-12));
}

TEST_CASE("render_field is monotone toward red") {
  erec::ValueRange range{0.0, 1.0};
  double prev_red = -1.0;
  for (double v : {0.1, 0.3, 0.5, 0.8, 1.0}) {
    auto f = erec::render_field<double>({v}, range, 1, 1);
    REQUIRE(f.pixels[0] > prev_red);
    prev_red = f.pixels[0];
  }
}

TEST_CASE("render_field validates inputs") {
  REQUIRE_THROWS_AS(erec::render_field<double>({}, {0, 1}, 2, 2), std::invalid_argument);
  REQUIRE_THROWS_AS(erec::render_field<double>({1.0}, {1, 1}, 2, 2), std::invalid_argument);
}

TEST_CASE("render_field lays out one vertical bar per node") {
  auto f = erec::render_field<double>({0.0, 1.0}, {0.0, 1.0}, 2, 8);
  // left half blue, right half red
  for (int x = 0; x < 4; ++x) REQUIRE(f.pixels[x * 3 + 2] == 1.0);
  for (int x = 4; x < 8; ++x) REQUIRE(f.pixels[x * 3 + 0] == 1.0);
}

TEST_CASE("frame save/load round-trips quantized pixels") {
  Frame<double> f(5, 4);
  erec::Rng rng(9);
  for (std::int64_t i = 0; i < f.pixels.size(); ++i) f.pixels[i] = rng.uniform();
  const auto path = (std::filesystem::temp_directory_path() / "erec_frame_test.ppm").string();
  erec::save_frame(path, f);
  auto g = erec::load_frame<double>(path);
  REQUIRE(g.height() == 5);
  REQUIRE(g.width() == 4);
  for (std::int64_t i = 0; i < f.pixels.size(); ++i)
    REQUIRE_THAT(g.pixels[i], WithinAbs(erec::quantize_byte(f.pixels[i]) / 255.0, 1e-12));
  // second round-trip is exact: pixels are already quantized
  erec::save_frame(path, g);
  auto h = erec::load_frame<double>(path);
  for (std::int64_t i = 0; i < g.pixels.size(); ++i) REQUIRE(h.pixels[i] == g.pixels[i]);
  std::filesystem::remove(path);
}

TEST_CASE("quantizer rounds half up") {
  REQUIRE(erec::quantize_byte(0.5) == 128);
  REQUIRE(erec::quantize_byte(0.0) == 0);
  REQUIRE(erec::quantize_byte(1.0) == 255);
  REQUIRE(erec::quantize_byte(-0.2) == 0);
  REQUIRE(erec::quantize_byte(1.7) == 255);
}

TEST_CASE("truncated or malformed pixmaps are rejected") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = (dir / "erec_frame_bad.ppm").string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "P6\n4 5\n255\n";
    os << "only a few bytes";
  }
  REQUIRE_THROWS_WITH(erec::load_frame<float>(path), Catch::Matchers::ContainsSubstring("truncated"));
  {
    std::ofstream os(path, std::ios::binary);
    os << "P5\n4 5\n255\n";
  }
  REQUIRE_THROWS_WITH(erec::load_frame<float>(path), Catch::Matchers::ContainsSubstring("P6"));
  REQUIRE_THROWS_AS(erec::load_frame<float>((dir / "erec_no_such.ppm").string()), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("sequence manifest round-trips frames with metadata") {
  FrameSequence<float> seq;
  erec::Rng rng(12);
  for (int i = 0; i < 3; ++i) {
    Frame<float> f(4, 4);
    for (std::int64_t p = 0; p < f.pixels.size(); ++p) f.pixels[p] = static_cast<float>(rng.uniform());
    f.meta.iteration_index = i;
    f.meta.time = 0.001 * (i + 1);
    f.meta.objective = 100.0 + 7.5 * i;
    seq.frames.push_back(std::move(f));
  }
  const auto dir = (std::filesystem::temp_directory_path() / "erec_seq_test").string();
  std::filesystem::remove_all(dir);
  erec::save_sequence(dir, seq);

  std::ifstream manifest(dir + "/frames.csv");
  std::string header;
  std::getline(manifest, header);
  REQUIRE(header == "index,time_s,objective,filename");
  std::string row0;
  std::getline(manifest, row0);
  REQUIRE(row0 == "0,0.001,100,frame_00000.ppm");

  auto loaded = erec::load_sequence<float>(dir);
  REQUIRE(loaded.frames.size() == 3);
  REQUIRE(loaded.frames[1].meta.iteration_index == 1);
  REQUIRE_THAT(loaded.frames[1].meta.time, WithinAbs(0.002, 1e-15));
  REQUIRE_THAT(loaded.frames[2].meta.objective, WithinAbs(115.0, 1e-12));
  for (std::int64_t p = 0; p < loaded.frames[0].pixels.size(); ++p)
    REQUIRE_THAT(loaded.frames[0].pixels[p],
                 WithinAbs(erec::quantize_byte(seq.frames[0].pixels[p]) / 255.0f, 1e-6f));
  std::filesystem::remove_all(dir);
}

TEST_CASE("sequence validation enforces ordering and uniform dims") {
  FrameSequence<float> seq;
  seq.frames.emplace_back(4, 4);
  seq.frames.emplace_back(4, 4);
  seq.frames[0].meta.time = 0.2;
  seq.frames[1].meta.time = 0.1;
  REQUIRE_THROWS_WITH(seq.validate(), Catch::Matchers::ContainsSubstring("strictly increasing"));
  seq.frames[1].meta.time = 0.3;
  REQUIRE_NOTHROW(seq.validate());
  seq.frames.emplace_back(5, 4);
  seq.frames[2].meta.time = 0.4;
  REQUIRE_THROWS_WITH(seq.validate(), Catch::Matchers::ContainsSubstring("dimensions"));
}
