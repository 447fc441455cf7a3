// Frames, bilinear resampling, scalar-field rendering, and P6 pixmap I/O.
//
// Pixel data lives in [0,1] as H x W x 3 tensors. Files store 8-bit values
// with a round-half-up quantizer, so save/load round-trips exactly on
// already-quantized pixels. Frame metadata travels in a CSV manifest next to
// the pixmaps, one row per frame.

#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "erec/tensor.hpp"

namespace erec {

struct FrameMeta {
  int iteration_index = 0;
  double time = 0.0;       // seconds
  double objective = 0.0;  // scalar tracked per frame, e.g. peak stress in MPa
};

template <class T>
struct Frame {
  Tensor<T> pixels;  // [H,W,3]
  FrameMeta meta;

  Frame() = default;
  Frame(int height, int width) : pixels({height, width, 3}) {}

  int height() const { return pixels.dim(0); }
  int width() const { return pixels.dim(1); }
};

template <class T>
struct FrameSequence {
  std::vector<Frame<T>> frames;
  std::string source;

  void validate() const {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (frames[i].pixels.ndim() != 3 || frames[i].pixels.dim(2) != 3)
        throw std::invalid_argument("frame " + std::to_string(i) + " is not H x W x 3");
      if (i > 0) {
        if (frames[i].meta.time <= frames[i - 1].meta.time)
          throw std::invalid_argument("frame times must be strictly increasing (frame " + std::to_string(i) + ")");
        if (frames[i].height() != frames[0].height() || frames[i].width() != frames[0].width())
          throw std::invalid_argument("frame " + std::to_string(i) + " has mismatched dimensions");
      }
    }
  }
};

// Two-stage linear blend of the four samples around (x, y). x runs along
// width, y along height; the sample grid is [0, W-1] x [0, H-1] and queries
// outside it are errors, not extrapolation.
template <class T>
T bilinear_sample(const Tensor<T>& img, double x, double y, int channel = 0) {
  const bool has_channels = img.ndim() == 3;
  if (!has_channels && img.ndim() != 2) throw std::invalid_argument("bilinear_sample: image must be [H,W] or [H,W,C]");
  const int h = img.dim(0), w = img.dim(1);
  const int c = has_channels ? img.dim(2) : 1;
  if (channel < 0 || channel >= c) throw std::invalid_argument("bilinear_sample: channel out of range");
  if (x < 0.0 || x > w - 1 || y < 0.0 || y > h - 1) {
    std::ostringstream os;
    os << "bilinear_sample: query (" << x << ", " << y << ") outside grid [0," << (w - 1) << "]x[0," << (h - 1) << "]";
    throw std::out_of_range(os.str());
  }
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  if (x0 == w - 1) --x0;  // keep a valid cell when the query sits on the far edge
  if (y0 == h - 1) --y0;
  if (w == 1) x0 = 0;
  if (h == 1) y0 = 0;
  const int x1 = w == 1 ? 0 : x0 + 1;
  const int y1 = h == 1 ? 0 : y0 + 1;
  const double fx = w == 1 ? 0.0 : x - x0;
  const double fy = h == 1 ? 0.0 : y - y0;
  auto at = [&](int yy, int xx) -> double {
    const std::int64_t idx = (static_cast<std::int64_t>(yy) * w + xx) * c + channel;
    return static_cast<double>(img[idx]);
  };
  const double top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * fx;
  const double bot = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * fx;
  return static_cast<T>(top + (bot - top) * fy);
}

// Corner-aligned bilinear resize: source coordinate = dst * (S-1)/(D-1).
// Endpoints map to endpoints, so ramps and constants are reproduced exactly.
// An axis kept at its input size passes through; an axis actually being
// resized needs size >= 2 on both ends for the mapping to be defined.
template <class T>
Tensor<T> resize(const Tensor<T>& img, int out_h, int out_w) {
  if (img.ndim() != 3 && img.ndim() != 2) throw std::invalid_argument("resize: image must be [H,W] or [H,W,C]");
  const int h = img.dim(0), w = img.dim(1);
  const int c = img.ndim() == 3 ? img.dim(2) : 1;
  const bool bad_h = out_h != h && (h < 2 || out_h < 2);
  const bool bad_w = out_w != w && (w < 2 || out_w < 2);
  if (bad_h || bad_w)
    throw std::invalid_argument("resize: resized dimensions must be at least 2 (got " + std::to_string(h) + "x" +
                                std::to_string(w) + " -> " + std::to_string(out_h) + "x" + std::to_string(out_w) + ")");
  if (out_h == h && out_w == w) return img;
  std::vector<int> shape = img.ndim() == 3 ? std::vector<int>{out_h, out_w, c} : std::vector<int>{out_h, out_w};
  Tensor<T> out(shape);
  const double sy = out_h == h ? 1.0 : static_cast<double>(h - 1) / (out_h - 1);
  const double sx = out_w == w ? 1.0 : static_cast<double>(w - 1) / (out_w - 1);
  for (int oy = 0; oy < out_h; ++oy) {
    const double y = oy * sy;
    for (int ox = 0; ox < out_w; ++ox) {
      const double x = ox * sx;
      for (int ch = 0; ch < c; ++ch)
        out[(static_cast<std::int64_t>(oy) * out_w + ox) * c + ch] = bilinear_sample(img, x, y, ch);
    }
  }
  return out;
}

struct ValueRange {
  double min = 0.0, max = 1.0;
};

// Blue-to-red colormap over the normalized value: (t, 0, 1-t).
template <class T>
std::array<T, 3> colormap(double t) {
  t = std::min(1.0, std::max(0.0, t));
  return {static_cast<T>(t), T(0), static_cast<T>(1.0 - t)};
}

// Lays per-node scalars out as vertical bars, colored blue at range.min and
// red at range.max, clamped outside the range.
template <class T>
Frame<T> render_field(const std::vector<T>& values, ValueRange range, int out_h, int out_w) {
  if (values.empty()) throw std::invalid_argument("render_field: no values");
  if (!(range.min < range.max)) throw std::invalid_argument("render_field: value range must have min < max");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("render_field: output dimensions must be positive");
  Frame<T> f(out_h, out_w);
  const int n = static_cast<int>(values.size());
  for (int x = 0; x < out_w; ++x) {
    int node = static_cast<int>(static_cast<std::int64_t>(x) * n / out_w);
    if (node >= n) node = n - 1;
    const double t = (static_cast<double>(values[node]) - range.min) / (range.max - range.min);
    const auto rgb = colormap<T>(t);
    for (int y = 0; y < out_h; ++y)
      for (int ch = 0; ch < 3; ++ch) f.pixels[(static_cast<std::int64_t>(y) * out_w + x) * 3 + ch] = rgb[ch];
  }
  return f;
}

// Round-half-up quantizer to 8 bits: 0.5 -> 128.
template <class T>
unsigned char quantize_byte(T v) {
  const double scaled = std::floor(static_cast<double>(v) * 255.0 + 0.5);
  return static_cast<unsigned char>(std::min(255.0, std::max(0.0, scaled)));
}

template <class T>
void save_frame(const std::string& path, const Frame<T>& frame) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_frame: cannot open " + path);
  os << "P6\n" << frame.width() << " " << frame.height() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(frame.width()) * 3);
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width() * 3; ++x)
      row[x] = quantize_byte(frame.pixels[static_cast<std::int64_t>(y) * frame.width() * 3 + x]);
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw std::runtime_error("save_frame: write failed for " + path);
}

namespace detail {

inline int ppm_token(std::istream& is, const std::string& path) {
  // skips whitespace and '#' comments between header fields
  for (;;) {
    const int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  int v = -1;
  is >> v;
  if (!is || v < 0) throw std::runtime_error("load_frame: malformed header in " + path);
  return v;
}

}  // namespace detail

template <class T>
Frame<T> load_frame(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_frame: cannot open " + path);
  char magic[2] = {0, 0};
  is.read(magic, 2);
  if (!is || magic[0] != 'P' || magic[1] != '6') throw std::runtime_error("load_frame: " + path + " is not a P6 pixmap");
  const int w = detail::ppm_token(is, path);
  const int h = detail::ppm_token(is, path);
  const int maxval = detail::ppm_token(is, path);
  if (w <= 0 || h <= 0 || maxval != 255) throw std::runtime_error("load_frame: unsupported P6 header in " + path);
  is.get();  // single whitespace after maxval
  Frame<T> f(h, w);
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (is.gcount() != static_cast<std::streamsize>(raw.size()))
    throw std::runtime_error("load_frame: truncated pixel data in " + path);
  for (std::size_t i = 0; i < raw.size(); ++i) f.pixels[static_cast<std::int64_t>(i)] = static_cast<T>(raw[i] / 255.0);
  return f;
}

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

// Manifest: header line, then `index,time_s,objective,filename` per frame.
template <class T>
void save_sequence(const std::string& dir, const FrameSequence<T>& seq, const std::string& manifest_name = "frames.csv",
                   const std::string& frame_prefix = "frame_") {
  seq.validate();
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir + "/" + manifest_name);
  if (!manifest) throw std::runtime_error("save_sequence: cannot open manifest in " + dir);
  manifest << "index,time_s,objective,filename\n";
  char name[64];
  for (const auto& f : seq.frames) {
    std::snprintf(name, sizeof(name), "%s%05d.ppm", frame_prefix.c_str(), f.meta.iteration_index);
    save_frame(dir + "/" + name, f);
    manifest << f.meta.iteration_index << "," << format_real(f.meta.time) << "," << format_real(f.meta.objective) << ","
             << name << "\n";
  }
  if (!manifest) throw std::runtime_error("save_sequence: manifest write failed in " + dir);
}

template <class T>
FrameSequence<T> load_sequence(const std::string& dir, const std::string& manifest_name = "frames.csv") {
  std::ifstream manifest(dir + "/" + manifest_name);
  if (!manifest) throw std::runtime_error("load_sequence: cannot open " + dir + "/" + manifest_name);
  FrameSequence<T> seq;
  seq.source = dir;
  std::string line;
  if (!std::getline(manifest, line)) throw std::runtime_error("load_sequence: empty manifest in " + dir);
  if (line.rfind("index,", 0) != 0) throw std::runtime_error("load_sequence: missing manifest header in " + dir);
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string idx, time_s, objective, filename;
    if (!std::getline(row, idx, ',') || !std::getline(row, time_s, ',') || !std::getline(row, objective, ',') ||
        !std::getline(row, filename))
      throw std::runtime_error("load_sequence: malformed manifest row '" + line + "'");
    Frame<T> f = load_frame<T>(dir + "/" + filename);
    f.meta.iteration_index = std::stoi(idx);
    f.meta.time = std::stod(time_s);
    f.meta.objective = std::stod(objective);
    seq.frames.push_back(std::move(f));
  }
  seq.validate();
  return seq;
}

}  // namespace erec
