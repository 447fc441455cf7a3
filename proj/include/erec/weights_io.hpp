// Binary weight container. Layout, all integers little-endian u32:
//
//   "EREC" | version | scalar width (4 or 8) | layer count
//   per layer: kind tag | tensor count
//   per tensor: ndim | dims... | raw values (little-endian IEEE-754)
//
// Conv and fully-connected layers store {W, b}; batch-norm stores
// {gamma, beta, running_mean, running_var}; parameterless layers store an
// empty tensor list. Loading requires an already-built model with matching
// architecture; values round-trip bit-exactly.

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "erec/layers.hpp"
#include "erec/tensor.hpp"

namespace erec {

inline constexpr std::uint32_t kWeightsFormatVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("weights: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

template <class T>
void write_values(std::ostream& os, const T* v, std::int64_t n) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  for (std::int64_t i = 0; i < n; ++i) {
    if constexpr (sizeof(T) == 4) {
      std::uint32_t bits;
      std::memcpy(&bits, &v[i], 4);
      write_u32(os, bits);
    } else {
      std::uint64_t bits;
      std::memcpy(&bits, &v[i], 8);
      write_u32(os, static_cast<std::uint32_t>(bits));
      write_u32(os, static_cast<std::uint32_t>(bits >> 32));
    }
  }
}

template <class T>
void read_values(std::istream& is, T* v, std::int64_t n) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  for (std::int64_t i = 0; i < n; ++i) {
    if constexpr (sizeof(T) == 4) {
      const std::uint32_t bits = read_u32(is);
      std::memcpy(&v[i], &bits, 4);
    } else {
      const std::uint64_t lo = read_u32(is);
      const std::uint64_t hi = read_u32(is);
      const std::uint64_t bits = lo | (hi << 32);
      std::memcpy(&v[i], &bits, 8);
    }
  }
}

template <class T>
std::vector<const Tensor<T>*> layer_state(const Layer<T>& l) {
  std::vector<const Tensor<T>*> out;
  for (const auto& p : l.params) out.push_back(&p);
  if (l.spec.kind == LayerKind::batch_norm) {
    out.push_back(&l.running_mean);
    out.push_back(&l.running_var);
  }
  return out;
}

template <class T>
std::vector<Tensor<T>*> layer_state(Layer<T>& l) {
  std::vector<Tensor<T>*> out;
  for (auto& p : l.params) out.push_back(&p);
  if (l.spec.kind == LayerKind::batch_norm) {
    out.push_back(&l.running_mean);
    out.push_back(&l.running_var);
  }
  return out;
}

}  // namespace detail

template <class T>
void save_layers(std::ostream& os, const std::vector<const Layer<T>*>& layers) {
  os.write("EREC", 4);
  detail::write_u32(os, kWeightsFormatVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(sizeof(T)));
  detail::write_u32(os, static_cast<std::uint32_t>(layers.size()));
  for (const auto* l : layers) {
    detail::write_u32(os, static_cast<std::uint32_t>(l->spec.kind));
    const auto tensors = detail::layer_state(*l);
    detail::write_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto* t : tensors) {
      detail::write_u32(os, static_cast<std::uint32_t>(t->ndim()));
      for (int d = 0; d < t->ndim(); ++d) detail::write_u32(os, static_cast<std::uint32_t>(t->dim(d)));
      detail::write_values(os, t->data(), t->size());
    }
  }
  if (!os) throw std::runtime_error("weights: write failed");
}

template <class T>
void load_layers(std::istream& is, const std::vector<Layer<T>*>& layers) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "EREC", 4) != 0) throw std::runtime_error("weights: bad magic, not an EREC file");
  const std::uint32_t version = detail::read_u32(is);
  if (version != kWeightsFormatVersion)
    throw std::runtime_error("weights: unsupported format version " + std::to_string(version));
  const std::uint32_t width = detail::read_u32(is);
  if (width != sizeof(T))
    throw std::runtime_error("weights: file holds " + std::to_string(width * 8) + "-bit values, expected " +
                             std::to_string(sizeof(T) * 8) + "-bit");
  const std::uint32_t count = detail::read_u32(is);
  if (count != layers.size())
    throw std::runtime_error("weights: file has " + std::to_string(count) + " layers, model has " +
                             std::to_string(layers.size()));
  for (std::size_t li = 0; li < layers.size(); ++li) {
    Layer<T>& l = *layers[li];
    const std::string label = l.spec.name.empty() ? kind_name(l.spec.kind) : l.spec.name;
    const auto kind = static_cast<LayerKind>(detail::read_u32(is));
    if (kind != l.spec.kind)
      throw std::runtime_error("weights: layer " + std::to_string(li) + " is " + kind_name(kind) + ", model expects " +
                               label);
    auto tensors = detail::layer_state(l);
    const std::uint32_t tc = detail::read_u32(is);
    if (tc != tensors.size())
      throw std::runtime_error("weights: layer " + label + " has " + std::to_string(tc) + " tensors, expected " +
                               std::to_string(tensors.size()));
    for (auto* t : tensors) {
      const std::uint32_t nd = detail::read_u32(is);
      std::vector<int> dims(nd);
      for (auto& d : dims) d = static_cast<int>(detail::read_u32(is));
      if (dims != t->shape())
        throw std::runtime_error("weights: layer " + label + " tensor shape " + shape_string(dims) +
                                 " does not match model shape " + shape_string(t->shape()));
      detail::read_values(is, t->data(), t->size());
    }
  }
}

template <class T>
void save_weights(const std::string& path, const std::vector<const Stack<T>*>& stacks) {
  std::vector<const Layer<T>*> layers;
  for (const auto* s : stacks)
    for (const auto& l : s->layers) layers.push_back(&l);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("weights: cannot open " + path + " for writing");
  save_layers(os, layers);
}

template <class T>
void load_weights(const std::string& path, const std::vector<Stack<T>*>& stacks) {
  std::vector<Layer<T>*> layers;
  for (auto* s : stacks)
    for (auto& l : s->layers) layers.push_back(&l);
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("weights: cannot open " + path);
  load_layers(is, layers);
}

}  // namespace erec
