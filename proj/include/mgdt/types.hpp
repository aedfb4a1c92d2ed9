#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgdt {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;

using Rng = std::mt19937_64;

// Grayscale (or multi-plane) image stored as raw bytes, row-major,
// plane-interleaved last: index = (y * w + x) * c + plane.
struct Image {
  int h = 0;
  int w = 0;
  int c = 1;
  std::vector<std::uint8_t> px;

  Image() = default;
  Image(int h_, int w_, int c_ = 1)
      : h(h_), w(w_), c(c_), px(static_cast<std::size_t>(h_) * w_ * c_, 0) {}

  std::uint8_t& at(int y, int x, int plane = 0) {
    return px[(static_cast<std::size_t>(y) * w + x) * c + plane];
  }
  std::uint8_t at(int y, int x, int plane = 0) const {
    return px[(static_cast<std::size_t>(y) * w + x) * c + plane];
  }

  bool same_dims(const Image& o) const { return h == o.h && w == o.w && c == o.c; }
  bool operator==(const Image& o) const { return h == o.h && w == o.w && c == o.c && px == o.px; }
};

// Thrown on malformed caller input (bad dimensions, out-of-range indices, ...).
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown on invalid configuration (bad presets, unknown keys, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a numeric quantity turns non-finite.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Cheap keyed stream split: derive an independent RNG from (seed, key...).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return Rng(splitmix64(splitmix64(splitmix64(seed ^ a) ^ b) ^ c));
}

}  // namespace mgdt
