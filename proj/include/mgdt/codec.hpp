#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "mgdt/types.hpp"

namespace mgdt {

// Uniform return quantizer over a fixed integer range. Values outside the
// range clamp to the boundary bins.
struct ReturnQuantizer {
  double r_low = -20.0;
  double r_high = 100.0;
  double bin_size = 1.0;

  int num_bins() const {
    return static_cast<int>(std::floor((r_high - r_low) / bin_size)) + 1;
  }

  int quantize(double r) const {
    if (!std::isfinite(r)) throw InputError("quantize_return: non-finite return");
    const int idx = static_cast<int>(std::floor((r - r_low) / bin_size));
    return std::clamp(idx, 0, num_bins() - 1);
  }

  // Bin lower edge, so quantize(dequantize(i)) == i for every bin.
  double dequantize(int index) const {
    if (index < 0 || index >= num_bins())
      throw InputError("dequantize_return: index out of range");
    return r_low + index * bin_size;
  }
};

inline int ternarize_reward(double r) {
  if (!std::isfinite(r)) throw InputError("ternarize_reward: non-finite reward");
  return (r > 0.0) - (r < 0.0);
}

struct PatchGrid {
  int image_h = 12;
  int image_w = 12;
  int patch_h = 4;
  int patch_w = 4;
  int channels = 1;

  void validate() const {
    if (image_h <= 0 || image_w <= 0 || patch_h <= 0 || patch_w <= 0 || channels <= 0)
      throw ConfigError("PatchGrid: dimensions must be positive");
    if (image_h % patch_h != 0 || image_w % patch_w != 0)
      throw ConfigError("PatchGrid: patch dims must divide image dims");
  }

  int rows() const { return image_h / patch_h; }
  int cols() const { return image_w / patch_w; }
  int patches_per_image() const { return rows() * cols(); }
  int patch_dim() const { return patch_h * patch_w * channels; }
};

// Split an image into M row-major patches, each flattened row-major and
// scaled to [0,1]. Returns an M x patch_dim matrix.
template <typename S = float>
Mat<S> patchify(const Image& img, const PatchGrid& grid) {
  grid.validate();
  if (img.h != grid.image_h || img.w != grid.image_w || img.c != grid.channels)
    throw InputError("patchify: image dims do not match grid");
  Mat<S> out(grid.patches_per_image(), grid.patch_dim());
  int m = 0;
  for (int py = 0; py < grid.rows(); ++py) {
    for (int px = 0; px < grid.cols(); ++px, ++m) {
      int k = 0;
      for (int y = 0; y < grid.patch_h; ++y)
        for (int x = 0; x < grid.patch_w; ++x)
          for (int ch = 0; ch < grid.channels; ++ch, ++k)
            out(m, k) = static_cast<S>(img.at(py * grid.patch_h + y, px * grid.patch_w + x, ch)) / S(255);
    }
  }
  return out;
}

// Exact inverse of patchify for byte-valued inputs.
template <typename S>
Image unpatchify(const Mat<S>& patches, const PatchGrid& grid) {
  grid.validate();
  if (patches.rows() != grid.patches_per_image() || patches.cols() != grid.patch_dim())
    throw InputError("unpatchify: patch matrix dims do not match grid");
  Image img(grid.image_h, grid.image_w, grid.channels);
  int m = 0;
  for (int py = 0; py < grid.rows(); ++py) {
    for (int px = 0; px < grid.cols(); ++px, ++m) {
      int k = 0;
      for (int y = 0; y < grid.patch_h; ++y)
        for (int x = 0; x < grid.patch_w; ++x)
          for (int ch = 0; ch < grid.channels; ++ch, ++k)
            img.at(py * grid.patch_h + y, px * grid.patch_w + x, ch) =
                static_cast<std::uint8_t>(std::lround(double(patches(m, k)) * 255.0));
    }
  }
  return img;
}

enum class TokenKind { Return, Action, Reward };

// Contiguous, disjoint id ranges: [0, n_return) returns, then actions,
// then the 3 ternary reward tokens.
struct TokenVocabulary {
  int n_return = 121;
  int n_action = 6;
  int n_reward = 3;

  int size() const { return n_return + n_action + n_reward; }
  int return_base() const { return 0; }
  int action_base() const { return n_return; }
  int reward_base() const { return n_return + n_action; }

  int encode_return(int bin) const {
    if (bin < 0 || bin >= n_return) throw InputError("encode_return: bin out of range");
    return return_base() + bin;
  }
  int encode_action(int a) const {
    if (a < 0 || a >= n_action) throw InputError("encode_action: action out of range");
    return action_base() + a;
  }
  // value in {-1, 0, +1}
  int encode_reward(int t) const {
    if (t < -1 || t > 1) throw InputError("encode_reward: value not ternary");
    return reward_base() + t + 1;
  }

  std::pair<TokenKind, int> decode(int id) const {
    if (id >= return_base() && id < return_base() + n_return)
      return {TokenKind::Return, id - return_base()};
    if (id >= action_base() && id < action_base() + n_action)
      return {TokenKind::Action, id - action_base()};
    if (id >= reward_base() && id < reward_base() + n_reward)
      return {TokenKind::Reward, id - reward_base() - 1};
    throw InputError("decode: token id out of vocabulary");
  }
};

}  // namespace mgdt
