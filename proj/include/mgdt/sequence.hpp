#pragma once

#include <span>

#include "mgdt/codec.hpp"
#include "mgdt/types.hpp"

namespace mgdt {

// One episode of interaction. returns_to_go[t] is the strictly-future sum
// of rewards (so the final entry is always 0).
struct Trajectory {
  std::string game_id;
  std::vector<Image> observations;
  std::vector<int> actions;
  std::vector<float> rewards;
  std::vector<float> returns_to_go;
  float skill = 0.0f;

  int length() const { return static_cast<int>(actions.size()); }
  double episodic_return() const {
    double s = 0;
    for (float r : rewards) s += r;
    return s;
  }
};

inline std::vector<float> compute_return_to_go(std::span<const float> rewards,
                                               bool include_current = false) {
  if (rewards.empty()) throw InputError("compute_return_to_go: empty reward list");
  std::vector<float> rtg(rewards.size());
  float acc = 0.0f;
  for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
    if (include_current) acc += rewards[t];
    rtg[t] = acc;
    if (!include_current) acc += rewards[t];
  }
  return rtg;
}

enum class SequenceLayout {
  ReturnConditioned,  // per timestep: M patches, return, action, reward
  BehaviorCloning,    // per timestep: M patches, action, reward
};

inline int tokens_per_timestep(int patches, SequenceLayout layout) {
  return patches + (layout == SequenceLayout::ReturnConditioned ? 3 : 2);
}

// Flattened token window. Positions are either patch vectors (token_id < 0,
// row patch_slot of `patches`) or discrete tokens. targets[i] is the label
// for the model output at position i, -1 when position i predicts nothing.
struct TokenSequence {
  SequenceLayout layout = SequenceLayout::ReturnConditioned;
  int n_timesteps = 0;
  int patches_per_step = 0;

  std::vector<int> token_ids;   // -1 at patch positions
  std::vector<int> patch_slot;  // row into `patches`, -1 at discrete positions
  std::vector<int> patch_index; // spatial patch index within the grid
  std::vector<int> timestep;    // window-local timestep of each position
  std::vector<int> targets;
  std::vector<float> loss_weight;
  MatF patches;  // (#patch positions) x patch_dim

  int length() const { return static_cast<int>(token_ids.size()); }
  int weighted_targets() const {
    int n = 0;
    for (std::size_t i = 0; i < targets.size(); ++i)
      if (targets[i] >= 0 && loss_weight[i] > 0) ++n;
    return n;
  }
};

// Relaxed causal visibility: strictly causal across timesteps, mutual
// visibility among a timestep's patch positions, strict left-to-right order
// among its discrete positions.
struct AttentionMask {
  int n = 0;
  std::vector<std::uint8_t> bits;  // row-major n x n

  bool at(int i, int j) const { return bits[static_cast<std::size_t>(i) * n + j] != 0; }
  void set(int i, int j, bool v) { bits[static_cast<std::size_t>(i) * n + j] = v ? 1 : 0; }
};

inline AttentionMask build_mask(int T, int M,
                                SequenceLayout layout = SequenceLayout::ReturnConditioned) {
  if (T < 1 || M < 1) throw InputError("build_mask: T and M must be >= 1");
  const int k = tokens_per_timestep(M, layout);
  AttentionMask mask;
  mask.n = T * k;
  mask.bits.assign(static_cast<std::size_t>(mask.n) * mask.n, 0);
  for (int i = 0; i < mask.n; ++i) {
    const int ti = i / k, oi = i % k;
    for (int j = 0; j <= i; ++j) mask.set(i, j, true);
    if (oi < M) {
      // patch position: sees all patches of its own timestep, nothing later
      for (int j = i + 1; j < ti * k + M; ++j) mask.set(i, j, true);
    }
  }
  return mask;
}

// Window-level augmentation: one (crop offset, right-angle rotation) pair
// applied identically to every frame.
struct AugmentParams {
  int dx = 4;
  int dy = 4;
  int rot = 0;  // quarter turns, counter-clockwise
};

inline AugmentParams draw_augment(Rng& rng) {
  std::uniform_int_distribution<int> off(0, 8);
  std::uniform_int_distribution<int> rot(0, 3);
  AugmentParams p;
  p.dx = off(rng);
  p.dy = off(rng);
  p.rot = rot(rng);
  return p;
}

inline Image augment_image(const Image& img, const AugmentParams& p) {
  // pad 4 zero pixels per side, crop back at offset (dx, dy) in [0,8]^2
  Image cropped(img.h, img.w, img.c);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        const int sy = y + p.dy - 4, sx = x + p.dx - 4;
        cropped.at(y, x, ch) =
            (sy >= 0 && sy < img.h && sx >= 0 && sx < img.w) ? img.at(sy, sx, ch) : 0;
      }
  if (p.rot % 4 == 0) return cropped;
  if (img.h != img.w) throw InputError("augment_image: rotation requires square images");
  Image out(img.h, img.w, img.c);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        int sy = y, sx = x;
        for (int r = 0; r < p.rot % 4; ++r) {
          const int ny = sx, nx = img.h - 1 - sy;
          sy = ny;
          sx = nx;
        }
        out.at(y, x, ch) = cropped.at(sy, sx, ch);
      }
  return out;
}

// Assemble one training window of `T` timesteps starting at `start`.
// Targets: the last patch position predicts the return token (the action
// token under the BC layout), the return position predicts the action, the
// action position predicts the reward.
inline TokenSequence build_window(const Trajectory& traj, int start, int T,
                                  const ReturnQuantizer& quant, const PatchGrid& grid,
                                  const TokenVocabulary& vocab,
                                  SequenceLayout layout = SequenceLayout::ReturnConditioned,
                                  const AugmentParams* aug = nullptr) {
  if (T < 1) throw InputError("build_window: T must be >= 1");
  if (start < 0 || start + T > traj.length())
    throw InputError("build_window: window exceeds episode");
  const int M = grid.patches_per_image();
  const int k = tokens_per_timestep(M, layout);

  TokenSequence seq;
  seq.layout = layout;
  seq.n_timesteps = T;
  seq.patches_per_step = M;
  const int L = T * k;
  seq.token_ids.assign(L, -1);
  seq.patch_slot.assign(L, -1);
  seq.patch_index.assign(L, -1);
  seq.timestep.assign(L, 0);
  seq.targets.assign(L, -1);
  seq.loss_weight.assign(L, 0.0f);
  seq.patches.resize(T * M, grid.patch_dim());

  for (int t = 0; t < T; ++t) {
    const int src = start + t;
    const Image* obs = &traj.observations[src];
    Image augmented;
    if (aug) {
      augmented = augment_image(*obs, *aug);
      obs = &augmented;
    }
    const MatF pm = patchify<float>(*obs, grid);
    const int base = t * k;
    for (int m = 0; m < M; ++m) {
      const int pos = base + m;
      seq.patch_slot[pos] = t * M + m;
      seq.patch_index[pos] = m;
      seq.timestep[pos] = t;
      seq.patches.row(t * M + m) = pm.row(m);
    }
    int pos = base + M;
    const int action_tok = vocab.encode_action(traj.actions[src]);
    const int reward_tok = vocab.encode_reward(ternarize_reward(traj.rewards[src]));
    if (layout == SequenceLayout::ReturnConditioned) {
      const int return_tok = vocab.encode_return(quant.quantize(traj.returns_to_go[src]));
      seq.targets[base + M - 1] = return_tok;
      seq.loss_weight[base + M - 1] = 1.0f;
      seq.token_ids[pos] = return_tok;
      seq.timestep[pos] = t;
      seq.targets[pos] = action_tok;
      seq.loss_weight[pos] = 1.0f;
      ++pos;
    } else {
      seq.targets[base + M - 1] = action_tok;
      seq.loss_weight[base + M - 1] = 1.0f;
    }
    seq.token_ids[pos] = action_tok;
    seq.timestep[pos] = t;
    seq.targets[pos] = reward_tok;
    seq.loss_weight[pos] = 1.0f;
    ++pos;
    seq.token_ids[pos] = reward_tok;
    seq.timestep[pos] = t;
  }
  return seq;
}

}  // namespace mgdt
