#include <doctest.h>

#include "mgdt/sequence.hpp"

using namespace mgdt;

namespace {

Trajectory make_traj(int len, int h = 12, int w = 12) {
  Trajectory t;
  t.game_id = "catch";
  Rng rng = derive_rng(11, 4);
  for (int i = 0; i < len; ++i) {
    Image img(h, w, 1);
    for (auto& p : img.px) p = std::uint8_t(rng() % 256);
    t.observations.push_back(img);
    t.actions.push_back(int(rng() % 6));
    t.rewards.push_back(float(int(rng() % 3) - 1));
  }
  t.returns_to_go = compute_return_to_go(t.rewards);
  return t;
}

}  // namespace

TEST_CASE("returns-to-go strictly future") {
  CHECK(compute_return_to_go(std::vector<float>{0, 0, 0}) == std::vector<float>{0, 0, 0});
  CHECK(compute_return_to_go(std::vector<float>{1, 0, 1}) == std::vector<float>{1, 1, 0});
  CHECK(compute_return_to_go(std::vector<float>{1}) == std::vector<float>{0});
  CHECK(compute_return_to_go(std::vector<float>{1, 2, 3}, true) ==
        std::vector<float>{6, 5, 3});
  CHECK_THROWS_AS(compute_return_to_go(std::vector<float>{}), InputError);
}

TEST_CASE("rtg telescoping") {
  const auto traj = make_traj(20);
  for (int t = 0; t + 1 < traj.length(); ++t)
    CHECK(traj.returns_to_go[t] - traj.returns_to_go[t + 1] ==
          doctest::Approx(traj.rewards[t + 1]));
}

TEST_CASE("window layout law") {
  CHECK(tokens_per_timestep(36, SequenceLayout::ReturnConditioned) * 4 == 156);
  CHECK(tokens_per_timestep(36, SequenceLayout::BehaviorCloning) * 4 == 152);

  ReturnQuantizer q;
  PatchGrid grid;
  TokenVocabulary v;
  const auto traj = make_traj(8);
  const TokenSequence seq = build_window(traj, 1, 4, q, grid, v);
  CHECK(seq.length() == 4 * 12);
  const TokenSequence bc =
      build_window(traj, 1, 4, q, grid, v, SequenceLayout::BehaviorCloning);
  CHECK(bc.length() == 4 * 11);

  // T=1, M=1 -> 4 positions
  PatchGrid whole{12, 12, 12, 12, 1};
  const TokenSequence tiny = build_window(traj, 0, 1, q, whole, v);
  CHECK(tiny.length() == 4);

  CHECK_THROWS_AS(build_window(traj, 0, 0, q, grid, v), InputError);
  CHECK_THROWS_AS(build_window(traj, 6, 4, q, grid, v), InputError);
}

TEST_CASE("window targets and loss weights") {
  ReturnQuantizer q;
  PatchGrid grid;
  TokenVocabulary v;
  const auto traj = make_traj(6);
  const int M = grid.patches_per_image();

  const TokenSequence seq = build_window(traj, 2, 3, q, grid, v);
  for (int t = 0; t < 3; ++t) {
    const int base = t * (M + 3);
    const int src = 2 + t;
    // patches carry no target except the last one, which predicts the return
    for (int m = 0; m < M - 1; ++m) {
      CHECK(seq.targets[base + m] == -1);
      CHECK(seq.loss_weight[base + m] == 0.0f);
    }
    CHECK(seq.targets[base + M - 1] == v.encode_return(q.quantize(traj.returns_to_go[src])));
    CHECK(seq.targets[base + M] == v.encode_action(traj.actions[src]));
    CHECK(seq.targets[base + M + 1] == v.encode_reward(ternarize_reward(traj.rewards[src])));
    CHECK(seq.targets[base + M + 2] == -1);
  }
  CHECK(seq.weighted_targets() == 9);

  const TokenSequence bc = build_window(traj, 2, 3, q, grid, v, SequenceLayout::BehaviorCloning);
  for (int t = 0; t < 3; ++t) {
    const int base = t * (M + 2);
    CHECK(bc.targets[base + M - 1] == v.encode_action(traj.actions[2 + t]));
    CHECK(bc.targets[base + M] == v.encode_reward(ternarize_reward(traj.rewards[2 + t])));
  }
  CHECK(bc.weighted_targets() == 6);
}

TEST_CASE("mask enumerated example T=1 M=2") {
  const AttentionMask m = build_mask(1, 2);
  CHECK(m.n == 5);
  // patches see each other, nothing later
  for (int i : {0, 1})
    for (int j = 0; j < 5; ++j) CHECK(m.at(i, j) == (j <= 1));
  for (int i : {2, 3, 4})
    for (int j = 0; j < 5; ++j) CHECK(m.at(i, j) == (j <= i));
}

TEST_CASE("mask T=1 M=1 is lower triangular") {
  const AttentionMask m = build_mask(1, 1);
  CHECK(m.n == 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(m.at(i, j) == (j <= i));
}

TEST_CASE("mask properties over random shapes") {
  Rng rng = derive_rng(5, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const int T = 1 + int(rng() % 6), M = 1 + int(rng() % 9);
    const SequenceLayout layout =
        rng() % 2 ? SequenceLayout::ReturnConditioned : SequenceLayout::BehaviorCloning;
    const int k = tokens_per_timestep(M, layout);
    const AttentionMask m = build_mask(T, M, layout);
    REQUIRE(m.n == T * k);
    for (int i = 0; i < m.n; ++i) {
      const int ti = i / k, oi = i % k;
      CHECK(m.at(i, i));
      for (int j = 0; j < m.n; ++j) {
        const int tj = j / k, oj = j % k;
        if (tj > ti) CHECK_FALSE(m.at(i, j));          // no cross-future attention
        if (tj < ti) CHECK(m.at(i, j));                // full causal history
        if (tj == ti && oi < M && oj < M) CHECK(m.at(i, j));  // patch mutual visibility
        if (tj == ti && oi >= M) CHECK(m.at(i, j) == (j <= i));  // strict discrete order
        if (tj == ti && oi < M && oj >= M) CHECK_FALSE(m.at(i, j));
      }
    }
  }
}

TEST_CASE("augmentation identity, shift and determinism") {
  Image img(12, 12, 1);
  img.at(0, 0) = 200;
  const AugmentParams ident{4, 4, 0};
  CHECK(augment_image(img, ident) == img);

  const AugmentParams shift{0, 0, 0};
  const Image shifted = augment_image(img, shift);
  CHECK(shifted.at(4, 4) == 200);
  CHECK(shifted.at(0, 0) == 0);

  Rng a = derive_rng(9, 1), b = derive_rng(9, 1);
  const AugmentParams pa = draw_augment(a), pb = draw_augment(b);
  CHECK(pa.dx == pb.dx);
  CHECK(pa.dy == pb.dy);
  CHECK(pa.rot == pb.rot);
  CHECK(augment_image(img, pa) == augment_image(img, pb));
}

TEST_CASE("rotation is exact on right angles") {
  Image img(12, 12, 1);
  img.at(0, 0) = 50;
  const Image r1 = augment_image(img, {4, 4, 1});
  const Image r2 = augment_image(r1, {4, 4, 1});
  const Image r3 = augment_image(r2, {4, 4, 1});
  const Image r4 = augment_image(r3, {4, 4, 1});
  CHECK(r4 == img);
  CHECK(r1.at(0, 0) == 0);  // pixel moved
}

TEST_CASE("per-window augmentation consistency in build_window") {
  ReturnQuantizer q;
  PatchGrid grid;
  TokenVocabulary v;
  const auto traj = make_traj(5);
  const AugmentParams aug{1, 7, 2};
  const TokenSequence seq = build_window(traj, 0, 4, q, grid, v,
                                         SequenceLayout::ReturnConditioned, &aug);
  for (int t = 0; t < 4; ++t) {
    const MatF expect = patchify<float>(augment_image(traj.observations[t], aug), grid);
    for (int m = 0; m < grid.patches_per_image(); ++m)
      CHECK(seq.patches.row(t * grid.patches_per_image() + m) == expect.row(m));
  }
}
