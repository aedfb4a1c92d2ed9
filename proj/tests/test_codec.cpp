#include <doctest.h>

#include "mgdt/codec.hpp"

using namespace mgdt;

TEST_CASE("return quantizer bins and boundaries") {
  ReturnQuantizer q;
  CHECK(q.num_bins() == 121);
  CHECK(q.quantize(-20.0) == 0);
  CHECK(q.quantize(100.0) == 120);
  CHECK(q.quantize(0.0) == 20);
  // out-of-range clamps
  CHECK(q.quantize(-1000.0) == 0);
  CHECK(q.quantize(1000.0) == 120);
  CHECK_THROWS_AS(q.quantize(std::nan("")), InputError);
}

TEST_CASE("dequantize returns bin lower edge and roundtrips") {
  ReturnQuantizer q;
  CHECK(q.dequantize(0) == -20.0);
  CHECK(q.dequantize(120) == 100.0);
  CHECK(q.dequantize(20) == 0.0);
  for (int i = 0; i < q.num_bins(); ++i) CHECK(q.quantize(q.dequantize(i)) == i);
  CHECK_THROWS_AS(q.dequantize(-1), InputError);
  CHECK_THROWS_AS(q.dequantize(121), InputError);
}

TEST_CASE("quantizer monotonicity over random scalars") {
  ReturnQuantizer q;
  Rng rng = derive_rng(7, 1);
  std::uniform_real_distribution<double> uni(-60.0, 140.0);
  for (int k = 0; k < 100000; ++k) {
    const double a = uni(rng), b = uni(rng);
    const double lo = std::min(a, b), hi = std::max(a, b);
    CHECK(q.quantize(lo) <= q.quantize(hi));
  }
}

TEST_CASE("ternarize reward is the sign") {
  CHECK(ternarize_reward(0.0) == 0);
  CHECK(ternarize_reward(0.7) == 1);
  CHECK(ternarize_reward(-1.0) == -1);
  CHECK_THROWS_AS(ternarize_reward(std::nan("")), InputError);
}

TEST_CASE("patchify counts and exact reconstruction") {
  // full-scale geometry: 84x84 with 14x14 patches -> 36
  PatchGrid big{84, 84, 14, 14, 1};
  CHECK(big.patches_per_image() == 36);

  PatchGrid grid;  // 12x12 / 4x4
  CHECK(grid.patches_per_image() == 9);
  Image img(12, 12, 1);
  Rng rng = derive_rng(3, 2);
  for (auto& p : img.px) p = std::uint8_t(rng() % 256);
  const MatF patches = patchify<float>(img, grid);
  CHECK(patches.rows() == 9);
  CHECK(patches.cols() == 16);
  CHECK(patches.maxCoeff() <= 1.0f);
  CHECK(unpatchify(patches, grid) == img);

  // full-image patch = flattened image
  PatchGrid whole{12, 12, 12, 12, 1};
  const MatF one = patchify<float>(img, whole);
  CHECK(one.rows() == 1);
  CHECK(one.cols() == 144);
  CHECK(unpatchify(one, whole) == img);

  Image wrong(8, 8, 1);
  CHECK_THROWS_AS(patchify<float>(wrong, grid), InputError);
}

TEST_CASE("vocabulary encode/decode bijectivity") {
  TokenVocabulary v;
  CHECK(v.size() == 130);
  for (int b = 0; b < v.n_return; ++b) {
    auto [kind, value] = v.decode(v.encode_return(b));
    CHECK(kind == TokenKind::Return);
    CHECK(value == b);
  }
  for (int a = 0; a < v.n_action; ++a) {
    auto [kind, value] = v.decode(v.encode_action(a));
    CHECK(kind == TokenKind::Action);
    CHECK(value == a);
  }
  for (int r = -1; r <= 1; ++r) {
    auto [kind, value] = v.decode(v.encode_reward(r));
    CHECK(kind == TokenKind::Reward);
    CHECK(value == r);
  }
  CHECK_THROWS_AS(v.decode(130), InputError);
  CHECK_THROWS_AS(v.encode_return(121), InputError);
  CHECK_THROWS_AS(v.encode_action(6), InputError);
  CHECK_THROWS_AS(v.encode_reward(2), InputError);
}
