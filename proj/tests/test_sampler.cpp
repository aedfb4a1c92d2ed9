#include <doctest.h>

#include "mgdt/sampler.hpp"

using namespace mgdt;

TEST_CASE("expert bias endpoints and midpoint") {
  ReturnQuantizer q;
  Vec<double> logits = Vec<double>::Zero(121);
  expert_bias(logits, 10.0, q);
  CHECK(logits(q.quantize(-20)) == doctest::Approx(0.0));
  CHECK(logits(q.quantize(100)) == doctest::Approx(10.0));
  CHECK(logits(q.quantize(40)) == doctest::Approx(5.0));
  // kappa = 0 leaves logits untouched
  Vec<double> zero = Vec<double>::Zero(121);
  expert_bias(zero, 0.0, q);
  CHECK(zero.cwiseAbs().maxCoeff() == 0.0);
  Vec<double> wrong = Vec<double>::Zero(7);
  CHECK_THROWS_AS(expert_bias(wrong, 10.0, q), InputError);
}

TEST_CASE("percentile cutoff convention") {
  Vec<double> logits(4);
  logits << 0, 1, 2, 3;
  // linear-interpolation quantile of [0..3] at 85% = 2.55 -> only 3 survives
  CHECK(percentile_threshold(logits, 85.0) == doctest::Approx(2.55));
  Rng rng = derive_rng(41, 1);
  for (int k = 0; k < 1000; ++k) CHECK(sample_token(logits, 1.0, 85.0, rng) == 3);
  // percentile 0 keeps everything
  CHECK(percentile_threshold(logits, 0.0) == 0.0);
}

TEST_CASE("dominant logit always wins") {
  Vec<double> logits = Vec<double>::Zero(6);
  logits(2) = 60.0;
  Rng rng = derive_rng(42, 1);
  for (int k = 0; k < 200; ++k) CHECK(sample_token(logits, 1.0, 0.0, rng) == 2);
}

TEST_CASE("uniform logits sample uniformly (chi-square)") {
  Vec<double> logits = Vec<double>::Zero(6);
  Rng rng = derive_rng(43, 1);
  const int n = 100000;
  int counts[6] = {0};
  for (int k = 0; k < n; ++k) ++counts[sample_token(logits, 1.0, 0.0, rng)];
  double chi2 = 0;
  const double e = n / 6.0;
  for (int c : counts) chi2 += (c - e) * (c - e) / e;
  CHECK(chi2 < 15.086);  // df=5, p=0.01 critical value
}

TEST_CASE("biased return sampling matches the analytic softmax") {
  ReturnQuantizer q;
  Vec<double> prior = Vec<double>::Constant(121, -5.0);
  for (int b = 100; b <= 110; ++b) prior(b) = 3.0;
  Vec<double> biased = prior;
  expert_bias(biased, 10.0, q);

  Vec<double> probs = (biased.array() - biased.maxCoeff()).exp();
  probs /= probs.sum();

  Rng rng = derive_rng(44, 1);
  const int n = 100000;
  std::vector<int> counts(121, 0);
  for (int k = 0; k < n; ++k) ++counts[sample_token(biased, 1.0, 0.0, rng)];
  double tv = 0;
  for (int b = 0; b < 121; ++b) tv += std::abs(double(counts[b]) / n - probs(b));
  CHECK(tv / 2 < 0.01);
}

TEST_CASE("temperature sharpens the distribution") {
  Vec<double> logits(3);
  logits << 0.0, 1.0, 2.0;
  Rng rng = derive_rng(45, 1);
  const int n = 20000;
  int hot = 0, cold = 0;
  for (int k = 0; k < n; ++k) hot += sample_token(logits, 2.0, 0.0, rng) == 2;
  for (int k = 0; k < n; ++k) cold += sample_token(logits, 0.25, 0.0, rng) == 2;
  CHECK(cold > hot);
}

TEST_CASE("inference context rolls a bounded window") {
  PatchGrid grid;
  ReturnQuantizer quant;
  TokenVocabulary vocab;
  InferenceContext ctx(4, grid, quant, vocab);
  Image obs(12, 12, 1);
  for (int t = 0; t < 10; ++t) {
    obs.at(0, 0) = std::uint8_t(t);
    ctx.begin_step(obs);
    ctx.set_return(5);
    ctx.set_action(1);
    ctx.set_reward(0.0);
    CHECK(ctx.timesteps() == std::min(t + 1, 4));
  }
  const TokenSequence seq = ctx.to_sequence();
  CHECK(seq.length() == 4 * 12);
  // oldest surviving frame is t=6
  CHECK(seq.patches(0, 0) == doctest::Approx(6.0f / 255.0f));
}

TEST_CASE("ragged inference mask follows the relaxed causal rules") {
  PatchGrid grid;
  ReturnQuantizer quant;
  TokenVocabulary vocab;
  InferenceContext ctx(4, grid, quant, vocab);
  Image obs(12, 12, 1);
  ctx.begin_step(obs);
  ctx.set_return(3);
  ctx.set_action(2);
  ctx.set_reward(1.0);
  ctx.begin_step(obs);  // current step: patches only
  const TokenSequence seq = ctx.to_sequence();
  CHECK(seq.length() == 12 + 9);
  const AttentionMask mask = build_mask_for(seq);
  for (int i = 0; i < mask.n; ++i)
    for (int j = 0; j < mask.n; ++j) {
      if (seq.timestep[j] > seq.timestep[i]) CHECK_FALSE(mask.at(i, j));
      if (seq.timestep[j] < seq.timestep[i]) CHECK(mask.at(i, j));
      if (seq.timestep[i] == seq.timestep[j] && seq.patch_slot[i] >= 0 &&
          seq.patch_slot[j] >= 0)
        CHECK(mask.at(i, j));
    }
}

TEST_CASE("sampler config validation and presets") {
  SamplerConfig bad;
  bad.temperature = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = SamplerConfig{};
  bad.percentile = 100.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  const SamplerConfig topn = top_n_sampler_config();
  CHECK(topn.mode == SamplerMode::TopN);
  CHECK(topn.return_percentile == 0.0);
  CHECK(topn.percentile == 50.0);
  CHECK(topn.top_n == 128);
  CHECK(topn.top_n_return_temperature == doctest::Approx(1.0 / 0.75));
}
