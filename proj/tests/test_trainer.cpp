#include <doctest.h>

#include <filesystem>

#include "mgdt/trainer.hpp"

using namespace mgdt;
namespace fs = std::filesystem;

namespace {

ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 32;
  cfg.n_heads = 2;
  cfg.max_seq_len = 48;
  return cfg;
}

TrainOptions small_opts(long steps) {
  TrainOptions opt;
  opt.model = small_cfg();
  opt.batch.batch_size = 4;
  opt.batch.seed = 12;
  opt.steps = steps;
  opt.log_every = 0;
  opt.optim.warmup_steps = 100;
  return opt;
}

bool params_equal(const ModelParams<float>& a, const ModelParams<float>& b) {
  auto ra = const_cast<ModelParams<float>&>(a).registry();
  auto rb = const_cast<ModelParams<float>&>(b).registry();
  for (std::size_t i = 0; i < ra.size(); ++i)
    if (!(*ra[i].second == *rb[i].second)) return false;
  return true;
}

}  // namespace

TEST_CASE("checkpoint roundtrip is bit-exact") {
  const auto data = generate_dataset("catch", 3, 2, 41);
  const Checkpoint ckpt = train(data, small_opts(3));
  const fs::path path = fs::temp_directory_path() / "mgdt_test_ckpt.bin";
  save_checkpoint(path, ckpt);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.params.cfg == ckpt.params.cfg);
  CHECK(back.layout == ckpt.layout);
  CHECK(back.step == ckpt.step);
  CHECK(back.seed == ckpt.seed);
  CHECK(back.train_games == ckpt.train_games);
  CHECK(params_equal(back.params, ckpt.params));
  REQUIRE(back.has_optim);
  CHECK(back.optim.step == ckpt.optim.step);
  for (std::size_t i = 0; i < ckpt.optim.m.size(); ++i) {
    CHECK(back.optim.m[i] == ckpt.optim.m[i]);
    CHECK(back.optim.v[i] == ckpt.optim.v[i]);
  }
  fs::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), InputError);
}

TEST_CASE("resumed training is bit-identical to an uninterrupted run") {
  const auto data = generate_dataset("catch", 3, 2, 43);
  const Checkpoint full = train(data, small_opts(6));
  const Checkpoint half = train(data, small_opts(3));
  const Checkpoint resumed = train(data, small_opts(6), &half);
  CHECK(resumed.step == full.step);
  CHECK(params_equal(resumed.params, full.params));
}

TEST_CASE("training reduces loss on a small fixture") {
  const auto data = generate_dataset("catch", 3, 3, 47);
  TrainOptions opt = small_opts(60);
  opt.log_every = 20;
  std::vector<TrainLogRow> log;
  train(data, opt, nullptr, &log);
  REQUIRE(log.size() == 3);
  CHECK(log.back().loss < log.front().loss);
  for (const auto& row : log) {
    CHECK(row.loss_action > 0);
    CHECK(row.lr > 0);
    CHECK(std::isfinite(row.grad_norm));
  }
}

TEST_CASE("finetune protocol flags leakage") {
  const auto pre_data = generate_dataset("catch", 2, 2, 51);
  const Checkpoint pre = train(pre_data, small_opts(2));
  FinetuneProtocolOptions fopt;
  fopt.game = "catch";  // present in the pretraining manifest
  fopt.train = small_opts(2);
  const auto held = generate_dataset("catch", 2, 2, 52);
  CHECK_THROWS_AS(run_finetune_protocol(pre, held, fopt), ConfigError);
}
