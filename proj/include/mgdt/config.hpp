#pragma once

#include <filesystem>

#include "mgdt/sampler.hpp"

namespace mgdt {

// Flat, sectioned key=value run configuration. Every run writes its fully
// resolved form back out so it can be reproduced from that file alone.
struct RunConfig {
  // [run]
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::string data_dir;  // empty -> $MGDT_DATA_DIR or "data"
  std::string out_dir = "runs";

  // [model]
  std::string model_preset = "dt-tiny";
  std::string layout = "dt";  // dt | bc

  // [data]
  std::vector<std::string> games;  // default: the 4 training games
  std::string run_name = "run0";
  int n_checkpoints = 50;
  int episodes_per_checkpoint = 4;
  double skill_max = 1.0;
  bool expert_filter = false;
  double expert_fraction = 0.10;
  bool rtg_include_current = false;

  // [train]
  long steps = 3000;
  int batch_size = 16;
  int window = 4;
  bool augment = true;
  long log_every = 100;
  long checkpoint_every = 0;
  double peak_lr = 3e-4;
  int warmup_steps = 4000;
  double weight_decay = 0.0;
  double clip_norm = 1.0;

  // [sampler]
  std::string sampler_mode = "expert-bias";  // expert-bias | top-n | bc
  double kappa = 10.0;
  double temperature = 1.0;
  double percentile = 85.0;
  double return_temperature = 1.0;
  double return_percentile = 0.0;
  int top_n = 128;
  bool regenerate_all_returns = false;

  // [eval]
  int n_trials = 16;
  std::vector<std::string> eval_games;  // default: [data] games

  // [finetune]
  std::string finetune_game;  // default: held_out_game_id()
  double data_fraction = 0.01;
  long finetune_steps = 500;
  double finetune_lr = 1e-4;
  double finetune_weight_decay = 1e-2;
  int finetune_warmup_steps = 100;

  SequenceLayout sequence_layout() const;
  SamplerConfig sampler_config() const;
  std::string resolved_text() const;
  std::string fingerprint() const;  // hash of the resolved text
  std::filesystem::path resolved_data_dir() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);
void write_resolved_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace mgdt
