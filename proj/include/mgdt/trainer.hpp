#pragma once

#include "mgdt/checkpoint.hpp"
#include "mgdt/dataset.hpp"
#include "mgdt/eval.hpp"

namespace mgdt {

struct TrainOptions {
  ModelConfig model;
  SequenceLayout layout = SequenceLayout::ReturnConditioned;
  LambConfig optim = pretrain_optim_config();
  BatchSpec batch;
  long steps = 3000;
  long log_every = 100;
  long checkpoint_every = 0;  // 0 -> final checkpoint only
  std::uint64_t init_seed = 0;
  PatchGrid grid;
  ReturnQuantizer quant;
  TokenVocabulary vocab;
  std::filesystem::path checkpoint_path;  // empty -> keep in memory only
  std::filesystem::path log_path;         // empty -> no log file
  // stop as soon as the running mean loss over a log interval drops below
  // this (0 disables); used by overfitting fixtures
  double stop_below_loss = 0.0;
};

struct TrainLogRow {
  long step = 0;
  double loss = 0, loss_return = 0, loss_action = 0, loss_reward = 0;
  double lr = 0, grad_norm = 0;
};

// Train from scratch, or continue from `resume` (bit-identical to an
// uninterrupted run thanks to the stateless per-step batch sampler).
// `opt.steps` is the absolute step count to finish at.
Checkpoint train(const std::vector<Trajectory>& data, const TrainOptions& opt,
                 const Checkpoint* resume = nullptr, std::vector<TrainLogRow>* log = nullptr);

struct FinetuneProtocolOptions {
  std::string game;  // held-out game id
  double data_fraction = 0.01;
  TrainOptions train;  // budget shared by both arms (optim preset: fine-tune)
  RolloutOptions eval;
  std::uint64_t subsample_seed = 0;
};

struct FinetuneProtocolResult {
  EvalReport finetuned;
  EvalReport scratch;
};

// Controlled comparison per the fine-tuning protocol: the same 1% data
// subsample and the same budget for both arms. Throws if the held-out game
// appears in the pretrained checkpoint's training manifest (leakage).
FinetuneProtocolResult run_finetune_protocol(const Checkpoint& pretrained,
                                             const std::vector<Trajectory>& heldout_data,
                                             const FinetuneProtocolOptions& opt);

}  // namespace mgdt
