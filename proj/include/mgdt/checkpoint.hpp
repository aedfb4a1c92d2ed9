#pragma once

#include <filesystem>

#include "mgdt/lamb.hpp"
#include "mgdt/model.hpp"
#include "mgdt/sequence.hpp"

namespace mgdt {

// Everything needed to resume training bit-exactly: parameters, optimizer
// moments, the layout the model was trained with, and the pretraining game
// manifest (consulted by the fine-tuning leakage check).
struct Checkpoint {
  ModelParams<float> params;
  LambState<float> optim;
  SequenceLayout layout = SequenceLayout::ReturnConditioned;
  std::vector<std::string> train_games;
  std::uint64_t seed = 0;
  long step = 0;

  bool has_optim = false;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mgdt
