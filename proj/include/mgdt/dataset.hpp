#pragma once

#include <filesystem>
#include <map>

#include "mgdt/sequence.hpp"
#include "mgdt/types.hpp"

namespace mgdt {

// Versioned little-endian episode container; rewards stored as 1e-4
// fixed-point so the roundtrip is bit-exact.
void write_episodes(const std::filesystem::path& path, const std::vector<Trajectory>& episodes);
std::vector<Trajectory> read_episodes(const std::filesystem::path& path);

// Keep episodes at or above the per-game (1 - keep_fraction) return
// quantile; ties at the threshold are all kept.
std::vector<Trajectory> filter_expert(const std::vector<Trajectory>& episodes,
                                      double keep_fraction = 0.10);

// Uniform episode subsample (no quality filtering) totalling roughly
// `fraction` of the dataset's steps; at least one episode survives.
std::vector<Trajectory> subsample_steps(const std::vector<Trajectory>& episodes, double fraction,
                                        std::uint64_t seed);

std::size_t total_steps(const std::vector<Trajectory>& episodes);
double best_demo_return(const std::vector<Trajectory>& episodes, const std::string& game_id);

struct BatchSpec {
  int batch_size = 16;
  int window = 4;
  bool augment = true;
  std::uint64_t seed = 0;
  // empty -> weights proportional to per-game step counts
  std::map<std::string, double> mixing_weights;
};

struct BatchItem {
  TokenSequence seq;
  AttentionMask mask;
  std::string game_id;
};

// Stateless-per-step batch sampler: the batch at a given step index is a
// pure function of (spec.seed, step), so training can resume exactly.
class BatchSampler {
 public:
  BatchSampler(const std::vector<Trajectory>* episodes, BatchSpec spec, PatchGrid grid,
               ReturnQuantizer quant, TokenVocabulary vocab,
               SequenceLayout layout = SequenceLayout::ReturnConditioned);

  std::vector<BatchItem> sample_batch(long step);

 private:
  struct GameIndex {
    std::string game_id;
    std::vector<int> episode;       // index into episodes
    std::vector<long> cum_windows;  // cumulative valid window counts
    long total_windows = 0;
    std::size_t steps = 0;
  };

  const std::vector<Trajectory>* episodes_;
  BatchSpec spec_;
  PatchGrid grid_;
  ReturnQuantizer quant_;
  TokenVocabulary vocab_;
  SequenceLayout layout_;
  std::vector<GameIndex> games_;
  std::vector<double> cum_weight_;
  std::map<int, AttentionMask> mask_cache_;
};

}  // namespace mgdt
