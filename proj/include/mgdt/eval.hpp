#pragma once

#include <filesystem>

#include "mgdt/games.hpp"
#include "mgdt/sampler.hpp"

namespace mgdt {

// (score - random) / (reference - random); can exceed 1.
double normalized_score(double score, double random_score, double reference_score);

// Mean of the middle 50% of the sorted list. When n is not divisible by 4
// the boundary entries enter with fractional linear weights.
double iqm(const std::vector<double>& scores);

double median(const std::vector<double>& scores);

// 100 * (mean of top 3 scores - best_demo) / max(|best_demo|, 1),
// floored at 0 ("no improvement").
double top3_improvement(const std::vector<double>& rollout_scores, double best_demo);

struct RolloutOptions {
  SamplerConfig sampler;
  int n_trials = 16;
  int window = 4;
  std::uint64_t seed = 0;
  PatchGrid grid;
  ReturnQuantizer quant;
  TokenVocabulary vocab;
};

// n_trials independent episodes; each score is the undiscounted raw-reward
// sum. Layout comes from the sampler mode (BC -> BC layout).
std::vector<double> rollout(const ModelParams<float>& params, const std::string& game_id,
                            const RolloutOptions& opt);

struct GameEval {
  std::string game_id;
  std::vector<double> scores;
  double mean = 0.0;
  double stddev = 0.0;
  double normalized = 0.0;  // of the mean score
  double top3_improvement_pct = 0.0;
  bool has_top3 = false;
};

struct EvalReport {
  std::vector<GameEval> games;
  double iqm_normalized = 0.0;
  double median_normalized = 0.0;
  std::uint64_t seed = 0;
  std::string sampler_mode;
  std::string config_fingerprint;

  std::string table() const;
  // one JSON object per line: a header row, then one row per game
  void write_jsonl(const std::filesystem::path& path) const;
};

// Rolls out every game in `game_ids` and aggregates normalized scores.
// `demos` (optional) supplies best-demonstration returns for top-3 rows.
EvalReport evaluate(const ModelParams<float>& params, const std::vector<std::string>& game_ids,
                    const RolloutOptions& opt, const std::vector<Trajectory>* demos = nullptr);

}  // namespace mgdt
