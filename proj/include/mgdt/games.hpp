#pragma once

#include <memory>

#include "mgdt/sequence.hpp"
#include "mgdt/types.hpp"

namespace mgdt {

// All games share one observation geometry and one 6-action alphabet;
// actions a game cannot use are no-ops.
enum GameAction : int {
  kActNoop = 0,
  kActLeft = 1,
  kActRight = 2,
  kActUp = 3,
  kActDown = 4,
  kActFire = 5,
};
constexpr int kNumActions = 6;

struct GameSpec {
  std::string id;
  int obs_h = 12;
  int obs_w = 12;
  int channels = 1;
  int n_actions = kNumActions;
  int max_steps = 70;
  // frozen normalization constants: random_score from 1000 uniform-random
  // episodes, reference_score from the hand-written policy
  double random_score = 0.0;
  double reference_score = 1.0;
  std::string reward_structure;
};

struct StepResult {
  Image observation;
  float reward = 0.0f;
  bool done = false;
};

class Game {
 public:
  virtual ~Game() = default;
  virtual const GameSpec& spec() const = 0;
  virtual Image reset(std::uint64_t seed) = 0;
  virtual StepResult step(int action) = 0;
  // the game's hand-written optimal policy for the current state
  virtual int optimal_action() const = 0;
  virtual bool done() const = 0;
};

std::unique_ptr<Game> make_game(const std::string& id);
const GameSpec& game_spec(const std::string& id);
std::vector<std::string> training_game_ids();
std::string held_out_game_id();
std::vector<std::string> all_game_ids();

// epsilon-greedy skill mix: optimal with probability `skill`, uniform
// otherwise
int scripted_policy(const Game& game, double skill, Rng& rng);

Trajectory run_scripted_episode(const std::string& game_id, double skill, std::uint64_t seed);

// `skill_max` rescales the checkpoint ladder (checkpoint k plays at
// skill_max * k / (n_checkpoints - 1)); 1.0 reproduces the plain ladder.
std::vector<Trajectory> generate_dataset(const std::string& game_id, int n_checkpoints,
                                         int episodes_per_checkpoint, std::uint64_t seed,
                                         double skill_max = 1.0);

}  // namespace mgdt
