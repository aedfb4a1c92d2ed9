#include "mgdt/games.hpp"

#include <algorithm>
#include <array>
#include <queue>

namespace mgdt {

namespace {

constexpr int kH = 12;
constexpr int kW = 12;
constexpr std::uint8_t kPlayerPx = 255;
constexpr std::uint8_t kObjectPx = 170;
constexpr std::uint8_t kWallPx = 85;
constexpr std::uint8_t kMarkerPx = 100;

class GameBase : public Game {
 public:
  const GameSpec& spec() const override { return spec_; }
  bool done() const override { return done_; }

  Image reset(std::uint64_t seed) override {
    rng_ = derive_rng(seed, 0x67616d65ull);
    step_count_ = 0;
    done_ = false;
    started_ = true;
    on_reset();
    return render();
  }

  StepResult step(int action) override {
    if (!started_) throw InputError(spec_.id + ": step before reset");
    if (done_) throw InputError(spec_.id + ": step after episode end");
    if (action < 0 || action >= kNumActions)
      throw InputError(spec_.id + ": invalid action id");
    StepResult res;
    res.reward = on_step(action);
    ++step_count_;
    if (step_count_ >= spec_.max_steps) done_ = true;
    res.done = done_;
    res.observation = render();
    return res;
  }

 protected:
  virtual void on_reset() = 0;
  virtual float on_step(int action) = 0;
  virtual void draw(Image& img) const = 0;

  Image render() const {
    Image img(kH, kW, 1);
    draw(img);
    return img;
  }

  int rand_int(int lo, int hi) {  // inclusive
    return std::uniform_int_distribution<int>(lo, hi)(rng_);
  }

  GameSpec spec_;
  Rng rng_{0};
  int step_count_ = 0;
  bool done_ = false;
  bool started_ = false;
};

// A ball falls from the top; a 3-wide paddle on the bottom row catches it
// (+1) or misses (-1). Five balls per episode.
class CatchGame : public GameBase {
 public:
  explicit CatchGame(bool mirrored) : mirrored_(mirrored) {
    spec_.id = mirrored ? "mirror_catch" : "catch";
    spec_.max_steps = 70;
    spec_.reward_structure = "+1 caught ball, -1 missed ball, 5 balls";
    if (mirrored) {
      // left/right controls are swapped; measured separately
      spec_.random_score = -2.568;
      spec_.reference_score = 5.0;
    } else {
      spec_.random_score = -2.518;
      spec_.reference_score = 5.0;
    }
  }

 protected:
  void on_reset() override {
    paddle_ = rand_int(2, 9);
    balls_resolved_ = 0;
    spawn_ball();
  }

  float on_step(int action) override {
    int move = 0;
    if (action == kActLeft) move = -1;
    if (action == kActRight) move = 1;
    if (mirrored_) move = -move;
    paddle_ = std::clamp(paddle_ + move, 1, kW - 2);
    ++ball_row_;
    float reward = 0.0f;
    if (ball_row_ == kH - 1) {
      reward = std::abs(ball_col_ - paddle_) <= 1 ? 1.0f : -1.0f;
      ++balls_resolved_;
      if (balls_resolved_ >= 5)
        done_ = true;
      else
        spawn_ball();
    }
    return reward;
  }

  int optimal_action() const override {
    int toward = 0;
    if (ball_col_ < paddle_) toward = -1;
    if (ball_col_ > paddle_) toward = 1;
    if (mirrored_) toward = -toward;
    if (toward < 0) return kActLeft;
    if (toward > 0) return kActRight;
    return kActNoop;
  }

  void draw(Image& img) const override {
    if (mirrored_) img.at(0, 0) = kMarkerPx;
    if (ball_row_ >= 0 && ball_row_ < kH) img.at(ball_row_, ball_col_) = kObjectPx;
    for (int dx = -1; dx <= 1; ++dx) img.at(kH - 1, paddle_ + dx) = kPlayerPx;
  }

 private:
  void spawn_ball() {
    ball_row_ = 0;
    ball_col_ = rand_int(0, kW - 1);
  }

  bool mirrored_;
  int paddle_ = 5;
  int ball_row_ = 0;
  int ball_col_ = 0;
  int balls_resolved_ = 0;
};

// A full-width wall with a 3-wide gap descends; stand in the gap (+1) or
// get hit (-1). Five walls per episode.
class DodgeGame : public GameBase {
 public:
  DodgeGame() {
    spec_.id = "dodge";
    spec_.max_steps = 70;
    spec_.reward_structure = "+1 per dodged wall, -1 per hit, 5 walls";
    spec_.random_score = -0.474;
    spec_.reference_score = 5.0;
  }

 protected:
  void on_reset() override {
    player_ = rand_int(1, kW - 2);
    walls_resolved_ = 0;
    spawn_wall();
  }

  float on_step(int action) override {
    if (action == kActLeft) player_ = std::max(0, player_ - 1);
    if (action == kActRight) player_ = std::min(kW - 1, player_ + 1);
    ++wall_row_;
    float reward = 0.0f;
    if (wall_row_ == kH - 1) {
      reward = std::abs(player_ - gap_center_) <= 1 ? 1.0f : -1.0f;
      ++walls_resolved_;
      if (walls_resolved_ >= 5)
        done_ = true;
      else
        spawn_wall();
    }
    return reward;
  }

  int optimal_action() const override {
    if (gap_center_ < player_) return kActLeft;
    if (gap_center_ > player_) return kActRight;
    return kActNoop;
  }

  void draw(Image& img) const override {
    if (wall_row_ >= 0 && wall_row_ < kH)
      for (int x = 0; x < kW; ++x)
        if (std::abs(x - gap_center_) > 1) img.at(wall_row_, x) = kWallPx;
    img.at(kH - 1, player_) = kPlayerPx;
  }

 private:
  void spawn_wall() {
    wall_row_ = 0;
    gap_center_ = std::clamp(player_ + rand_int(-4, 4), 1, kW - 2);
  }

  int player_ = 5;
  int wall_row_ = 0;
  int gap_center_ = 5;
  int walls_resolved_ = 0;
};

// Collect 6 pellets on a grid with two wall segments; +1 per pellet,
// episode ends when all are collected.
class PelletMazeGame : public GameBase {
 public:
  PelletMazeGame() {
    spec_.id = "pellet_maze";
    spec_.max_steps = 60;
    spec_.reward_structure = "+1 per pellet, 6 pellets, fixed walls";
    spec_.random_score = 0.731;
    spec_.reference_score = 6.0;
  }

  static bool wall_at(int y, int x) {
    return (y == 4 && x >= 2 && x <= 6) || (y == 8 && x >= 5 && x <= 9);
  }

 protected:
  void on_reset() override {
    py_ = 6;
    px_ = 6;
    pellets_.clear();
    while (pellets_.size() < 6) {
      const int y = rand_int(0, kH - 1), x = rand_int(0, kW - 1);
      if (wall_at(y, x) || (y == py_ && x == px_)) continue;
      bool dup = false;
      for (auto& [qy, qx] : pellets_) dup |= (qy == y && qx == x);
      if (!dup) pellets_.emplace_back(y, x);
    }
  }

  float on_step(int action) override {
    int ny = py_, nx = px_;
    if (action == kActLeft) nx -= 1;
    if (action == kActRight) nx += 1;
    if (action == kActUp) ny -= 1;
    if (action == kActDown) ny += 1;
    if (ny >= 0 && ny < kH && nx >= 0 && nx < kW && !wall_at(ny, nx)) {
      py_ = ny;
      px_ = nx;
    }
    float reward = 0.0f;
    for (std::size_t i = 0; i < pellets_.size(); ++i) {
      if (pellets_[i].first == py_ && pellets_[i].second == px_) {
        reward = 1.0f;
        pellets_.erase(pellets_.begin() + i);
        break;
      }
    }
    if (pellets_.empty()) done_ = true;
    return reward;
  }

  int optimal_action() const override {
    // BFS to the nearest pellet; first move of the shortest path
    if (pellets_.empty()) return kActNoop;
    std::array<int, kH * kW> first_move;
    first_move.fill(-1);
    std::queue<int> q;
    const int start = py_ * kW + px_;
    first_move[start] = kActNoop;
    q.push(start);
    const std::array<std::pair<int, int>, 4> dirs{
        {{0, -1}, {0, 1}, {-1, 0}, {1, 0}}};  // left, right, up, down
    const std::array<int, 4> acts{kActLeft, kActRight, kActUp, kActDown};
    while (!q.empty()) {
      const int cur = q.front();
      q.pop();
      const int cy = cur / kW, cx = cur % kW;
      for (auto& [py, px] : pellets_)
        if (py == cy && px == cx) return first_move[cur];
      for (int d = 0; d < 4; ++d) {
        const int ny = cy + dirs[d].first, nx = cx + dirs[d].second;
        if (ny < 0 || ny >= kH || nx < 0 || nx >= kW || wall_at(ny, nx)) continue;
        const int nid = ny * kW + nx;
        if (first_move[nid] >= 0) continue;
        first_move[nid] = (cur == start) ? acts[d] : first_move[cur];
        q.push(nid);
      }
    }
    return kActNoop;
  }

  void draw(Image& img) const override {
    for (int y = 0; y < kH; ++y)
      for (int x = 0; x < kW; ++x)
        if (wall_at(y, x)) img.at(y, x) = kWallPx;
    for (auto& [y, x] : pellets_) img.at(y, x) = kObjectPx;
    img.at(py_, px_) = kPlayerPx;
  }

 private:
  int py_ = 6, px_ = 6;
  std::vector<std::pair<int, int>> pellets_;
};

// Align with the target on the top row and fire: +1 hit, -1 misfire.
class TurretGame : public GameBase {
 public:
  TurretGame() {
    spec_.id = "turret";
    spec_.max_steps = 60;
    spec_.reward_structure = "+1 per hit target, -1 per misfire";
    spec_.random_score = -9.174;
    spec_.reference_score = 12.966;
  }

 protected:
  void on_reset() override {
    player_ = rand_int(0, kW - 1);
    spawn_target();
  }

  float on_step(int action) override {
    if (action == kActLeft) player_ = std::max(0, player_ - 1);
    if (action == kActRight) player_ = std::min(kW - 1, player_ + 1);
    if (action != kActFire) return 0.0f;
    if (player_ == target_) {
      spawn_target();
      return 1.0f;
    }
    return -1.0f;
  }

  int optimal_action() const override {
    if (player_ == target_) return kActFire;
    return target_ < player_ ? kActLeft : kActRight;
  }

  void draw(Image& img) const override {
    img.at(0, target_) = kObjectPx;
    img.at(kH - 1, player_) = kPlayerPx;
  }

 private:
  void spawn_target() {
    static constexpr std::array<int, 6> offsets{-5, -4, -3, 3, 4, 5};
    target_ = std::clamp(player_ + offsets[rand_int(0, 5)], 0, kW - 1);
    if (target_ == player_) target_ = player_ > kW / 2 ? player_ - 3 : player_ + 3;
  }

  int player_ = 5;
  int target_ = 0;
};

}  // namespace

std::unique_ptr<Game> make_game(const std::string& id) {
  if (id == "catch") return std::make_unique<CatchGame>(false);
  if (id == "mirror_catch") return std::make_unique<CatchGame>(true);
  if (id == "dodge") return std::make_unique<DodgeGame>();
  if (id == "pellet_maze") return std::make_unique<PelletMazeGame>();
  if (id == "turret") return std::make_unique<TurretGame>();
  throw ConfigError("unknown game id: " + id);
}

const GameSpec& game_spec(const std::string& id) {
  static std::vector<std::unique_ptr<Game>> cache = [] {
    std::vector<std::unique_ptr<Game>> v;
    for (const auto& g : all_game_ids()) v.push_back(make_game(g));
    return v;
  }();
  for (auto& g : cache)
    if (g->spec().id == id) return g->spec();
  throw ConfigError("unknown game id: " + id);
}

std::vector<std::string> training_game_ids() {
  return {"catch", "dodge", "pellet_maze", "turret"};
}

std::string held_out_game_id() { return "mirror_catch"; }

std::vector<std::string> all_game_ids() {
  return {"catch", "dodge", "pellet_maze", "turret", "mirror_catch"};
}

int scripted_policy(const Game& game, double skill, Rng& rng) {
  if (skill < 0.0 || skill > 1.0) throw InputError("scripted_policy: skill outside [0,1]");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  if (uni(rng) < skill) return game.optimal_action();
  return std::uniform_int_distribution<int>(0, kNumActions - 1)(rng);
}

Trajectory run_scripted_episode(const std::string& game_id, double skill, std::uint64_t seed) {
  auto game = make_game(game_id);
  Rng policy_rng = derive_rng(seed, 0x706f6c696379ull);
  Trajectory traj;
  traj.game_id = game_id;
  traj.skill = static_cast<float>(skill);
  Image obs = game->reset(seed);
  while (!game->done()) {
    const int action = scripted_policy(*game, skill, policy_rng);
    StepResult res = game->step(action);
    traj.observations.push_back(std::move(obs));
    traj.actions.push_back(action);
    traj.rewards.push_back(res.reward);
    obs = std::move(res.observation);
  }
  traj.returns_to_go = compute_return_to_go(traj.rewards);
  return traj;
}

std::vector<Trajectory> generate_dataset(const std::string& game_id, int n_checkpoints,
                                         int episodes_per_checkpoint, std::uint64_t seed,
                                         double skill_max) {
  if (n_checkpoints < 1 || episodes_per_checkpoint < 1)
    throw InputError("generate_dataset: counts must be positive");
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n_checkpoints) * episodes_per_checkpoint);
  for (int k = 0; k < n_checkpoints; ++k) {
    const double skill =
        skill_max * (n_checkpoints == 1 ? 1.0 : double(k) / double(n_checkpoints - 1));
    for (int e = 0; e < episodes_per_checkpoint; ++e) {
      const std::uint64_t ep_seed = splitmix64(splitmix64(seed ^ (std::uint64_t(k) << 20)) ^ e);
      out.push_back(run_scripted_episode(game_id, skill, ep_seed));
    }
  }
  return out;
}

}  // namespace mgdt
