#include "mgdt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mgdt/dataset.hpp"
#include <nlohmann/json.hpp>

namespace mgdt {

double normalized_score(double score, double random_score, double reference_score) {
  if (reference_score == random_score)
    throw InputError("normalized_score: reference equals random score");
  return (score - random_score) / (reference_score - random_score);
}

double iqm(const std::vector<double>& scores) {
  const int n = static_cast<int>(scores.size());
  if (n < 4) throw InputError("iqm: need at least 4 values");
  std::vector<double> s = scores;
  std::sort(s.begin(), s.end());
  // entry i occupies [i, i+1] in rank space; weight = overlap with the
  // central [n/4, 3n/4] band
  const double lo = n / 4.0, hi = 3.0 * n / 4.0;
  double total = 0, wsum = 0;
  for (int i = 0; i < n; ++i) {
    const double w = std::max(0.0, std::min(double(i + 1), hi) - std::max(double(i), lo));
    total += w * s[i];
    wsum += w;
  }
  return total / wsum;
}

double median(const std::vector<double>& scores) {
  if (scores.empty()) throw InputError("median: empty list");
  std::vector<double> s = scores;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  return n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

double top3_improvement(const std::vector<double>& rollout_scores, double best_demo) {
  if (rollout_scores.size() < 3) throw InputError("top3_improvement: need at least 3 scores");
  std::vector<double> s = rollout_scores;
  std::sort(s.begin(), s.end(), std::greater<>());
  const double top3 = (s[0] + s[1] + s[2]) / 3.0;
  const double pct = 100.0 * (top3 - best_demo) / std::max(std::abs(best_demo), 1.0);
  return std::max(0.0, pct);
}

std::vector<double> rollout(const ModelParams<float>& params, const std::string& game_id,
                            const RolloutOptions& opt) {
  if (opt.n_trials < 1) throw ConfigError("rollout: n_trials must be >= 1");
  const GameSpec& spec = game_spec(game_id);
  if (spec.obs_h != opt.grid.image_h || spec.obs_w != opt.grid.image_w ||
      spec.channels != opt.grid.channels)
    throw ConfigError("rollout: game geometry does not match patch grid");
  const SequenceLayout layout = opt.sampler.mode == SamplerMode::BC
                                    ? SequenceLayout::BehaviorCloning
                                    : SequenceLayout::ReturnConditioned;
  std::vector<double> scores;
  scores.reserve(opt.n_trials);
  auto game = make_game(game_id);
  for (int trial = 0; trial < opt.n_trials; ++trial) {
    Rng rng = derive_rng(opt.seed, 0x726f6c6c6f7574ull, std::uint64_t(trial));
    Image obs = game->reset(splitmix64(splitmix64(opt.seed ^ 0x657069ull) + trial));
    InferenceContext ctx(opt.window, opt.grid, opt.quant, opt.vocab, layout);
    double score = 0;
    while (!game->done()) {
      ctx.begin_step(obs);
      int action;
      if (layout == SequenceLayout::BehaviorCloning)
        action = act_bc(params, ctx, opt.sampler, opt.vocab, rng);
      else
        action = act(params, ctx, opt.sampler, opt.vocab, rng).action;
      StepResult res = game->step(action);
      ctx.set_reward(res.reward);
      score += res.reward;
      obs = res.observation;
    }
    scores.push_back(score);
  }
  return scores;
}

EvalReport evaluate(const ModelParams<float>& params, const std::vector<std::string>& game_ids,
                    const RolloutOptions& opt, const std::vector<Trajectory>* demos) {
  if (game_ids.empty()) throw InputError("evaluate: no games");
  EvalReport report;
  report.seed = opt.seed;
  report.sampler_mode = opt.sampler.mode == SamplerMode::BC        ? "bc"
                        : opt.sampler.mode == SamplerMode::TopN    ? "top-n"
                                                                   : "expert-bias";
  std::vector<double> normalized;
  for (const std::string& id : game_ids) {
    const GameSpec& spec = game_spec(id);
    GameEval ge;
    ge.game_id = id;
    ge.scores = rollout(params, id, opt);
    ge.mean = std::accumulate(ge.scores.begin(), ge.scores.end(), 0.0) / ge.scores.size();
    double var = 0;
    for (double s : ge.scores) var += (s - ge.mean) * (s - ge.mean);
    ge.stddev = std::sqrt(var / ge.scores.size());
    ge.normalized = normalized_score(ge.mean, spec.random_score, spec.reference_score);
    if (demos && ge.scores.size() >= 3) {
      ge.top3_improvement_pct = top3_improvement(ge.scores, best_demo_return(*demos, id));
      ge.has_top3 = true;
    }
    normalized.push_back(ge.normalized);
    report.games.push_back(std::move(ge));
  }
  report.median_normalized = median(normalized);
  report.iqm_normalized = normalized.size() >= 4 ? iqm(normalized) : report.median_normalized;
  return report;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os << "game            mean     std      norm";
  bool any_top3 = false;
  for (const auto& g : games) any_top3 |= g.has_top3;
  if (any_top3) os << "     top3%";
  os << "\n";
  char buf[160];
  for (const auto& g : games) {
    std::snprintf(buf, sizeof(buf), "%-14s %7.3f %7.3f %9.4f", g.game_id.c_str(), g.mean,
                  g.stddev, g.normalized);
    os << buf;
    if (g.has_top3) {
      std::snprintf(buf, sizeof(buf), " %8.2f", g.top3_improvement_pct);
      os << buf;
    }
    os << "\n";
  }
  std::snprintf(buf, sizeof(buf), "IQM %.4f  median %.4f  (sampler %s, seed %llu)\n",
                iqm_normalized, median_normalized, sampler_mode.c_str(),
                static_cast<unsigned long long>(seed));
  os << buf;
  return os.str();
}

void EvalReport::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("write_jsonl: cannot open " + path.string());
  nlohmann::ordered_json header;
  header["kind"] = "eval_report";
  header["iqm_normalized"] = iqm_normalized;
  header["median_normalized"] = median_normalized;
  header["seed"] = seed;
  header["sampler_mode"] = sampler_mode;
  header["config_fingerprint"] = config_fingerprint;
  out << header.dump() << "\n";
  for (const auto& g : games) {
    nlohmann::ordered_json row;
    row["kind"] = "game";
    row["game_id"] = g.game_id;
    row["scores"] = g.scores;
    row["mean"] = g.mean;
    row["stddev"] = g.stddev;
    row["normalized"] = g.normalized;
    if (g.has_top3) row["top3_improvement_pct"] = g.top3_improvement_pct;
    out << row.dump() << "\n";
  }
}

}  // namespace mgdt
