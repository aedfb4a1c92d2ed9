#pragma once

#include <deque>
#include <optional>

#include "mgdt/model.hpp"

namespace mgdt {

enum class SamplerMode { ExpertBias, TopN, BC };

struct SamplerConfig {
  SamplerMode mode = SamplerMode::ExpertBias;
  double kappa = 10.0;
  double temperature = 1.0;         // action sampling
  double percentile = 85.0;         // action logit cutoff
  double return_temperature = 1.0;  // return sampling (expert-bias mode)
  double return_percentile = 0.0;   // no cutoff: the tilt alone reweights returns
  int top_n = 128;                       // TopN mode
  double top_n_return_temperature = 1.0 / 0.75;  // inverse temperature 0.75
  bool regenerate_all_returns = false;

  void validate() const {
    if (kappa < 0) throw ConfigError("SamplerConfig: kappa must be >= 0");
    if (temperature <= 0 || return_temperature <= 0 || top_n_return_temperature <= 0)
      throw ConfigError("SamplerConfig: temperature must be > 0");
    if (percentile < 0 || percentile >= 100 || return_percentile < 0 || return_percentile >= 100)
      throw ConfigError("SamplerConfig: percentile must be in [0, 100)");
    if (top_n < 1) throw ConfigError("SamplerConfig: N must be >= 1");
  }
};

// TopN mode per the published variant: N return draws at inverse
// temperature 0.75, no return cutoff, top-50th-percentile action logits.
inline SamplerConfig top_n_sampler_config() {
  SamplerConfig c;
  c.mode = SamplerMode::TopN;
  c.return_percentile = 0.0;
  c.percentile = 50.0;
  return c;
}

// Additive expert tilt: 0 at r_low, kappa at r_high, linear in between.
template <typename S>
void expert_bias(Vec<S>& return_logits, double kappa, const ReturnQuantizer& quant) {
  if (return_logits.size() != quant.num_bins())
    throw InputError("expert_bias: logit count does not match quantizer bins");
  for (int i = 0; i < return_logits.size(); ++i)
    return_logits(i) +=
        S(kappa * (quant.dequantize(i) - quant.r_low) / (quant.r_high - quant.r_low));
}

// Linear-interpolation percentile of raw values.
template <typename S>
S percentile_threshold(const Vec<S>& v, double pct) {
  std::vector<S> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end());
  const double pos = pct / 100.0 * double(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - double(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return S(double(sorted[lo]) + frac * (double(sorted[lo + 1]) - double(sorted[lo])));
}

// Drop tokens whose logit falls below the percentile threshold, divide the
// rest by the temperature, softmax, sample.
template <typename S>
int sample_token(const Vec<S>& logits, double temperature, double pct, Rng& rng) {
  if (!logits.allFinite()) throw InputError("sample_token: non-finite logits");
  const S th = percentile_threshold(logits, pct);
  Vec<double> probs = Vec<double>::Zero(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < logits.size(); ++i)
    if (logits(i) >= th) mx = std::max(mx, double(logits(i)) / temperature);
  double sum = 0;
  for (int i = 0; i < logits.size(); ++i) {
    if (logits(i) < th) continue;
    probs(i) = std::exp(double(logits(i)) / temperature - mx);
    sum += probs(i);
  }
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double u = uni(rng) * sum;
  for (int i = 0; i < logits.size(); ++i) {
    u -= probs(i);
    if (probs(i) > 0 && u <= 0) return i;
  }
  for (int i = logits.size() - 1; i >= 0; --i)
    if (probs(i) > 0) return i;
  throw NumericError("sample_token: empty support");
}

// Rolling window over the last T timesteps of an episode. Each record holds
// the observation plus whatever discrete tokens exist for it so far.
class InferenceContext {
 public:
  InferenceContext(int window_timesteps, PatchGrid grid, ReturnQuantizer quant,
                   TokenVocabulary vocab,
                   SequenceLayout layout = SequenceLayout::ReturnConditioned)
      : window_(window_timesteps), grid_(grid), quant_(quant), vocab_(vocab), layout_(layout) {
    if (window_timesteps < 1) throw ConfigError("InferenceContext: window must be >= 1");
  }

  SequenceLayout layout() const { return layout_; }
  const ReturnQuantizer& quantizer() const { return quant_; }
  int timesteps() const { return static_cast<int>(steps_.size()); }

  // Starts timestep t with its observation, evicting the oldest record once
  // the window is full.
  void begin_step(const Image& obs) {
    if (obs.h != grid_.image_h || obs.w != grid_.image_w || obs.c != grid_.channels)
      throw InputError("InferenceContext: observation dims do not match grid");
    if (static_cast<int>(steps_.size()) == window_) steps_.pop_front();
    steps_.push_back(Record{patchify<float>(obs, grid_), {}, {}, {}});
  }

  void set_return(int bin) { steps_.back().return_bin = bin; }
  void set_return(int t, int bin) { steps_.at(t).return_bin = bin; }
  std::optional<int> return_bin(int t) const { return steps_.at(t).return_bin; }
  void set_action(int action) { steps_.back().action = action; }
  void set_reward(double reward) { steps_.back().reward = ternarize_reward(reward); }

  // Token sequence over records [0, upto_step]. The final record is
  // truncated to its patches plus at most `max_last_discrete` of its
  // discrete tokens, so returns can be resampled mid-record.
  TokenSequence to_sequence(int upto_step = -1, int max_last_discrete = 1 << 20) const {
    if (steps_.empty()) throw InputError("InferenceContext: empty context");
    const int n = upto_step < 0 ? timesteps() : upto_step + 1;
    const int M = grid_.patches_per_image();
    TokenSequence seq;
    seq.layout = layout_;
    seq.n_timesteps = n;
    seq.patches_per_step = M;
    seq.patches.resize(n * M, grid_.patch_dim());
    for (int t = 0; t < n; ++t) {
      const Record& rec = steps_[t];
      for (int m = 0; m < M; ++m) {
        seq.token_ids.push_back(-1);
        seq.patch_slot.push_back(t * M + m);
        seq.patch_index.push_back(m);
        seq.timestep.push_back(t);
        seq.patches.row(t * M + m) = rec.patches.row(m);
      }
      int budget = (t == n - 1) ? max_last_discrete : 1 << 20;
      auto push = [&](int id) {
        if (budget <= 0) return;
        --budget;
        seq.token_ids.push_back(id);
        seq.patch_slot.push_back(-1);
        seq.patch_index.push_back(-1);
        seq.timestep.push_back(t);
      };
      if (layout_ == SequenceLayout::ReturnConditioned && rec.return_bin)
        push(vocab_.encode_return(*rec.return_bin));
      if (rec.action) push(vocab_.encode_action(*rec.action));
      if (rec.reward) push(vocab_.encode_reward(*rec.reward));
    }
    seq.targets.assign(seq.token_ids.size(), -1);
    seq.loss_weight.assign(seq.token_ids.size(), 0.0f);
    return seq;
  }

 private:
  struct Record {
    MatF patches;
    std::optional<int> return_bin;
    std::optional<int> action;
    std::optional<int> reward;
  };
  int window_;
  PatchGrid grid_;
  ReturnQuantizer quant_;
  TokenVocabulary vocab_;
  SequenceLayout layout_;
  std::deque<Record> steps_;
};

// Visibility mask for a (possibly ragged) inference sequence: causal across
// timesteps, mutual among same-timestep patches.
inline AttentionMask build_mask_for(const TokenSequence& seq) {
  AttentionMask mask;
  mask.n = seq.length();
  mask.bits.assign(static_cast<std::size_t>(mask.n) * mask.n, 0);
  for (int i = 0; i < mask.n; ++i)
    for (int j = 0; j < mask.n; ++j) {
      bool vis = false;
      if (seq.timestep[j] < seq.timestep[i]) {
        vis = true;
      } else if (seq.timestep[j] == seq.timestep[i]) {
        vis = j <= i || (seq.patch_slot[i] >= 0 && seq.patch_slot[j] >= 0);
      }
      mask.set(i, j, vis);
    }
  return mask;
}

struct ActResult {
  int action = 0;
  int return_bin = -1;
};

namespace detail {

template <typename S>
Vec<S> last_position_logits(const ModelParams<S>& p, const TokenSequence& seq, int base,
                            int count) {
  const AttentionMask mask = build_mask_for(seq);
  const Mat<S> logits = forward(p, seq, mask);
  return logits.row(logits.rows() - 1).segment(base, count).transpose();
}

template <typename S>
int sample_return_bin(const ModelParams<S>& p, const InferenceContext& ctx,
                      const SamplerConfig& cfg, const TokenVocabulary& vocab, int upto_step,
                      Rng& rng) {
  const TokenSequence seq = ctx.to_sequence(upto_step, 0);
  const ReturnQuantizer& quant = ctx.quantizer();
  Vec<S> rl = last_position_logits(p, seq, vocab.return_base(), vocab.n_return);
  if (cfg.mode == SamplerMode::TopN) {
    int best = -1;
    for (int k = 0; k < cfg.top_n; ++k) {
      const int bin = sample_token(rl, cfg.top_n_return_temperature, cfg.return_percentile, rng);
      best = std::max(best, bin);
    }
    return best;
  }
  // The cutoff is taken on the unbiased logits so the tilt can only reorder
  // returns the model itself considers plausible.
  const S th = percentile_threshold(rl, cfg.return_percentile);
  Vec<S> biased = rl;
  expert_bias(biased, cfg.kappa, quant);
  for (int i = 0; i < biased.size(); ++i)
    if (rl(i) < th) biased(i) = S(-1e30);
  return sample_token(biased, cfg.return_temperature, 0.0, rng);
}

}  // namespace detail

// One step of guided generation: sample an expert-tilted return for the
// current timestep, then an action conditioned on it. Only this latest
// action is executed by the caller.
template <typename S>
ActResult act(const ModelParams<S>& p, InferenceContext& ctx, const SamplerConfig& cfg,
              const TokenVocabulary& vocab, Rng& rng) {
  cfg.validate();
  if (cfg.mode == SamplerMode::BC) throw InputError("act: BC mode requires act_bc");
  if (ctx.layout() != SequenceLayout::ReturnConditioned)
    throw InputError("act: context built with BC layout");
  const int cur = ctx.timesteps() - 1;
  if (cfg.regenerate_all_returns) {
    for (int t = 0; t < cur; ++t)
      ctx.set_return(t, detail::sample_return_bin<S>(p, ctx, cfg, vocab, t, rng));
  }
  ActResult res;
  res.return_bin = detail::sample_return_bin<S>(p, ctx, cfg, vocab, cur, rng);
  ctx.set_return(res.return_bin);
  Vec<S> al = detail::last_position_logits(p, ctx.to_sequence(), vocab.action_base(),
                                           vocab.n_action);
  res.action = sample_token(al, cfg.temperature, cfg.percentile, rng);
  ctx.set_action(res.action);
  return res;
}

// Behavior-cloning action: no return tokens anywhere, action sampled
// straight from the action logits at the last observation position.
template <typename S>
int act_bc(const ModelParams<S>& p, InferenceContext& ctx, const SamplerConfig& cfg,
           const TokenVocabulary& vocab, Rng& rng) {
  cfg.validate();
  if (ctx.layout() != SequenceLayout::BehaviorCloning)
    throw InputError("act_bc: context built with return-conditioned layout");
  Vec<S> al = detail::last_position_logits(p, ctx.to_sequence(), vocab.action_base(),
                                           vocab.n_action);
  const int action = sample_token(al, cfg.temperature, cfg.percentile, rng);
  ctx.set_action(action);
  return action;
}

}  // namespace mgdt
