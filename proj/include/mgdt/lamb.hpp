#pragma once

#include <cmath>

#include "mgdt/model.hpp"
#include "mgdt/types.hpp"

namespace mgdt {

// Pretraining recipe: 3e-4 peak, 4000-step linear warm-up, no weight decay,
// clip 1.0. The fine-tuning preset switches to 1e-4 / 1e-2 weight decay.
struct LambConfig {
  double peak_lr = 3e-4;
  int warmup_steps = 4000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 0.0;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

inline LambConfig pretrain_optim_config() { return LambConfig{}; }

inline LambConfig finetune_optim_config() {
  LambConfig c;
  c.peak_lr = 1e-4;
  c.weight_decay = 1e-2;
  return c;
}

inline double lr_schedule(long step, double peak_lr, int warmup_steps) {
  if (warmup_steps <= 0) throw ConfigError("lr_schedule: warmup_steps must be positive");
  if (step < 0) throw InputError("lr_schedule: negative step");
  return peak_lr * std::min(1.0, double(step + 1) / double(warmup_steps));
}

// Global-L2 clipping across all tensors. Returns the pre-clip norm.
template <typename S>
S clip_global_norm(std::vector<std::pair<std::string, Mat<S>*>>& grads, S max_norm) {
  double sq = 0;
  for (auto& [name, g] : grads) sq += double(g->squaredNorm());
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("clip_global_norm: non-finite gradient norm");
  if (max_norm > 0 && norm > double(max_norm)) {
    const S s = S(double(max_norm) / norm);
    for (auto& [name, g] : grads) (*g) *= s;
  }
  return S(norm);
}

template <typename S>
struct LambState {
  long step = 0;
  std::vector<Mat<S>> m, v;

  static LambState zeros_like(std::vector<std::pair<std::string, Mat<S>*>> registry) {
    LambState st;
    st.m.reserve(registry.size());
    st.v.reserve(registry.size());
    for (auto& [name, t] : registry) {
      st.m.push_back(Mat<S>::Zero(t->rows(), t->cols()));
      st.v.push_back(Mat<S>::Zero(t->rows(), t->cols()));
    }
    return st;
  }
};

// Layer-norm scales and biases are exempt from weight decay.
inline bool decay_exempt(const std::string& name) {
  return name.find(".ln") != std::string::npos || name.find("ln") == 0 ||
         (name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0);
}

// One LAMB update: Adam moments with bias correction, per-tensor trust
// ratio ||w|| / ||update||, falling back to 1 when either norm is 0.
template <typename S>
void lamb_step(std::vector<std::pair<std::string, Mat<S>*>> params,
               std::vector<std::pair<std::string, Mat<S>*>> grads, LambState<S>& state,
               const LambConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw InputError("lamb_step: registry size mismatch");
  clip_global_norm(grads, S(cfg.clip_norm));
  const double lr = lr_schedule(state.step, cfg.peak_lr, cfg.warmup_steps);
  const S b1 = S(cfg.beta1), b2 = S(cfg.beta2);
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step + 1));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step + 1));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat<S>& w = *params[i].second;
    const Mat<S>& g = *grads[i].second;
    if (w.rows() != g.rows() || w.cols() != g.cols())
      throw InputError("lamb_step: shape mismatch at " + params[i].first);
    Mat<S>& m = state.m[i];
    Mat<S>& v = state.v[i];
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g.cwiseProduct(g);
    Mat<S> update =
        (m / S(bc1)).cwiseQuotient(((v / S(bc2)).cwiseSqrt().array() + S(cfg.eps)).matrix());
    if (cfg.weight_decay > 0 && !decay_exempt(params[i].first))
      update += S(cfg.weight_decay) * w;
    const double wn = double(w.norm()), un = double(update.norm());
    const double trust = (wn > 0 && un > 0) ? wn / un : 1.0;
    w -= S(lr * trust) * update;
  }
  ++state.step;
}

}  // namespace mgdt
