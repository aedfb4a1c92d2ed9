#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include "mgdt/sequence.hpp"
#include "mgdt/types.hpp"

namespace mgdt {

struct ModelConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 0;  // 0 -> 4 * d_model
  int vocab_size = 130;
  int max_seq_len = 192;
  int patch_dim = 16;
  int n_patch_slots = 9;

  int ff() const { return d_ff > 0 ? d_ff : 4 * d_model; }
  int head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (n_layers < 1 || d_model < 1 || n_heads < 1 || vocab_size < 2 ||
        max_seq_len < 1 || patch_dim < 1 || n_patch_slots < 1)
      throw ConfigError("ModelConfig: all dimensions must be positive");
    if (d_model % n_heads != 0)
      throw ConfigError("ModelConfig: d_model must be divisible by n_heads");
  }

  bool operator==(const ModelConfig&) const = default;
};

// Desk-scale presets keeping the layer/head/width ratios of the published
// 10M/40M/200M variants (heads = 2 * layers, 16-dim heads).
inline ModelConfig model_preset(const std::string& name) {
  ModelConfig c;
  if (name == "dt-tiny") {
    c.n_layers = 2; c.d_model = 64; c.n_heads = 4;
  } else if (name == "dt-small") {
    c.n_layers = 4; c.d_model = 128; c.n_heads = 8;
  } else if (name == "dt-medium") {
    c.n_layers = 6; c.d_model = 192; c.n_heads = 12;
  } else {
    throw ConfigError("unknown model preset: " + name);
  }
  return c;
}

template <typename S>
struct LayerParams {
  Mat<S> w_qkv, b_qkv;  // (d x 3d), (1 x 3d)
  Mat<S> w_out, b_out;  // (d x d), (1 x d)
  Mat<S> ln1_g, ln1_b;  // (1 x d)
  Mat<S> ln2_g, ln2_b;
  Mat<S> w_ff1, b_ff1;  // (d x ff), (1 x ff)
  Mat<S> w_ff2, b_ff2;  // (ff x d), (1 x d)
};

// All learned tensors, enumerable by name for the optimizer, checkpointing
// and gradient checks.
template <typename S>
struct ModelParams {
  ModelConfig cfg;
  Mat<S> patch_proj, patch_bias;  // (patch_dim x d), (1 x d)
  Mat<S> patch_pos;               // (n_patch_slots x d)
  Mat<S> seq_pos;                 // (max_seq_len x d)
  Mat<S> token_emb;               // (V x d)
  std::vector<LayerParams<S>> layers;
  Mat<S> lnf_g, lnf_b;  // (1 x d)
  Mat<S> head_w, head_b;  // (d x V), (1 x V)

  std::vector<std::pair<std::string, Mat<S>*>> registry() {
    std::vector<std::pair<std::string, Mat<S>*>> r;
    r.emplace_back("patch_proj.w", &patch_proj);
    r.emplace_back("patch_proj.b", &patch_bias);
    r.emplace_back("patch_pos", &patch_pos);
    r.emplace_back("seq_pos", &seq_pos);
    r.emplace_back("token_emb", &token_emb);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      auto& L = layers[l];
      r.emplace_back(p + "ln1.g", &L.ln1_g);
      r.emplace_back(p + "ln1.b", &L.ln1_b);
      r.emplace_back(p + "attn.qkv.w", &L.w_qkv);
      r.emplace_back(p + "attn.qkv.b", &L.b_qkv);
      r.emplace_back(p + "attn.out.w", &L.w_out);
      r.emplace_back(p + "attn.out.b", &L.b_out);
      r.emplace_back(p + "ln2.g", &L.ln2_g);
      r.emplace_back(p + "ln2.b", &L.ln2_b);
      r.emplace_back(p + "mlp.in.w", &L.w_ff1);
      r.emplace_back(p + "mlp.in.b", &L.b_ff1);
      r.emplace_back(p + "mlp.out.w", &L.w_ff2);
      r.emplace_back(p + "mlp.out.b", &L.b_ff2);
    }
    r.emplace_back("lnf.g", &lnf_g);
    r.emplace_back("lnf.b", &lnf_b);
    r.emplace_back("head.w", &head_w);
    r.emplace_back("head.b", &head_b);
    return r;
  }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (auto& [name, t] : const_cast<ModelParams*>(this)->registry()) n += t->size();
    return n;
  }

  ModelParams zeros_like() const {
    ModelParams z = *this;
    for (auto& [name, t] : z.registry()) t->setZero();
    return z;
  }

  template <typename T>
  ModelParams<T> cast() const {
    ModelParams<T> out;
    out.cfg = cfg;
    out.layers.resize(layers.size());
    out.patch_proj = patch_proj.template cast<T>();
    out.patch_bias = patch_bias.template cast<T>();
    out.patch_pos = patch_pos.template cast<T>();
    out.seq_pos = seq_pos.template cast<T>();
    out.token_emb = token_emb.template cast<T>();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& a = layers[l];
      auto& b = out.layers[l];
      b.w_qkv = a.w_qkv.template cast<T>();
      b.b_qkv = a.b_qkv.template cast<T>();
      b.w_out = a.w_out.template cast<T>();
      b.b_out = a.b_out.template cast<T>();
      b.ln1_g = a.ln1_g.template cast<T>();
      b.ln1_b = a.ln1_b.template cast<T>();
      b.ln2_g = a.ln2_g.template cast<T>();
      b.ln2_b = a.ln2_b.template cast<T>();
      b.w_ff1 = a.w_ff1.template cast<T>();
      b.b_ff1 = a.b_ff1.template cast<T>();
      b.w_ff2 = a.w_ff2.template cast<T>();
      b.b_ff2 = a.b_ff2.template cast<T>();
    }
    out.lnf_g = lnf_g.template cast<T>();
    out.lnf_b = lnf_b.template cast<T>();
    out.head_w = head_w.template cast<T>();
    out.head_b = head_b.template cast<T>();
    return out;
  }
};

namespace detail {

template <typename S>
Mat<S> trunc_normal(int rows, int cols, S std_dev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, double(std_dev));
  Mat<S> m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      double v;
      do {
        v = dist(rng);
      } while (std::abs(v) > 2.0 * double(std_dev));
      m(i, j) = static_cast<S>(v);
    }
  return m;
}

}  // namespace detail

// GPT-2-style init: truncated normal (std 0.02) for projections and
// embeddings, zeros for biases, unit layer-norm scales.
template <typename S>
ModelParams<S> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = derive_rng(seed, 0x6d6f64656cull);
  const int d = cfg.d_model, ff = cfg.ff(), v = cfg.vocab_size;
  const S std_dev = S(0.02);
  ModelParams<S> p;
  p.cfg = cfg;
  p.patch_proj = detail::trunc_normal<S>(cfg.patch_dim, d, std_dev, rng);
  p.patch_bias = Mat<S>::Zero(1, d);
  p.patch_pos = detail::trunc_normal<S>(cfg.n_patch_slots, d, std_dev, rng);
  p.seq_pos = detail::trunc_normal<S>(cfg.max_seq_len, d, std_dev, rng);
  p.token_emb = detail::trunc_normal<S>(v, d, std_dev, rng);
  p.layers.resize(cfg.n_layers);
  for (auto& L : p.layers) {
    L.w_qkv = detail::trunc_normal<S>(d, 3 * d, std_dev, rng);
    L.b_qkv = Mat<S>::Zero(1, 3 * d);
    L.w_out = detail::trunc_normal<S>(d, d, std_dev, rng);
    L.b_out = Mat<S>::Zero(1, d);
    L.ln1_g = Mat<S>::Ones(1, d);
    L.ln1_b = Mat<S>::Zero(1, d);
    L.ln2_g = Mat<S>::Ones(1, d);
    L.ln2_b = Mat<S>::Zero(1, d);
    L.w_ff1 = detail::trunc_normal<S>(d, ff, std_dev, rng);
    L.b_ff1 = Mat<S>::Zero(1, ff);
    L.w_ff2 = detail::trunc_normal<S>(ff, d, std_dev, rng);
    L.b_ff2 = Mat<S>::Zero(1, d);
  }
  p.lnf_g = Mat<S>::Ones(1, d);
  p.lnf_b = Mat<S>::Zero(1, d);
  p.head_w = detail::trunc_normal<S>(d, v, std_dev, rng);
  p.head_b = Mat<S>::Zero(1, v);
  return p;
}

template <typename S>
struct ForwardTrace {
  Mat<S> x0;
  struct Layer {
    Mat<S> ln1_norm, y1;  // normalized input, scaled input to qkv
    Vec<S> ln1_inv_std;
    Mat<S> qkv;
    std::vector<Mat<S>> attn;  // per head, L x L
    Mat<S> z;                  // concat head outputs
    Mat<S> ln2_norm, y2;
    Vec<S> ln2_inv_std;
    Mat<S> ff_pre, ff_act;
  };
  std::vector<Layer> layers;
  Mat<S> lnf_norm, y_final;
  Vec<S> lnf_inv_std;
};

namespace detail {

constexpr double kLnEps = 1e-5;

// Returns y = xhat * g + b; fills xhat and per-row 1/sigma.
template <typename S>
Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b, Mat<S>& xhat,
                  Vec<S>& inv_std) {
  const int L = static_cast<int>(x.rows()), d = static_cast<int>(x.cols());
  xhat.resize(L, d);
  inv_std.resize(L);
  Mat<S> y(L, d);
  for (int i = 0; i < L; ++i) {
    const S mu = x.row(i).mean();
    const S var = (x.row(i).array() - mu).square().mean();
    const S is = S(1) / std::sqrt(var + S(kLnEps));
    inv_std(i) = is;
    xhat.row(i) = (x.row(i).array() - mu) * is;
    y.row(i) = xhat.row(i).cwiseProduct(g.row(0)) + b.row(0);
  }
  return y;
}

template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const Mat<S>& xhat, const Vec<S>& inv_std,
                           const Mat<S>& g, Mat<S>& dg, Mat<S>& db) {
  const int L = static_cast<int>(dy.rows()), d = static_cast<int>(dy.cols());
  dg.row(0) += (dy.cwiseProduct(xhat)).colwise().sum();
  db.row(0) += dy.colwise().sum();
  Mat<S> dx(L, d);
  for (int i = 0; i < L; ++i) {
    Eigen::Matrix<S, 1, Eigen::Dynamic> dxhat = dy.row(i).cwiseProduct(g.row(0));
    const S m1 = dxhat.mean();
    const S m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
    dx.row(i) = ((dxhat.array() - m1) - xhat.row(i).array() * m2) * inv_std(i);
  }
  return dx;
}

template <typename S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(std::numbers::sqrt2_v<double> / 2.0)));
}

template <typename S>
S gelu_grad(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x * S(std::numbers::sqrt2_v<double> / 2.0)));
  const S pdf = S(std::exp(-0.5 * double(x) * double(x)) / std::sqrt(2.0 * std::numbers::pi));
  return cdf + x * pdf;
}

// Row-wise masked softmax in place; masked entries end up exactly 0.
template <typename S>
void masked_softmax_rows(Mat<S>& s, const AttentionMask& mask) {
  const int L = static_cast<int>(s.rows());
  for (int i = 0; i < L; ++i) {
    S mx = std::numeric_limits<S>::lowest();
    for (int j = 0; j < L; ++j)
      if (mask.at(i, j)) mx = std::max(mx, s(i, j));
    S sum = 0;
    for (int j = 0; j < L; ++j) {
      if (mask.at(i, j)) {
        s(i, j) = std::exp(s(i, j) - mx);
        sum += s(i, j);
      } else {
        s(i, j) = 0;
      }
    }
    s.row(i) /= sum;
  }
}

}  // namespace detail

// Token/patch embedding assembly: projected patches get spatial + sequence
// position embeddings, discrete tokens get table rows + sequence positions.
template <typename S>
Mat<S> embed_sequence(const ModelParams<S>& p, const TokenSequence& seq) {
  const int L = seq.length(), d = p.cfg.d_model;
  if (L > p.cfg.max_seq_len) throw InputError("forward: sequence longer than max_seq_len");
  Mat<S> x(L, d);
  for (int i = 0; i < L; ++i) {
    if (seq.patch_slot[i] >= 0) {
      x.row(i) = seq.patches.row(seq.patch_slot[i]).template cast<S>() * p.patch_proj +
                 p.patch_bias.row(0) + p.patch_pos.row(seq.patch_index[i]);
    } else {
      x.row(i) = p.token_emb.row(seq.token_ids[i]);
    }
    x.row(i) += p.seq_pos.row(i);
  }
  return x;
}

// Full forward pass; returns per-position logits (L x V). When `trace` is
// given, all activations needed by backward() are recorded.
template <typename S>
Mat<S> forward(const ModelParams<S>& p, const TokenSequence& seq, const AttentionMask& mask,
               ForwardTrace<S>* trace = nullptr) {
  const int L = seq.length(), d = p.cfg.d_model, nh = p.cfg.n_heads, dh = p.cfg.head_dim();
  if (mask.n != L) throw InputError("forward: mask size does not match sequence");
  const S scale = S(1) / std::sqrt(S(dh));

  Mat<S> x = embed_sequence(p, seq);
  if (trace) {
    trace->x0 = x;
    trace->layers.resize(p.layers.size());
  }

  Mat<S> xhat;
  Vec<S> inv_std;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& lp = p.layers[l];
    Mat<S> y1 = detail::layer_norm(x, lp.ln1_g, lp.ln1_b, xhat, inv_std);
    if (trace) {
      trace->layers[l].ln1_norm = xhat;
      trace->layers[l].ln1_inv_std = inv_std;
      trace->layers[l].y1 = y1;
    }
    Mat<S> qkv = (y1 * lp.w_qkv).rowwise() + lp.b_qkv.row(0);
    if (trace) trace->layers[l].qkv = qkv;
    Mat<S> z(L, d);
    if (trace) trace->layers[l].attn.resize(nh);
    for (int h = 0; h < nh; ++h) {
      auto q = qkv.block(0, h * dh, L, dh);
      auto k = qkv.block(0, d + h * dh, L, dh);
      auto v = qkv.block(0, 2 * d + h * dh, L, dh);
      Mat<S> s = q * k.transpose() * scale;
      detail::masked_softmax_rows(s, mask);
      z.block(0, h * dh, L, dh) = s * v;
      if (trace) trace->layers[l].attn[h] = std::move(s);
    }
    if (trace) trace->layers[l].z = z;
    x += (z * lp.w_out).rowwise() + lp.b_out.row(0);

    Mat<S> y2 = detail::layer_norm(x, lp.ln2_g, lp.ln2_b, xhat, inv_std);
    if (trace) {
      trace->layers[l].ln2_norm = xhat;
      trace->layers[l].ln2_inv_std = inv_std;
      trace->layers[l].y2 = y2;
    }
    Mat<S> ff_pre = (y2 * lp.w_ff1).rowwise() + lp.b_ff1.row(0);
    Mat<S> ff_act = ff_pre.unaryExpr([](S v) { return detail::gelu(v); });
    x += (ff_act * lp.w_ff2).rowwise() + lp.b_ff2.row(0);
    if (trace) {
      trace->layers[l].ff_pre = std::move(ff_pre);
      trace->layers[l].ff_act = std::move(ff_act);
    }
  }

  Mat<S> y_final = detail::layer_norm(x, p.lnf_g, p.lnf_b, xhat, inv_std);
  if (trace) {
    trace->lnf_norm = xhat;
    trace->lnf_inv_std = inv_std;
    trace->y_final = y_final;
  }
  return (y_final * p.head_w).rowwise() + p.head_b.row(0);
}

// Mean negative log-likelihood over loss-weighted positions.
template <typename S>
S sequence_loss(const Mat<S>& logits, const TokenSequence& seq) {
  S total = 0, wsum = 0;
  for (int i = 0; i < seq.length(); ++i) {
    const S w = S(seq.loss_weight[i]);
    if (seq.targets[i] < 0 || w <= 0) continue;
    const S mx = logits.row(i).maxCoeff();
    const S lse = std::log((logits.row(i).array() - mx).exp().sum()) + mx;
    total += w * (lse - logits(i, seq.targets[i]));
    wsum += w;
  }
  if (wsum <= 0) throw InputError("sequence_loss: no weighted target positions");
  return total / wsum;
}

// Accumulates dLoss/dParams for one window into `grads` (same shapes as
// params, caller-zeroed). `weight` scales the contribution, e.g. 1/batch.
// Returns the window loss.
template <typename S>
S backward(const ModelParams<S>& p, const TokenSequence& seq, const AttentionMask& mask,
           ModelParams<S>& grads, S weight = S(1)) {
  const int L = seq.length(), d = p.cfg.d_model, nh = p.cfg.n_heads, dh = p.cfg.head_dim();
  const S scale = S(1) / std::sqrt(S(dh));

  ForwardTrace<S> tr;
  Mat<S> logits = forward(p, seq, mask, &tr);
  const S loss = sequence_loss(logits, seq);
  if (!std::isfinite(double(loss))) throw NumericError("backward: non-finite loss");

  S wsum = 0;
  for (int i = 0; i < L; ++i)
    if (seq.targets[i] >= 0 && seq.loss_weight[i] > 0) wsum += S(seq.loss_weight[i]);

  // dLoss/dLogits: weighted (softmax - onehot) rows
  Mat<S> dlogits = Mat<S>::Zero(L, p.cfg.vocab_size);
  for (int i = 0; i < L; ++i) {
    const S w = S(seq.loss_weight[i]);
    if (seq.targets[i] < 0 || w <= 0) continue;
    const S mx = logits.row(i).maxCoeff();
    Eigen::Matrix<S, 1, Eigen::Dynamic> pr = (logits.row(i).array() - mx).exp();
    pr /= pr.sum();
    dlogits.row(i) = pr * (w / wsum) * weight;
    dlogits(i, seq.targets[i]) -= (w / wsum) * weight;
  }

  grads.head_w += tr.y_final.transpose() * dlogits;
  grads.head_b.row(0) += dlogits.colwise().sum();
  Mat<S> dy = dlogits * p.head_w.transpose();
  Mat<S> dx = detail::layer_norm_backward(dy, tr.lnf_norm, tr.lnf_inv_std, p.lnf_g,
                                          grads.lnf_g, grads.lnf_b);

  for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
    const auto& lp = p.layers[l];
    auto& gl = grads.layers[l];
    const auto& t = tr.layers[l];

    // MLP branch
    Mat<S> dff_act = dx * lp.w_ff2.transpose();
    gl.w_ff2 += t.ff_act.transpose() * dx;
    gl.b_ff2.row(0) += dx.colwise().sum();
    Mat<S> dff_pre =
        dff_act.cwiseProduct(t.ff_pre.unaryExpr([](S v) { return detail::gelu_grad(v); }));
    Mat<S> dy2 = dff_pre * lp.w_ff1.transpose();
    gl.w_ff1 += t.y2.transpose() * dff_pre;
    gl.b_ff1.row(0) += dff_pre.colwise().sum();
    dx += detail::layer_norm_backward(dy2, t.ln2_norm, t.ln2_inv_std, lp.ln2_g, gl.ln2_g,
                                      gl.ln2_b);

    // attention branch
    Mat<S> dz = dx * lp.w_out.transpose();
    gl.w_out += t.z.transpose() * dx;
    gl.b_out.row(0) += dx.colwise().sum();
    Mat<S> dqkv = Mat<S>::Zero(L, 3 * d);
    for (int h = 0; h < nh; ++h) {
      auto q = t.qkv.block(0, h * dh, L, dh);
      auto k = t.qkv.block(0, d + h * dh, L, dh);
      auto v = t.qkv.block(0, 2 * d + h * dh, L, dh);
      auto dzh = dz.block(0, h * dh, L, dh);
      const Mat<S>& prob = t.attn[h];
      Mat<S> dprob = dzh * v.transpose();
      dqkv.block(0, 2 * d + h * dh, L, dh) = prob.transpose() * dzh;
      // softmax backward; masked entries have prob 0 and drop out
      Mat<S> ds(L, L);
      for (int i = 0; i < L; ++i) {
        const S dot = dprob.row(i).dot(prob.row(i));
        ds.row(i) = prob.row(i).cwiseProduct((dprob.row(i).array() - dot).matrix());
      }
      dqkv.block(0, h * dh, L, dh) = ds * k * scale;
      dqkv.block(0, d + h * dh, L, dh) = ds.transpose() * q * scale;
    }
    gl.w_qkv += t.y1.transpose() * dqkv;
    gl.b_qkv.row(0) += dqkv.colwise().sum();
    Mat<S> dy1 = dqkv * lp.w_qkv.transpose();
    dx += detail::layer_norm_backward(dy1, t.ln1_norm, t.ln1_inv_std, lp.ln1_g, gl.ln1_g,
                                      gl.ln1_b);
  }

  // embeddings
  for (int i = 0; i < L; ++i) {
    if (seq.patch_slot[i] >= 0) {
      grads.patch_proj +=
          seq.patches.row(seq.patch_slot[i]).transpose().template cast<S>() * dx.row(i);
      grads.patch_bias.row(0) += dx.row(i);
      grads.patch_pos.row(seq.patch_index[i]) += dx.row(i);
    } else {
      grads.token_emb.row(seq.token_ids[i]) += dx.row(i);
    }
    grads.seq_pos.row(i) += dx.row(i);
  }
  return loss;
}

// Per-layer, per-head attention weights for qualitative dumps. Rows sum to 1
// over visible positions; masked entries are exactly 0.
template <typename S>
std::vector<std::vector<Mat<S>>> attention_dump(const ModelParams<S>& p,
                                                const TokenSequence& seq,
                                                const AttentionMask& mask) {
  ForwardTrace<S> tr;
  forward(p, seq, mask, &tr);
  std::vector<std::vector<Mat<S>>> out(tr.layers.size());
  for (std::size_t l = 0; l < tr.layers.size(); ++l) out[l] = tr.layers[l].attn;
  return out;
}

}  // namespace mgdt
