#include "mgdt/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace mgdt {

namespace {

// Mean NLL split by target-token kind, for the training log.
void loss_by_kind(const MatF& logits, const TokenSequence& seq, const TokenVocabulary& vocab,
                  double out[3], double wsum[3]) {
  for (int i = 0; i < seq.length(); ++i) {
    const float w = seq.loss_weight[i];
    if (seq.targets[i] < 0 || w <= 0) continue;
    const float mx = logits.row(i).maxCoeff();
    const float lse = std::log((logits.row(i).array() - mx).exp().sum()) + mx;
    const double nll = double(w) * double(lse - logits(i, seq.targets[i]));
    const auto [kind, value] = vocab.decode(seq.targets[i]);
    const int k = kind == TokenKind::Return ? 0 : kind == TokenKind::Action ? 1 : 2;
    out[k] += nll;
    wsum[k] += w;
  }
}

void write_log_header(std::ofstream& out) {
  out << "step loss loss_return loss_action loss_reward lr grad_norm\n";
}

void write_log_row(std::ofstream& out, const TrainLogRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%ld %.6f %.6f %.6f %.6f %.6e %.6f\n", r.step, r.loss,
                r.loss_return, r.loss_action, r.loss_reward, r.lr, r.grad_norm);
  out << buf;
}

}  // namespace

Checkpoint train(const std::vector<Trajectory>& data, const TrainOptions& opt,
                 const Checkpoint* resume, std::vector<TrainLogRow>* log) {
  if (data.empty()) throw InputError("train: empty dataset");
  opt.model.validate();

  Checkpoint ckpt;
  if (resume) {
    if (resume->params.cfg != opt.model)
      throw ConfigError("train: resume checkpoint config does not match");
    if (resume->layout != opt.layout)
      throw ConfigError("train: resume checkpoint layout does not match");
    ckpt = *resume;
    if (!ckpt.has_optim) {
      ckpt.optim = LambState<float>::zeros_like(ckpt.params.registry());
      ckpt.has_optim = true;
    }
  } else {
    ckpt.params = init_params<float>(opt.model, opt.init_seed);
    ckpt.optim = LambState<float>::zeros_like(ckpt.params.registry());
    ckpt.has_optim = true;
    ckpt.layout = opt.layout;
    ckpt.seed = opt.init_seed;
    ckpt.step = 0;
  }
  {
    std::set<std::string> ids;
    for (const auto& ep : data) ids.insert(ep.game_id);
    ckpt.train_games.assign(ids.begin(), ids.end());
  }

  BatchSampler sampler(&data, opt.batch, opt.grid, opt.quant, opt.vocab, opt.layout);

  std::ofstream log_file;
  if (!opt.log_path.empty()) {
    log_file.open(opt.log_path, ckpt.step > 0 ? std::ios::app : std::ios::trunc);
    if (!log_file) throw InputError("train: cannot open log " + opt.log_path.string());
    if (ckpt.step == 0) write_log_header(log_file);
  }

  ModelParams<float> grads = ckpt.params.zeros_like();
  double interval_loss = 0;
  long interval_n = 0;

  for (long step = ckpt.step; step < opt.steps; ++step) {
    std::vector<BatchItem> batch = sampler.sample_batch(step);
    for (auto& [name, g] : grads.registry()) g->setZero();

    double loss = 0;
    double kind_loss[3] = {0, 0, 0}, kind_w[3] = {0, 0, 0};
    const bool log_step = opt.log_every > 0 && (step + 1) % opt.log_every == 0;
    const float bw = 1.0f / float(batch.size());
    for (const BatchItem& item : batch) {
      try {
        loss += double(backward(ckpt.params, item.seq, item.mask, grads, bw)) / batch.size();
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (step " + std::to_string(step) + ", game " +
                           item.game_id + ")");
      }
      if (log_step) {
        const MatF logits = forward(ckpt.params, item.seq, item.mask);
        loss_by_kind(logits, item.seq, opt.vocab, kind_loss, kind_w);
      }
    }
    interval_loss += loss;
    ++interval_n;

    auto preg = ckpt.params.registry();
    auto greg = grads.registry();
    const float gnorm = clip_global_norm(greg, float(opt.optim.clip_norm));
    lamb_step(preg, greg, ckpt.optim, opt.optim);
    ckpt.step = step + 1;

    if (log_step) {
      TrainLogRow row;
      row.step = ckpt.step;
      row.loss = loss;
      for (int k = 0; k < 3; ++k) {
        const double v = kind_w[k] > 0 ? kind_loss[k] / kind_w[k] : 0.0;
        (k == 0 ? row.loss_return : k == 1 ? row.loss_action : row.loss_reward) = v;
      }
      row.lr = lr_schedule(step, opt.optim.peak_lr, opt.optim.warmup_steps);
      row.grad_norm = gnorm;
      if (log) log->push_back(row);
      if (log_file) write_log_row(log_file, row);
      if (opt.stop_below_loss > 0 && interval_loss / interval_n < opt.stop_below_loss) break;
      interval_loss = 0;
      interval_n = 0;
    }

    if (!opt.checkpoint_path.empty() && opt.checkpoint_every > 0 &&
        ckpt.step % opt.checkpoint_every == 0)
      save_checkpoint(opt.checkpoint_path, ckpt);
  }

  if (!opt.checkpoint_path.empty()) save_checkpoint(opt.checkpoint_path, ckpt);
  return ckpt;
}

FinetuneProtocolResult run_finetune_protocol(const Checkpoint& pretrained,
                                             const std::vector<Trajectory>& heldout_data,
                                             const FinetuneProtocolOptions& opt) {
  if (std::find(pretrained.train_games.begin(), pretrained.train_games.end(), opt.game) !=
      pretrained.train_games.end())
    throw ConfigError("run_finetune_protocol: held-out game " + opt.game +
                      " appears in the pretraining manifest (leakage)");
  for (const auto& ep : heldout_data)
    if (ep.game_id != opt.game)
      throw InputError("run_finetune_protocol: dataset contains foreign game " + ep.game_id);

  const std::vector<Trajectory> subset =
      subsample_steps(heldout_data, opt.data_fraction, opt.subsample_seed);

  TrainOptions topt = opt.train;
  topt.model = pretrained.params.cfg;
  topt.layout = pretrained.layout;

  // fine-tuned arm: continue from the pretrained weights with a fresh
  // optimizer; scratch arm: same data, same budget, random init
  Checkpoint warm = pretrained;
  warm.step = 0;
  warm.optim = LambState<float>::zeros_like(warm.params.registry());
  warm.has_optim = true;
  const Checkpoint tuned = train(subset, topt, &warm);
  const Checkpoint cold = train(subset, topt);

  FinetuneProtocolResult res;
  res.finetuned = evaluate(tuned.params, {opt.game}, opt.eval);
  res.scratch = evaluate(cold.params, {opt.game}, opt.eval);
  return res;
}

}  // namespace mgdt
