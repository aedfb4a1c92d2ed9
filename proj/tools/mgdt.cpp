// mgdt: data generation, training, fine-tuning, evaluation and experiment
// drivers for the toy-arcade decision-transformer pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mgdt/checkpoint.hpp"
#include "mgdt/config.hpp"
#include "mgdt/dataset.hpp"
#include "mgdt/eval.hpp"
#include "mgdt/games.hpp"
#include "mgdt/trainer.hpp"

namespace fs = std::filesystem;
using namespace mgdt;

namespace {

struct CommonArgs {
  std::string config_path;
  std::int64_t seed = -1;  // -1 -> keep config value
  bool deterministic = false;
  bool force = false;
};

RunConfig load_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? parse_config_text("") : parse_config(args.config_path);
  if (args.seed >= 0) cfg.seed = std::uint64_t(args.seed);
  if (args.deterministic) cfg.deterministic = true;
  return cfg;
}

fs::path episode_path(const RunConfig& cfg, const std::string& game) {
  return cfg.resolved_data_dir() / game / (cfg.run_name + ".ep");
}

std::vector<Trajectory> load_games_data(const RunConfig& cfg,
                                        const std::vector<std::string>& games) {
  std::vector<Trajectory> all;
  for (const std::string& game : games) {
    const fs::path path = episode_path(cfg, game);
    if (!fs::exists(path))
      throw InputError("missing dataset " + path.string() + " (run `mgdt gen-data` first)");
    std::vector<Trajectory> eps = read_episodes(path);
    all.insert(all.end(), std::make_move_iterator(eps.begin()),
               std::make_move_iterator(eps.end()));
  }
  if (cfg.rtg_include_current)
    for (auto& ep : all) ep.returns_to_go = compute_return_to_go(ep.rewards, true);
  return all;
}

TrainOptions train_options(const RunConfig& cfg) {
  TrainOptions opt;
  opt.model = model_preset(cfg.model_preset);
  opt.layout = cfg.sequence_layout();
  opt.optim.peak_lr = cfg.peak_lr;
  opt.optim.warmup_steps = cfg.warmup_steps;
  opt.optim.weight_decay = cfg.weight_decay;
  opt.optim.clip_norm = cfg.clip_norm;
  opt.batch.batch_size = cfg.batch_size;
  opt.batch.window = cfg.window;
  opt.batch.augment = cfg.augment;
  opt.batch.seed = splitmix64(cfg.seed ^ 0x747261696eull);
  opt.steps = cfg.steps;
  opt.log_every = cfg.log_every;
  opt.checkpoint_every = cfg.checkpoint_every;
  opt.init_seed = cfg.seed;
  return opt;
}

RolloutOptions rollout_options(const RunConfig& cfg) {
  RolloutOptions opt;
  opt.sampler = cfg.sampler_config();
  opt.n_trials = cfg.n_trials;
  opt.window = cfg.window;
  opt.seed = splitmix64(cfg.seed ^ 0x6576616cull);
  return opt;
}

void ensure_out_dir(const RunConfig& cfg) { fs::create_directories(cfg.out_dir); }

int cmd_gen_data(const CommonArgs& args) {
  const RunConfig cfg = load_config(args);
  for (const std::string& game : cfg.games) {
    const fs::path path = episode_path(cfg, game);
    if (fs::exists(path) && !args.force)
      throw InputError("refusing to overwrite " + path.string() + " (use --force)");
    fs::create_directories(path.parent_path());
    std::vector<Trajectory> eps =
        generate_dataset(game, cfg.n_checkpoints, cfg.episodes_per_checkpoint,
                         splitmix64(cfg.seed ^ std::hash<std::string>{}(game)), cfg.skill_max);
    write_episodes(path, eps);

    // manifest: counts plus an integer-bucket return histogram
    std::map<long, int> hist;
    std::size_t steps = 0;
    for (const auto& ep : eps) {
      ++hist[std::lround(ep.episodic_return())];
      steps += ep.actions.size();
    }
    nlohmann::ordered_json manifest;
    manifest["game"] = game;
    manifest["episodes"] = eps.size();
    manifest["steps"] = steps;
    manifest["n_checkpoints"] = cfg.n_checkpoints;
    manifest["episodes_per_checkpoint"] = cfg.episodes_per_checkpoint;
    manifest["skill_max"] = cfg.skill_max;
    manifest["best_return"] = best_demo_return(eps, game);
    nlohmann::ordered_json jh;
    for (auto& [ret, count] : hist) jh[std::to_string(ret)] = count;
    manifest["return_histogram"] = jh;
    std::ofstream mout(path.parent_path() / (cfg.run_name + ".manifest.json"),
                       std::ios::trunc);
    mout << manifest.dump(2) << "\n";
    std::cout << "wrote " << eps.size() << " episodes (" << steps << " steps) to "
              << path.string() << "\n";
  }
  ensure_out_dir(cfg);
  write_resolved_config(fs::path(cfg.out_dir) / "gen-data.resolved.cfg", cfg);
  return 0;
}

int cmd_train(const CommonArgs& args, bool resume) {
  const RunConfig cfg = load_config(args);
  ensure_out_dir(cfg);
  std::vector<Trajectory> data = load_games_data(cfg, cfg.games);
  if (cfg.expert_filter) data = filter_expert(data, cfg.expert_fraction);

  TrainOptions opt = train_options(cfg);
  opt.checkpoint_path = fs::path(cfg.out_dir) / "model.ckpt";
  opt.log_path = fs::path(cfg.out_dir) / "train.log";

  Checkpoint start;
  const Checkpoint* start_ptr = nullptr;
  if (fs::exists(opt.checkpoint_path)) {
    if (resume) {
      start = load_checkpoint(opt.checkpoint_path);
      start_ptr = &start;
      std::cout << "resuming from step " << start.step << "\n";
    } else if (!args.force) {
      throw InputError("checkpoint exists: " + opt.checkpoint_path.string() +
                       " (use --force to overwrite or --resume to continue)");
    }
  }

  write_resolved_config(fs::path(cfg.out_dir) / "train.resolved.cfg", cfg);
  const Checkpoint ckpt = train(data, opt, start_ptr);
  std::cout << "trained to step " << ckpt.step << ", checkpoint at "
            << opt.checkpoint_path.string() << "\n";
  return 0;
}

int cmd_finetune(const CommonArgs& args, const std::string& checkpoint_path) {
  const RunConfig cfg = load_config(args);
  ensure_out_dir(cfg);
  const Checkpoint pretrained = load_checkpoint(checkpoint_path);
  if (std::find(pretrained.train_games.begin(), pretrained.train_games.end(),
                cfg.finetune_game) != pretrained.train_games.end())
    throw ConfigError("held-out game " + cfg.finetune_game +
                      " appears in the pretraining manifest (leakage)");

  RunConfig dcfg = cfg;
  dcfg.games = {cfg.finetune_game};
  std::vector<Trajectory> data = load_games_data(dcfg, dcfg.games);
  data = subsample_steps(data, cfg.data_fraction, splitmix64(cfg.seed ^ 0x667261ull));

  TrainOptions opt = train_options(cfg);
  opt.model = pretrained.params.cfg;
  opt.layout = pretrained.layout;
  opt.optim = finetune_optim_config();
  opt.optim.peak_lr = cfg.finetune_lr;
  opt.optim.weight_decay = cfg.finetune_weight_decay;
  opt.optim.warmup_steps = cfg.finetune_warmup_steps;
  opt.steps = cfg.finetune_steps;
  opt.checkpoint_path = fs::path(cfg.out_dir) / "finetune.ckpt";
  opt.log_path = fs::path(cfg.out_dir) / "finetune.log";
  if (fs::exists(opt.checkpoint_path) && !args.force)
    throw InputError("checkpoint exists: " + opt.checkpoint_path.string() + " (use --force)");

  Checkpoint warm = pretrained;
  warm.step = 0;
  warm.optim = LambState<float>::zeros_like(warm.params.registry());
  warm.has_optim = true;
  write_resolved_config(fs::path(cfg.out_dir) / "finetune.resolved.cfg", cfg);
  const Checkpoint ckpt = train(data, opt, &warm);
  std::cout << "fine-tuned " << cfg.finetune_game << " for " << ckpt.step
            << " steps, checkpoint at " << opt.checkpoint_path.string() << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint_path) {
  const RunConfig cfg = load_config(args);
  ensure_out_dir(cfg);
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  RolloutOptions opt = rollout_options(cfg);
  if (ckpt.layout == SequenceLayout::BehaviorCloning) opt.sampler.mode = SamplerMode::BC;
  else if (opt.sampler.mode == SamplerMode::BC)
    throw ConfigError("bc sampler mode requires a bc-layout checkpoint");

  std::vector<Trajectory> demos;
  std::vector<Trajectory>* demos_ptr = nullptr;
  bool have_all = true;
  for (const std::string& game : cfg.eval_games)
    have_all = have_all && fs::exists(episode_path(cfg, game));
  if (have_all) {
    demos = load_games_data(cfg, cfg.eval_games);
    demos_ptr = &demos;
  }

  EvalReport report = evaluate(ckpt.params, cfg.eval_games, opt, demos_ptr);
  report.config_fingerprint = cfg.fingerprint();
  report.write_jsonl(fs::path(cfg.out_dir) / "report.jsonl");
  write_resolved_config(fs::path(cfg.out_dir) / "eval.resolved.cfg", cfg);
  std::cout << report.table();
  return 0;
}

// --- experiments -----------------------------------------------------------

void ensure_datasets(const RunConfig& cfg, const CommonArgs& args,
                     const std::vector<std::string>& games) {
  RunConfig gcfg = cfg;
  gcfg.games = games;
  bool missing = false;
  for (const auto& g : games) missing = missing || !fs::exists(episode_path(gcfg, g));
  if (missing) {
    CommonArgs gen = args;
    gen.force = true;
    RunConfig tmp = gcfg;
    for (const auto& g : games) {
      const fs::path p = episode_path(tmp, g);
      if (fs::exists(p)) continue;
      fs::create_directories(p.parent_path());
      std::vector<Trajectory> eps =
          generate_dataset(g, tmp.n_checkpoints, tmp.episodes_per_checkpoint,
                           splitmix64(tmp.seed ^ std::hash<std::string>{}(g)), tmp.skill_max);
      write_episodes(p, eps);
    }
  }
}

Checkpoint train_arm(const RunConfig& cfg, const std::vector<Trajectory>& data,
                     SequenceLayout layout, std::uint64_t seed) {
  TrainOptions opt = train_options(cfg);
  opt.layout = layout;
  opt.init_seed = seed;
  opt.batch.seed = splitmix64(seed ^ 0x747261696eull);
  return train(data, opt);
}

EvalReport eval_arm(const RunConfig& cfg, const Checkpoint& ckpt,
                    const std::vector<std::string>& games,
                    const std::vector<Trajectory>* demos = nullptr) {
  RolloutOptions opt = rollout_options(cfg);
  if (ckpt.layout == SequenceLayout::BehaviorCloning) opt.sampler.mode = SamplerMode::BC;
  return evaluate(ckpt.params, games, opt, demos);
}

int experiment_dt_vs_bc(const RunConfig& cfg, const CommonArgs& args, const fs::path& dir) {
  ensure_datasets(cfg, args, cfg.games);
  const std::vector<Trajectory> data = load_games_data(cfg, cfg.games);

  const Checkpoint dt = train_arm(cfg, data, SequenceLayout::ReturnConditioned, cfg.seed);
  const Checkpoint bc = train_arm(cfg, data, SequenceLayout::BehaviorCloning, cfg.seed);
  const EvalReport rd = eval_arm(cfg, dt, cfg.games, &data);
  const EvalReport rb = eval_arm(cfg, bc, cfg.games, &data);

  std::ofstream out(dir / "dt_vs_bc.dat", std::ios::trunc);
  out << "# game dt_mean dt_std dt_norm bc_mean bc_std bc_norm\n";
  for (std::size_t i = 0; i < rd.games.size(); ++i) {
    const auto& d = rd.games[i];
    const auto& b = rb.games[i];
    out << d.game_id << " " << d.mean << " " << d.stddev << " " << d.normalized << " "
        << b.mean << " " << b.stddev << " " << b.normalized << "\n";
  }
  out << "# iqm dt " << rd.iqm_normalized << " bc " << rb.iqm_normalized << "\n";
  std::cout << "DT:\n" << rd.table() << "BC:\n" << rb.table();
  std::cout << "wrote " << (dir / "dt_vs_bc.dat").string() << "\n";
  return 0;
}

int experiment_expert_filter(const RunConfig& cfg, const CommonArgs& args,
                             const fs::path& dir) {
  ensure_datasets(cfg, args, cfg.games);
  const std::vector<Trajectory> full = load_games_data(cfg, cfg.games);
  const std::vector<Trajectory> expert = filter_expert(full, cfg.expert_fraction);

  struct Arm {
    const char* name;
    SequenceLayout layout;
    const std::vector<Trajectory>* data;
  };
  const Arm arms[] = {
      {"dt_full", SequenceLayout::ReturnConditioned, &full},
      {"dt_expert", SequenceLayout::ReturnConditioned, &expert},
      {"bc_full", SequenceLayout::BehaviorCloning, &full},
      {"bc_expert", SequenceLayout::BehaviorCloning, &expert},
  };
  std::ofstream out(dir / "expert_filter.dat", std::ios::trunc);
  out << "# arm iqm_normalized median_normalized\n";
  for (const Arm& arm : arms) {
    const Checkpoint ckpt = train_arm(cfg, *arm.data, arm.layout, cfg.seed);
    const EvalReport r = eval_arm(cfg, ckpt, cfg.games);
    out << arm.name << " " << r.iqm_normalized << " " << r.median_normalized << "\n";
    std::cout << arm.name << ":\n" << r.table();
  }
  std::cout << "wrote " << (dir / "expert_filter.dat").string() << "\n";
  return 0;
}

int experiment_finetune(const RunConfig& cfg, const CommonArgs& args, const fs::path& dir) {
  ensure_datasets(cfg, args, cfg.games);
  const std::string held_out = cfg.finetune_game;
  RunConfig hcfg = cfg;
  hcfg.games = {held_out};
  ensure_datasets(hcfg, args, hcfg.games);

  const std::vector<Trajectory> pretrain_data = load_games_data(cfg, cfg.games);
  const std::vector<Trajectory> heldout_data = load_games_data(hcfg, hcfg.games);
  const Checkpoint pretrained =
      train_arm(cfg, pretrain_data, cfg.sequence_layout(), cfg.seed);

  FinetuneProtocolOptions fopt;
  fopt.game = held_out;
  fopt.data_fraction = cfg.data_fraction;
  fopt.train = train_options(cfg);
  fopt.train.optim = finetune_optim_config();
  fopt.train.optim.peak_lr = cfg.finetune_lr;
  fopt.train.optim.weight_decay = cfg.finetune_weight_decay;
  fopt.train.optim.warmup_steps = cfg.finetune_warmup_steps;
  fopt.train.steps = cfg.finetune_steps;
  fopt.eval = rollout_options(cfg);
  fopt.subsample_seed = splitmix64(cfg.seed ^ 0x667261ull);
  const FinetuneProtocolResult res = run_finetune_protocol(pretrained, heldout_data, fopt);

  std::ofstream out(dir / "finetune.dat", std::ios::trunc);
  out << "# arm normalized_score\n";
  out << "finetuned " << res.finetuned.games[0].normalized << "\n";
  out << "scratch " << res.scratch.games[0].normalized << "\n";
  std::cout << "finetuned:\n" << res.finetuned.table() << "scratch:\n" << res.scratch.table();
  std::cout << "wrote " << (dir / "finetune.dat").string() << "\n";
  return 0;
}

int experiment_scaling(const RunConfig& cfg, const CommonArgs& args, const fs::path& dir) {
  ensure_datasets(cfg, args, cfg.games);
  const std::vector<Trajectory> data = load_games_data(cfg, cfg.games);
  std::ofstream out(dir / "scaling.dat", std::ios::trunc);
  out << "# preset param_count iqm_normalized\n";
  for (const char* preset : {"dt-tiny", "dt-small", "dt-medium"}) {
    RunConfig pcfg = cfg;
    pcfg.model_preset = preset;
    const Checkpoint ckpt = train_arm(pcfg, data, cfg.sequence_layout(), cfg.seed);
    const EvalReport r = eval_arm(pcfg, ckpt, cfg.games);
    out << preset << " " << ckpt.params.num_params() << " " << r.iqm_normalized << "\n";
    std::cout << preset << " (" << ckpt.params.num_params() << " params):\n" << r.table();
  }
  std::cout << "wrote " << (dir / "scaling.dat").string() << "\n";
  return 0;
}

int experiment_attention_dump(const RunConfig& cfg, const CommonArgs& args,
                              const fs::path& dir, const std::string& checkpoint_path) {
  ensure_datasets(cfg, args, cfg.games);
  const std::vector<Trajectory> data = load_games_data(cfg, cfg.games);
  Checkpoint ckpt;
  if (!checkpoint_path.empty()) ckpt = load_checkpoint(checkpoint_path);
  else ckpt = train_arm(cfg, data, cfg.sequence_layout(), cfg.seed);

  PatchGrid grid;
  ReturnQuantizer quant;
  TokenVocabulary vocab;
  const Trajectory& ep = data.front();
  const int T = std::min(cfg.window, ep.length());
  const TokenSequence seq = build_window(ep, 0, T, quant, grid, vocab, ckpt.layout);
  const AttentionMask mask = build_mask(T, grid.patches_per_image(), ckpt.layout);
  const auto dump = attention_dump(ckpt.params, seq, mask);

  std::ofstream out(dir / "attention.dat", std::ios::trunc);
  out << "# layer head i j weight   (game " << ep.game_id << ", window T=" << T << ")\n";
  for (std::size_t l = 0; l < dump.size(); ++l)
    for (std::size_t h = 0; h < dump[l].size(); ++h) {
      const MatF& a = dump[l][h];
      for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
          if (a(i, j) != 0.0f)
            out << l << " " << h << " " << i << " " << j << " " << a(i, j) << "\n";
    }
  std::cout << "wrote " << (dir / "attention.dat").string() << "\n";
  return 0;
}

int cmd_experiment(const CommonArgs& args, const std::string& name,
                   const std::string& checkpoint_path) {
  const RunConfig cfg = load_config(args);
  const fs::path dir = fs::path(cfg.out_dir) / "experiments" / name;
  fs::create_directories(dir);
  write_resolved_config(dir / "resolved.cfg", cfg);
  if (name == "dt-vs-bc") return experiment_dt_vs_bc(cfg, args, dir);
  if (name == "expert-filter") return experiment_expert_filter(cfg, args, dir);
  if (name == "finetune") return experiment_finetune(cfg, args, dir);
  if (name == "scaling") return experiment_scaling(cfg, args, dir);
  if (name == "attention-dump")
    return experiment_attention_dump(cfg, args, dir, checkpoint_path);
  throw ConfigError("unknown experiment: " + name +
                    " (expected dt-vs-bc, expert-filter, finetune, scaling, attention-dump)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-game decision transformer on a toy arcade suite"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string checkpoint_path, experiment_name;
  bool resume = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "run configuration file");
    sub->add_option("--seed", args.seed, "override config seed");
    sub->add_flag("--deterministic", args.deterministic, "force deterministic mode");
    sub->add_flag("--force", args.force, "overwrite existing outputs");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate per-game episode files");
  add_common(gen);
  CLI::App* tr = app.add_subcommand("train", "train a model on generated data");
  add_common(tr);
  tr->add_flag("--resume", resume, "continue from the existing checkpoint");
  CLI::App* ft = app.add_subcommand("finetune", "fine-tune a checkpoint on the held-out game");
  add_common(ft);
  ft->add_option("--checkpoint", checkpoint_path, "pretrained checkpoint")->required();
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate")->required();
  CLI::App* ex = app.add_subcommand("experiment", "run a named experiment protocol");
  add_common(ex);
  ex->add_option("name", experiment_name,
                 "dt-vs-bc | expert-filter | finetune | scaling | attention-dump")
      ->required();
  ex->add_option("--checkpoint", checkpoint_path, "checkpoint (attention-dump)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(args);
    if (tr->parsed()) return cmd_train(args, resume);
    if (ft->parsed()) return cmd_finetune(args, checkpoint_path);
    if (ev->parsed()) return cmd_eval(args, checkpoint_path);
    if (ex->parsed()) return cmd_experiment(args, experiment_name, checkpoint_path);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
