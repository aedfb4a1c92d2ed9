#include "mgdt/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mgdt/games.hpp"

namespace mgdt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: bad boolean for " + key + ": " + v);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": " + v);
  }
}

long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos;
    const long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": " + v);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos;
    const unsigned long long d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": " + v);
  }
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) + ": malformed section");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "run" && section != "model" && section != "data" && section != "train" &&
          section != "sampler" && section != "eval" && section != "finetune")
        throw ConfigError("config: unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    const std::string qual = section + "." + key;

    if (qual == "run.seed") cfg.seed = parse_u64(qual, val);
    else if (qual == "run.deterministic") cfg.deterministic = parse_bool(qual, val);
    else if (qual == "run.data_dir") cfg.data_dir = val;
    else if (qual == "run.out_dir") cfg.out_dir = val;
    else if (qual == "model.preset") cfg.model_preset = val;
    else if (qual == "model.layout") cfg.layout = val;
    else if (qual == "data.games") cfg.games = split_list(val);
    else if (qual == "data.run_name") cfg.run_name = val;
    else if (qual == "data.n_checkpoints") cfg.n_checkpoints = int(parse_long(qual, val));
    else if (qual == "data.episodes_per_checkpoint")
      cfg.episodes_per_checkpoint = int(parse_long(qual, val));
    else if (qual == "data.skill_max") cfg.skill_max = parse_double(qual, val);
    else if (qual == "data.expert_filter") cfg.expert_filter = parse_bool(qual, val);
    else if (qual == "data.expert_fraction") cfg.expert_fraction = parse_double(qual, val);
    else if (qual == "data.rtg_include_current")
      cfg.rtg_include_current = parse_bool(qual, val);
    else if (qual == "train.steps") cfg.steps = parse_long(qual, val);
    else if (qual == "train.batch_size") cfg.batch_size = int(parse_long(qual, val));
    else if (qual == "train.window") cfg.window = int(parse_long(qual, val));
    else if (qual == "train.augment") cfg.augment = parse_bool(qual, val);
    else if (qual == "train.log_every") cfg.log_every = parse_long(qual, val);
    else if (qual == "train.checkpoint_every") cfg.checkpoint_every = parse_long(qual, val);
    else if (qual == "train.peak_lr") cfg.peak_lr = parse_double(qual, val);
    else if (qual == "train.warmup_steps") cfg.warmup_steps = int(parse_long(qual, val));
    else if (qual == "train.weight_decay") cfg.weight_decay = parse_double(qual, val);
    else if (qual == "train.clip_norm") cfg.clip_norm = parse_double(qual, val);
    else if (qual == "sampler.mode") cfg.sampler_mode = val;
    else if (qual == "sampler.kappa") cfg.kappa = parse_double(qual, val);
    else if (qual == "sampler.temperature") cfg.temperature = parse_double(qual, val);
    else if (qual == "sampler.percentile") cfg.percentile = parse_double(qual, val);
    else if (qual == "sampler.return_temperature")
      cfg.return_temperature = parse_double(qual, val);
    else if (qual == "sampler.return_percentile")
      cfg.return_percentile = parse_double(qual, val);
    else if (qual == "sampler.top_n") cfg.top_n = int(parse_long(qual, val));
    else if (qual == "sampler.regenerate_all_returns")
      cfg.regenerate_all_returns = parse_bool(qual, val);
    else if (qual == "eval.n_trials") cfg.n_trials = int(parse_long(qual, val));
    else if (qual == "eval.games") cfg.eval_games = split_list(val);
    else if (qual == "finetune.game") cfg.finetune_game = val;
    else if (qual == "finetune.data_fraction") cfg.data_fraction = parse_double(qual, val);
    else if (qual == "finetune.steps") cfg.finetune_steps = parse_long(qual, val);
    else if (qual == "finetune.peak_lr") cfg.finetune_lr = parse_double(qual, val);
    else if (qual == "finetune.weight_decay")
      cfg.finetune_weight_decay = parse_double(qual, val);
    else if (qual == "finetune.warmup_steps")
      cfg.finetune_warmup_steps = int(parse_long(qual, val));
    else throw ConfigError("config: unknown key " + qual);
  }

  if (cfg.games.empty()) cfg.games = training_game_ids();
  if (cfg.eval_games.empty()) cfg.eval_games = cfg.games;
  if (cfg.finetune_game.empty()) cfg.finetune_game = held_out_game_id();
  if (cfg.layout != "dt" && cfg.layout != "bc")
    throw ConfigError("config: model.layout must be dt or bc");
  if (cfg.sampler_mode != "expert-bias" && cfg.sampler_mode != "top-n" &&
      cfg.sampler_mode != "bc")
    throw ConfigError("config: sampler.mode must be expert-bias, top-n or bc");
  model_preset(cfg.model_preset);  // validates the name
  cfg.sampler_config().validate();
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

SequenceLayout RunConfig::sequence_layout() const {
  return layout == "bc" ? SequenceLayout::BehaviorCloning : SequenceLayout::ReturnConditioned;
}

SamplerConfig RunConfig::sampler_config() const {
  SamplerConfig s;
  s.mode = sampler_mode == "bc"      ? SamplerMode::BC
           : sampler_mode == "top-n" ? SamplerMode::TopN
                                     : SamplerMode::ExpertBias;
  s.kappa = kappa;
  s.temperature = temperature;
  s.percentile = percentile;
  s.return_temperature = return_temperature;
  s.return_percentile = sampler_mode == "top-n" ? 0.0 : return_percentile;
  s.top_n = top_n;
  s.regenerate_all_returns = regenerate_all_returns;
  if (s.mode == SamplerMode::TopN) s.percentile = 50.0;
  return s;
}

std::filesystem::path RunConfig::resolved_data_dir() const {
  if (!data_dir.empty()) return data_dir;
  if (const char* env = std::getenv("MGDT_DATA_DIR"); env && *env) return env;
  return "data";
}

std::string RunConfig::resolved_text() const {
  std::ostringstream os;
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
  };
  os << "[run]\n";
  os << "seed = " << seed << "\n";
  os << "deterministic = " << (deterministic ? "true" : "false") << "\n";
  os << "data_dir = " << resolved_data_dir().string() << "\n";
  os << "out_dir = " << out_dir << "\n";
  os << "[model]\n";
  os << "preset = " << model_preset << "\n";
  os << "layout = " << layout << "\n";
  os << "[data]\n";
  os << "games = " << join(games) << "\n";
  os << "run_name = " << run_name << "\n";
  os << "n_checkpoints = " << n_checkpoints << "\n";
  os << "episodes_per_checkpoint = " << episodes_per_checkpoint << "\n";
  os << "skill_max = " << skill_max << "\n";
  os << "expert_filter = " << (expert_filter ? "true" : "false") << "\n";
  os << "expert_fraction = " << expert_fraction << "\n";
  os << "rtg_include_current = " << (rtg_include_current ? "true" : "false") << "\n";
  os << "[train]\n";
  os << "steps = " << steps << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "window = " << window << "\n";
  os << "augment = " << (augment ? "true" : "false") << "\n";
  os << "log_every = " << log_every << "\n";
  os << "checkpoint_every = " << checkpoint_every << "\n";
  os << "peak_lr = " << peak_lr << "\n";
  os << "warmup_steps = " << warmup_steps << "\n";
  os << "weight_decay = " << weight_decay << "\n";
  os << "clip_norm = " << clip_norm << "\n";
  os << "[sampler]\n";
  os << "mode = " << sampler_mode << "\n";
  os << "kappa = " << kappa << "\n";
  os << "temperature = " << temperature << "\n";
  os << "percentile = " << percentile << "\n";
  os << "return_temperature = " << return_temperature << "\n";
  os << "return_percentile = " << return_percentile << "\n";
  os << "top_n = " << top_n << "\n";
  os << "regenerate_all_returns = " << (regenerate_all_returns ? "true" : "false") << "\n";
  os << "[eval]\n";
  os << "n_trials = " << n_trials << "\n";
  os << "games = " << join(eval_games) << "\n";
  os << "[finetune]\n";
  os << "game = " << finetune_game << "\n";
  os << "data_fraction = " << data_fraction << "\n";
  os << "steps = " << finetune_steps << "\n";
  os << "peak_lr = " << finetune_lr << "\n";
  os << "weight_decay = " << finetune_weight_decay << "\n";
  os << "warmup_steps = " << finetune_warmup_steps << "\n";
  return os.str();
}

std::string RunConfig::fingerprint() const {
  const std::string text = resolved_text();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_resolved_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("write_resolved_config: cannot open " + path.string());
  out << cfg.resolved_text();
}

}  // namespace mgdt
