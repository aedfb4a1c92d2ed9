#include "mgdt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace mgdt {

namespace {

constexpr char kMagic[4] = {'M', 'G', 'E', 'P'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

struct Writer {
  std::vector<std::uint8_t> buf;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf.push_back(std::uint8_t(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(std::uint8_t(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(std::uint8_t(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
  std::string where = "header";

  void need(std::size_t n) {
    if (pos + n > buf.size())
      throw InputError("episode file truncated in " + where);
  }
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= std::uint16_t(buf[pos + i]) << (8 * i);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
};

std::int32_t to_fixed(double v) { return static_cast<std::int32_t>(std::llround(v * 1e4)); }
float from_fixed(std::int32_t v) { return static_cast<float>(double(v) * 1e-4); }

}  // namespace

void write_episodes(const std::filesystem::path& path, const std::vector<Trajectory>& episodes) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(episodes.size()));
  for (const Trajectory& ep : episodes) {
    const std::size_t len = ep.actions.size();
    if (ep.observations.size() != len || ep.rewards.size() != len)
      throw InputError("write_episodes: inconsistent trajectory field lengths");
    w.str(ep.game_id);
    w.u32(static_cast<std::uint32_t>(len));
    w.u32(static_cast<std::uint32_t>(to_fixed(ep.skill)));
    const Image& first = ep.observations.at(0);
    w.u16(static_cast<std::uint16_t>(first.h));
    w.u16(static_cast<std::uint16_t>(first.w));
    w.u16(static_cast<std::uint16_t>(first.c));
    for (const Image& obs : ep.observations) {
      if (!obs.same_dims(first)) throw InputError("write_episodes: mixed observation dims");
      w.bytes(obs.px.data(), obs.px.size());
    }
    for (int a : ep.actions) w.buf.push_back(static_cast<std::uint8_t>(a));
    for (float r : ep.rewards) w.i32(to_fixed(r));
  }
  w.u64(fnv1a(w.buf.data() + 4, w.buf.size() - 4));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("write_episodes: cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(w.buf.data()), std::streamsize(w.buf.size()));
  if (!out) throw InputError("write_episodes: write failed for " + path.string());
}

std::vector<Trajectory> read_episodes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("read_episodes: cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw InputError("read_episodes: bad magic in " + path.string());
  const std::uint64_t stored =
      [&] {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf[buf.size() - 8 + i]) << (8 * i);
        return v;
      }();
  if (fnv1a(buf.data() + 4, buf.size() - 12) != stored)
    throw InputError("read_episodes: checksum mismatch in " + path.string());

  Reader r{buf};
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw InputError("read_episodes: unsupported version " + std::to_string(version));
  const std::uint32_t n = r.u32();
  std::vector<Trajectory> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    r.where = "episode " + std::to_string(i);
    Trajectory ep;
    ep.game_id = r.str();
    const std::uint32_t len = r.u32();
    if (len == 0) throw InputError("read_episodes: zero-length episode " + std::to_string(i));
    ep.skill = from_fixed(static_cast<std::int32_t>(r.u32()));
    const int h = r.u16(), w = r.u16(), c = r.u16();
    ep.observations.reserve(len);
    for (std::uint32_t t = 0; t < len; ++t) {
      Image img(h, w, c);
      r.bytes(img.px.data(), img.px.size());
      ep.observations.push_back(std::move(img));
    }
    ep.actions.resize(len);
    for (std::uint32_t t = 0; t < len; ++t) {
      r.need(1);
      ep.actions[t] = r.buf[r.pos++];
    }
    ep.rewards.resize(len);
    for (std::uint32_t t = 0; t < len; ++t) ep.rewards[t] = from_fixed(r.i32());
    ep.returns_to_go = compute_return_to_go(ep.rewards);
    out.push_back(std::move(ep));
  }
  return out;
}

namespace {

double quantile_linear(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * double(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - double(lo);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

}  // namespace

std::vector<Trajectory> filter_expert(const std::vector<Trajectory>& episodes,
                                      double keep_fraction) {
  if (episodes.empty()) throw InputError("filter_expert: empty dataset");
  if (keep_fraction <= 0.0 || keep_fraction > 1.0)
    throw InputError("filter_expert: keep_fraction must be in (0, 1]");
  std::map<std::string, std::vector<double>> returns;
  for (const auto& ep : episodes) returns[ep.game_id].push_back(ep.episodic_return());
  std::map<std::string, double> threshold;
  for (auto& [game, rs] : returns) threshold[game] = quantile_linear(rs, 1.0 - keep_fraction);
  std::vector<Trajectory> out;
  for (const auto& ep : episodes)
    if (ep.episodic_return() >= threshold[ep.game_id]) out.push_back(ep);
  return out;
}

std::vector<Trajectory> subsample_steps(const std::vector<Trajectory>& episodes, double fraction,
                                        std::uint64_t seed) {
  if (episodes.empty()) throw InputError("subsample_steps: empty dataset");
  if (fraction <= 0.0 || fraction > 1.0)
    throw InputError("subsample_steps: fraction must be in (0, 1]");
  const std::size_t budget =
      std::max<std::size_t>(1, static_cast<std::size_t>(double(total_steps(episodes)) * fraction));
  std::vector<std::size_t> order(episodes.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derive_rng(seed, 0x73756273616d70ull);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Trajectory> out;
  std::size_t got = 0;
  for (std::size_t idx : order) {
    if (got >= budget) break;
    out.push_back(episodes[idx]);
    got += episodes[idx].actions.size();
  }
  return out;
}

std::size_t total_steps(const std::vector<Trajectory>& episodes) {
  std::size_t n = 0;
  for (const auto& ep : episodes) n += ep.actions.size();
  return n;
}

double best_demo_return(const std::vector<Trajectory>& episodes, const std::string& game_id) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& ep : episodes)
    if (ep.game_id == game_id) best = std::max(best, ep.episodic_return());
  if (!std::isfinite(best)) throw InputError("best_demo_return: no episodes for " + game_id);
  return best;
}

BatchSampler::BatchSampler(const std::vector<Trajectory>* episodes, BatchSpec spec, PatchGrid grid,
                           ReturnQuantizer quant, TokenVocabulary vocab, SequenceLayout layout)
    : episodes_(episodes),
      spec_(std::move(spec)),
      grid_(grid),
      quant_(quant),
      vocab_(vocab),
      layout_(layout) {
  if (episodes_->empty()) throw InputError("BatchSampler: empty dataset");
  if (spec_.batch_size < 1 || spec_.window < 1)
    throw InputError("BatchSampler: batch_size and window must be >= 1");
  std::map<std::string, GameIndex> by_game;
  for (std::size_t i = 0; i < episodes_->size(); ++i) {
    const Trajectory& ep = (*episodes_)[i];
    GameIndex& g = by_game[ep.game_id];
    g.game_id = ep.game_id;
    const long windows =
        ep.length() >= spec_.window ? long(ep.length() - spec_.window + 1) : 1L;
    g.episode.push_back(static_cast<int>(i));
    g.total_windows += windows;
    g.cum_windows.push_back(g.total_windows);
    g.steps += ep.actions.size();
  }
  double cum = 0;
  for (auto& [id, g] : by_game) {
    double w;
    if (!spec_.mixing_weights.empty()) {
      auto it = spec_.mixing_weights.find(id);
      w = it == spec_.mixing_weights.end() ? 0.0 : it->second;
    } else {
      w = double(g.steps);
    }
    if (w < 0) throw InputError("BatchSampler: negative mixing weight");
    games_.push_back(std::move(g));
    cum += w;
    cum_weight_.push_back(cum);
  }
  if (cum <= 0) throw InputError("BatchSampler: mixing weights sum to zero");
  for (double& w : cum_weight_) w /= cum;
}

std::vector<BatchItem> BatchSampler::sample_batch(long step) {
  std::vector<BatchItem> batch;
  batch.reserve(spec_.batch_size);
  for (int b = 0; b < spec_.batch_size; ++b) {
    Rng rng = derive_rng(spec_.seed, 0x6261746368ull, std::uint64_t(step), std::uint64_t(b));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double u = uni(rng);
    std::size_t gi = 0;
    while (gi + 1 < cum_weight_.size() && u > cum_weight_[gi]) ++gi;
    const GameIndex& g = games_[gi];
    const long widx = std::uniform_int_distribution<long>(0, g.total_windows - 1)(rng);
    const std::size_t ei =
        std::upper_bound(g.cum_windows.begin(), g.cum_windows.end(), widx) - g.cum_windows.begin();
    const Trajectory& ep = (*episodes_)[g.episode[ei]];
    const long prev = ei == 0 ? 0 : g.cum_windows[ei - 1];
    const int start = static_cast<int>(widx - prev);
    const int T = std::min(spec_.window, ep.length());

    AugmentParams aug;
    const bool use_aug = spec_.augment;
    if (use_aug) aug = draw_augment(rng);
    BatchItem item;
    item.game_id = g.game_id;
    item.seq = build_window(ep, ep.length() >= spec_.window ? start : 0, T, quant_, grid_, vocab_,
                            layout_, use_aug ? &aug : nullptr);
    auto it = mask_cache_.find(T);
    if (it == mask_cache_.end())
      it = mask_cache_.emplace(T, build_mask(T, grid_.patches_per_image(), layout_)).first;
    item.mask = it->second;
    batch.push_back(std::move(item));
  }
  return batch;
}

}  // namespace mgdt
