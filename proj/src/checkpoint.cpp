#include "mgdt/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mgdt {

namespace {

constexpr char kMagic[4] = {'M', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
  std::uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = std::uint8_t(v >> (8 * i));
  out.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  std::uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = std::uint8_t(v >> (8 * i));
  out.write(reinterpret_cast<char*>(b), 8);
}

void put_str(std::ofstream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

void put_mat(std::ofstream& out, const MatF& m) {
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  // column-major, the Eigen native layout; raw IEEE-754 bytes
  out.write(reinterpret_cast<const char*>(m.data()),
            std::streamsize(sizeof(float) * m.size()));
}

std::uint32_t get_u32(std::ifstream& in) {
  std::uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw InputError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& in) {
  std::uint8_t b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw InputError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

std::string get_str(std::ifstream& in) {
  const std::uint32_t n = get_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw InputError("checkpoint: truncated file");
  return s;
}

MatF get_mat(std::ifstream& in) {
  const std::uint32_t rows = get_u32(in), cols = get_u32(in);
  MatF m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), std::streamsize(sizeof(float) * m.size()));
  if (!in) throw InputError("checkpoint: truncated tensor data");
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("save_checkpoint: cannot open " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kVersion);

  const ModelConfig& c = ckpt.params.cfg;
  put_u32(out, std::uint32_t(c.n_layers));
  put_u32(out, std::uint32_t(c.d_model));
  put_u32(out, std::uint32_t(c.n_heads));
  put_u32(out, std::uint32_t(c.d_ff));
  put_u32(out, std::uint32_t(c.vocab_size));
  put_u32(out, std::uint32_t(c.max_seq_len));
  put_u32(out, std::uint32_t(c.patch_dim));
  put_u32(out, std::uint32_t(c.n_patch_slots));

  put_u32(out, ckpt.layout == SequenceLayout::BehaviorCloning ? 1 : 0);
  put_u64(out, ckpt.seed);
  put_u64(out, std::uint64_t(ckpt.step));
  put_u32(out, static_cast<std::uint32_t>(ckpt.train_games.size()));
  for (const auto& g : ckpt.train_games) put_str(out, g);

  auto reg = const_cast<ModelParams<float>&>(ckpt.params).registry();
  put_u32(out, static_cast<std::uint32_t>(reg.size()));
  for (auto& [name, t] : reg) {
    put_str(out, name);
    put_mat(out, *t);
  }

  put_u32(out, ckpt.has_optim ? 1 : 0);
  if (ckpt.has_optim) {
    if (ckpt.optim.m.size() != reg.size())
      throw InputError("save_checkpoint: optimizer state does not match registry");
    put_u64(out, std::uint64_t(ckpt.optim.step));
    for (std::size_t i = 0; i < reg.size(); ++i) {
      put_mat(out, ckpt.optim.m[i]);
      put_mat(out, ckpt.optim.v[i]);
    }
  }
  if (!out) throw InputError("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("load_checkpoint: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw InputError("load_checkpoint: bad magic in " + path.string());
  const std::uint32_t version = get_u32(in);
  if (version != kVersion)
    throw InputError("load_checkpoint: unsupported version " + std::to_string(version));

  ModelConfig c;
  c.n_layers = int(get_u32(in));
  c.d_model = int(get_u32(in));
  c.n_heads = int(get_u32(in));
  c.d_ff = int(get_u32(in));
  c.vocab_size = int(get_u32(in));
  c.max_seq_len = int(get_u32(in));
  c.patch_dim = int(get_u32(in));
  c.n_patch_slots = int(get_u32(in));
  c.validate();

  Checkpoint ckpt;
  ckpt.layout = get_u32(in) == 1 ? SequenceLayout::BehaviorCloning
                                 : SequenceLayout::ReturnConditioned;
  ckpt.seed = get_u64(in);
  ckpt.step = long(get_u64(in));
  const std::uint32_t n_games = get_u32(in);
  for (std::uint32_t i = 0; i < n_games; ++i) ckpt.train_games.push_back(get_str(in));

  // allocate at the right shapes, then overwrite tensor-by-tensor by name
  ckpt.params = init_params<float>(c, 0);
  auto reg = ckpt.params.registry();
  const std::uint32_t n_tensors = get_u32(in);
  if (n_tensors != reg.size())
    throw InputError("load_checkpoint: tensor count does not match config");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = get_str(in);
    if (name != reg[i].first)
      throw InputError("load_checkpoint: unexpected tensor " + name);
    MatF m = get_mat(in);
    if (m.rows() != reg[i].second->rows() || m.cols() != reg[i].second->cols())
      throw InputError("load_checkpoint: shape mismatch at " + name);
    *reg[i].second = std::move(m);
  }

  ckpt.has_optim = get_u32(in) == 1;
  if (ckpt.has_optim) {
    ckpt.optim.step = long(get_u64(in));
    ckpt.optim.m.resize(reg.size());
    ckpt.optim.v.resize(reg.size());
    for (std::size_t i = 0; i < reg.size(); ++i) {
      ckpt.optim.m[i] = get_mat(in);
      ckpt.optim.v[i] = get_mat(in);
    }
  }
  return ckpt;
}

}  // namespace mgdt
