#include "runner/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

#include "harness/learner.hpp"

namespace drift::runner {

namespace {

using diffusion::BlockMode;
using harness::Dataset;
using harness::DaggerSession;

constexpr char kMagic[4] = {'D', 'R', 'F', 'T'};

std::uint64_t fnv(const std::uint8_t* p, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 0x100000001b3ULL;
  return h;
}

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Cursor {
 public:
  Cursor(const std::vector<std::uint8_t>& b) : b_(b) {}

  template <typename U>
  U take(const std::string& field) {
    need(sizeof(U), field);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::string bytes(std::size_t n, const std::string& field) {
    need(n, field);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const std::string& field) const {
    if (b_.size() - pos_ < n) throw CheckpointCorruptError(field, "file truncated");
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

std::size_t dtype_size(DType t) { return t == DType::kF32 ? 4 : 8; }

// ---- entry construction ----

class Builder {
 public:
  void f64(const std::string& name, std::vector<std::uint64_t> shape, const std::vector<double>& v) {
    Entry e{name, DType::kF64, std::move(shape), {}};
    e.bytes.reserve(v.size() * 8);
    for (double x : v) put(e.bytes, std::bit_cast<std::uint64_t>(x));
    push(std::move(e), v.size());
  }
  void f64(const std::string& name, const std::vector<double>& v) { f64(name, {v.size()}, v); }

  void f32(const std::string& name, const num::Shape& shape, std::span<const float> v) {
    Entry e{name, DType::kF32, std::vector<std::uint64_t>(shape.begin(), shape.end()), {}};
    e.bytes.reserve(v.size() * 4);
    for (float x : v) put(e.bytes, std::bit_cast<std::uint32_t>(x));
    push(std::move(e), v.size());
  }

  std::vector<Entry> take() { return std::move(entries_); }

 private:
  void push(Entry e, std::size_t n) {
    if (e.count() != n) throw ContractError("checkpoint entry '" + e.name + "': shape does not match data");
    entries_.push_back(std::move(e));
  }
  std::vector<Entry> entries_;
};

// ---- entry access ----

class Source {
 public:
  explicit Source(const ArchiveFile& a) : a_(a) {}

  bool has(const std::string& name) const { return a_.find(name) != nullptr; }

  const Entry& entry(const std::string& name) const {
    const Entry* e = a_.find(name);
    if (!e) throw CheckpointCorruptError(name, "missing entry");
    return *e;
  }

  std::vector<double> f64(const std::string& name, std::optional<std::vector<std::uint64_t>> shape = {}) const {
    const Entry& e = entry(name);
    check(e, DType::kF64, shape);
    std::vector<double> v(e.count());
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::uint64_t u = 0;
      for (std::size_t b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(e.bytes[i * 8 + b]) << (8 * b);
      v[i] = std::bit_cast<double>(u);
    }
    return v;
  }

  num::Array<float> f32(const std::string& name, std::optional<num::Shape> shape = {}) const {
    const Entry& e = entry(name);
    std::optional<std::vector<std::uint64_t>> want;
    if (shape) want = std::vector<std::uint64_t>(shape->begin(), shape->end());
    check(e, DType::kF32, want);
    std::vector<float> v(e.count());
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::uint32_t u = 0;
      for (std::size_t b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(e.bytes[i * 4 + b]) << (8 * b);
      v[i] = std::bit_cast<float>(u);
    }
    return num::Array<float>(num::Shape(e.shape.begin(), e.shape.end()), std::move(v));
  }

 private:
  static void check(const Entry& e, DType t, const std::optional<std::vector<std::uint64_t>>& shape) {
    if (e.dtype != t) throw CheckpointCorruptError(e.name, "unexpected dtype");
    if (shape && e.shape != *shape) throw CheckpointCorruptError(e.name, "unexpected shape");
  }
  const ArchiveFile& a_;
};

std::size_t as_index(double v, const std::string& field) {
  if (!(v >= 0) || v > 9007199254740992.0 || v != static_cast<double>(static_cast<std::uint64_t>(v)))
    throw CheckpointCorruptError(field, "expected a non-negative integer");
  return static_cast<std::size_t>(v);
}

std::vector<double> split64(std::uint64_t v) {
  return {static_cast<double>(v >> 32), static_cast<double>(v & 0xffffffffULL)};
}

std::uint64_t join64(double hi, double lo, const std::string& field) {
  const auto h = as_index(hi, field), l = as_index(lo, field);
  if (h > 0xffffffffULL || l > 0xffffffffULL) throw CheckpointCorruptError(field, "word out of range");
  return (static_cast<std::uint64_t>(h) << 32) | l;
}

// ---- datasets ----

void put_dataset(Builder& b, const std::string& prefix, const Dataset& d, std::size_t first, std::size_t obs_dim,
                 std::size_t act_dim) {
  std::vector<double> lengths, success, obs, act, labels;
  for (std::size_t i = first; i < d.trajectories.size(); ++i) {
    const auto& t = d.trajectories[i];
    lengths.push_back(static_cast<double>(t.size()));
    success.push_back(t.success ? 1.0 : 0.0);
    for (std::size_t s = 0; s < t.size(); ++s) {
      if (t.observations[s].size() != obs_dim || t.actions[s].size() != act_dim)
        throw ContractError("checkpoint: trajectory dimensions inconsistent");
      obs.insert(obs.end(), t.observations[s].begin(), t.observations[s].end());
      act.insert(act.end(), t.actions[s].begin(), t.actions[s].end());
      labels.push_back(t.expert_label[s] ? 1.0 : 0.0);
    }
  }
  const std::uint64_t steps = labels.size();
  b.f64(prefix + ".lengths", lengths);
  b.f64(prefix + ".success", success);
  b.f64(prefix + ".observations", {steps, obs_dim}, obs);
  b.f64(prefix + ".actions", {steps, act_dim}, act);
  b.f64(prefix + ".labels", labels);
}

void get_dataset(const Source& src, const std::string& prefix, Dataset& out, std::size_t obs_dim,
                 std::size_t act_dim) {
  const auto lengths = src.f64(prefix + ".lengths");
  const auto success = src.f64(prefix + ".success", std::vector<std::uint64_t>{lengths.size()});
  std::size_t steps = 0;
  for (double l : lengths) steps += as_index(l, prefix + ".lengths");
  const auto obs = src.f64(prefix + ".observations", std::vector<std::uint64_t>{steps, obs_dim});
  const auto act = src.f64(prefix + ".actions", std::vector<std::uint64_t>{steps, act_dim});
  const auto labels = src.f64(prefix + ".labels", std::vector<std::uint64_t>{steps});
  std::size_t row = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    harness::Trajectory t;
    const std::size_t n = as_index(lengths[i], prefix + ".lengths");
    for (std::size_t s = 0; s < n; ++s, ++row) {
      if (labels[row] != 0.0 && labels[row] != 1.0) throw CheckpointCorruptError(prefix + ".labels", "not 0/1");
      t.push(harness::Vec(obs.begin() + row * obs_dim, obs.begin() + (row + 1) * obs_dim),
             harness::Vec(act.begin() + row * act_dim, act.begin() + (row + 1) * act_dim), labels[row] == 1.0);
    }
    if (success[i] != 0.0 && success[i] != 1.0) throw CheckpointCorruptError(prefix + ".success", "not 0/1");
    t.success = success[i] == 1.0;
    out.add(std::move(t));
  }
}

// ---- logs ----

constexpr std::size_t kEpochCols = 12;
constexpr std::size_t kCheckpointCols = 5;

void put_logs(Builder& b, const harness::SessionState& s) {
  std::vector<double> ep;
  for (const auto& e : s.epochs) {
    const auto h = split64(e.weights_hash);
    const double row[kEpochCols] = {e.phase == "online" ? 1.0 : 0.0,
                                    static_cast<double>(e.epoch),
                                    static_cast<double>(e.rank),
                                    static_cast<double>(static_cast<int>(e.mode)),
                                    e.batch_time_s,
                                    e.train_time_s,
                                    static_cast<double>(e.batches),
                                    e.loss,
                                    static_cast<double>(e.nel),
                                    static_cast<double>(e.new_labels),
                                    h[0],
                                    h[1]};
    ep.insert(ep.end(), row, row + kEpochCols);
  }
  b.f64("log.epochs", {s.epochs.size(), kEpochCols}, ep);
  std::vector<double> ck;
  for (const auto& c : s.checkpoints) {
    const double row[kCheckpointCols] = {static_cast<double>(c.iteration), c.sr, c.msd_mean, c.msd_std,
                                         static_cast<double>(c.nel)};
    ck.insert(ck.end(), row, row + kCheckpointCols);
  }
  b.f64("log.checkpoints", {s.checkpoints.size(), kCheckpointCols}, ck);
}

void get_logs(const Source& src, harness::SessionState& s) {
  const Entry& ee = src.entry("log.epochs");
  if (ee.shape.size() != 2 || ee.shape[1] != kEpochCols) throw CheckpointCorruptError("log.epochs", "unexpected shape");
  const auto ep = src.f64("log.epochs");
  for (std::size_t i = 0; i < ee.shape[0]; ++i) {
    const double* r = ep.data() + i * kEpochCols;
    harness::EpochRecord e;
    if (r[0] != 0.0 && r[0] != 1.0) throw CheckpointCorruptError("log.epochs", "bad phase");
    e.phase = r[0] == 1.0 ? "online" : "offline";
    e.epoch = static_cast<int>(as_index(r[1], "log.epochs"));
    e.rank = static_cast<int>(as_index(r[2], "log.epochs"));
    const auto mode = as_index(r[3], "log.epochs");
    if (mode > 2) throw CheckpointCorruptError("log.epochs", "bad block mode");
    e.mode = static_cast<BlockMode>(mode);
    e.batch_time_s = r[4];
    e.train_time_s = r[5];
    e.batches = as_index(r[6], "log.epochs");
    e.loss = r[7];
    e.nel = as_index(r[8], "log.epochs");
    e.new_labels = as_index(r[9], "log.epochs");
    e.weights_hash = join64(r[10], r[11], "log.epochs");
    s.epochs.push_back(e);
  }
  const Entry& ce = src.entry("log.checkpoints");
  if (ce.shape.size() != 2 || ce.shape[1] != kCheckpointCols)
    throw CheckpointCorruptError("log.checkpoints", "unexpected shape");
  const auto ck = src.f64("log.checkpoints");
  for (std::size_t i = 0; i < ce.shape[0]; ++i) {
    const double* r = ck.data() + i * kCheckpointCols;
    s.checkpoints.push_back({static_cast<int>(as_index(r[0], "log.checkpoints")), r[1], r[2], r[3],
                             as_index(r[4], "log.checkpoints")});
  }
}

// ---- learner ----

void put_learner(Builder& b, const harness::Learner& l) {
  const auto& net = l.net;
  std::vector<double> modes;
  for (const auto* blk : net.conv_blocks()) {
    const auto* state = &blk->state();
    double alpha = 0;
    if (const auto* lora = std::get_if<2>(state)) alpha = static_cast<double>(lora->alpha);
    modes.insert(modes.end(), {static_cast<double>(static_cast<int>(blk->mode())), static_cast<double>(blk->rank()), alpha});
  }
  b.f64("net.blocks", {net.conv_blocks().size(), 3}, modes);
  const auto params = net.parameters();
  for (const auto& p : params) b.f32("net." + p.name, p.tensor.shape(), p.tensor.data());

  std::map<std::string, const num::Node<float>*> live;
  for (const auto& p : params) live[p.name] = p.tensor.node();
  std::vector<std::string> names;
  for (const auto& [name, slot] : l.optimizer.slots()) {
    const auto it = live.find(name);
    if (it == live.end() || slot.owner.lock().get() != it->second) continue;
    names.push_back(name);
    b.f32("adam." + name + ".m", {slot.m.size()}, slot.m);
    b.f32("adam." + name + ".v", {slot.v.size()}, slot.v);
    b.f64("adam." + name + ".steps", {static_cast<double>(slot.steps)});
  }
  b.f64("adam.count", {static_cast<double>(names.size())});

  std::vector<double> norm = l.normalizer.center;
  norm.insert(norm.end(), l.normalizer.half_range.begin(), l.normalizer.half_range.end());
  b.f64("normalizer", {2, l.normalizer.dim()}, norm);
}

void get_learner(const Source& src, harness::Learner& l) {
  auto& net = l.net;
  auto blocks = net.conv_blocks();
  const auto names = net.conv_block_names();
  const auto modes = src.f64("net.blocks", std::vector<std::uint64_t>{blocks.size(), 3});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string pre = "net." + names[i];
    const auto mode = as_index(modes[i * 3], "net.blocks");
    const auto rank = as_index(modes[i * 3 + 1], "net.blocks");
    auto& blk = *blocks[i];
    const auto& g = blk.geometry();
    auto bias = src.f32(pre + ".bias", num::Shape{g.c_out});
    try {
      switch (mode) {
        case 0:
          blk.restore(num::Tensor<float>::parameter(src.f32(pre + ".weight", num::Shape{g.c_out, g.c_in, g.k}), true),
                      std::move(bias));
          break;
        case 1: {
          auto f = lowrank::assemble_factored(src.f32(pre + ".u_train"), src.f32(pre + ".s_train"),
                                              src.f32(pre + ".v_train"), src.f32(pre + ".u_frozen"),
                                              src.f32(pre + ".s_frozen"), src.f32(pre + ".v_frozen"));
          if (f.m != g.m() || f.n != g.n() || f.rank != rank) throw DimensionError("factor shapes");
          blk.restore(std::move(f), std::move(bias));
          break;
        }
        case 2: {
          lowrank::LoraConv<float> lora;
          lora.geom = g;
          lora.rank = rank;
          lora.alpha = static_cast<float>(modes[i * 3 + 2]);
          lora.w_conv = num::Tensor<float>::parameter(src.f32(pre + ".w_conv", num::Shape{g.c_out, g.c_in, g.k}), false);
          lora.w_down = num::Tensor<float>::parameter(src.f32(pre + ".w_down", num::Shape{rank, g.c_in, g.k}), true);
          lora.w_up = num::Tensor<float>::parameter(src.f32(pre + ".w_up", num::Shape{g.c_out, rank, 1}), true);
          if (rank < 1 || rank > g.max_rank()) throw DimensionError("adapter rank");
          blk.restore(std::move(lora), std::move(bias));
          break;
        }
        default:
          throw CheckpointCorruptError("net.blocks", "bad block mode for " + names[i]);
      }
    } catch (const DimensionError& e) {
      throw CheckpointCorruptError(pre, e.what());
    }
  }
  for (auto& [name, lin] : net.linears()) {
    const auto w = src.f32("net." + name + ".weight", lin->weight.shape());
    const auto bb = src.f32("net." + name + ".bias", lin->bias.shape());
    std::copy(w.data.begin(), w.data.end(), lin->weight.mutable_data().begin());
    std::copy(bb.data.begin(), bb.data.end(), lin->bias.mutable_data().begin());
  }

  const auto params = net.parameters();
  std::size_t restored = 0;
  for (const auto& p : params) {
    if (!src.has("adam." + p.name + ".m")) continue;
    if (!p.tensor.requires_grad()) throw CheckpointCorruptError("adam." + p.name, "slot for a frozen array");
    auto m = src.f32("adam." + p.name + ".m", num::Shape{p.tensor.numel()});
    auto v = src.f32("adam." + p.name + ".v", num::Shape{p.tensor.numel()});
    const auto steps = src.f64("adam." + p.name + ".steps", std::vector<std::uint64_t>{1});
    l.optimizer.restore_slot(p.name, p.tensor, std::move(m.data), std::move(v.data),
                             as_index(steps[0], "adam." + p.name + ".steps"));
    ++restored;
  }
  const auto count = src.f64("adam.count", std::vector<std::uint64_t>{1});
  if (as_index(count[0], "adam.count") != restored)
    throw CheckpointCorruptError("adam.count", "optimizer slots do not match the net's arrays");

  const std::size_t dim = net.config().action_dim;
  const auto norm = src.f64("normalizer", std::vector<std::uint64_t>{2, dim});
  l.normalizer.center.assign(norm.begin(), norm.begin() + dim);
  l.normalizer.half_range.assign(norm.begin() + dim, norm.end());
}

}  // namespace

std::uint64_t Entry::count() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

const Entry* ArchiveFile::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

std::vector<std::uint8_t> ArchiveFile::serialize() const {
  std::vector<std::uint8_t> payload;
  for (const auto& e : entries) {
    const std::uint64_t width = e.dtype == DType::kF32 ? 4 : 8;
    if (e.bytes.size() != e.count() * width)
      throw ContractError("checkpoint entry '" + e.name + "': payload length does not match its shape");
  }
  for (const auto& e : entries) payload.insert(payload.end(), e.bytes.begin(), e.bytes.end());

  std::vector<std::uint8_t> head(kMagic, kMagic + 4);
  put<std::uint32_t>(head, version);
  put<std::uint64_t>(head, fnv(reinterpret_cast<const std::uint8_t*>(config.data()), config.size()));
  put<std::uint64_t>(head, fnv(payload.data(), payload.size()));
  put<std::uint32_t>(head, static_cast<std::uint32_t>(config.size()));
  head.insert(head.end(), config.begin(), config.end());
  put<std::uint32_t>(head, static_cast<std::uint32_t>(entries.size()));
  std::size_t manifest = 0;
  for (const auto& e : entries) manifest += 2 + e.name.size() + 2 + 8 * e.shape.size() + 16;
  std::uint64_t offset = head.size() + manifest;
  for (const auto& e : entries) {
    put<std::uint16_t>(head, static_cast<std::uint16_t>(e.name.size()));
    head.insert(head.end(), e.name.begin(), e.name.end());
    put<std::uint8_t>(head, static_cast<std::uint8_t>(e.dtype));
    put<std::uint8_t>(head, static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) put<std::uint64_t>(head, d);
    put<std::uint64_t>(head, offset);
    put<std::uint64_t>(head, e.bytes.size());
    offset += e.bytes.size();
  }
  head.insert(head.end(), payload.begin(), payload.end());
  return head;
}

ArchiveFile ArchiveFile::parse(const std::vector<std::uint8_t>& bytes) {
  Cursor c(bytes);
  if (c.bytes(4, "magic") != std::string(kMagic, 4)) throw CheckpointCorruptError("magic", "not a checkpoint file");
  ArchiveFile a;
  a.version = c.take<std::uint32_t>("version");
  if (a.version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint format version " + std::to_string(a.version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  }
  const auto config_hash = c.take<std::uint64_t>("config_hash");
  const auto payload_hash = c.take<std::uint64_t>("payload_hash");
  const auto config_len = c.take<std::uint32_t>("config_length");
  a.config = c.bytes(config_len, "config");
  if (fnv(reinterpret_cast<const std::uint8_t*>(a.config.data()), a.config.size()) != config_hash)
    throw CheckpointCorruptError("config_hash", "does not match the embedded configuration");
  const auto count = c.take<std::uint32_t>("entry_count");
  if (count > bytes.size()) throw CheckpointCorruptError("entry_count", "larger than the file");

  struct Raw {
    std::uint64_t offset, nbytes;
  };
  std::vector<Raw> raw;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string at = "entry[" + std::to_string(i) + "]";
    Entry e;
    e.name = c.bytes(c.take<std::uint16_t>(at + ".name"), at + ".name");
    const std::string field = "entry '" + e.name + "'";
    if (e.name.empty() || !seen.insert(e.name).second) throw CheckpointCorruptError(field + ".name", "empty or duplicate");
    const auto dt = c.take<std::uint8_t>(field + ".dtype");
    if (dt > 1) throw CheckpointCorruptError(field + ".dtype", "unknown dtype " + std::to_string(dt));
    e.dtype = static_cast<DType>(dt);
    const auto ndim = c.take<std::uint8_t>(field + ".ndim");
    if (ndim > 8) throw CheckpointCorruptError(field + ".ndim", "too many dimensions");
    std::uint64_t n = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      const auto dim = c.take<std::uint64_t>(field + ".shape");
      if (dim != 0 && n > std::numeric_limits<std::uint64_t>::max() / 16 / dim)
        throw CheckpointCorruptError(field + ".shape", "too large");
      n *= dim;
      e.shape.push_back(dim);
    }
    const auto offset = c.take<std::uint64_t>(field + ".offset");
    const auto nbytes = c.take<std::uint64_t>(field + ".nbytes");
    if (nbytes != n * dtype_size(e.dtype))
      throw CheckpointCorruptError(field + ".nbytes", "does not match shape and dtype");
    raw.push_back({offset, nbytes});
    a.entries.push_back(std::move(e));
  }
  std::uint64_t expected = c.pos();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::string field = "entry '" + a.entries[i].name + "'";
    if (raw[i].offset != expected) throw CheckpointCorruptError(field + ".offset", "not contiguous");
    if (raw[i].nbytes > bytes.size() - expected) throw CheckpointCorruptError(field + ".nbytes", "past end of file");
    a.entries[i].bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(expected),
                              bytes.begin() + static_cast<std::ptrdiff_t>(expected + raw[i].nbytes));
    expected += raw[i].nbytes;
  }
  if (expected != bytes.size()) throw CheckpointCorruptError("payload", "trailing bytes after the last entry");
  if (fnv(bytes.data() + c.pos(), bytes.size() - c.pos()) != payload_hash)
    throw CheckpointCorruptError("payload_hash", "payload checksum mismatch");
  return a;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::ios_base::failure("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::ios_base::failure("cannot write " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::ios_base::failure("cannot move " + tmp + " to " + path);
}

ArchiveFile snapshot_session(const RunConfig& cfg, const DaggerSession& session) {
  const auto& s = session.state();
  Builder b;
  b.f64("session.progress", {s.setup_done ? 1.0 : 0.0, static_cast<double>(s.offline_done), s.transitioned ? 1.0 : 0.0,
                             static_cast<double>(s.online_done), static_cast<double>(s.last_eval + 1),
                             s.gate_threshold, s.reparam_time_s});
  for (const auto& [name, rng] : {std::pair{"rng.train", &s.train_rng}, std::pair{"rng.adapter", &s.adapter_rng},
                                  std::pair{"rng.rollout", &s.rollout_rng}}) {
    auto v = split64(rng->key());
    const auto c = split64(rng->counter());
    v.insert(v.end(), c.begin(), c.end());
    b.f64(name, v);
  }
  const auto& env = session.env();
  if (s.setup_done) {
    put_dataset(b, "data.offline", s.offline_data, 0, env.obs_dim(), env.action_dim());
    if (s.transitioned)
      put_dataset(b, "data.online", s.data, s.offline_data.trajectories.size(), env.obs_dim(), env.action_dim());
    put_learner(b, *s.learner);
  }
  put_logs(b, s);
  ArchiveFile a;
  a.config = canonical_config(cfg);
  a.entries = b.take();
  return a;
}

LoadedSession restore_session(const ArchiveFile& archive) {
  LoadedSession out;
  try {
    out.config = parse_config(archive.config, {}, "checkpoint config", false);
  } catch (const ConfigError& e) {
    throw CheckpointCorruptError("config", e.what());
  }
  if (canonical_config(out.config) != archive.config)
    throw CheckpointCorruptError("config", "not in resolved canonical form");
  out.session = std::make_unique<DaggerSession>(out.config.session);
  auto& session = *out.session;
  auto& s = session.state();
  const Source src(archive);

  const auto p = src.f64("session.progress", std::vector<std::uint64_t>{7});
  if (p[0] != 0.0 && p[0] != 1.0) throw CheckpointCorruptError("session.progress", "bad setup flag");
  if (p[2] != 0.0 && p[2] != 1.0) throw CheckpointCorruptError("session.progress", "bad transition flag");
  s.setup_done = p[0] == 1.0;
  s.offline_done = static_cast<int>(as_index(p[1], "session.progress"));
  s.transitioned = p[2] == 1.0;
  s.online_done = static_cast<int>(as_index(p[3], "session.progress"));
  s.last_eval = static_cast<int>(as_index(p[4], "session.progress")) - 1;
  s.gate_threshold = p[5];
  s.reparam_time_s = p[6];
  const auto& cfg = session.config();
  if (s.offline_done > cfg.offline_epochs || s.online_done > cfg.online_iterations ||
      (s.online_done > 0 && !s.transitioned) || (s.transitioned && !s.setup_done))
    throw CheckpointCorruptError("session.progress", "counters inconsistent with the configuration");

  for (const auto& [name, rng] : {std::pair{"rng.train", &s.train_rng}, std::pair{"rng.adapter", &s.adapter_rng},
                                  std::pair{"rng.rollout", &s.rollout_rng}}) {
    const auto v = src.f64(name, std::vector<std::uint64_t>{4});
    *rng = num::Rng(join64(v[0], v[1], name), join64(v[2], v[3], name));
  }
  const auto& env = session.env();
  if (s.setup_done) {
    get_dataset(src, "data.offline", s.offline_data, env.obs_dim(), env.action_dim());
    if (s.transitioned) {
      s.data = s.offline_data;
      get_dataset(src, "data.online", s.data, env.obs_dim(), env.action_dim());
    }
    s.learner = session.make_learner();
    get_learner(src, *s.learner);
  }
  get_logs(src, s);
  return out;
}

void save_checkpoint(const std::string& path, const RunConfig& cfg, const DaggerSession& session) {
  write_file(path, snapshot_session(cfg, session).serialize());
}

LoadedSession load_checkpoint(const std::string& path) { return restore_session(ArchiveFile::parse(read_file(path))); }

nlohmann::json inspect_checkpoint(const std::string& path) {
  const auto bytes = read_file(path);
  const ArchiveFile a = ArchiveFile::parse(bytes);
  nlohmann::json j;
  j["path"] = path;
  j["version"] = a.version;
  j["bytes"] = bytes.size();
  try {
    j["config"] = nlohmann::json::parse(a.config);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointCorruptError("config", e.what());
  }
  j["config_hash"] = config_hash(a.config);
  auto& manifest = j["entries"] = nlohmann::json::array();
  for (const auto& e : a.entries)
    manifest.push_back({{"name", e.name},
                        {"dtype", e.dtype == DType::kF32 ? "f32" : "f64"},
                        {"shape", e.shape},
                        {"nbytes", e.bytes.size()}});
  const Source src(a);
  const auto p = src.f64("session.progress", std::vector<std::uint64_t>{7});
  j["progress"] = {{"setup_done", p[0] == 1.0},
                   {"offline_epochs_done", static_cast<long long>(p[1])},
                   {"transitioned", p[2] == 1.0},
                   {"online_iterations_done", static_cast<long long>(p[3])},
                   {"gate_threshold", p[5]}};
  if (a.find("net.blocks")) {
    const auto& e = src.entry("net.blocks");
    const auto v = src.f64("net.blocks");
    auto& blocks = j["blocks"] = nlohmann::json::array();
    for (std::size_t i = 0; e.shape.size() == 2 && i < e.shape[0]; ++i) {
      const int mode = static_cast<int>(v[i * 3]);
      blocks.push_back({{"mode", mode >= 0 && mode <= 2 ? diffusion::to_string(static_cast<BlockMode>(mode)) : "?"},
                        {"rank", static_cast<long long>(v[i * 3 + 1])}});
    }
  }
  return j;
}

}  // namespace drift::runner
