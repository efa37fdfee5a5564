#include "conure/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "conure/config.hpp"
#include "conure/errors.hpp"

namespace conure {

namespace {

constexpr char kMagic[8] = {'C', 'N', 'R', 'C', 'K', 'P', 'T', '\n'};

// section tags, in file order
enum Tag : std::uint32_t {
  kConfig = 1,
  kMeta = 2,
  kRegistry = 3,
  kTensors = 4,
  kOwnership = 5,
  kAdam = 6,
  kRngState = 7,
  kPending = 8,
};

std::uint64_t fnv1a(const std::string& bytes, std::size_t count) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < count; ++i) {
    h ^= static_cast<unsigned char>(bytes[i]);
    h *= 1099511628211ull;
  }
  return h;
}

// explicit little-endian composition keeps the format host-independent
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i32(std::string& out, std::int32_t v) { put_u32(out, static_cast<std::uint32_t>(v)); }
void put_i64(std::string& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }

void put_i16(std::string& out, std::int16_t v) {
  const auto u = static_cast<std::uint16_t>(v);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

void put_str(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out.append(s);
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t begin, std::size_t end)
      : bytes_(bytes), pos_(begin), end_(end) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == end_; }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }

  std::int16_t i16() {
    need(2);
    const auto lo = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes_[pos_]));
    const auto hi = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes_[pos_ + 1]));
    pos_ += 2;
    return static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
  }

  double f64() {
    const std::uint64_t bits = u64();
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::uint64_t n) {
    if (pos_ + n > end_) throw CheckpointError("truncated checkpoint section");
  }

  const std::string& bytes_;
  std::size_t pos_;
  std::size_t end_;
};

void put_section(std::string& out, Tag tag, const std::string& payload) {
  put_u32(out, tag);
  put_u64(out, payload.size());
  out.append(payload);
}

std::string encode_tensors(const Model& model) {
  std::string s;
  std::uint32_t count = 0;
  for_each_tensor(model, [&](const std::string&, const Tensor&) { ++count; });
  put_u32(s, count);
  for_each_tensor(model, [&](const std::string& name, const Tensor& t) {
    put_str(s, name);
    put_u32(s, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_i64(s, d);
    for (double v : t.data) put_f64(s, v);
  });
  return s;
}

std::string encode_ownership(const OwnershipMap& ownership) {
  std::string s;
  put_u32(s, static_cast<std::uint32_t>(ownership.tensor_names().size()));
  for (const std::string& name : ownership.tensor_names()) {
    const std::vector<std::int16_t>& owners = ownership.owners(name);
    put_str(s, name);
    put_u64(s, owners.size());
    // run-length pairs
    std::string runs;
    std::uint64_t n_runs = 0;
    std::size_t i = 0;
    while (i < owners.size()) {
      std::size_t j = i;
      while (j < owners.size() && owners[j] == owners[i]) ++j;
      put_u64(runs, j - i);
      put_i16(runs, owners[i]);
      ++n_runs;
      i = j;
    }
    put_u64(s, n_runs);
    s.append(runs);
  }
  return s;
}

std::string encode_registry(const TaskRegistry& registry) {
  std::string s;
  put_u32(s, static_cast<std::uint32_t>(registry.tasks().size()));
  for (const TaskDescriptor& t : registry.tasks()) {
    put_i32(s, t.id);
    put_u32(s, static_cast<std::uint32_t>(t.kind));
    put_i32(s, t.label_count);
    put_f64(s, t.prune_ratio);
    put_u32(s, static_cast<std::uint32_t>(t.state));
    put_f64(s, t.best_val);
    put_f64(s, t.preprune_val);
  }
  return s;
}

std::string encode_adam(const AdamState& adam) {
  std::string s;
  put_u64(s, static_cast<std::uint64_t>(adam.step));
  put_u32(s, static_cast<std::uint32_t>(adam.slots.size()));
  for (const auto& [name, slot] : adam.slots) {
    put_str(s, name);
    put_u32(s, static_cast<std::uint32_t>(slot.m.shape.size()));
    for (int d : slot.m.shape) put_i64(s, d);
    for (double v : slot.m.data) put_f64(s, v);
    for (double v : slot.v.data) put_f64(s, v);
  }
  return s;
}

std::string encode_pending(const PruneDecision& pending) {
  std::string s;
  put_u32(s, static_cast<std::uint32_t>(pending.tensors.size()));
  for (const PruneDecision::TensorDecision& td : pending.tensors) {
    put_str(s, td.name);
    put_f64(s, td.threshold);
    put_i64(s, td.candidates);
    put_u64(s, td.freed.size());
    for (std::int64_t idx : td.freed) put_i64(s, idx);
  }
  return s;
}

TaskKind kind_from_u32(std::uint32_t v) {
  switch (v) {
    case 0: return TaskKind::autoregressive;
    case 1: return TaskKind::ranking;
    case 2: return TaskKind::classification;
    default: throw CheckpointError("bad task kind " + std::to_string(v));
  }
}

TaskState state_from_u32(std::uint32_t v) {
  switch (v) {
    case 0: return TaskState::training;
    case 1: return TaskState::pruned;
    case 2: return TaskState::retraining;
    case 3: return TaskState::committed;
    default: throw CheckpointError("bad task state " + std::to_string(v));
  }
}

}  // namespace

void save_checkpoint(const Run& run, const std::string& path) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kCheckpointVersion);

  put_section(out, kConfig, serialize_config(run.config));

  std::string meta;
  put_i32(meta, run.model.shape.vocab);
  put_section(out, kMeta, meta);

  put_section(out, kRegistry, encode_registry(run.registry));
  put_section(out, kTensors, encode_tensors(run.model));
  put_section(out, kOwnership, encode_ownership(run.ownership));
  put_section(out, kAdam, encode_adam(run.adam));
  put_section(out, kRngState, run.rng.serialize());
  put_section(out, kPending, encode_pending(run.pending_prune));

  put_u64(out, fnv1a(out, out.size()));

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw CheckpointError("cannot write checkpoint '" + path + "'");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw CheckpointError("short write to checkpoint '" + path + "'");
}

Run load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof(kMagic) + 4 + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("'" + path + "' is not a checkpoint");
  }
  Reader head(bytes, sizeof(kMagic), bytes.size());
  const std::uint32_t version = head.u32();
  if (version > kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) +
                          " is newer than supported version " +
                          std::to_string(kCheckpointVersion));
  }
  const std::uint64_t stored_hash =
      Reader(bytes, bytes.size() - 8, bytes.size()).u64();
  if (fnv1a(bytes, bytes.size() - 8) != stored_hash) {
    throw CheckpointError("checkpoint '" + path + "' failed its content hash");
  }

  // section directory
  const std::size_t body_end = bytes.size() - 8;
  std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> sections;
  for (std::size_t pos = head.pos(); pos < body_end;) {
    Reader scan(bytes, pos, body_end);
    const std::uint32_t tag = scan.u32();
    const std::uint64_t len = scan.u64();
    const std::size_t begin = scan.pos();
    if (begin + len > body_end) throw CheckpointError("truncated checkpoint section");
    sections[tag] = {begin, begin + static_cast<std::size_t>(len)};
    pos = begin + static_cast<std::size_t>(len);
  }
  auto section = [&](Tag tag) {
    auto it = sections.find(tag);
    if (it == sections.end()) {
      throw CheckpointError("checkpoint is missing section " + std::to_string(tag));
    }
    return Reader(bytes, it->second.first, it->second.second);
  };
  auto section_text = [&](Tag tag) {
    auto it = sections.find(tag);
    if (it == sections.end()) {
      throw CheckpointError("checkpoint is missing section " + std::to_string(tag));
    }
    return bytes.substr(it->second.first, it->second.second - it->second.first);
  };

  Run run;
  run.config = parse_config_text(section_text(kConfig));

  int vocab = 0;
  {
    Reader r = section(kMeta);
    vocab = r.i32();
  }

  {
    Reader r = section(kRegistry);
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      const int id = r.i32();
      const TaskKind kind = kind_from_u32(r.u32());
      const int label_count = r.i32();
      const double ratio = r.f64();
      const TaskState state = state_from_u32(r.u32());
      const double best_val = r.f64();
      const double preprune_val = r.f64();
      run.registry.add_task(id, kind, label_count, ratio);
      TaskDescriptor& task = run.registry.at(id);
      task.state = state;
      task.best_val = best_val;
      task.preprune_val = preprune_val;
    }
  }

  // skeleton with the right structure; every tensor is then overwritten
  Rng scratch(0);
  BackboneShape shape;
  shape.kind = run.config.backbone;
  shape.vocab = vocab;
  shape.hidden = run.config.hidden;
  shape.window = run.config.window;
  shape.kernel_width = run.config.kernel_width;
  shape.dilation_schedule = run.config.dilation_schedule;
  shape.attention_blocks = run.config.attention_blocks;
  run.model = init_model(shape, run.config.mode, scratch, run.config.embedding_prune);
  for (const TaskDescriptor& task : run.registry.tasks()) {
    add_task_params(run.model, run.registry, task.id, task.label_count, scratch);
  }

  {
    Reader r = section(kTensors);
    const std::uint32_t count = r.u32();
    std::uint32_t expected = 0;
    for_each_tensor(run.model, [&](const std::string&, const Tensor&) { ++expected; });
    if (count != expected) {
      throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                            std::to_string(expected));
    }
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::string name = r.str();
      const std::uint32_t rank = r.u32();
      std::vector<int> dims;
      for (std::uint32_t d = 0; d < rank; ++d) dims.push_back(static_cast<int>(r.i64()));
      Tensor* target = nullptr;
      try {
        target = &tensor_by_name(run.model, name);
      } catch (const RegistryError&) {
        throw CheckpointError("checkpoint tensor '" + name + "' has no home in the model");
      }
      if (target->shape != dims) {
        throw CheckpointError("checkpoint tensor '" + name + "' shape mismatch");
      }
      for (double& v : target->data) v = r.f64();
    }
  }

  {
    Reader r = section(kOwnership);
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::string name = r.str();
      const std::uint64_t cells = r.u64();
      run.ownership.register_tensor(name, static_cast<std::int64_t>(cells));
      const std::uint64_t n_runs = r.u64();
      std::int64_t at = 0;
      std::map<std::int16_t, std::vector<std::int64_t>> by_owner;
      for (std::uint64_t k = 0; k < n_runs; ++k) {
        const std::uint64_t len = r.u64();
        const std::int16_t owner = r.i16();
        for (std::uint64_t j = 0; j < len; ++j) {
          if (owner != OwnershipMap::kFree) by_owner[owner].push_back(at);
          ++at;
        }
      }
      if (at != static_cast<std::int64_t>(cells)) {
        throw CheckpointError("ownership runs for '" + name + "' cover " + std::to_string(at) +
                              " of " + std::to_string(cells) + " cells");
      }
      for (const auto& [owner, indices] : by_owner) {
        run.ownership.assign(name, indices, owner);
      }
    }
  }

  {
    Reader r = section(kAdam);
    run.adam.step = static_cast<std::int64_t>(r.u64());
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::string name = r.str();
      const std::uint32_t rank = r.u32();
      std::vector<int> dims;
      for (std::uint32_t d = 0; d < rank; ++d) dims.push_back(static_cast<int>(r.i64()));
      AdamSlot& slot = run.adam.slot(name, dims);
      for (double& v : slot.m.data) v = r.f64();
      for (double& v : slot.v.data) v = r.f64();
    }
  }

  run.rng.restore(section_text(kRngState));

  {
    Reader r = section(kPending);
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      PruneDecision::TensorDecision td;
      td.name = r.str();
      td.threshold = r.f64();
      td.candidates = r.i64();
      const std::uint64_t n = r.u64();
      for (std::uint64_t k = 0; k < n; ++k) td.freed.push_back(r.i64());
      run.pending_prune.tensors.push_back(std::move(td));
    }
  }

  return run;
}

}  // namespace conure
