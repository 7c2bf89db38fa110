#include "mmlg/checkpoint.hpp"

#include <cstring>

namespace mmlg {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'L', 'G'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_string(std::string& out, const std::string& s) {
  put_u32(out, std::uint32_t(s.size()));
  out += s;
}

void put_tensor(std::string& out, const std::string& name, const Tensor<float>& t) {
  put_string(out, name);
  put_u32(out, std::uint32_t(t.rank()));
  for (std::size_t d : t.shape()) put_u64(out, d);
  for (float v : t.values()) put_f32(out, v);
}

struct Reader {
  const std::string& data;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > data.size()) {
      throw CheckpointError(CheckpointError::Kind::truncated,
                            "checkpoint truncated at byte " + std::to_string(pos));
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(data[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(data[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
  std::pair<std::string, Tensor<float>> tensor() {
    std::string name = str();
    std::uint32_t rank = u32();
    std::vector<std::size_t> shape;
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(std::size_t(u64()));
      numel *= shape.back();
    }
    std::vector<float> values(numel);
    for (auto& v : values) v = f32();
    return {std::move(name), Tensor<float>::from(std::move(shape), std::move(values))};
  }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, ckpt.version);
  put_string(out, ckpt.config_text);
  out.append(reinterpret_cast<const char*>(ckpt.vocab_hash.data()), ckpt.vocab_hash.size());

  put_u32(out, std::uint32_t(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) put_tensor(out, name, t);

  const OptimizerState& opt = ckpt.optimizer;
  put_u64(out, opt.step);
  put_u64(out, opt.nonfinite);
  put_f32(out, opt.lr);
  put_u64(out, opt.warmup_steps);
  put_u32(out, std::uint32_t(opt.slots.size()));
  for (const auto& slot : opt.slots) {
    put_tensor(out, "m:" + slot.name, slot.m);
    put_tensor(out, "v:" + slot.name, slot.v);
  }
  put_u64(out, ckpt.step_counter);

  atomic_write(path, out);
  std::filesystem::path metrics = path;
  metrics += ".metrics.csv";
  atomic_write(metrics, ckpt.metric_history_csv);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  Reader r{data};

  r.need(4);
  if (std::memcmp(data.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::magic,
                          path.string() + " is not a checkpoint (bad magic)");
  }
  r.pos = 4;

  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != Checkpoint::kVersion) {
    throw CheckpointError(CheckpointError::Kind::version,
                          "checkpoint version " + std::to_string(ckpt.version) +
                              " unsupported (expected " + std::to_string(Checkpoint::kVersion) + ")");
  }
  ckpt.config_text = r.str();
  r.need(ckpt.vocab_hash.size());
  std::memcpy(ckpt.vocab_hash.data(), data.data() + r.pos, ckpt.vocab_hash.size());
  r.pos += ckpt.vocab_hash.size();

  const std::uint32_t n_params = r.u32();
  for (std::uint32_t i = 0; i < n_params; ++i) ckpt.params.push_back(r.tensor());

  ckpt.optimizer.step = r.u64();
  ckpt.optimizer.nonfinite = r.u64();
  ckpt.optimizer.lr = r.f32();
  ckpt.optimizer.warmup_steps = r.u64();
  const std::uint32_t n_slots = r.u32();
  for (std::uint32_t i = 0; i < n_slots; ++i) {
    auto m = r.tensor();
    auto v = r.tensor();
    if (m.first.rfind("m:", 0) != 0 || v.first.rfind("v:", 0) != 0 ||
        m.first.substr(2) != v.first.substr(2)) {
      throw CheckpointError(CheckpointError::Kind::truncated,
                            "optimizer table entries out of order at slot " + std::to_string(i));
    }
    ckpt.optimizer.slots.push_back({m.first.substr(2), std::move(m.second), std::move(v.second)});
  }
  ckpt.step_counter = r.u64();
  if (r.pos != data.size()) {
    throw CheckpointError(CheckpointError::Kind::truncated,
                          "trailing bytes after checkpoint payload");
  }

  std::filesystem::path metrics = path;
  metrics += ".metrics.csv";
  if (std::filesystem::exists(metrics)) ckpt.metric_history_csv = read_file(metrics);
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const Sha256Digest& expected_vocab) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.vocab_hash != expected_vocab) {
    throw CheckpointError(CheckpointError::Kind::hash,
                          "checkpoint was written against a different vocabulary (hash " +
                              to_hex(ckpt.vocab_hash) + ", expected " + to_hex(expected_vocab) + ")");
  }
  return ckpt;
}

Checkpoint make_checkpoint(const Model<float>& model, const OptimizerState& opt,
                           std::uint64_t step_counter, const std::string& config_text,
                           const Sha256Digest& vocab_hash, const std::string& metric_history_csv) {
  Checkpoint ckpt;
  ckpt.config_text = config_text;
  ckpt.vocab_hash = vocab_hash;
  for (const auto& [name, t] : model.params().named()) {
    ckpt.params.emplace_back(name, Tensor<float>::from(t.shape(), t.values()));
  }
  ckpt.optimizer.step = opt.step;
  ckpt.optimizer.nonfinite = opt.nonfinite;
  ckpt.optimizer.lr = opt.lr;
  ckpt.optimizer.warmup_steps = opt.warmup_steps;
  for (const auto& slot : opt.slots) {
    ckpt.optimizer.slots.push_back({slot.name, Tensor<float>::from(slot.m.shape(), slot.m.values()),
                                    Tensor<float>::from(slot.v.shape(), slot.v.values())});
  }
  ckpt.step_counter = step_counter;
  ckpt.metric_history_csv = metric_history_csv;
  return ckpt;
}

void apply_checkpoint(Model<float>& model, const Checkpoint& ckpt) {
  auto named = model.params().named();
  if (named.size() != ckpt.params.size()) {
    throw DataError("checkpoint has " + std::to_string(ckpt.params.size()) +
                    " parameters, model expects " + std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].first != ckpt.params[i].first ||
        named[i].second.shape() != ckpt.params[i].second.shape()) {
      throw DataError("checkpoint parameter mismatch at '" + ckpt.params[i].first + "'");
    }
    named[i].second.values() = ckpt.params[i].second.values();
    named[i].second.zero_grad();
  }
}

}  // namespace mmlg
