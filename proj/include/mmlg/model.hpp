#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mmlg/blocks.hpp"
#include "mmlg/tokens.hpp"

namespace mmlg {

struct TaskRegistryError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Configuration and presets.
// ---------------------------------------------------------------------------

struct MoEConfig {
  std::size_t experts = 4;
  std::size_t top_k = 2;
  float noise_scale = 1.0f;
  float balance_coef = 0.01f;  // 0 disables the balance penalty
};

struct ModelConfig {
  std::string preset_name = "MM-desk";
  std::size_t hidden = 64;
  std::size_t filter = 128;
  std::size_t vocab = 512;
  std::size_t encoder_blocks = 2;
  std::size_t decoder_blocks = 2;
  std::size_t mixer_conv_blocks = 2;
  std::size_t mixer_attention_blocks = 1;
  std::size_t heads = 4;
  std::size_t conv_kernel = 3;
  std::vector<std::size_t> dilations = {1, 1, 2};
  MoEConfig moe;
  bool tie_embeddings = false;

  static ModelConfig preset(const std::string& name);
  void validate() const;
};

inline ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig c;
  c.preset_name = name;
  if (name == "MM-B") {
    c.hidden = 512;
    c.filter = 2048;
    c.encoder_blocks = 6;
    c.decoder_blocks = 4;
    c.heads = 8;
    c.moe = {4, 2, 1.0f, 0.01f};
    c.vocab = 32000;
  } else if (name == "MM-L") {
    // same widths as MM-B at half the depth
    c.hidden = 512;
    c.filter = 2048;
    c.encoder_blocks = 3;
    c.decoder_blocks = 2;
    c.heads = 8;
    c.moe = {4, 2, 1.0f, 0.01f};
    c.vocab = 32000;
  } else if (name == "MM-desk") {
    c.hidden = 64;
    c.filter = 128;
    c.encoder_blocks = 2;
    c.decoder_blocks = 2;
    c.heads = 4;
    c.moe = {2, 1, 1.0f, 0.01f};
    c.vocab = 512;
  } else if (name == "MM-tiny") {
    // deliberately undersized, for capacity experiments
    c.hidden = 16;
    c.filter = 32;
    c.encoder_blocks = 2;
    c.decoder_blocks = 2;
    c.heads = 2;
    c.moe = {2, 1, 1.0f, 0.01f};
    c.vocab = 512;
  } else {
    throw ConfigError("unknown model preset '" + name + "' (valid: MM-B, MM-L, MM-desk, MM-tiny)");
  }
  return c;
}

inline void ModelConfig::validate() const {
  if (hidden == 0 || hidden % 2 != 0) throw ConfigError("hidden size must be a positive even number");
  if (heads == 0 || hidden % heads != 0) throw ConfigError("head count must divide hidden size");
  if (vocab <= kReservedIds) {
    throw ConfigError("vocab size must exceed the reserved block of " + std::to_string(kReservedIds));
  }
  if (encoder_blocks == 0 || decoder_blocks == 0) throw ConfigError("need at least one block per stack");
  if (conv_kernel % 2 == 0) throw ConfigError("conv kernel size must be odd");
  if (dilations.empty()) throw ConfigError("dilation schedule must be non-empty");
  if (moe.experts == 0 || moe.top_k == 0 || moe.top_k > moe.experts) {
    throw ConfigError("moe config must satisfy E >= top_k >= 1");
  }
}

// Exact trainable-scalar count, by closed form (the test compares it against
// an enumeration of the allocated parameter tensors).
inline std::size_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.hidden, f = cfg.filter, v = cfg.vocab, k = cfg.conv_kernel;
  const std::size_t conv_block = cfg.dilations.size() * (k * d * d + 2 * d);
  const std::size_t attn = 4 * d * d;
  const std::size_t moe = d * cfg.moe.experts + cfg.moe.experts * 2 * d * f;
  std::size_t n = v * d;                       // input embedding
  if (!cfg.tie_embeddings) n += d * v;         // output projection
  n += cfg.encoder_blocks * conv_block + moe;  // encoder stack
  n += cfg.mixer_conv_blocks * conv_block + cfg.mixer_attention_blocks * attn;
  n += cfg.decoder_blocks * (conv_block + attn) + moe;
  return n;
}

// ---------------------------------------------------------------------------
// Task tokens: one reserved vocabulary id per trainable problem.
// ---------------------------------------------------------------------------

struct TaskToken {
  std::size_t task_index = 0;
  TokenId token = kTaskTokenBase;
};

class TaskTokenRegistry {
 public:
  TaskToken add(const std::string& name) {
    return add(name, kTaskTokenBase + TokenId(by_name_.size()));
  }

  TaskToken add(const std::string& name, TokenId token) {
    if (!is_task_token(token)) {
      throw TaskRegistryError("token id " + std::to_string(token) +
                              " is outside the reserved task-token range");
    }
    if (by_name_.count(name)) throw TaskRegistryError("duplicate task name '" + name + "'");
    for (const auto& [n, t] : by_name_) {
      if (t.token == token) {
        throw TaskRegistryError("token id " + std::to_string(token) + " already assigned to task '" +
                                n + "'");
      }
    }
    TaskToken tok{by_name_.size(), token};
    by_name_.emplace(name, tok);
    return tok;
  }

  const TaskToken& get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw TaskRegistryError("unknown task '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return by_name_.count(name) > 0; }
  std::size_t size() const { return by_name_.size(); }

 private:
  std::map<std::string, TaskToken> by_name_;
};

// ---------------------------------------------------------------------------
// Parameters.
// ---------------------------------------------------------------------------

template <class Real>
struct ModelParams {
  Tensor<Real> embedding;  // [V,d]
  Tensor<Real> out_proj;   // [d,V]; undefined when tied
  std::vector<ConvBlockParams<Real>> encoder_conv;
  MoEParams<Real> encoder_moe;
  std::vector<ConvBlockParams<Real>> mixer_conv;
  std::vector<AttentionParams<Real>> mixer_attn;
  struct DecoderBlock {
    ConvBlockParams<Real> conv;
    AttentionParams<Real> attn;
  };
  std::vector<DecoderBlock> decoder;
  MoEParams<Real> decoder_moe;

  // Stable enumeration of every trainable tensor (optimizer + checkpoints).
  std::vector<std::pair<std::string, Tensor<Real>>> named() const;
};

template <class Real>
struct EncoderState {
  Tensor<Real> repr;                // [src_len, d]
  std::vector<std::uint8_t> mask;   // 1 where the source token is not padding
};

template <class Real>
struct ForwardOut {
  Tensor<Real> logits;       // [tgt_len, V]
  Tensor<Real> moe_penalty;  // scalar squared-CV load balance term (undefined when coef == 0)
};

struct LabelDecode {
  std::set<int> labels;        // class indices
  std::size_t skipped = 0;     // decoded tokens outside the label segment
};

// ---------------------------------------------------------------------------
// Model: language modality in/out, encoder (conv stack + MoE mid-stack),
// I/O mixer (causal conv + attention into the encoder), decoder (causal
// conv-attention blocks + MoE mid-stack), output projection.
// ---------------------------------------------------------------------------

template <class Real>
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ModelParams<Real>& params() { return params_; }
  const ModelParams<Real>& params() const { return params_; }

  EncoderState<Real> encode(const TokenIds& src_ids) const;
  Tensor<Real> io_mix(const EncoderState<Real>& enc, const Tensor<Real>& dec_prefix) const;

  // Teacher forcing: decoder input is [task token] ++ tgt_ids[..-1].
  Tensor<Real> forward_train(const TokenIds& src_ids, const TokenIds& tgt_ids,
                             const TaskToken& task) const;
  ForwardOut<Real> forward_train_full(const TokenIds& src_ids, const TokenIds& tgt_ids,
                                      const TaskToken& task, Rng* noise_rng = nullptr) const;

  TokenIds greedy_decode(const TokenIds& src_ids, const TaskToken& task, std::size_t max_len) const;
  LabelDecode decode_labels(const TokenIds& src_ids, const TaskToken& task,
                            std::size_t max_labels = 7) const;

 private:
  struct EncodeFull {
    EncoderState<Real> state;
    Tensor<Real> load;  // encoder MoE load, defined when tracking the penalty
  };
  EncodeFull encode_full(const TokenIds& src_ids, Rng* noise_rng, bool want_load) const;
  Tensor<Real> decoder_logits(const EncoderState<Real>& enc, const TokenIds& dec_in, Rng* noise_rng,
                              Tensor<Real>* load_out) const;
  Tensor<Real> output_logits(const Tensor<Real>& h) const;
  void check_task(const TaskToken& task) const;

  ModelConfig cfg_;
  ModelParams<Real> params_;
};

}  // namespace mmlg

#include "mmlg/model_impl.hpp"
