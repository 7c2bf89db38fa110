#pragma once

#include <cmath>

namespace mmlg {

namespace detail {

template <class Real>
Tensor<Real> glorot(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out,
                    Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  Tensor<Real> t = Tensor<Real>::zeros(std::move(shape));
  for (auto& v : t.values()) v = Real(rng.uniform(-limit, limit));
  t.set_requires_grad(true);
  return t;
}

template <class Real>
ConvBlockParams<Real> init_conv_block(const ModelConfig& cfg, bool causal, Rng& rng) {
  ConvBlockParams<Real> p;
  p.dilations = cfg.dilations;
  p.causal = causal;
  p.residual = true;
  for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
    typename ConvBlockParams<Real>::Sublayer s;
    s.kernel = glorot<Real>({cfg.conv_kernel, cfg.hidden, cfg.hidden},
                            cfg.conv_kernel * cfg.hidden, cfg.hidden, rng);
    s.ln_gain = Tensor<Real>::full({cfg.hidden}, Real(1)).set_requires_grad(true);
    s.ln_bias = Tensor<Real>::zeros({cfg.hidden}).set_requires_grad(true);
    p.sublayers.push_back(std::move(s));
  }
  return p;
}

template <class Real>
AttentionParams<Real> init_attention(const ModelConfig& cfg, bool causal, Rng& rng) {
  AttentionParams<Real> p;
  p.wq = glorot<Real>({cfg.hidden, cfg.hidden}, cfg.hidden, cfg.hidden, rng);
  p.wk = glorot<Real>({cfg.hidden, cfg.hidden}, cfg.hidden, cfg.hidden, rng);
  p.wv = glorot<Real>({cfg.hidden, cfg.hidden}, cfg.hidden, cfg.hidden, rng);
  p.wo = glorot<Real>({cfg.hidden, cfg.hidden}, cfg.hidden, cfg.hidden, rng);
  p.heads = cfg.heads;
  p.causal = causal;
  return p;
}

template <class Real>
MoEParams<Real> init_moe(const ModelConfig& cfg, Rng& rng) {
  MoEParams<Real> p;
  for (std::size_t e = 0; e < cfg.moe.experts; ++e) {
    typename MoEParams<Real>::Expert ex;
    ex.w1 = glorot<Real>({cfg.hidden, cfg.filter}, cfg.hidden, cfg.filter, rng);
    ex.w2 = glorot<Real>({cfg.filter, cfg.hidden}, cfg.filter, cfg.hidden, rng);
    p.experts.push_back(std::move(ex));
  }
  p.gate = glorot<Real>({cfg.hidden, cfg.moe.experts}, cfg.hidden, cfg.moe.experts, rng);
  p.top_k = cfg.moe.top_k;
  p.noise_scale = Real(cfg.moe.noise_scale);
  return p;
}

template <class Real>
void collect_conv_block(const std::string& prefix, const ConvBlockParams<Real>& p,
                        std::vector<std::pair<std::string, Tensor<Real>>>& out) {
  for (std::size_t i = 0; i < p.sublayers.size(); ++i) {
    const std::string base = prefix + ".c" + std::to_string(i);
    out.emplace_back(base + ".kernel", p.sublayers[i].kernel);
    out.emplace_back(base + ".ln_gain", p.sublayers[i].ln_gain);
    out.emplace_back(base + ".ln_bias", p.sublayers[i].ln_bias);
  }
}

template <class Real>
void collect_attention(const std::string& prefix, const AttentionParams<Real>& p,
                       std::vector<std::pair<std::string, Tensor<Real>>>& out) {
  out.emplace_back(prefix + ".wq", p.wq);
  out.emplace_back(prefix + ".wk", p.wk);
  out.emplace_back(prefix + ".wv", p.wv);
  out.emplace_back(prefix + ".wo", p.wo);
}

template <class Real>
void collect_moe(const std::string& prefix, const MoEParams<Real>& p,
                 std::vector<std::pair<std::string, Tensor<Real>>>& out) {
  out.emplace_back(prefix + ".gate", p.gate);
  for (std::size_t e = 0; e < p.experts.size(); ++e) {
    out.emplace_back(prefix + ".e" + std::to_string(e) + ".w1", p.experts[e].w1);
    out.emplace_back(prefix + ".e" + std::to_string(e) + ".w2", p.experts[e].w2);
  }
}

}  // namespace detail

template <class Real>
std::vector<std::pair<std::string, Tensor<Real>>> ModelParams<Real>::named() const {
  std::vector<std::pair<std::string, Tensor<Real>>> out;
  out.emplace_back("embedding", embedding);
  if (out_proj.defined()) out.emplace_back("out_proj", out_proj);
  for (std::size_t i = 0; i < encoder_conv.size(); ++i)
    detail::collect_conv_block("enc.b" + std::to_string(i), encoder_conv[i], out);
  detail::collect_moe("enc.moe", encoder_moe, out);
  for (std::size_t i = 0; i < mixer_conv.size(); ++i)
    detail::collect_conv_block("mix.b" + std::to_string(i), mixer_conv[i], out);
  for (std::size_t i = 0; i < mixer_attn.size(); ++i)
    detail::collect_attention("mix.a" + std::to_string(i), mixer_attn[i], out);
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    detail::collect_conv_block("dec.b" + std::to_string(i) + ".conv", decoder[i].conv, out);
    detail::collect_attention("dec.b" + std::to_string(i) + ".attn", decoder[i].attn, out);
  }
  detail::collect_moe("dec.moe", decoder_moe, out);
  return out;
}

template <class Real>
Model<Real>::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(mix_seed(seed, 0x6d6f64656cull));
  params_.embedding = Tensor<Real>::zeros({cfg_.vocab, cfg_.hidden});
  for (auto& v : params_.embedding.values()) v = Real(rng.uniform(-0.08, 0.08));
  params_.embedding.set_requires_grad(true);
  if (!cfg_.tie_embeddings) {
    params_.out_proj = detail::glorot<Real>({cfg_.hidden, cfg_.vocab}, cfg_.hidden, cfg_.vocab, rng);
  }
  for (std::size_t i = 0; i < cfg_.encoder_blocks; ++i)
    params_.encoder_conv.push_back(detail::init_conv_block<Real>(cfg_, /*causal=*/false, rng));
  params_.encoder_moe = detail::init_moe<Real>(cfg_, rng);
  for (std::size_t i = 0; i < cfg_.mixer_conv_blocks; ++i)
    params_.mixer_conv.push_back(detail::init_conv_block<Real>(cfg_, /*causal=*/true, rng));
  for (std::size_t i = 0; i < cfg_.mixer_attention_blocks; ++i)
    params_.mixer_attn.push_back(detail::init_attention<Real>(cfg_, /*causal=*/false, rng));
  for (std::size_t i = 0; i < cfg_.decoder_blocks; ++i) {
    typename ModelParams<Real>::DecoderBlock b;
    b.conv = detail::init_conv_block<Real>(cfg_, /*causal=*/true, rng);
    b.attn = detail::init_attention<Real>(cfg_, /*causal=*/false, rng);
    params_.decoder.push_back(std::move(b));
  }
  params_.decoder_moe = detail::init_moe<Real>(cfg_, rng);
}

template <class Real>
void Model<Real>::check_task(const TaskToken& task) const {
  if (!is_task_token(task.token)) {
    throw TaskRegistryError("task token " + std::to_string(task.token) +
                            " is outside the reserved task-token range");
  }
}

template <class Real>
typename Model<Real>::EncodeFull Model<Real>::encode_full(const TokenIds& src_ids, Rng* noise_rng,
                                                          bool want_load) const {
  if (src_ids.empty()) throw DataError("encode: empty source sequence");
  std::vector<std::uint8_t> mask(src_ids.size());
  bool any = false;
  for (std::size_t i = 0; i < src_ids.size(); ++i) {
    mask[i] = src_ids[i] != kPadId;
    any = any || mask[i];
  }
  if (!any) throw DataError("encode: source is entirely padding");

  const std::size_t d = cfg_.hidden;
  Tensor<Real> h = add(embedding_lookup(params_.embedding, src_ids),
                       timing_signal<Real>(src_ids.size(), d));
  h = zero_rows(h, mask);
  const std::size_t moe_after = (cfg_.encoder_blocks + 1) / 2;
  Tensor<Real> load;
  for (std::size_t i = 0; i < cfg_.encoder_blocks; ++i) {
    h = conv_block(h, params_.encoder_conv[i], &mask);
    if (i + 1 == moe_after) {
      MoEOut<Real> m = moe(h, params_.encoder_moe, noise_rng != nullptr, noise_rng);
      h = zero_rows(m.output, mask);
      if (want_load) load = m.load;
    }
  }
  return {{h, std::move(mask)}, load};
}

template <class Real>
EncoderState<Real> Model<Real>::encode(const TokenIds& src_ids) const {
  return encode_full(src_ids, nullptr, false).state;
}

template <class Real>
Tensor<Real> Model<Real>::io_mix(const EncoderState<Real>& enc, const Tensor<Real>& dec_prefix) const {
  if (!enc.repr.defined() || enc.repr.dim(0) == 0) throw DataError("io_mix: empty encoder state");
  Tensor<Real> m = dec_prefix;
  for (const auto& block : params_.mixer_conv) m = conv_block(m, block);
  for (const auto& attn : params_.mixer_attn) m = add(m, attention(m, enc.repr, attn, &enc.mask));
  return m;
}

template <class Real>
Tensor<Real> Model<Real>::output_logits(const Tensor<Real>& h) const {
  if (cfg_.tie_embeddings) return matmul(h, transpose(params_.embedding));
  return matmul(h, params_.out_proj);
}

template <class Real>
Tensor<Real> Model<Real>::decoder_logits(const EncoderState<Real>& enc, const TokenIds& dec_in,
                                         Rng* noise_rng, Tensor<Real>* load_out) const {
  Tensor<Real> h = add(embedding_lookup(params_.embedding, dec_in),
                       timing_signal<Real>(dec_in.size(), cfg_.hidden));
  h = io_mix(enc, h);
  const std::size_t moe_after = (cfg_.decoder_blocks + 1) / 2;
  for (std::size_t i = 0; i < cfg_.decoder_blocks; ++i) {
    h = conv_block(h, params_.decoder[i].conv);
    h = add(h, attention(h, enc.repr, params_.decoder[i].attn, &enc.mask));
    if (i + 1 == moe_after) {
      MoEOut<Real> m = moe(h, params_.decoder_moe, noise_rng != nullptr, noise_rng);
      h = m.output;
      if (load_out) *load_out = m.load;
    }
  }
  return output_logits(h);
}

template <class Real>
ForwardOut<Real> Model<Real>::forward_train_full(const TokenIds& src_ids, const TokenIds& tgt_ids,
                                                 const TaskToken& task, Rng* noise_rng) const {
  check_task(task);
  if (tgt_ids.empty()) throw DataError("forward_train: empty target sequence");
  const bool want_penalty = cfg_.moe.balance_coef != 0.0f;

  EncodeFull enc = encode_full(src_ids, noise_rng, want_penalty);

  TokenIds dec_in;
  dec_in.reserve(tgt_ids.size());
  dec_in.push_back(task.token);
  dec_in.insert(dec_in.end(), tgt_ids.begin(), tgt_ids.end() - 1);

  ForwardOut<Real> out;
  Tensor<Real> dec_load;
  out.logits = decoder_logits(enc.state, dec_in, noise_rng, want_penalty ? &dec_load : nullptr);
  if (want_penalty) {
    out.moe_penalty = add(squared_cv(enc.load), squared_cv(dec_load));
  }
  return out;
}

template <class Real>
Tensor<Real> Model<Real>::forward_train(const TokenIds& src_ids, const TokenIds& tgt_ids,
                                        const TaskToken& task) const {
  return forward_train_full(src_ids, tgt_ids, task, nullptr).logits;
}

template <class Real>
TokenIds Model<Real>::greedy_decode(const TokenIds& src_ids, const TaskToken& task,
                                    std::size_t max_len) const {
  check_task(task);
  if (max_len == 0) throw ConfigError("greedy_decode: max_len must be >= 1");
  EncoderState<Real> enc = encode(src_ids);
  TokenIds out;
  TokenIds dec_in = {task.token};
  for (std::size_t step = 0; step < max_len; ++step) {
    Tensor<Real> logits = decoder_logits(enc, dec_in, nullptr, nullptr);
    const TokenId next = TokenId(argmax_row(logits, dec_in.size() - 1));
    if (next == kEosId) break;
    out.push_back(next);
    dec_in.push_back(next);
  }
  return out;
}

template <class Real>
LabelDecode Model<Real>::decode_labels(const TokenIds& src_ids, const TaskToken& task,
                                       std::size_t max_labels) const {
  // Unrestricted greedy decode with a little slack; tokens outside the label
  // segment are skipped and counted.
  TokenIds decoded = greedy_decode(src_ids, task, max_labels + 8);
  LabelDecode res;
  for (TokenId id : decoded) {
    if (res.labels.size() >= max_labels) break;
    if (is_label_token(id)) {
      res.labels.insert(int(class_for_label_token(id)));
    } else {
      ++res.skipped;
    }
  }
  return res;
}

}  // namespace mmlg
