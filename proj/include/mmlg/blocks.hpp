#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "mmlg/tensor.hpp"
#include "mmlg/util.hpp"

namespace mmlg {

// ---------------------------------------------------------------------------
// timing_signal: parameter-free positional code, interleaved sin/cos over
// geometrically spaced wavelengths from 2*pi to 10000*2*pi.
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> timing_signal(std::size_t len, std::size_t d) {
  if (len == 0 || d == 0) throw ConfigError("timing_signal: len and d must be positive");
  if (d % 2 != 0) throw ConfigError("timing_signal: width must be even, got " + std::to_string(d));
  Tensor<Real> out = Tensor<Real>::zeros({len, d});
  const std::size_t half = d / 2;
  for (std::size_t p = 0; p < len; ++p) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::pow(10000.0, -2.0 * double(i) / double(d));
      const double angle = double(p) * freq;
      out.values()[p * d + 2 * i] = Real(std::sin(angle));
      out.values()[p * d + 2 * i + 1] = Real(std::cos(angle));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolutional block: sublayers of relu -> dilated conv1d -> layer_norm,
// one per entry of the dilation schedule, with an optional residual
// connection around the whole block.
// ---------------------------------------------------------------------------

template <class Real>
struct ConvBlockParams {
  struct Sublayer {
    Tensor<Real> kernel;   // [k, d, d]
    Tensor<Real> ln_gain;  // [d]
    Tensor<Real> ln_bias;  // [d]
  };
  std::vector<Sublayer> sublayers;
  std::vector<std::size_t> dilations;  // one per sublayer
  bool residual = true;
  bool causal = false;

  std::size_t width() const { return sublayers.empty() ? 0 : sublayers[0].kernel.dim(1); }

  void validate() const {
    if (sublayers.empty()) throw ConfigError("conv block: no sublayers");
    if (dilations.size() != sublayers.size()) {
      throw ConfigError("conv block: dilation schedule length " + std::to_string(dilations.size()) +
                        " != sublayer count " + std::to_string(sublayers.size()));
    }
    const std::size_t d = width();
    for (const auto& s : sublayers) {
      if (s.kernel.dim(1) != d || s.kernel.dim(2) != d) {
        throw ConfigError("conv block: kernel width mismatch, expected " + std::to_string(d));
      }
    }
  }
};

// `keep`, when given, zeroes masked rows after every sublayer so padded
// positions never feed the next sublayer's taps; the output at kept rows is
// then an exact function of the kept input rows, independent of padding.
template <class Real>
Tensor<Real> conv_block(const Tensor<Real>& x, const ConvBlockParams<Real>& p,
                        const std::vector<std::uint8_t>* keep = nullptr) {
  p.validate();
  if (x.rank() != 2 || x.dim(1) != p.width()) {
    throw ShapeError("conv_block: input width " + std::to_string(x.rank() == 2 ? x.dim(1) : 0) +
                     " does not match block width " + std::to_string(p.width()));
  }
  Tensor<Real> h = x;
  for (std::size_t i = 0; i < p.sublayers.size(); ++i) {
    const auto& s = p.sublayers[i];
    h = relu(h);
    h = conv1d(h, s.kernel, p.dilations[i], p.causal);
    h = layer_norm(h, s.ln_gain, s.ln_bias, Real(1e-5));
    if (keep) h = zero_rows(h, *keep);
  }
  return p.residual ? add(x, h) : h;
}

// ---------------------------------------------------------------------------
// Multi-head scaled dot-product attention. q_in [lq,d] attends into kv_in
// [lk,d]; the causal flag is meaningful only for self-attention (q_in and
// kv_in the same sequence). key_keep optionally disables padded keys.
// ---------------------------------------------------------------------------

template <class Real>
struct AttentionParams {
  Tensor<Real> wq, wk, wv, wo;  // [d,d]
  std::size_t heads = 1;
  bool causal = false;

  std::size_t width() const { return wq.dim(0); }

  void validate() const {
    const std::size_t d = width();
    for (const Tensor<Real>* w : {&wq, &wk, &wv, &wo}) {
      if (w->rank() != 2 || w->dim(0) != d || w->dim(1) != d) {
        throw ConfigError("attention: projection must be [d,d] with d=" + std::to_string(d));
      }
    }
    if (heads == 0 || d % heads != 0) {
      throw ConfigError("attention: head count " + std::to_string(heads) + " must divide width " +
                        std::to_string(d));
    }
  }
};

template <class Real>
struct AttentionOut {
  Tensor<Real> output;                       // [lq,d]
  std::vector<Tensor<Real>> head_weights;    // per head, [lq,lk]
};

template <class Real>
AttentionOut<Real> attention_with_weights(const Tensor<Real>& q_in, const Tensor<Real>& kv_in,
                                          const AttentionParams<Real>& p,
                                          const std::vector<std::uint8_t>* key_keep = nullptr) {
  p.validate();
  const std::size_t d = p.width();
  if (q_in.rank() != 2 || q_in.dim(1) != d || kv_in.rank() != 2 || kv_in.dim(1) != d) {
    throw ShapeError("attention: inputs must be [*, " + std::to_string(d) + "]");
  }
  if (kv_in.dim(0) == 0) throw DataError("attention: empty source sequence");
  if (p.causal && q_in.dim(0) != kv_in.dim(0)) {
    throw ShapeError("attention: causal masking requires self-attention (got lq=" +
                     std::to_string(q_in.dim(0)) + ", lk=" + std::to_string(kv_in.dim(0)) + ")");
  }

  const std::size_t dh = d / p.heads;
  const Real inv_sqrt_dh = Real(1) / Real(std::sqrt(double(dh)));
  Tensor<Real> q = matmul(q_in, p.wq);
  Tensor<Real> k = matmul(kv_in, p.wk);
  Tensor<Real> v = matmul(kv_in, p.wv);

  AttentionOut<Real> res;
  std::vector<Tensor<Real>> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    Tensor<Real> qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor<Real> kh = slice_cols(k, h * dh, (h + 1) * dh);
    Tensor<Real> vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor<Real> scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
    if (key_keep) scores = key_mask(scores, *key_keep);
    if (p.causal) scores = causal_mask(scores);
    Tensor<Real> w = softmax(scores, 1);
    res.head_weights.push_back(w);
    heads.push_back(matmul(w, vh));
  }
  res.output = matmul(concat_cols(heads), p.wo);
  return res;
}

template <class Real>
Tensor<Real> attention(const Tensor<Real>& q_in, const Tensor<Real>& kv_in,
                       const AttentionParams<Real>& p,
                       const std::vector<std::uint8_t>* key_keep = nullptr) {
  return attention_with_weights(q_in, kv_in, p, key_keep).output;
}

// ---------------------------------------------------------------------------
// Mixture of experts. Per position: gate logits -> optional multiplicative
// Gaussian noise (training only) -> top-k mask -> renormalized softmax over
// the kept experts -> weighted sum of expert feed-forward outputs.
// `load` sums gate weight per expert (equal to hard assignment counts when
// top_k == 1) and feeds the squared-CV balance penalty.
// ---------------------------------------------------------------------------

template <class Real>
struct MoEParams {
  struct Expert {
    Tensor<Real> w1;  // [d, filter]
    Tensor<Real> w2;  // [filter, d]
  };
  std::vector<Expert> experts;
  Tensor<Real> gate;  // [d, E]
  std::size_t top_k = 1;
  Real noise_scale = Real(1);

  std::size_t expert_count() const { return experts.size(); }
  std::size_t width() const { return gate.dim(0); }

  void validate() const {
    const std::size_t e = experts.size();
    if (e == 0 || top_k < 1 || top_k > e) {
      throw ConfigError("moe: need E >= top_k >= 1, got E=" + std::to_string(e) +
                        " top_k=" + std::to_string(top_k));
    }
    if (gate.rank() != 2 || gate.dim(1) != e) {
      throw ConfigError("moe: gate must be [d,E] with E=" + std::to_string(e));
    }
    const std::size_t d = gate.dim(0);
    for (const auto& ex : experts) {
      if (ex.w1.dim(0) != d || ex.w2.dim(1) != d || ex.w1.dim(1) != ex.w2.dim(0)) {
        throw ConfigError("moe: expert shapes must be [d,f],[f,d] with d=" + std::to_string(d));
      }
    }
  }
};

template <class Real>
struct MoEOut {
  Tensor<Real> output;  // [len,d]
  Tensor<Real> load;    // [E], summed gate weight per expert
  Tensor<Real> gates;   // [len,E], exactly top_k nonzero entries per row
};

template <class Real>
MoEOut<Real> moe(const Tensor<Real>& x, const MoEParams<Real>& p, bool train_mode,
                 Rng* noise_rng = nullptr) {
  p.validate();
  if (x.rank() != 2 || x.dim(1) != p.width()) {
    throw ShapeError("moe: input width must be " + std::to_string(p.width()));
  }
  Tensor<Real> logits = matmul(x, p.gate);  // [len,E]
  if (train_mode && noise_rng && p.noise_scale > Real(0)) {
    Tensor<Real> noise = Tensor<Real>::zeros(logits.shape());
    for (auto& n : noise.values()) n = Real(1) + p.noise_scale * Real(noise_rng->normal());
    logits = mul(logits, noise);
  }
  Tensor<Real> gates = softmax(topk_mask_rows(logits, p.top_k), 1);

  MoEOut<Real> res;
  res.gates = gates;
  res.load = sum_axis0(gates);
  Tensor<Real> acc;
  for (std::size_t e = 0; e < p.expert_count(); ++e) {
    Tensor<Real> hidden = relu(matmul(x, p.experts[e].w1));
    Tensor<Real> expert_out = matmul(hidden, p.experts[e].w2);
    Tensor<Real> weight = reshape(slice_cols(gates, e, e + 1), {x.dim(0)});
    Tensor<Real> weighted = mul_rows(expert_out, weight);
    acc = acc.defined() ? add(acc, weighted) : weighted;
  }
  res.output = acc;
  return res;
}

}  // namespace mmlg
