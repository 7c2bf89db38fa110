#pragma once

#include <initializer_list>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mmlg {

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream ss;
  ss << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) ss << ",";
    ss << shape[i];
  }
  ss << "]";
  return ss.str();
}

namespace detail {

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("zero-sized dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

inline void require_same_shape(const char* op, const std::vector<std::size_t>& a,
                               const std::vector<std::size_t>& b) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> Tensor<Real>::zeros(std::vector<std::size_t> shape) {
  auto s = std::make_shared<Storage>();
  std::size_t n = detail::shape_numel(shape);
  s->shape = std::move(shape);
  s->value.assign(n, Real(0));
  return Tensor(std::move(s));
}

template <class Real>
Tensor<Real> Tensor<Real>::full(std::vector<std::size_t> shape, Real fill) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.s_->value.begin(), t.s_->value.end(), fill);
  return t;
}

template <class Real>
Tensor<Real> Tensor<Real>::from(std::vector<std::size_t> shape, std::vector<Real> data) {
  std::size_t n = detail::shape_numel(shape);
  if (n != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  }
  auto s = std::make_shared<Storage>();
  s->shape = std::move(shape);
  s->value = std::move(data);
  return Tensor(std::move(s));
}

template <class Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return s_->value[0];
}

template <class Real>
Tensor<Real>& Tensor<Real>::set_requires_grad(bool v) {
  s_->requires_grad = v;
  if (v) ensure_grad();
  return *this;
}

template <class Real>
void Tensor<Real>::ensure_grad() const {
  if (s_->grad.size() != s_->value.size()) s_->grad.assign(s_->value.size(), Real(0));
}

template <class Real>
std::vector<Real>& Tensor<Real>::grad() const {
  ensure_grad();
  return s_->grad;
}

template <class Real>
void Tensor<Real>::zero_grad() const {
  if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), Real(0));
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

template <class Real>
Tape<Real>*& active_tape() {
  thread_local Tape<Real>* tape = nullptr;
  return tape;
}

template <class Real>
void Tape<Real>::backward(Tensor<Real> loss, Real seed) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  loss.grad()[0] += seed;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

// ---------------------------------------------------------------------------
// Op plumbing
// ---------------------------------------------------------------------------

namespace detail {

template <class Real>
bool tracing(std::initializer_list<const Tensor<Real>*> inputs) {
  if (!active_tape<Real>()) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Marks `out` as a tape intermediate and records the rule.
template <class Real>
void record(Tensor<Real>& out, std::function<void()> rule) {
  out.set_requires_grad(true);
  active_tape<Real>()->record(std::move(rule));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape("add", a.shape(), b.shape());
  Tensor<Real> out = Tensor<Real>::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
  if (detail::tracing<Real>({&a, &b})) {
    detail::record(out, [a, b, out]() mutable {
      const auto& go = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape("sub", a.shape(), b.shape());
  Tensor<Real> out = Tensor<Real>::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = a.values()[i] - b.values()[i];
  if (detail::tracing<Real>({&a, &b})) {
    detail::record(out, [a, b, out]() mutable {
      const auto& go = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape("mul", a.shape(), b.shape());
  Tensor<Real> out = Tensor<Real>::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
  if (detail::tracing<Real>({&a, &b})) {
    detail::record(out, [a, b, out]() mutable {
      const auto& go = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * b.values()[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * a.values()[i];
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real c) {
  Tensor<Real> out = Tensor<Real>::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = a.values()[i] * c;
  if (detail::tracing<Real>({&a})) {
    detail::record(out, [a, out, c]() mutable {
      const auto& go = out.grad();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * c;
    });
  }
  return out;
}

template <class Real>
Tensor<Real> relu(const Tensor<Real>& a) {
  Tensor<Real> out = Tensor<Real>::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = std::max(Real(0), a.values()[i]);
  if (detail::tracing<Real>({&a})) {
    detail::record(out, [a, out]() mutable {
      const auto& go = out.grad();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (a.values()[i] > Real(0)) ga[i] += go[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<Real> out = Tensor<Real>::zeros({m, n});
  const Real* pa = a.values().data();
  const Real* pb = b.values().data();
  Real* po = out.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const Real av = pa[i * k + kk];
      if (av == Real(0)) continue;
      const Real* brow = pb + kk * n;
      Real* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  if (detail::tracing<Real>({&a, &b})) {
    detail::record(out, [a, b, out, m, k, n]() mutable {
      const auto& go = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        const auto& bv = b.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const Real g = go[i * n + j];
            if (g == Real(0)) continue;
            for (std::size_t kk = 0; kk < k; ++kk) ga[i * k + kk] += g * bv[kk * n + j];
          }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        const auto& av = a.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            const Real x = av[i * k + kk];
            if (x == Real(0)) continue;
            for (std::size_t j = 0; j < n; ++j) gb[kk * n + j] += x * go[i * n + j];
          }
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank-2, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor<Real> out = Tensor<Real>::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values()[j * m + i] = a.values()[i * n + j];
  if (detail::tracing<Real>({&a})) {
    detail::record(out, [a, out, m, n]() mutable {
      const auto& go = out.grad();
      auto& ga = a.grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv1d: centered taps, tap j reads x[t + (j - (k-1)/2) * dilation]. In
// causal mode taps past the center are masked so only x[<= t] is read, and
// padding exists only on the left.
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> conv1d(const Tensor<Real>& x, const Tensor<Real>& kernel, std::size_t dilation,
                    bool causal) {
  if (x.rank() != 2 || kernel.rank() != 3) {
    throw ShapeError("conv1d: expected x [len,ch] and kernel [k,ch,ch_out], got " +
                     shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
  }
  const std::size_t len = x.dim(0), ch = x.dim(1);
  const std::size_t k = kernel.dim(0), ch_out = kernel.dim(2);
  if (k % 2 == 0) throw ShapeError("conv1d: kernel size must be odd, got " + std::to_string(k));
  if (kernel.dim(1) != ch) {
    throw ShapeError("conv1d: channel mismatch, x has " + std::to_string(ch) + " kernel expects " +
                     std::to_string(kernel.dim(1)));
  }
  if (dilation == 0) throw ShapeError("conv1d: dilation must be positive");

  const std::size_t center = (k - 1) / 2;
  const std::size_t j_end = causal ? center + 1 : k;  // taps beyond center are masked in causal mode
  Tensor<Real> out = Tensor<Real>::zeros({len, ch_out});

  const Real* px = x.values().data();
  const Real* pw = kernel.values().data();
  Real* po = out.values().data();
  const std::ptrdiff_t ilen = static_cast<std::ptrdiff_t>(len);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t j = 0; j < j_end; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) +
                                 (static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(center)) *
                                     static_cast<std::ptrdiff_t>(dilation);
      if (src < 0 || src >= ilen) continue;
      const Real* xrow = px + static_cast<std::size_t>(src) * ch;
      const Real* wslab = pw + j * ch * ch_out;
      Real* orow = po + t * ch_out;
      for (std::size_t c = 0; c < ch; ++c) {
        const Real xv = xrow[c];
        if (xv == Real(0)) continue;
        const Real* wrow = wslab + c * ch_out;
        for (std::size_t o = 0; o < ch_out; ++o) orow[o] += xv * wrow[o];
      }
    }
  }

  if (detail::tracing<Real>({&x, &kernel})) {
    detail::record(out, [x, kernel, out, len, ch, ch_out, dilation, center, j_end]() mutable {
      const auto& go = out.grad();
      const std::ptrdiff_t ilen = static_cast<std::ptrdiff_t>(len);
      for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t j = 0; j < j_end; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) +
                                     (static_cast<std::ptrdiff_t>(j) -
                                      static_cast<std::ptrdiff_t>(center)) *
                                         static_cast<std::ptrdiff_t>(dilation);
          if (src < 0 || src >= ilen) continue;
          const std::size_t s = static_cast<std::size_t>(src);
          for (std::size_t c = 0; c < ch; ++c) {
            for (std::size_t o = 0; o < ch_out; ++o) {
              const Real g = go[t * ch_out + o];
              if (g == Real(0)) continue;
              if (x.requires_grad())
                x.grad()[s * ch + c] += g * kernel.values()[(j * ch + c) * ch_out + o];
              if (kernel.requires_grad())
                kernel.grad()[(j * ch + c) * ch_out + o] += g * x.values()[s * ch + c];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax over an arbitrary axis, max-stabilized.
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.dim(axis);
  std::size_t inner = 1, outer = 1;
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);

  Tensor<Real> out = Tensor<Real>::zeros(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      Real mx = x.values()[base];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x.values()[base + i * inner]);
      Real sum = Real(0);
      for (std::size_t i = 0; i < n; ++i) {
        Real e = std::exp(x.values()[base + i * inner] - mx);
        out.values()[base + i * inner] = e;
        sum += e;
      }
      for (std::size_t i = 0; i < n; ++i) out.values()[base + i * inner] /= sum;
    }
  }

  if (detail::tracing<Real>({&x})) {
    detail::record(out, [x, out, n, inner, outer]() mutable {
      const auto& go = out.grad();
      const auto& w = out.values();
      auto& gx = x.grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          Real dot = Real(0);
          for (std::size_t i = 0; i < n; ++i) dot += go[base + i * inner] * w[base + i * inner];
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t idx = base + i * inner;
            gx[idx] += w[idx] * (go[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// layer_norm over the trailing axis (population variance).
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias,
                        Real eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm: rank-0 input");
  const std::size_t d = x.dim(x.rank() - 1);
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError("layer_norm: gain/bias size must equal trailing dim " + std::to_string(d));
  }
  if (eps < Real(0)) throw ShapeError("layer_norm: eps must be >= 0");
  const std::size_t rows = x.numel() / d;

  Tensor<Real> out = Tensor<Real>::zeros(x.shape());
  std::vector<Real> xhat(x.numel());
  std::vector<Real> inv_sigma(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * d;
    Real mean = Real(0);
    for (std::size_t i = 0; i < d; ++i) mean += x.values()[base + i];
    mean /= Real(d);
    Real var = Real(0);
    for (std::size_t i = 0; i < d; ++i) {
      Real dv = x.values()[base + i] - mean;
      var += dv * dv;
    }
    var /= Real(d);
    const Real is = Real(1) / std::sqrt(var + eps);
    inv_sigma[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      Real h = (x.values()[base + i] - mean) * is;
      xhat[base + i] = h;
      out.values()[base + i] = h * gain.values()[i] + bias.values()[i];
    }
  }

  if (detail::tracing<Real>({&x, &gain, &bias})) {
    detail::record(out, [x, gain, bias, out, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma), rows,
                 d]() mutable {
      const auto& go = out.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * d;
        if (x.requires_grad()) {
          Real mean_dh = Real(0), mean_dh_xhat = Real(0);
          for (std::size_t i = 0; i < d; ++i) {
            const Real dh = go[base + i] * gain.values()[i];
            mean_dh += dh;
            mean_dh_xhat += dh * xhat[base + i];
          }
          mean_dh /= Real(d);
          mean_dh_xhat /= Real(d);
          auto& gx = x.grad();
          for (std::size_t i = 0; i < d; ++i) {
            const Real dh = go[base + i] * gain.values()[i];
            gx[base + i] += (dh - mean_dh - xhat[base + i] * mean_dh_xhat) * inv_sigma[r];
          }
        }
        if (gain.requires_grad()) {
          auto& gg = gain.grad();
          for (std::size_t i = 0; i < d; ++i) gg[i] += go[base + i] * xhat[base + i];
        }
        if (bias.requires_grad()) {
          auto& gb = bias.grad();
          for (std::size_t i = 0; i < d; ++i) gb[i] += go[base + i];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// embedding_lookup
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> embedding_lookup(const Tensor<Real>& table, const TokenIds& ids) {
  if (table.rank() != 2) {
    throw ShapeError("embedding_lookup: table must be [V,d], got " + shape_str(table.shape()));
  }
  const std::size_t v = table.dim(0), d = table.dim(1);
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw VocabError("embedding_lookup: id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(v));
    }
  }
  Tensor<Real> out = Tensor<Real>::zeros({ids.size(), d});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const Real* row = table.values().data() + static_cast<std::size_t>(ids[t]) * d;
    std::copy(row, row + d, out.values().data() + t * d);
  }
  if (detail::tracing<Real>({&table})) {
    detail::record(out, [table, out, ids, d]() mutable {
      const auto& go = out.grad();
      auto& gt = table.grad();
      for (std::size_t t = 0; t < ids.size(); ++t) {
        Real* grow = gt.data() + static_cast<std::size_t>(ids[t]) * d;
        const Real* gout = go.data() + t * d;
        for (std::size_t i = 0; i < d; ++i) grow[i] += gout[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// cross_entropy
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, const TokenIds& targets, TokenId pad_id) {
  if (logits.rank() != 2) {
    throw ShapeError("cross_entropy: logits must be [len,V], got " + shape_str(logits.shape()));
  }
  const std::size_t len = logits.dim(0), v = logits.dim(1);
  if (targets.size() != len) {
    throw ShapeError("cross_entropy: targets length " + std::to_string(targets.size()) +
                     " does not match logits length " + std::to_string(len));
  }
  std::size_t live = 0;
  for (TokenId t : targets) {
    if (t == pad_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw VocabError("cross_entropy: target id " + std::to_string(t) + " outside vocabulary of size " +
                       std::to_string(v));
    }
    ++live;
  }
  if (live == 0) throw DataError("cross_entropy: all positions padded (degenerate batch)");

  // cache softmax probabilities for the backward rule
  std::vector<Real> probs(logits.numel());
  Real loss = Real(0);
  for (std::size_t t = 0; t < len; ++t) {
    const Real* row = logits.values().data() + t * v;
    Real mx = row[0];
    for (std::size_t i = 1; i < v; ++i) mx = std::max(mx, row[i]);
    Real sum = Real(0);
    for (std::size_t i = 0; i < v; ++i) {
      Real e = std::exp(row[i] - mx);
      probs[t * v + i] = e;
      sum += e;
    }
    for (std::size_t i = 0; i < v; ++i) probs[t * v + i] /= sum;
    if (targets[t] != pad_id) {
      loss += std::log(sum) + mx - row[static_cast<std::size_t>(targets[t])];
    }
  }
  Tensor<Real> out = Tensor<Real>::scalar(loss / Real(live));

  if (detail::tracing<Real>({&logits})) {
    detail::record(out, [logits, out, targets, pad_id, probs = std::move(probs), len, v, live]() mutable {
      const Real g = out.grad()[0] / Real(live);
      auto& gl = logits.grad();
      for (std::size_t t = 0; t < len; ++t) {
        if (targets[t] == pad_id) continue;
        for (std::size_t i = 0; i < v; ++i) gl[t * v + i] += g * probs[t * v + i];
        gl[t * v + static_cast<std::size_t>(targets[t])] -= g;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Slicing / concatenation / row scaling
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> slice_cols(const Tensor<Real>& x, std::size_t c0, std::size_t c1) {
  if (x.rank() != 2 || c0 >= c1 || c1 > x.dim(1)) {
    throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") for " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1), w = c1 - c0;
  Tensor<Real> out = Tensor<Real>::zeros({rows, w});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(x.values().data() + r * cols + c0, x.values().data() + r * cols + c1,
              out.values().data() + r * w);
  if (detail::tracing<Real>({&x})) {
    detail::record(out, [x, out, rows, cols, c0, w]() mutable {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j) gx[r * cols + c0 + j] += go[r * w + j];
    });
  }
  return out;
}

template <class Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const std::size_t rows = parts[0].dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows) {
      throw ShapeError("concat_cols: row mismatch at part with shape " + shape_str(p.shape()));
    }
    total += p.dim(1);
  }
  Tensor<Real> out = Tensor<Real>::zeros({rows, total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(p.values().data() + r * w, p.values().data() + (r + 1) * w,
                out.values().data() + r * total + off);
    off += w;
  }
  bool needs = false;
  for (const auto& p : parts) needs = needs || p.requires_grad();
  if (active_tape<Real>() && needs) {
    detail::record(out, [parts, out, rows, total]() mutable {
      const auto& go = out.grad();
      std::size_t off = 0;
      for (auto& p : parts) {
        const std::size_t w = p.dim(1);
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < w; ++j) gp[r * w + j] += go[r * total + off + j];
        }
        off += w;
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> mul_rows(const Tensor<Real>& x, const Tensor<Real>& w) {
  if (x.rank() != 2 || w.rank() != 1 || w.numel() != x.dim(0)) {
    throw ShapeError("mul_rows: expected x [l,c] and w [l], got " + shape_str(x.shape()) + " and " +
                     shape_str(w.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor<Real> out = Tensor<Real>::zeros(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.values()[r * cols + c] = x.values()[r * cols + c] * w.values()[r];
  if (detail::tracing<Real>({&x, &w})) {
    detail::record(out, [x, w, out, rows, cols]() mutable {
      const auto& go = out.grad();
      if (x.requires_grad()) {
        auto& gx = x.grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += go[r * cols + c] * w.values()[r];
      }
      if (w.requires_grad()) {
        auto& gw = w.grad();
        for (std::size_t r = 0; r < rows; ++r) {
          Real acc = Real(0);
          for (std::size_t c = 0; c < cols; ++c) acc += go[r * cols + c] * x.values()[r * cols + c];
          gw[r] += acc;
        }
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> zero_rows(const Tensor<Real>& x, const std::vector<std::uint8_t>& keep) {
  if (x.rank() != 2 || keep.size() != x.dim(0)) {
    throw ShapeError("zero_rows: mask length " + std::to_string(keep.size()) + " vs rows " +
                     std::to_string(x.rank() == 2 ? x.dim(0) : 0));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor<Real> out = Tensor<Real>::zeros(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    if (!keep[r]) continue;
    std::copy(x.values().data() + r * cols, x.values().data() + (r + 1) * cols,
              out.values().data() + r * cols);
  }
  if (detail::tracing<Real>({&x})) {
    detail::record(out, [x, out, keep, rows, cols]() mutable {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        if (!keep[r]) continue;
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += go[r * cols + c];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Masking
// ---------------------------------------------------------------------------

namespace detail {

// Overwrite-style mask: output equals x where kept, kMaskedLogit elsewhere.
template <class Real>
Tensor<Real> apply_mask(const Tensor<Real>& x, std::vector<std::uint8_t> kept) {
  Tensor<Real> out = Tensor<Real>::zeros(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    out.values()[i] = kept[i] ? x.values()[i] : Real(kMaskedLogit);
  if (detail::tracing<Real>({&x})) {
    detail::record(out, [x, out, kept = std::move(kept)]() mutable {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (kept[i]) gx[i] += go[i];
      }
    });
  }
  return out;
}

}  // namespace detail

template <class Real>
Tensor<Real> causal_mask(const Tensor<Real>& scores) {
  if (scores.rank() != 2 || scores.dim(0) != scores.dim(1)) {
    throw ShapeError("causal_mask: expected square scores, got " + shape_str(scores.shape()));
  }
  const std::size_t n = scores.dim(0);
  std::vector<std::uint8_t> kept(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) kept[i * n + j] = 1;
  return detail::apply_mask(scores, std::move(kept));
}

template <class Real>
Tensor<Real> key_mask(const Tensor<Real>& scores, const std::vector<std::uint8_t>& keep) {
  if (scores.rank() != 2 || keep.size() != scores.dim(1)) {
    throw ShapeError("key_mask: mask length " + std::to_string(keep.size()) + " vs keys " +
                     std::to_string(scores.rank() == 2 ? scores.dim(1) : 0));
  }
  bool any = false;
  for (auto k : keep) any = any || k;
  if (!any) throw DataError("key_mask: every key masked");
  const std::size_t lq = scores.dim(0), lk = scores.dim(1);
  std::vector<std::uint8_t> kept(lq * lk);
  for (std::size_t i = 0; i < lq; ++i)
    for (std::size_t j = 0; j < lk; ++j) kept[i * lk + j] = keep[j];
  return detail::apply_mask(scores, std::move(kept));
}

template <class Real>
Tensor<Real> topk_mask_rows(const Tensor<Real>& x, std::size_t k) {
  if (x.rank() != 2) throw ShapeError("topk_mask_rows: expected rank-2, got " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (k < 1 || k > cols) {
    throw ShapeError("topk_mask_rows: k=" + std::to_string(k) + " outside [1," + std::to_string(cols) +
                     "]");
  }
  std::vector<std::uint8_t> kept(rows * cols, 0);
  std::vector<std::size_t> order(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::iota(order.begin(), order.end(), std::size_t(0));
    const Real* row = x.values().data() + r * cols;
    std::stable_sort(order.begin(), order.end(),
                     [row](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    for (std::size_t i = 0; i < k; ++i) kept[r * cols + order[i]] = 1;
  }
  return detail::apply_mask(x, std::move(kept));
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& x, std::vector<std::size_t> new_shape) {
  if (detail::shape_numel(new_shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
  }
  Tensor<Real> out = Tensor<Real>::from(std::move(new_shape), x.values());
  if (detail::tracing<Real>({&x})) {
    detail::record(out, [x, out]() mutable {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

template <class Real>
Tensor<Real> sum_all(const Tensor<Real>& x) {
  Real acc = Real(0);
  for (Real v : x.values()) acc += v;
  Tensor<Real> out = Tensor<Real>::scalar(acc);
  if (detail::tracing<Real>({&x})) {
    detail::record(out, [x, out]() mutable {
      const Real g = out.grad()[0];
      auto& gx = x.grad();
      for (auto& v : gx) v += g;
    });
  }
  return out;
}

template <class Real>
Tensor<Real> sum_axis0(const Tensor<Real>& x) {
  if (x.rank() != 2) throw ShapeError("sum_axis0: expected rank-2, got " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor<Real> out = Tensor<Real>::zeros({cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.values()[c] += x.values()[r * cols + c];
  if (detail::tracing<Real>({&x})) {
    detail::record(out, [x, out, rows, cols]() mutable {
      const auto& go = out.grad();
      auto& gx = x.grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += go[c];
    });
  }
  return out;
}

template <class Real>
Tensor<Real> squared_cv(const Tensor<Real>& v) {
  if (v.rank() != 1 || v.numel() == 0) {
    throw ShapeError("squared_cv: expected non-empty rank-1, got " + shape_str(v.shape()));
  }
  const std::size_t n = v.numel();
  const Real eps = Real(1e-8);
  Real mean = Real(0);
  for (Real x : v.values()) mean += x;
  mean /= Real(n);
  Real var = Real(0);
  for (Real x : v.values()) var += (x - mean) * (x - mean);
  var /= Real(n);
  const Real denom = mean * mean + eps;
  Tensor<Real> out = Tensor<Real>::scalar(var / denom);
  if (detail::tracing<Real>({&v})) {
    detail::record(out, [v, out, mean, var, denom, n]() mutable {
      const Real g = out.grad()[0];
      auto& gv = v.grad();
      for (std::size_t i = 0; i < n; ++i) {
        const Real x = v.values()[i];
        const Real d = (Real(2) / Real(n)) * ((x - mean) * denom - var * mean) / (denom * denom);
        gv[i] += g * d;
      }
    });
  }
  return out;
}

template <class Real>
std::size_t argmax_row(const Tensor<Real>& x, std::size_t row) {
  const std::size_t cols = x.dim(x.rank() - 1);
  const Real* p = x.values().data() + row * cols;
  std::size_t best = 0;
  for (std::size_t i = 1; i < cols; ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

}  // namespace mmlg
