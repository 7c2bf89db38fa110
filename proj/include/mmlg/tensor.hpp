#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mmlg/util.hpp"

namespace mmlg {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

// Logit value used to disable a position before softmax. Large enough that
// exp(masked - max) underflows to exactly 0, so masked positions contribute
// nothing and causality/padding invariants hold bitwise.
inline constexpr double kMaskedLogit = -1e30;

// ---------------------------------------------------------------------------
// Tensor: dense row-major float array with an optional gradient buffer.
// Real is float in the training path; tests instantiate double as the
// high-precision shadow for finite-difference checks.
// ---------------------------------------------------------------------------

template <class Real>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, Real fill);
  static Tensor from(std::vector<std::size_t> shape, std::vector<Real> data);
  static Tensor scalar(Real v) { return from({1}, {v}); }

  bool defined() const { return static_cast<bool>(s_); }
  const std::vector<std::size_t>& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape[i]; }
  std::size_t numel() const { return s_->value.size(); }

  std::vector<Real>& values() { return s_->value; }
  const std::vector<Real>& values() const { return s_->value; }

  Real item() const;
  // 2-D convenience accessors
  Real at(std::size_t r, std::size_t c) const { return s_->value[r * s_->shape[1] + c]; }
  Real& at(std::size_t r, std::size_t c) { return s_->value[r * s_->shape[1] + c]; }

  bool requires_grad() const { return s_->requires_grad; }
  Tensor& set_requires_grad(bool v);
  // Handle semantics: the gradient buffer is shared state of the storage, so
  // it stays writable through const handles (backward rules capture inputs
  // by value as const).
  std::vector<Real>& grad() const;
  void zero_grad() const;

  // Identity of the underlying storage (aliasing checks in tests).
  const void* id() const { return s_.get(); }

 private:
  struct Storage {
    std::vector<std::size_t> shape;
    std::vector<Real> value;
    std::vector<Real> grad;  // allocated on demand, always value-sized once present
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;

  void ensure_grad() const;
  explicit Tensor(std::shared_ptr<Storage> s) : s_(std::move(s)) {}
};

// ---------------------------------------------------------------------------
// Tape: ordered record of backward rules for one training step. Ops append in
// execution order, so the list is topologically sorted by construction; the
// backward sweep replays it once in reverse and then clears it.
// ---------------------------------------------------------------------------

template <class Real>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backprop) { ops_.push_back(std::move(backprop)); }
  std::size_t size() const { return ops_.size(); }

  // Seeds loss.grad with `seed` and runs the reverse sweep. The tape is
  // cleared afterwards. Throws ShapeError unless loss is scalar.
  void backward(Tensor<Real> loss, Real seed = Real(1));

 private:
  std::vector<std::function<void()>> ops_;
};

// Thread-local active tape. Ops record onto it when set and any input
// requires grad; with no active tape the forward pass is pure.
template <class Real>
Tape<Real>*& active_tape();

template <class Real>
class TapeScope {
 public:
  explicit TapeScope(Tape<Real>& t) : prev_(active_tape<Real>()) { active_tape<Real>() = &t; }
  ~TapeScope() { active_tape<Real>() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<Real>* prev_;
};

// ---------------------------------------------------------------------------
// Operations. Each computes the forward value and, when a tape is active and
// some input requires grad, records the matching backward rule.
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real c);
template <class Real>
Tensor<Real> relu(const Tensor<Real>& a);

// [m,k] x [k,n] -> [m,n]
template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
template <class Real>
Tensor<Real> transpose(const Tensor<Real>& a);

// Centered cross-correlation over the length axis; x [len,ch], kernel
// [k,ch,ch_out] with odd k, output [len,ch_out]. Symmetric zero padding by
// default. causal=true pads only on the left and masks the taps that would
// read positions > t, so output[t] is a function of x[0..t] alone.
template <class Real>
Tensor<Real> conv1d(const Tensor<Real>& x, const Tensor<Real>& kernel, std::size_t dilation,
                    bool causal);

template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis);

// Normalizes over the trailing axis of size d; gain and bias are [d].
template <class Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias,
                        Real eps);

// table [V,d], ids in [0,V) -> [len,d]; gradient scatters into table rows.
template <class Real>
Tensor<Real> embedding_lookup(const Tensor<Real>& table, const TokenIds& ids);

// Mean negative log-likelihood of targets under softmax(logits), skipping
// pad positions in both the sum and the count. logits [len,V].
template <class Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, const TokenIds& targets, TokenId pad_id);

// Column slice [l, c1-c0] of x [l, c].
template <class Real>
Tensor<Real> slice_cols(const Tensor<Real>& x, std::size_t c0, std::size_t c1);
template <class Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts);

// Scales row t of x [l,c] by w[t]; w is a rank-1 tensor [l].
template <class Real>
Tensor<Real> mul_rows(const Tensor<Real>& x, const Tensor<Real>& w);

// Zeroes rows whose mask entry is 0 (mask is not differentiated).
template <class Real>
Tensor<Real> zero_rows(const Tensor<Real>& x, const std::vector<std::uint8_t>& keep);

// Overwrites entries above the diagonal of a square score matrix with
// kMaskedLogit; gradients pass through unmasked entries only.
template <class Real>
Tensor<Real> causal_mask(const Tensor<Real>& scores);

// Overwrites scores [lq,lk] of disabled keys (keep[j]==0) with kMaskedLogit.
template <class Real>
Tensor<Real> key_mask(const Tensor<Real>& scores, const std::vector<std::uint8_t>& keep);

// Keeps the k largest entries of each row, overwriting the rest with
// kMaskedLogit. Ties resolve to the lower column index.
template <class Real>
Tensor<Real> topk_mask_rows(const Tensor<Real>& x, std::size_t k);

// Same data, new shape (sizes must agree); gradients pass through.
template <class Real>
Tensor<Real> reshape(const Tensor<Real>& x, std::vector<std::size_t> new_shape);

template <class Real>
Tensor<Real> sum_all(const Tensor<Real>& x);
// Column sums of x [l,c] -> [c].
template <class Real>
Tensor<Real> sum_axis0(const Tensor<Real>& x);

// Squared coefficient of variation var(v) / (mean(v)^2 + 1e-8) of a rank-1
// tensor; the load-balancing penalty for expert routing.
template <class Real>
Tensor<Real> squared_cv(const Tensor<Real>& v);

// Non-differentiating helpers.
template <class Real>
std::size_t argmax_row(const Tensor<Real>& x, std::size_t row);

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace mmlg

#include "mmlg/tensor_impl.hpp"
