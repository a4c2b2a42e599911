#pragma once

// Dense row-major tensors with reverse-mode differentiation on a
// per-forward-pass recorded tape. The scalar type is a template parameter:
// the library default is float; gradient-check tests instantiate the same
// code at double.

#include <cblas.h>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "seltune/rng.hpp"

namespace seltune {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

template <typename S>
struct TensorDataT {
  Shape shape;
  std::vector<S> values;
  bool requires_grad = false;
  // Allocated only for requires_grad tensors, and only once a gradient
  // actually lands here (or the caller zeroes it ahead of a step).
  std::unique_ptr<std::vector<S>> grad;

  void ensure_grad() {
    if (!grad) grad = std::make_unique<std::vector<S>>(values.size(), S(0));
  }
};

template <typename S>
class TensorT {
 public:
  TensorT() = default;

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), S(0), requires_grad);
  }

  static TensorT filled(Shape shape, S value, bool requires_grad = false) {
    TensorT t;
    t.d_ = std::make_shared<TensorDataT<S>>();
    t.d_->shape = std::move(shape);
    t.d_->values.assign(shape_numel(t.d_->shape), value);
    t.d_->requires_grad = requires_grad;
    return t;
  }

  static TensorT from_values(Shape shape, std::vector<S> values,
                             bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
      throw std::invalid_argument("tensor: " + shape_str(shape) + " cannot hold " +
                                  std::to_string(values.size()) + " values");
    TensorT t;
    t.d_ = std::make_shared<TensorDataT<S>>();
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(values);
    t.d_->requires_grad = requires_grad;
    return t;
  }

  static TensorT scalar(S value, bool requires_grad = false) {
    return from_values({1}, {value}, requires_grad);
  }

  static TensorT randn(Shape shape, Rng& rng, S stddev = S(1),
                       bool requires_grad = false) {
    TensorT t = zeros(std::move(shape), requires_grad);
    for (S& v : t.values()) v = static_cast<S>(rng.normal()) * stddev;
    return t;
  }

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int64_t dim(size_t i) const { return d_->shape[i]; }
  size_t rank() const { return d_->shape.size(); }
  int64_t numel() const { return static_cast<int64_t>(d_->values.size()); }

  std::vector<S>& values() { return d_->values; }
  const std::vector<S>& values() const { return d_->values; }
  S item() const {
    if (numel() != 1)
      throw std::invalid_argument("item: tensor " + shape_str(shape()) +
                                  " is not a scalar");
    return d_->values[0];
  }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) {
    d_->requires_grad = rg;
    if (!rg) d_->grad.reset();
  }

  bool has_grad() const { return static_cast<bool>(d_->grad); }
  std::vector<S>& grad() {
    if (!d_->grad) throw std::runtime_error("grad: no accumulator present");
    return *d_->grad;
  }
  const std::vector<S>& grad() const {
    if (!d_->grad) throw std::runtime_error("grad: no accumulator present");
    return *d_->grad;
  }
  // Allocates (zeroed) if absent; used by zero_grad and the tape.
  void zero_grad() {
    if (!d_->requires_grad)
      throw std::runtime_error("zero_grad: tensor does not require grad");
    d_->ensure_grad();
    std::fill(d_->grad->begin(), d_->grad->end(), S(0));
  }
  void drop_grad() { d_->grad.reset(); }

  std::shared_ptr<TensorDataT<S>> ptr() const { return d_; }

 private:
  std::shared_ptr<TensorDataT<S>> d_;
};

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

// Records every executed op whose output needs a gradient. Replayed in
// reverse execution order (a valid reverse-topological order) by backward(),
// then discarded.
template <typename S>
class TapeT {
 public:
  struct Record {
    std::shared_ptr<TensorDataT<S>> output;
    std::function<void()> backward;
  };

  static TapeT& current() {
    thread_local TapeT tape;
    return tape;
  }

  bool recording() const { return no_grad_depth_ == 0; }
  void push(Record r) { records_.push_back(std::move(r)); }
  size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  std::vector<Record>& records() { return records_; }

  int no_grad_depth_ = 0;

 private:
  std::vector<Record> records_;
};

template <typename S>
struct NoGradGuardT {
  NoGradGuardT() { TapeT<S>::current().no_grad_depth_++; }
  ~NoGradGuardT() { TapeT<S>::current().no_grad_depth_--; }
  NoGradGuardT(const NoGradGuardT&) = delete;
  NoGradGuardT& operator=(const NoGradGuardT&) = delete;
};

namespace detail {

template <typename S>
inline bool track(std::initializer_list<const TensorT<S>*> inputs) {
  if (!TapeT<S>::current().recording()) return false;
  for (const TensorT<S>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// cblas front-end selected by scalar type
inline void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int64_t m, int64_t n,
                 int64_t k, float alpha, const float* a, int64_t lda,
                 const float* b, int64_t ldb, float beta, float* c, int64_t ldc) {
  cblas_sgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}
inline void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int64_t m, int64_t n,
                 int64_t k, double alpha, const double* a, int64_t lda,
                 const double* b, int64_t ldb, double beta, double* c,
                 int64_t ldc) {
  cblas_dgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

// Walks the tape in reverse from a scalar loss, accumulating exactly one
// gradient contribution per recorded use of each tensor, then discards the
// tape. Frozen leaves (requires_grad == false) are never touched.
template <typename S>
void backward(const TensorT<S>& loss) {
  auto& tape = TapeT<S>::current();
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got " +
                                shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw std::invalid_argument(
        "backward: loss was not produced by recorded operations on a "
        "trainable path");
  loss.ptr()->ensure_grad();
  (*loss.ptr()->grad)[0] = S(1);
  auto& records = tape.records();
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    // Skip ops whose output never received a gradient (side branches).
    if (it->output->grad) it->backward();
  }
  tape.clear();
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

// a: [...xk] (leading dims flattened to rows), b: [kxn] -> [...xn].
// Differentiable in both operands.
template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() < 1 || b.rank() != 2)
    throw std::invalid_argument("matmul: expects a [...xk] and b [kxn], got " +
                                shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  const int64_t k = a.shape().back();
  const int64_t n = b.dim(1);
  if (b.dim(0) != k)
    throw std::invalid_argument("matmul: inner extents differ: " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const int64_t m = a.numel() / k;

  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  bool rg = detail::track<S>({&a, &b});
  TensorT<S> out = TensorT<S>::zeros(std::move(out_shape), rg);
  detail::gemm(CblasNoTrans, CblasNoTrans, m, n, k, S(1), a.values().data(), k,
               b.values().data(), n, S(0), out.values().data(), n);

  if (rg) {
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    TapeT<S>::current().push({od, [ad, bd, od, m, n, k]() {
      const S* g = od->grad->data();
      if (ad->requires_grad) {
        ad->ensure_grad();
        detail::gemm(CblasNoTrans, CblasTrans, m, k, n, S(1), g, n,
                     bd->values.data(), n, S(1), ad->grad->data(), k);
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        detail::gemm(CblasTrans, CblasNoTrans, k, n, m, S(1), ad->values.data(),
                     k, g, n, S(1), bd->grad->data(), n);
      }
    }});
  }
  return out;
}

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch: " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  bool rg = detail::track<S>({&a, &b});
  TensorT<S> out = TensorT<S>::zeros(a.shape(), rg);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i)
    out.values()[i] = a.values()[i] + b.values()[i];
  if (rg) {
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    TapeT<S>::current().push({od, [ad, bd, od, n]() {
      const S* g = od->grad->data();
      if (ad->requires_grad) {
        ad->ensure_grad();
        S* da = ad->grad->data();
        for (int64_t i = 0; i < n; ++i) da[i] += g[i];
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        S* db = bd->grad->data();
        for (int64_t i = 0; i < n; ++i) db[i] += g[i];
      }
    }});
  }
  return out;
}

// x: [...xf] plus bias [f] broadcast over rows (the only broadcast we allow).
template <typename S>
TensorT<S> add_bias(const TensorT<S>& x, const TensorT<S>& bias) {
  if (bias.rank() != 1 || x.shape().back() != bias.dim(0))
    throw std::invalid_argument("add_bias: bias " + shape_str(bias.shape()) +
                                " does not match last axis of " +
                                shape_str(x.shape()));
  const int64_t f = bias.dim(0);
  const int64_t rows = x.numel() / f;
  bool rg = detail::track<S>({&x, &bias});
  TensorT<S> out = TensorT<S>::zeros(x.shape(), rg);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < f; ++j)
      out.values()[r * f + j] = x.values()[r * f + j] + bias.values()[j];
  if (rg) {
    auto xd = x.ptr(), bd = bias.ptr(), od = out.ptr();
    TapeT<S>::current().push({od, [xd, bd, od, rows, f]() {
      const S* g = od->grad->data();
      if (xd->requires_grad) {
        xd->ensure_grad();
        S* dx = xd->grad->data();
        for (int64_t i = 0; i < rows * f; ++i) dx[i] += g[i];
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        S* db = bd->grad->data();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < f; ++j) db[j] += g[r * f + j];
      }
    }});
  }
  return out;
}

template <typename S>
TensorT<S> scale(const TensorT<S>& x, S c) {
  bool rg = detail::track<S>({&x});
  TensorT<S> out = TensorT<S>::zeros(x.shape(), rg);
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out.values()[i] = x.values()[i] * c;
  if (rg) {
    auto xd = x.ptr(), od = out.ptr();
    TapeT<S>::current().push({od, [xd, od, c, n]() {
      if (!xd->requires_grad) return;
      xd->ensure_grad();
      const S* g = od->grad->data();
      S* dx = xd->grad->data();
      for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * c;
    }});
  }
  return out;
}

template <typename S>
TensorT<S> sum(const TensorT<S>& x) {
  bool rg = detail::track<S>({&x});
  double acc = 0.0;
  for (S v : x.values()) acc += static_cast<double>(v);
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(acc), rg);
  if (rg) {
    auto xd = x.ptr(), od = out.ptr();
    TapeT<S>::current().push({od, [xd, od]() {
      if (!xd->requires_grad) return;
      xd->ensure_grad();
      const S g = (*od->grad)[0];
      for (S& d : *xd->grad) d += g;
    }});
  }
  return out;
}

template <typename S>
TensorT<S> mean(const TensorT<S>& x) {
  const S inv = S(1) / static_cast<S>(x.numel());
  return scale(sum(x), inv);
}

// Tanh-approximation GELU, as in the published GPT-2 reference.
template <typename S>
TensorT<S> gelu(const TensorT<S>& x) {
  constexpr double kSqrt2OverPi = 0.7978845608028653558798921198687;
  constexpr double kCubic = 0.044715;
  bool rg = detail::track<S>({&x});
  TensorT<S> out = TensorT<S>::zeros(x.shape(), rg);
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    double v = static_cast<double>(x.values()[i]);
    double t = std::tanh(kSqrt2OverPi * (v + kCubic * v * v * v));
    out.values()[i] = static_cast<S>(0.5 * v * (1.0 + t));
  }
  if (rg) {
    auto xd = x.ptr(), od = out.ptr();
    TapeT<S>::current().push({od, [xd, od, n]() {
      if (!xd->requires_grad) return;
      xd->ensure_grad();
      const S* g = od->grad->data();
      S* dx = xd->grad->data();
      for (int64_t i = 0; i < n; ++i) {
        double v = static_cast<double>(xd->values[i]);
        double u = kSqrt2OverPi * (v + kCubic * v * v * v);
        double t = std::tanh(u);
        double du = kSqrt2OverPi * (1.0 + 3.0 * kCubic * v * v);
        double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
        dx[i] += g[i] * static_cast<S>(d);
      }
    }});
  }
  return out;
}

// Softmax over the last axis, max-subtracted. Each slice sums to 1.
template <typename S>
TensorT<S> softmax(const TensorT<S>& x) {
  const int64_t c = x.shape().back();
  const int64_t rows = x.numel() / c;
  bool rg = detail::track<S>({&x});
  TensorT<S> out = TensorT<S>::zeros(x.shape(), rg);
  for (int64_t r = 0; r < rows; ++r) {
    const S* xi = x.values().data() + r * c;
    S* oi = out.values().data() + r * c;
    S mx = xi[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      double e = std::exp(static_cast<double>(xi[j] - mx));
      oi[j] = static_cast<S>(e);
      denom += e;
    }
    const S inv = static_cast<S>(1.0 / denom);
    for (int64_t j = 0; j < c; ++j) oi[j] *= inv;
  }
  if (rg) {
    auto xd = x.ptr(), od = out.ptr();
    TapeT<S>::current().push({od, [xd, od, rows, c]() {
      if (!xd->requires_grad) return;
      xd->ensure_grad();
      const S* g = od->grad->data();
      const S* p = od->values.data();
      S* dx = xd->grad->data();
      for (int64_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (int64_t j = 0; j < c; ++j)
          dot += static_cast<double>(g[r * c + j]) * p[r * c + j];
        for (int64_t j = 0; j < c; ++j)
          dx[r * c + j] +=
              p[r * c + j] * (g[r * c + j] - static_cast<S>(dot));
      }
    }});
  }
  return out;
}

// Per-last-axis standardization with population variance, then gamma*x + beta.
template <typename S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gamma,
                      const TensorT<S>& beta, S eps) {
  const int64_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d)
    throw std::invalid_argument("layer_norm: gamma/beta must have extent " +
                                std::to_string(d));
  if (eps < S(0)) throw std::invalid_argument("layer_norm: eps must be >= 0");
  const int64_t rows = x.numel() / d;
  bool rg = detail::track<S>({&x, &gamma, &beta});
  TensorT<S> out = TensorT<S>::zeros(x.shape(), rg);
  // x_hat and inv_std are also what backward needs; keep them when recording.
  std::vector<S> xhat(rg ? x.numel() : 0);
  std::vector<S> inv_std(rg ? rows : 0);
  for (int64_t r = 0; r < rows; ++r) {
    const S* xi = x.values().data() + r * d;
    S* oi = out.values().data() + r * d;
    double m = 0.0;
    for (int64_t j = 0; j < d; ++j) m += static_cast<double>(xi[j]);
    m /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      double c = static_cast<double>(xi[j]) - m;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double istd = 1.0 / std::sqrt(var + static_cast<double>(eps));
    for (int64_t j = 0; j < d; ++j) {
      S h = static_cast<S>((static_cast<double>(xi[j]) - m) * istd);
      if (rg) xhat[r * d + j] = h;
      oi[j] = gamma.values()[j] * h + beta.values()[j];
    }
    if (rg) inv_std[r] = static_cast<S>(istd);
  }
  if (rg) {
    auto xd = x.ptr(), gd = gamma.ptr(), bd = beta.ptr(), od = out.ptr();
    auto xh = std::make_shared<std::vector<S>>(std::move(xhat));
    auto is = std::make_shared<std::vector<S>>(std::move(inv_std));
    TapeT<S>::current().push({od, [xd, gd, bd, od, xh, is, rows, d]() {
      const S* g = od->grad->data();
      if (bd->requires_grad) {
        bd->ensure_grad();
        S* dbeta = bd->grad->data();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < d; ++j) dbeta[j] += g[r * d + j];
      }
      if (gd->requires_grad) {
        gd->ensure_grad();
        S* dgamma = gd->grad->data();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < d; ++j)
            dgamma[j] += g[r * d + j] * (*xh)[r * d + j];
      }
      if (xd->requires_grad) {
        xd->ensure_grad();
        S* dx = xd->grad->data();
        const S* gv = gd->values.data();
        for (int64_t r = 0; r < rows; ++r) {
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (int64_t j = 0; j < d; ++j) {
            double dh = static_cast<double>(g[r * d + j]) * gv[j];
            mean_dh += dh;
            mean_dh_h += dh * (*xh)[r * d + j];
          }
          mean_dh /= static_cast<double>(d);
          mean_dh_h /= static_cast<double>(d);
          const double istd = (*is)[r];
          for (int64_t j = 0; j < d; ++j) {
            double dh = static_cast<double>(g[r * d + j]) * gv[j];
            dx[r * d + j] += static_cast<S>(
                istd * (dh - mean_dh - (*xh)[r * d + j] * mean_dh_h));
          }
        }
      }
    }});
  }
  return out;
}

// Mean over the batch of -log p(target | logits), computed through
// log-sum-exp; the softmax output is never materialized on the forward path.
template <typename S>
TensorT<S> cross_entropy(const TensorT<S>& logits,
                         const std::vector<int32_t>& targets) {
  if (logits.rank() != 2)
    throw std::invalid_argument("cross_entropy: logits must be [BxC], got " +
                                shape_str(logits.shape()));
  const int64_t b = logits.dim(0);
  const int64_t c = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != b)
    throw std::invalid_argument("cross_entropy: batch size mismatch");
  for (int64_t i = 0; i < b; ++i)
    if (targets[i] < 0 || targets[i] >= c)
      throw std::out_of_range("cross_entropy: target index " +
                              std::to_string(targets[i]) + " out of range [0," +
                              std::to_string(c) + ") at row " +
                              std::to_string(i));
  bool rg = detail::track<S>({&logits});
  double total = 0.0;
  for (int64_t i = 0; i < b; ++i) {
    const S* z = logits.values().data() + i * c;
    S mx = z[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, z[j]);
    double se = 0.0;
    for (int64_t j = 0; j < c; ++j)
      se += std::exp(static_cast<double>(z[j] - mx));
    const double lse = static_cast<double>(mx) + std::log(se);
    total += lse - static_cast<double>(z[targets[i]]);
  }
  TensorT<S> out =
      TensorT<S>::scalar(static_cast<S>(total / static_cast<double>(b)), rg);
  if (rg) {
    auto zd = logits.ptr(), od = out.ptr();
    auto tgt = std::make_shared<std::vector<int32_t>>(targets);
    TapeT<S>::current().push({od, [zd, od, tgt, b, c]() {
      if (!zd->requires_grad) return;
      zd->ensure_grad();
      const S g = (*od->grad)[0] / static_cast<S>(b);
      S* dz = zd->grad->data();
      for (int64_t i = 0; i < b; ++i) {
        const S* z = zd->values.data() + i * c;
        S mx = z[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, z[j]);
        double se = 0.0;
        for (int64_t j = 0; j < c; ++j)
          se += std::exp(static_cast<double>(z[j] - mx));
        const double inv = 1.0 / se;
        for (int64_t j = 0; j < c; ++j) {
          double p = std::exp(static_cast<double>(z[j] - mx)) * inv;
          dz[i * c + j] +=
              g * static_cast<S>(p - ((*tgt)[i] == j ? 1.0 : 0.0));
        }
      }
    }});
  }
  return out;
}

// x[..., offset:offset+len] along the last axis.
template <typename S>
TensorT<S> slice_last(const TensorT<S>& x, int64_t offset, int64_t len) {
  const int64_t f = x.shape().back();
  if (offset < 0 || len <= 0 || offset + len > f)
    throw std::invalid_argument("slice_last: [" + std::to_string(offset) + "," +
                                std::to_string(offset + len) +
                                ") out of range for extent " +
                                std::to_string(f));
  const int64_t rows = x.numel() / f;
  Shape out_shape = x.shape();
  out_shape.back() = len;
  bool rg = detail::track<S>({&x});
  TensorT<S> out = TensorT<S>::zeros(std::move(out_shape), rg);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < len; ++j)
      out.values()[r * len + j] = x.values()[r * f + offset + j];
  if (rg) {
    auto xd = x.ptr(), od = out.ptr();
    TapeT<S>::current().push({od, [xd, od, rows, f, offset, len]() {
      if (!xd->requires_grad) return;
      xd->ensure_grad();
      const S* g = od->grad->data();
      S* dx = xd->grad->data();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < len; ++j)
          dx[r * f + offset + j] += g[r * len + j];
    }});
  }
  return out;
}

// [B,T,h*hd] -> [B*h,T,hd]
template <typename S>
TensorT<S> split_heads(const TensorT<S>& x, int64_t n_heads) {
  if (x.rank() != 3 || x.dim(2) % n_heads != 0)
    throw std::invalid_argument("split_heads: bad input " +
                                shape_str(x.shape()) + " for " +
                                std::to_string(n_heads) + " heads");
  const int64_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
  const int64_t hd = d / n_heads;
  bool rg = detail::track<S>({&x});
  TensorT<S> out = TensorT<S>::zeros({b * n_heads, t, hd}, rg);
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t h = 0; h < n_heads; ++h)
      for (int64_t ti = 0; ti < t; ++ti) {
        const S* src = x.values().data() + (bi * t + ti) * d + h * hd;
        S* dst = out.values().data() + ((bi * n_heads + h) * t + ti) * hd;
        for (int64_t j = 0; j < hd; ++j) dst[j] = src[j];
      }
  if (rg) {
    auto xd = x.ptr(), od = out.ptr();
    TapeT<S>::current().push({od, [xd, od, b, t, d, hd, n_heads]() {
      if (!xd->requires_grad) return;
      xd->ensure_grad();
      const S* g = od->grad->data();
      S* dx = xd->grad->data();
      for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t h = 0; h < n_heads; ++h)
          for (int64_t ti = 0; ti < t; ++ti) {
            const S* src = g + ((bi * n_heads + h) * t + ti) * hd;
            S* dst = dx + (bi * t + ti) * d + h * hd;
            for (int64_t j = 0; j < hd; ++j) dst[j] += src[j];
          }
    }});
  }
  return out;
}

// [B*h,T,hd] -> [B,T,h*hd], inverse of split_heads
template <typename S>
TensorT<S> merge_heads(const TensorT<S>& x, int64_t n_heads) {
  if (x.rank() != 3 || x.dim(0) % n_heads != 0)
    throw std::invalid_argument("merge_heads: bad input " +
                                shape_str(x.shape()));
  const int64_t b = x.dim(0) / n_heads, t = x.dim(1), hd = x.dim(2);
  const int64_t d = hd * n_heads;
  bool rg = detail::track<S>({&x});
  TensorT<S> out = TensorT<S>::zeros({b, t, d}, rg);
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t h = 0; h < n_heads; ++h)
      for (int64_t ti = 0; ti < t; ++ti) {
        const S* src = x.values().data() + ((bi * n_heads + h) * t + ti) * hd;
        S* dst = out.values().data() + (bi * t + ti) * d + h * hd;
        for (int64_t j = 0; j < hd; ++j) dst[j] = src[j];
      }
  if (rg) {
    auto xd = x.ptr(), od = out.ptr();
    TapeT<S>::current().push({od, [xd, od, b, t, d, hd, n_heads]() {
      if (!xd->requires_grad) return;
      xd->ensure_grad();
      const S* g = od->grad->data();
      S* dx = xd->grad->data();
      for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t h = 0; h < n_heads; ++h)
          for (int64_t ti = 0; ti < t; ++ti) {
            const S* src = g + (bi * t + ti) * d + h * hd;
            S* dst = dx + ((bi * n_heads + h) * t + ti) * hd;
            for (int64_t j = 0; j < hd; ++j) dst[j] += src[j];
          }
    }});
  }
  return out;
}

namespace detail {

// dot with four fixed-order accumulator lanes; deterministic and fast enough
// for attention's short reductions.
template <typename S>
inline S dot4(const S* a, const S* b, int64_t n) {
  S s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return ((s0 + s1) + (s2 + s3));
}

}  // namespace detail

// Batched a @ b^T: a [N,m,k], b [N,n,k] -> [N,m,n]. Hand-written fixed-order
// kernel; the reduction length k never depends on sequence padding.
template <typename S>
TensorT<S> bmm_nt(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(2))
    throw std::invalid_argument("bmm_nt: incompatible " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  const int64_t nb = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
  bool rg = detail::track<S>({&a, &b});
  TensorT<S> out = TensorT<S>::zeros({nb, m, n}, rg);
  for (int64_t bi = 0; bi < nb; ++bi) {
    const S* ab = a.values().data() + bi * m * k;
    const S* bb = b.values().data() + bi * n * k;
    S* ob = out.values().data() + bi * m * n;
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j)
        ob[i * n + j] = detail::dot4(ab + i * k, bb + j * k, k);
  }
  if (rg) {
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    TapeT<S>::current().push({od, [ad, bd, od, nb, m, n, k]() {
      const S* g = od->grad->data();
      if (ad->requires_grad) {
        ad->ensure_grad();
        S* da = ad->grad->data();
        for (int64_t bi = 0; bi < nb; ++bi)
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
              const S gij = g[(bi * m + i) * n + j];
              const S* brow = bd->values.data() + (bi * n + j) * k;
              S* darow = da + (bi * m + i) * k;
              for (int64_t c = 0; c < k; ++c) darow[c] += gij * brow[c];
            }
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        S* db = bd->grad->data();
        for (int64_t bi = 0; bi < nb; ++bi)
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
              const S gij = g[(bi * m + i) * n + j];
              const S* arow = ad->values.data() + (bi * m + i) * k;
              S* dbrow = db + (bi * n + j) * k;
              for (int64_t c = 0; c < k; ++c) dbrow[c] += gij * arow[c];
            }
      }
    }});
  }
  return out;
}

// Batched a @ b: a [N,m,k], b [N,k,n] -> [N,m,n]. Zero rows appended to the
// reduction axis (padded keys with zero probability) leave results bit-exact.
template <typename S>
TensorT<S> bmm_nn(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(1))
    throw std::invalid_argument("bmm_nn: incompatible " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  const int64_t nb = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  bool rg = detail::track<S>({&a, &b});
  TensorT<S> out = TensorT<S>::zeros({nb, m, n}, rg);
  for (int64_t bi = 0; bi < nb; ++bi) {
    const S* ab = a.values().data() + bi * m * k;
    const S* bb = b.values().data() + bi * k * n;
    S* ob = out.values().data() + bi * m * n;
    for (int64_t i = 0; i < m; ++i) {
      S* orow = ob + i * n;
      for (int64_t c = 0; c < k; ++c) {
        const S av = ab[i * k + c];
        if (av == S(0)) continue;  // exactness under zero-probability keys
        const S* brow = bb + c * n;
        for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
  if (rg) {
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    TapeT<S>::current().push({od, [ad, bd, od, nb, m, n, k]() {
      const S* g = od->grad->data();
      if (ad->requires_grad) {
        ad->ensure_grad();
        S* da = ad->grad->data();
        for (int64_t bi = 0; bi < nb; ++bi)
          for (int64_t i = 0; i < m; ++i)
            for (int64_t c = 0; c < k; ++c)
              da[(bi * m + i) * k + c] +=
                  detail::dot4(g + (bi * m + i) * n,
                               bd->values.data() + (bi * k + c) * n, n);
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        S* db = bd->grad->data();
        for (int64_t bi = 0; bi < nb; ++bi)
          for (int64_t c = 0; c < k; ++c)
            for (int64_t i = 0; i < m; ++i) {
              const S av = ad->values[(bi * m + i) * k + c];
              if (av == S(0)) continue;
              const S* grow = g + (bi * m + i) * n;
              S* dbrow = db + (bi * k + c) * n;
              for (int64_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
            }
      }
    }});
  }
  return out;
}

// Additive causal + key-padding mask for attention scores [B*h, Tq, Tk]:
// -inf wherever key > query or the key is a padding position.
template <typename S>
TensorT<S> apply_attention_mask(const TensorT<S>& scores,
                                const std::vector<uint8_t>& mask, int64_t batch,
                                int64_t n_heads) {
  if (scores.rank() != 3 || scores.dim(0) != batch * n_heads)
    throw std::invalid_argument("apply_attention_mask: bad scores " +
                                shape_str(scores.shape()));
  const int64_t tq = scores.dim(1), tk = scores.dim(2);
  if (static_cast<int64_t>(mask.size()) != batch * tk)
    throw std::invalid_argument("apply_attention_mask: mask size mismatch");
  const S neg_inf = -std::numeric_limits<S>::infinity();
  bool rg = detail::track<S>({&scores});
  TensorT<S> out = TensorT<S>::zeros(scores.shape(), rg);
  for (int64_t bi = 0; bi < batch; ++bi)
    for (int64_t h = 0; h < n_heads; ++h) {
      const int64_t base = ((bi * n_heads + h) * tq) * tk;
      for (int64_t q = 0; q < tq; ++q)
        for (int64_t kk = 0; kk < tk; ++kk) {
          const bool visible = kk <= q && mask[bi * tk + kk] != 0;
          out.values()[base + q * tk + kk] =
              visible ? scores.values()[base + q * tk + kk] : neg_inf;
        }
    }
  if (rg) {
    auto sd = scores.ptr(), od = out.ptr();
    auto mk = std::make_shared<std::vector<uint8_t>>(mask);
    TapeT<S>::current().push({od, [sd, od, mk, batch, n_heads, tq, tk]() {
      if (!sd->requires_grad) return;
      sd->ensure_grad();
      const S* g = od->grad->data();
      S* dx = sd->grad->data();
      for (int64_t bi = 0; bi < batch; ++bi)
        for (int64_t h = 0; h < n_heads; ++h) {
          const int64_t base = ((bi * n_heads + h) * tq) * tk;
          for (int64_t q = 0; q < tq; ++q)
            for (int64_t kk = 0; kk < tk; ++kk)
              if (kk <= q && (*mk)[bi * tk + kk] != 0)
                dx[base + q * tk + kk] += g[base + q * tk + kk];
        }
    }});
  }
  return out;
}

// table [V,d] gathered by ids -> [B,T,d]
template <typename S>
TensorT<S> embedding_lookup(const TensorT<S>& table,
                            const std::vector<int32_t>& ids, int64_t batch,
                            int64_t seq_len) {
  if (table.rank() != 2)
    throw std::invalid_argument("embedding_lookup: table must be 2-D");
  const int64_t v = table.dim(0), d = table.dim(1);
  if (static_cast<int64_t>(ids.size()) != batch * seq_len)
    throw std::invalid_argument("embedding_lookup: ids size mismatch");
  for (int32_t id : ids)
    if (id < 0 || id >= v)
      throw std::out_of_range("embedding_lookup: id " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(v));
  bool rg = detail::track<S>({&table});
  TensorT<S> out = TensorT<S>::zeros({batch, seq_len, d}, rg);
  for (int64_t i = 0; i < batch * seq_len; ++i) {
    const S* src = table.values().data() + static_cast<int64_t>(ids[i]) * d;
    S* dst = out.values().data() + i * d;
    for (int64_t j = 0; j < d; ++j) dst[j] = src[j];
  }
  if (rg) {
    auto td = table.ptr(), od = out.ptr();
    auto idv = std::make_shared<std::vector<int32_t>>(ids);
    const int64_t n = batch * seq_len;
    TapeT<S>::current().push({od, [td, od, idv, n, d]() {
      if (!td->requires_grad) return;
      td->ensure_grad();
      const S* g = od->grad->data();
      S* dt = td->grad->data();
      for (int64_t i = 0; i < n; ++i) {
        S* dst = dt + static_cast<int64_t>((*idv)[i]) * d;
        const S* src = g + i * d;
        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    }});
  }
  return out;
}

// x [B,T,d] + pos[t] broadcast over the batch
template <typename S>
TensorT<S> add_position(const TensorT<S>& x, const TensorT<S>& pos) {
  if (x.rank() != 3 || pos.rank() != 2 || x.dim(2) != pos.dim(1) ||
      x.dim(1) > pos.dim(0))
    throw std::invalid_argument("add_position: incompatible " +
                                shape_str(x.shape()) + " and " +
                                shape_str(pos.shape()));
  const int64_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
  bool rg = detail::track<S>({&x, &pos});
  TensorT<S> out = TensorT<S>::zeros(x.shape(), rg);
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ti = 0; ti < t; ++ti) {
      const S* xr = x.values().data() + (bi * t + ti) * d;
      const S* pr = pos.values().data() + ti * d;
      S* orow = out.values().data() + (bi * t + ti) * d;
      for (int64_t j = 0; j < d; ++j) orow[j] = xr[j] + pr[j];
    }
  if (rg) {
    auto xd = x.ptr(), pd = pos.ptr(), od = out.ptr();
    TapeT<S>::current().push({od, [xd, pd, od, b, t, d]() {
      const S* g = od->grad->data();
      if (xd->requires_grad) {
        xd->ensure_grad();
        S* dx = xd->grad->data();
        for (int64_t i = 0; i < b * t * d; ++i) dx[i] += g[i];
      }
      if (pd->requires_grad) {
        pd->ensure_grad();
        S* dp = pd->grad->data();
        for (int64_t bi = 0; bi < b; ++bi)
          for (int64_t ti = 0; ti < t; ++ti) {
            const S* src = g + (bi * t + ti) * d;
            S* dst = dp + ti * d;
            for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
          }
      }
    }});
  }
  return out;
}

// H [B,T,d] -> rows H[i, index[i], :] as [B,d]
template <typename S>
TensorT<S> select_rows(const TensorT<S>& h, const std::vector<int32_t>& index) {
  if (h.rank() != 3)
    throw std::invalid_argument("select_rows: expects [BxTxd], got " +
                                shape_str(h.shape()));
  const int64_t b = h.dim(0), t = h.dim(1), d = h.dim(2);
  if (static_cast<int64_t>(index.size()) != b)
    throw std::invalid_argument("select_rows: index size mismatch");
  for (int32_t ix : index)
    if (ix < 0 || ix >= t)
      throw std::out_of_range("select_rows: index " + std::to_string(ix) +
                              " outside sequence of length " +
                              std::to_string(t));
  bool rg = detail::track<S>({&h});
  TensorT<S> out = TensorT<S>::zeros({b, d}, rg);
  for (int64_t i = 0; i < b; ++i) {
    const S* src = h.values().data() + (i * t + index[i]) * d;
    S* dst = out.values().data() + i * d;
    for (int64_t j = 0; j < d; ++j) dst[j] = src[j];
  }
  if (rg) {
    auto hd = h.ptr(), od = out.ptr();
    auto idx = std::make_shared<std::vector<int32_t>>(index);
    TapeT<S>::current().push({od, [hd, od, idx, b, t, d]() {
      if (!hd->requires_grad) return;
      hd->ensure_grad();
      const S* g = od->grad->data();
      S* dh = hd->grad->data();
      for (int64_t i = 0; i < b; ++i) {
        S* dst = dh + (i * t + (*idx)[i]) * d;
        const S* src = g + i * d;
        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    }});
  }
  return out;
}

// Inverted dropout; rate 0 is the identity (no op recorded, no copy).
template <typename S>
TensorT<S> dropout(const TensorT<S>& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (rate == 0.0) return x;
  const int64_t n = x.numel();
  auto keep = std::make_shared<std::vector<uint8_t>>(n);
  const S inv_keep = static_cast<S>(1.0 / (1.0 - rate));
  bool rg = detail::track<S>({&x});
  TensorT<S> out = TensorT<S>::zeros(x.shape(), rg);
  for (int64_t i = 0; i < n; ++i) {
    (*keep)[i] = rng.uniform() >= rate ? 1 : 0;
    out.values()[i] = (*keep)[i] ? x.values()[i] * inv_keep : S(0);
  }
  if (rg) {
    auto xd = x.ptr(), od = out.ptr();
    TapeT<S>::current().push({od, [xd, od, keep, inv_keep, n]() {
      if (!xd->requires_grad) return;
      xd->ensure_grad();
      const S* g = od->grad->data();
      S* dx = xd->grad->data();
      for (int64_t i = 0; i < n; ++i)
        if ((*keep)[i]) dx[i] += g[i] * inv_keep;
    }});
  }
  return out;
}

// Library default precision.
using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using NoGradGuard = NoGradGuardT<float>;

}  // namespace seltune
