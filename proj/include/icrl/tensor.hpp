#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "icrl/threadpool.hpp"

namespace icrl::nn {

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// When true, every primitive validates that its output is finite.
inline bool& debug_check_finite() {
  static bool flag = false;
  return flag;
}

inline std::string shape_str(std::span<const int64_t> shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

namespace detail {

/// Size-keyed buffer recycler. Training repeats identical tensor shapes every
/// step; recycling avoids mmap churn and page-fault stalls on the large
/// attention buffers.
class BlockPool {
 public:
  static BlockPool& instance() {
    static BlockPool pool;
    return pool;
  }

  void* get(size_t bytes) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = free_.find(bytes);
      if (it != free_.end() && !it->second.empty()) {
        void* p = it->second.back();
        it->second.pop_back();
        held_ -= bytes;
        return p;
      }
    }
    return ::operator new(bytes);
  }

  void put(void* p, size_t bytes) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (held_ + bytes <= kMaxHeldBytes) {
        free_[bytes].push_back(p);
        held_ += bytes;
        return;
      }
    }
    ::operator delete(p);
  }

 private:
  static constexpr size_t kMaxHeldBytes = size_t{2} << 30;
  std::mutex mutex_;
  std::unordered_map<size_t, std::vector<void*>> free_;
  size_t held_ = 0;
};

template <typename Real>
std::shared_ptr<Real[]> pool_alloc(int64_t count, bool zero) {
  const size_t bytes = sizeof(Real) * static_cast<size_t>(count);
  Real* p = static_cast<Real*>(BlockPool::instance().get(bytes));
  if (zero) std::memset(p, 0, bytes);
  return std::shared_ptr<Real[]>(p, [bytes](Real* q) { BlockPool::instance().put(q, bytes); });
}

}  // namespace detail

/// Dense row-major tensor. Copies share the underlying buffer; tensors are
/// treated as immutable once produced by a primitive (the optimizer mutates
/// parameter tensors in place through data()).
template <typename Real>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    size_ = 1;
    for (int64_t d : shape_) {
      if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape_));
      size_ *= d;
    }
    data_ = detail::pool_alloc<Real>(size_, /*zero=*/true);
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  /// Skips zero-fill; caller must overwrite every element.
  static Tensor uninitialized(std::vector<int64_t> shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.size_ = 1;
    for (int64_t d : t.shape_) {
      if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(t.shape_));
      t.size_ *= d;
    }
    t.data_ = detail::pool_alloc<Real>(t.size_, /*zero=*/false);
    return t;
  }

  static Tensor full(std::vector<int64_t> shape, Real v) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size_; ++i) t.data_[i] = v;
    return t;
  }

  static Tensor from(std::vector<int64_t> shape, const std::vector<Real>& values) {
    Tensor t(std::move(shape));
    if (static_cast<int64_t>(values.size()) != t.size_)
      throw ShapeError("value count does not match shape " + shape_str(t.shape_));
    std::memcpy(t.data_.get(), values.data(), sizeof(Real) * values.size());
    return t;
  }

  static Tensor scalar(Real v) { return full({1}, v); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i < 0 ? ndim() + i : i)]; }
  int64_t size() const { return size_; }
  bool defined() const { return data_ != nullptr; }

  Real* data() { return data_.get(); }
  const Real* data() const { return data_.get(); }
  Real& operator[](int64_t i) { return data_[i]; }
  Real operator[](int64_t i) const { return data_[i]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  /// View with a new shape over the same buffer (sizes must match).
  Tensor reshape(std::vector<int64_t> shape) const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    if (n != size_)
      throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) + " changes size");
    Tensor t;
    t.shape_ = std::move(shape);
    t.size_ = size_;
    t.data_ = data_;
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.size_ = size_;
    t.data_ = detail::pool_alloc<Real>(size_, /*zero=*/false);
    std::memcpy(t.data_.get(), data_.get(), sizeof(Real) * static_cast<size_t>(size_));
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t(shape_);
    for (int64_t i = 0; i < size_; ++i) t.data()[i] = static_cast<U>(data_[i]);
    return t;
  }

 private:
  template <typename U>
  friend class Tensor;

  std::vector<int64_t> shape_;
  int64_t size_ = 0;
  std::shared_ptr<Real[]> data_;
};

namespace detail {

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <typename Real>
void finite_trap(const Tensor<Real>& t, const char* op) {
  if (!debug_check_finite()) return;
  for (int64_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]))
      throw NumericError(std::string(op) + ": non-finite output at flat index " + std::to_string(i));
  }
}

/// Vectorizable exp for the float path (Cephes-style polynomial; ~2e-7
/// relative error). The double path keeps libm exp so finite-difference
/// checks probe a smooth function.
inline float fast_exp(float x) {
  constexpr float kLog2e = 1.442695040f;
  constexpr float kC1 = 0.693359375f;        // ln2 high part
  constexpr float kC2 = -2.12194440e-4f;     // ln2 low part
  x = x < 87.0f ? x : 87.0f;
  x = x > -87.0f ? x : -87.0f;
  const float magic = 12582912.0f;           // 1.5 * 2^23, rounds to nearest int
  float fn = x * kLog2e + magic;
  const int32_t n = static_cast<int32_t>(std::bit_cast<uint32_t>(fn) & 0x7fffffu) - 0x400000;
  fn -= magic;
  float r = x - fn * kC1;
  r -= fn * kC2;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * r * r + r + 1.0f;
  const uint32_t bits = std::bit_cast<uint32_t>(p) + (static_cast<uint32_t>(n) << 23);
  return std::bit_cast<float>(bits);
}

inline double fast_exp(double x) { return std::exp(x); }

inline float fast_tanh(float x) {
  // tanh(x) = 1 - 2 / (exp(2x) + 1)
  if (x > 9.0f) return 1.0f;
  if (x < -9.0f) return -1.0f;
  return 1.0f - 2.0f / (fast_exp(2.0f * x) + 1.0f);
}

inline double fast_tanh(double x) { return std::tanh(x); }

// Reductions with 16 independent accumulator lanes so the compiler can
// vectorize without reassociation flags. Fixed lane layout keeps results
// deterministic; these are the only reduction orders used in hot kernels.
template <typename Real>
Real vsum(const Real* a, int64_t n) {
  Real lanes[16] = {};
  int64_t i = 0;
  for (; i + 16 <= n; i += 16)
    for (int u = 0; u < 16; ++u) lanes[u] += a[i + u];
  Real acc = 0;
  for (; i < n; ++i) acc += a[i];
  for (int u = 0; u < 16; ++u) acc += lanes[u];
  return acc;
}

template <typename Real>
Real vdot(const Real* a, const Real* b, int64_t n) {
  Real lanes[16] = {};
  int64_t i = 0;
  for (; i + 16 <= n; i += 16)
    for (int u = 0; u < 16; ++u) lanes[u] += a[i + u] * b[i + u];
  Real acc = 0;
  for (; i < n; ++i) acc += a[i] * b[i];
  for (int u = 0; u < 16; ++u) acc += lanes[u];
  return acc;
}

template <typename Real>
Real vmax(const Real* a, int64_t n) {
  Real m = a[0];
  int64_t i = 0;
  if (n >= 16) {
    Real lanes[16];
    for (int u = 0; u < 16; ++u) lanes[u] = a[u];
    for (i = 16; i + 16 <= n; i += 16)
      for (int u = 0; u < 16; ++u) lanes[u] = std::max(lanes[u], a[i + u]);
    for (int u = 0; u < 16; ++u) m = std::max(m, lanes[u]);
  }
  for (; i < n; ++i) m = std::max(m, a[i]);
  return m;
}

// C[M,N] = A[M,K] * B[K,N]; rows split across the pool, the K reduction is
// sequential per row (4-way unrolled) so the result is independent of
// thread count.
template <typename Real>
void matmul_2d(const Real* a, const Real* b, Real* c, int64_t m, int64_t k, int64_t n) {
  auto rows = [&](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      Real* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] = Real(0);
      const Real* arow = a + i * k;
      int64_t kk = 0;
      for (; kk + 4 <= k; kk += 4) {
        const Real a0 = arow[kk], a1 = arow[kk + 1], a2 = arow[kk + 2], a3 = arow[kk + 3];
        const Real* b0 = b + kk * n;
        const Real* b1 = b0 + n;
        const Real* b2 = b1 + n;
        const Real* b3 = b2 + n;
        for (int64_t j = 0; j < n; ++j)
          crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
      }
      for (; kk < k; ++kk) {
        const Real av = arow[kk];
        const Real* brow = b + kk * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  };
  if (m * k * n >= (1 << 16)) {
    parallel_for(m, rows);
  } else {
    rows(0, m);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives (forward only; autodiff wraps these with analytic backwards).
// ---------------------------------------------------------------------------

/// matmul(A[..., m, k], B[k, n]) -> [..., m, n]. Leading dims are folded.
template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.ndim() < 1 || b.ndim() != 2 || a.dim(-1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int64_t k = a.dim(-1), n = b.dim(1), rows = a.size() / k;
  std::vector<int64_t> out_shape = a.shape();
  out_shape.back() = n;
  Tensor<Real> out = Tensor<Real>::uninitialized(out_shape);
  detail::matmul_2d(a.data(), b.data(), out.data(), rows, k, n);
  detail::finite_trap(out, "matmul");
  return out;
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<Real> out = Tensor<Real>::uninitialized(a.shape());
  const Real* pa = a.data();
  const Real* pb = b.data();
  Real* po = out.data();
  for (int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] + pb[i];
  detail::finite_trap(out, "add");
  return out;
}

/// a[..., n] + bias[n]
template <typename Real>
Tensor<Real> add_bias(const Tensor<Real>& a, const Tensor<Real>& bias) {
  if (bias.ndim() != 1 || bias.dim(0) != a.dim(-1))
    throw ShapeError("add_bias: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(bias.shape()));
  const int64_t n = bias.dim(0), rows = a.size() / n;
  Tensor<Real> out = Tensor<Real>::uninitialized(a.shape());
  const Real* pa = a.data();
  const Real* pb = bias.data();
  Real* po = out.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < n; ++j) po[r * n + j] = pa[r * n + j] + pb[j];
  detail::finite_trap(out, "add_bias");
  return out;
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real s) {
  Tensor<Real> out = Tensor<Real>::uninitialized(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a[i] * s;
  detail::finite_trap(out, "scale");
  return out;
}

/// Concatenates along the last dimension; all leading dims must agree.
template <typename Real>
Tensor<Real> concat_last(std::span<const Tensor<Real>> parts) {
  if (parts.empty()) throw ShapeError("concat_last: no inputs");
  std::vector<int64_t> lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  int64_t total = 0;
  for (const auto& p : parts) {
    std::vector<int64_t> pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead)
      throw ShapeError("concat_last: leading dims mismatch " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(p.shape()));
    total += p.dim(-1);
  }
  std::vector<int64_t> out_shape = parts[0].shape();
  out_shape.back() = total;
  Tensor<Real> out = Tensor<Real>::uninitialized(out_shape);
  const int64_t rows = out.size() / total;
  int64_t offset = 0;
  for (const auto& p : parts) {
    const int64_t w = p.dim(-1);
    for (int64_t r = 0; r < rows; ++r)
      std::memcpy(out.data() + r * total + offset, p.data() + r * w, sizeof(Real) * w);
    offset += w;
  }
  detail::finite_trap(out, "concat_last");
  return out;
}

template <typename Real>
std::vector<Tensor<Real>> split_last(const Tensor<Real>& a, std::span<const int64_t> widths) {
  int64_t total = 0;
  for (int64_t w : widths) total += w;
  if (total != a.dim(-1))
    throw ShapeError("split_last: widths sum " + std::to_string(total) + " != last dim of " +
                     shape_str(a.shape()));
  const int64_t rows = a.size() / a.dim(-1);
  std::vector<Tensor<Real>> parts;
  int64_t offset = 0;
  for (int64_t w : widths) {
    std::vector<int64_t> shape = a.shape();
    shape.back() = w;
    Tensor<Real> part = Tensor<Real>::uninitialized(shape);
    for (int64_t r = 0; r < rows; ++r)
      std::memcpy(part.data() + r * w, a.data() + r * a.dim(-1) + offset, sizeof(Real) * w);
    offset += w;
    parts.push_back(std::move(part));
  }
  return parts;
}

/// [d0, d1, d2, d3] -> [d0, d2, d1, d3]; used to split/merge attention heads.
template <typename Real>
Tensor<Real> transpose_12(const Tensor<Real>& a) {
  if (a.ndim() != 4) throw ShapeError("transpose_12: need 4-d tensor, got " + shape_str(a.shape()));
  const int64_t d0 = a.dim(0), d1 = a.dim(1), d2 = a.dim(2), d3 = a.dim(3);
  Tensor<Real> out = Tensor<Real>::uninitialized({d0, d2, d1, d3});
  for (int64_t i0 = 0; i0 < d0; ++i0)
    for (int64_t i1 = 0; i1 < d1; ++i1)
      for (int64_t i2 = 0; i2 < d2; ++i2)
        std::memcpy(out.data() + ((i0 * d2 + i2) * d1 + i1) * d3,
                    a.data() + ((i0 * d1 + i1) * d2 + i2) * d3, sizeof(Real) * d3);
  return out;
}

constexpr double kLayerNormEps = 1e-5;

/// Normalizes over the last dimension, then applies gain/offset.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& offset) {
  const int64_t n = x.dim(-1);
  if (gain.ndim() != 1 || gain.dim(0) != n || offset.ndim() != 1 || offset.dim(0) != n)
    throw ShapeError("layer_norm: gain/offset must be [" + std::to_string(n) + "], got " +
                     shape_str(gain.shape()) + " and " + shape_str(offset.shape()));
  const int64_t rows = x.size() / n;
  Tensor<Real> out = Tensor<Real>::uninitialized(x.shape());
  const Real* px = x.data();
  const Real* pg = gain.data();
  const Real* pb = offset.data();
  Real* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const Real* row = px + r * n;
    const Real mu = detail::vsum(row, n) / static_cast<Real>(n);
    Real var = 0;
    for (int64_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<Real>(n);
    const Real inv = Real(1) / std::sqrt(var + static_cast<Real>(kLayerNormEps));
    for (int64_t j = 0; j < n; ++j) po[r * n + j] = (row[j] - mu) * inv * pg[j] + pb[j];
  }
  detail::finite_trap(out, "layer_norm");
  return out;
}

/// GELU, tanh approximation.
template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
  Tensor<Real> out = Tensor<Real>::uninitialized(x.shape());
  const Real* px = x.data();
  Real* po = out.data();
  constexpr Real kA = Real(0.7978845608028654);  // sqrt(2/pi)
  constexpr Real kB = Real(0.044715);
  for (int64_t i = 0; i < x.size(); ++i) {
    const Real v = px[i];
    po[i] = Real(0.5) * v * (Real(1) + detail::fast_tanh(kA * (v + kB * v * v * v)));
  }
  detail::finite_trap(out, "gelu");
  return out;
}

template <typename Real>
Tensor<Real> softmax_last(const Tensor<Real>& x) {
  const int64_t n = x.dim(-1), rows = x.size() / n;
  Tensor<Real> out = Tensor<Real>::uninitialized(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const Real* row = x.data() + r * n;
    Real* orow = out.data() + r * n;
    const Real mx = detail::vmax(row, n);
    for (int64_t j = 0; j < n; ++j) orow[j] = detail::fast_exp(row[j] - mx);
    const Real inv = Real(1) / detail::vsum(orow, n);
    for (int64_t j = 0; j < n; ++j) orow[j] *= inv;
  }
  detail::finite_trap(out, "softmax");
  return out;
}

/// ALiBi slopes m_h = 2^(-8h/H) for h = 1..H.
inline std::vector<double> alibi_slopes(int num_heads) {
  std::vector<double> m(static_cast<size_t>(num_heads));
  for (int h = 1; h <= num_heads; ++h)
    m[static_cast<size_t>(h - 1)] = std::pow(2.0, -8.0 * h / num_heads);
  return m;
}

/// bias[h, i, j] = -m_h * (q_pos[i] - k_pos[j]) where k_pos[j] <= q_pos[i],
/// else -inf. Depends on position differences only.
template <typename Real>
Tensor<Real> alibi_bias(int num_heads, std::span<const int64_t> q_pos,
                        std::span<const int64_t> k_pos) {
  const auto slopes = alibi_slopes(num_heads);
  const int64_t q = static_cast<int64_t>(q_pos.size()), k = static_cast<int64_t>(k_pos.size());
  Tensor<Real> bias({num_heads, q, k});
  constexpr Real kNegInf = -std::numeric_limits<Real>::infinity();
  for (int h = 0; h < num_heads; ++h) {
    const Real m = static_cast<Real>(slopes[static_cast<size_t>(h)]);
    Real* plane = bias.data() + static_cast<int64_t>(h) * q * k;
    for (int64_t i = 0; i < q; ++i)
      for (int64_t j = 0; j < k; ++j)
        plane[i * k + j] =
            k_pos[j] <= q_pos[i] ? -m * static_cast<Real>(q_pos[i] - k_pos[j]) : kNegInf;
  }
  return bias;
}

/// Causal self-attention. q,k,v: [B,H,T,D]; bias: [H,T,T] added to the
/// pre-softmax scores. Positions j > i are masked regardless of bias.
/// Returns the output and the attention probabilities (kept for backward).
template <typename Real>
std::pair<Tensor<Real>, Tensor<Real>> causal_attention_with_probs(const Tensor<Real>& q,
                                                                  const Tensor<Real>& k,
                                                                  const Tensor<Real>& v,
                                                                  const Tensor<Real>& bias) {
  if (q.ndim() != 4) throw ShapeError("causal_attention: q must be [B,H,T,D], got " + shape_str(q.shape()));
  detail::require_same_shape(q, k, "causal_attention(q,k)");
  detail::require_same_shape(q, v, "causal_attention(q,v)");
  const int64_t B = q.dim(0), H = q.dim(1), T = q.dim(2), D = q.dim(3);
  if (bias.ndim() != 3 || bias.dim(0) != H || bias.dim(1) != T || bias.dim(2) != T)
    throw ShapeError("causal_attention: bias must be [H,T,T], got " + shape_str(bias.shape()));
  Tensor<Real> out = Tensor<Real>::uninitialized({B, H, T, D});
  Tensor<Real> probs = Tensor<Real>::uninitialized({B, H, T, T});
  const Real inv_sqrt_d = Real(1) / std::sqrt(static_cast<Real>(D));
  parallel_for(B * H, [&](int64_t bh0, int64_t bh1) {
    // [D,T] copies of K and V keep the j loops unit-stride.
    std::vector<Real> kt(static_cast<size_t>(D * T)), vt(static_cast<size_t>(D * T));
    for (int64_t bh = bh0; bh < bh1; ++bh) {
      const int64_t h = bh % H;
      const Real* qp = q.data() + bh * T * D;
      const Real* kp = k.data() + bh * T * D;
      const Real* vp = v.data() + bh * T * D;
      const Real* bp = bias.data() + h * T * T;
      Real* op = out.data() + bh * T * D;
      Real* pp = probs.data() + bh * T * T;
      for (int64_t j = 0; j < T; ++j)
        for (int64_t d = 0; d < D; ++d) {
          kt[static_cast<size_t>(d * T + j)] = kp[j * D + d];
          vt[static_cast<size_t>(d * T + j)] = vp[j * D + d];
        }
      for (int64_t i = 0; i < T; ++i) {
        Real* prow = pp + i * T;
        const Real* qi = qp + i * D;
        const Real* brow = bp + i * T;
        for (int64_t j = 0; j <= i; ++j) prow[j] = brow[j];
        for (int64_t d = 0; d < D; ++d) {
          const Real qd = qi[d] * inv_sqrt_d;
          const Real* krow = kt.data() + d * T;
          for (int64_t j = 0; j <= i; ++j) prow[j] += qd * krow[j];
        }
        const Real mx = detail::vmax(prow, i + 1);
        for (int64_t j = 0; j <= i; ++j) prow[j] = detail::fast_exp(prow[j] - mx);
        const Real inv = Real(1) / detail::vsum(prow, i + 1);
        for (int64_t j = 0; j <= i; ++j) prow[j] *= inv;
        for (int64_t j = i + 1; j < T; ++j) prow[j] = 0;
        Real* orow = op + i * D;
        for (int64_t d = 0; d < D; ++d)
          orow[d] = detail::vdot(prow, vt.data() + d * T, i + 1);
      }
    }
  });
  detail::finite_trap(out, "causal_attention");
  return {std::move(out), std::move(probs)};
}

template <typename Real>
Tensor<Real> causal_attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                              const Tensor<Real>& bias) {
  return causal_attention_with_probs(q, k, v, bias).first;
}

/// Mean over every element of the squared difference.
template <typename Real>
Real mse(const Tensor<Real>& pred, const Tensor<Real>& target) {
  detail::require_same_shape(pred, target, "mse");
  double acc = 0;
  for (int64_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  return static_cast<Real>(acc / static_cast<double>(pred.size()));
}

template <typename Real>
Real reduce_sum(const Tensor<Real>& a) {
  Real acc = 0;
  for (int64_t i = 0; i < a.size(); ++i) acc += a[i];
  return acc;
}

}  // namespace icrl::nn
