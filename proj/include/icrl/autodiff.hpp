#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "icrl/tensor.hpp"

namespace icrl::nn {

/// Reverse-mode tape. Operations append nodes in topological order (the
/// recording order), so backward() is a single reverse sweep. Leaves created
/// with requires_grad accumulate gradients; everything else is transient.
template <typename Real>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Var leaf(Tensor<Real> value, bool requires_grad) {
    return push(std::move(value), requires_grad, {});
  }

  Var constant(Tensor<Real> value) { return leaf(std::move(value), false); }

  const Tensor<Real>& value(Var v) const { return nodes_[check(v)].value; }

  /// Gradient of the last backward() pass; zeros if the node was not reached.
  const Tensor<Real>& grad(Var v) {
    Node& n = nodes_[check(v)];
    if (!n.grad.defined()) n.grad = Tensor<Real>::zeros(n.value.shape());
    return n.grad;
  }

  Var matmul(Var a, Var b) {
    Tensor<Real> av = value(a), bv = value(b);
    Var out = push(nn::matmul(av, bv), needs(a) || needs(b), [this, a, b, av, bv](const Tensor<Real>& g) {
      const int64_t k = av.dim(-1), n = bv.dim(1), rows = av.size() / k;
      if (needs(a)) {
        // dA = dC * B^T
        Tensor<Real> bt({n, k});
        for (int64_t i = 0; i < k; ++i)
          for (int64_t j = 0; j < n; ++j) bt.data()[j * k + i] = bv[i * n + j];
        Tensor<Real> da(av.shape());
        detail::matmul_2d(g.data(), bt.data(), da.data(), rows, n, k);
        accumulate(a, da);
      }
      if (needs(b)) {
        // dB = A^T * dC
        Tensor<Real> at({k, rows});
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t i = 0; i < k; ++i) at.data()[i * rows + r] = av[r * k + i];
        Tensor<Real> db(bv.shape());
        detail::matmul_2d(at.data(), g.data(), db.data(), k, rows, n);
        accumulate(b, db);
      }
    });
    return out;
  }

  Var add(Var a, Var b) {
    return push(nn::add(value(a), value(b)), needs(a) || needs(b), [this, a, b](const Tensor<Real>& g) {
      if (needs(a)) accumulate(a, g);
      if (needs(b)) accumulate(b, g);
    });
  }

  Var add_bias(Var a, Var bias) {
    Tensor<Real> av = value(a);
    return push(nn::add_bias(av, value(bias)), needs(a) || needs(bias),
                [this, a, bias, av](const Tensor<Real>& g) {
                  if (needs(a)) accumulate(a, g);
                  if (needs(bias)) {
                    const int64_t n = av.dim(-1), rows = av.size() / n;
                    Tensor<Real> db({n});
                    for (int64_t r = 0; r < rows; ++r)
                      for (int64_t j = 0; j < n; ++j) db.data()[j] += g[r * n + j];
                    accumulate(bias, db);
                  }
                });
  }

  Var scale(Var a, Real s) {
    return push(nn::scale(value(a), s), needs(a), [this, a, s](const Tensor<Real>& g) {
      if (needs(a)) accumulate(a, nn::scale(g, s));
    });
  }

  Var concat_last(const std::vector<Var>& parts) {
    std::vector<Tensor<Real>> vals;
    bool any = false;
    for (Var p : parts) {
      vals.push_back(value(p));
      any = any || needs(p);
    }
    Tensor<Real> out = nn::concat_last(std::span<const Tensor<Real>>(vals));
    std::vector<int64_t> widths;
    for (const auto& v : vals) widths.push_back(v.dim(-1));
    return push(std::move(out), any, [this, parts, widths](const Tensor<Real>& g) {
      auto slices = nn::split_last(g, std::span<const int64_t>(widths));
      for (size_t i = 0; i < parts.size(); ++i)
        if (needs(parts[i])) accumulate(parts[i], slices[i]);
    });
  }

  std::vector<Var> split_last(Var a, std::span<const int64_t> widths) {
    auto parts = nn::split_last(value(a), widths);
    const int64_t total = value(a).dim(-1);
    std::vector<Var> out;
    int64_t offset = 0;
    for (auto& part : parts) {
      const int64_t w = part.dim(-1), off = offset;
      out.push_back(push(std::move(part), needs(a), [this, a, off, total, w](const Tensor<Real>& g) {
        if (!needs(a)) return;
        Tensor<Real> da(valueShape(a));
        const int64_t rows = da.size() / total;
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < w; ++j) da.data()[r * total + off + j] = g[r * w + j];
        accumulate(a, da);
      }));
      offset += w;
    }
    return out;
  }

  Var transpose_12(Var a) {
    return push(nn::transpose_12(value(a)), needs(a), [this, a](const Tensor<Real>& g) {
      if (needs(a)) accumulate(a, nn::transpose_12(g));
    });
  }

  Var reshape(Var a, std::vector<int64_t> shape) {
    Tensor<Real> out = value(a).reshape(shape);
    return push(std::move(out), needs(a), [this, a](const Tensor<Real>& g) {
      if (needs(a)) accumulate(a, g.reshape(valueShape(a)));
    });
  }

  Var layer_norm(Var x, Var gain, Var offset) {
    Tensor<Real> xv = value(x), gv = value(gain);
    Tensor<Real> out = nn::layer_norm(xv, gv, value(offset));
    return push(std::move(out), needs(x) || needs(gain) || needs(offset),
                [this, x, gain, offset, xv, gv](const Tensor<Real>& g) {
                  const int64_t n = xv.dim(-1), rows = xv.size() / n;
                  Tensor<Real> dx(xv.shape()), dg({n}), db({n});
                  for (int64_t r = 0; r < rows; ++r) {
                    const Real* xr = xv.data() + r * n;
                    const Real* gr = g.data() + r * n;
                    Real mu = 0;
                    for (int64_t j = 0; j < n; ++j) mu += xr[j];
                    mu /= static_cast<Real>(n);
                    Real var = 0;
                    for (int64_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
                    var /= static_cast<Real>(n);
                    const Real inv = Real(1) / std::sqrt(var + static_cast<Real>(kLayerNormEps));
                    Real mean_dxh = 0, mean_dxh_xh = 0;
                    for (int64_t j = 0; j < n; ++j) {
                      const Real xh = (xr[j] - mu) * inv;
                      const Real dxh = gr[j] * gv[j];
                      dg.data()[j] += gr[j] * xh;
                      db.data()[j] += gr[j];
                      mean_dxh += dxh;
                      mean_dxh_xh += dxh * xh;
                    }
                    mean_dxh /= static_cast<Real>(n);
                    mean_dxh_xh /= static_cast<Real>(n);
                    for (int64_t j = 0; j < n; ++j) {
                      const Real xh = (xr[j] - mu) * inv;
                      dx.data()[r * n + j] = inv * (gr[j] * gv[j] - mean_dxh - xh * mean_dxh_xh);
                    }
                  }
                  if (needs(x)) accumulate(x, dx);
                  if (needs(gain)) accumulate(gain, dg);
                  if (needs(offset)) accumulate(offset, db);
                });
  }

  Var gelu(Var a) {
    Tensor<Real> av = value(a);
    Tensor<Real> out = nn::gelu(av);
    return push(std::move(out), needs(a), [this, a, av](const Tensor<Real>& g) {
      if (!needs(a)) return;
      constexpr Real kA = Real(0.7978845608028654);
      constexpr Real kB = Real(0.044715);
      Tensor<Real> da(av.shape());
      for (int64_t i = 0; i < av.size(); ++i) {
        const Real x = av[i];
        const Real t = detail::fast_tanh(kA * (x + kB * x * x * x));
        const Real du = kA * (Real(1) + Real(3) * kB * x * x);
        da.data()[i] = g[i] * (Real(0.5) * (Real(1) + t) + Real(0.5) * x * (Real(1) - t * t) * du);
      }
      accumulate(a, da);
    });
  }

  Var softmax_last(Var a) {
    Tensor<Real> out = nn::softmax_last(value(a));
    Tensor<Real> probs = out;  // shared buffer, kept for backward
    return push(std::move(out), needs(a), [this, a, probs](const Tensor<Real>& g) {
      if (!needs(a)) return;
      const int64_t n = probs.dim(-1), rows = probs.size() / n;
      Tensor<Real> da(probs.shape());
      for (int64_t r = 0; r < rows; ++r) {
        const Real* p = probs.data() + r * n;
        const Real* gr = g.data() + r * n;
        Real dot = 0;
        for (int64_t j = 0; j < n; ++j) dot += gr[j] * p[j];
        for (int64_t j = 0; j < n; ++j) da.data()[r * n + j] = p[j] * (gr[j] - dot);
      }
      accumulate(a, da);
    });
  }

  /// q,k,v: [B,H,T,D]; bias is a constant [H,T,T] (no gradient).
  Var causal_attention(Var q, Var k, Var v, const Tensor<Real>& bias) {
    Tensor<Real> qv = value(q), kv = value(k), vv = value(v);
    auto [out, probs] = nn::causal_attention_with_probs(qv, kv, vv, bias);
    return push(std::move(out), needs(q) || needs(k) || needs(v),
                [this, q, k, v, qv, kv, vv, probs = probs](const Tensor<Real>& g) {
                  const int64_t B = qv.dim(0), H = qv.dim(1), T = qv.dim(2), D = qv.dim(3);
                  Tensor<Real> dq({B, H, T, D}), dk({B, H, T, D}), dv({B, H, T, D});
                  const Real inv_sqrt_d = Real(1) / std::sqrt(static_cast<Real>(D));
                  parallel_for(B * H, [&](int64_t bh0, int64_t bh1) {
                    std::vector<Real> ds(static_cast<size_t>(T));
                    std::vector<Real> kt(static_cast<size_t>(D * T)), vt(static_cast<size_t>(D * T));
                    std::vector<Real> dkt(static_cast<size_t>(D * T)), dvt(static_cast<size_t>(D * T));
                    for (int64_t bh = bh0; bh < bh1; ++bh) {
                      const Real* qp = qv.data() + bh * T * D;
                      const Real* kp = kv.data() + bh * T * D;
                      const Real* vp = vv.data() + bh * T * D;
                      const Real* pp = probs.data() + bh * T * T;
                      const Real* gp = g.data() + bh * T * D;
                      for (int64_t j = 0; j < T; ++j)
                        for (int64_t d = 0; d < D; ++d) {
                          kt[static_cast<size_t>(d * T + j)] = kp[j * D + d];
                          vt[static_cast<size_t>(d * T + j)] = vp[j * D + d];
                        }
                      std::fill(dkt.begin(), dkt.end(), Real(0));
                      std::fill(dvt.begin(), dvt.end(), Real(0));
                      Real* dqp = dq.data() + bh * T * D;
                      for (int64_t i = 0; i < T; ++i) {
                        const Real* gi = gp + i * D;
                        const Real* pi = pp + i * T;
                        const Real* qi = qp + i * D;
                        // dP[i,j] = g[i] . v[j]; dS = P * (dP - sum_j dP P)
                        for (int64_t j = 0; j <= i; ++j) ds[static_cast<size_t>(j)] = 0;
                        for (int64_t d = 0; d < D; ++d) {
                          const Real gd = gi[d];
                          const Real* vrow = vt.data() + d * T;
                          for (int64_t j = 0; j <= i; ++j) ds[static_cast<size_t>(j)] += gd * vrow[j];
                        }
                        const Real dot_sum = detail::vdot(ds.data(), pi, i + 1);
                        for (int64_t j = 0; j <= i; ++j)
                          ds[static_cast<size_t>(j)] =
                              pi[j] * (ds[static_cast<size_t>(j)] - dot_sum) * inv_sqrt_d;
                        Real* dqi = dqp + i * D;
                        for (int64_t d = 0; d < D; ++d) {
                          dqi[d] = detail::vdot(ds.data(), kt.data() + d * T, i + 1);
                          Real* dkrow = dkt.data() + d * T;
                          const Real qd = qi[d];
                          for (int64_t j = 0; j <= i; ++j) dkrow[j] += qd * ds[static_cast<size_t>(j)];
                          Real* dvrow = dvt.data() + d * T;
                          const Real gd = gi[d];
                          for (int64_t j = 0; j <= i; ++j) dvrow[j] += gd * pi[j];
                        }
                      }
                      Real* dkp = dk.data() + bh * T * D;
                      Real* dvp = dv.data() + bh * T * D;
                      for (int64_t j = 0; j < T; ++j)
                        for (int64_t d = 0; d < D; ++d) {
                          dkp[j * D + d] = dkt[static_cast<size_t>(d * T + j)];
                          dvp[j * D + d] = dvt[static_cast<size_t>(d * T + j)];
                        }
                    }
                  });
                  if (needs(q)) accumulate(q, dq);
                  if (needs(k)) accumulate(k, dk);
                  if (needs(v)) accumulate(v, dv);
                });
  }

  /// Scalar mean-squared-error node against a constant target.
  Var mse(Var pred, const Tensor<Real>& target) {
    Tensor<Real> pv = value(pred);
    detail::require_same_shape(pv, target, "mse");
    Tensor<Real> out = Tensor<Real>::scalar(nn::mse(pv, target));
    return push(std::move(out), needs(pred), [this, pred, pv, target](const Tensor<Real>& g) {
      if (!needs(pred)) return;
      const Real c = g[0] * Real(2) / static_cast<Real>(pv.size());
      Tensor<Real> dp(pv.shape());
      for (int64_t i = 0; i < pv.size(); ++i) dp.data()[i] = c * (pv[i] - target[i]);
      accumulate(pred, dp);
    });
  }

  Var reduce_sum(Var a) {
    Tensor<Real> out = Tensor<Real>::scalar(nn::reduce_sum(value(a)));
    return push(std::move(out), needs(a), [this, a](const Tensor<Real>& g) {
      if (!needs(a)) return;
      accumulate(a, Tensor<Real>::full(valueShape(a), g[0]));
    });
  }

  /// Reverse sweep from a scalar loss; accumulates into leaf gradients.
  void backward(Var loss) {
    Node& ln = nodes_[check(loss)];
    if (ln.value.size() != 1)
      throw ShapeError("backward: loss must be a scalar, got " + shape_str(ln.value.shape()));
    ln.grad = Tensor<Real>::full({1}, Real(1));
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.backward && n.grad.defined() && n.requires_grad) n.backward(n.grad);
    }
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    bool requires_grad = false;
    std::function<void(const Tensor<Real>&)> backward;
  };

  size_t check(Var v) const {
    if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
      throw std::logic_error("invalid tape variable");
    return static_cast<size_t>(v.id);
  }

  bool needs(Var v) const { return nodes_[check(v)].requires_grad; }

  const std::vector<int64_t>& valueShape(Var v) const { return nodes_[check(v)].value.shape(); }

  void accumulate(Var v, const Tensor<Real>& g) {
    Node& n = nodes_[check(v)];
    if (!n.grad.defined()) {
      n.grad = g.clone();
      return;
    }
    for (int64_t i = 0; i < g.size(); ++i) n.grad.data()[i] += g[i];
  }

  Var push(Tensor<Real> value, bool requires_grad,
           std::function<void(const Tensor<Real>&)> backward) {
    nodes_.push_back(Node{std::move(value), Tensor<Real>(), requires_grad, std::move(backward)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace icrl::nn
