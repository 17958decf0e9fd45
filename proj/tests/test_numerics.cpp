#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "icrl/adam.hpp"
#include "icrl/autodiff.hpp"
#include "icrl/gradcheck.hpp"
#include "icrl/rng.hpp"
#include "icrl/tensor.hpp"

using icrl::Rng;
using icrl::nn::AdamConfig;
using icrl::nn::AdamState;
using icrl::nn::ShapeError;
using icrl::nn::Tape;
using icrl::nn::Tensor;

namespace {

template <typename Real>
Tensor<Real> random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<Real> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Real>(rng.uniform(lo, hi));
  return t;
}

// Independent triple-loop reference for matmul.
template <typename Real>
Tensor<Real> naive_matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  const int64_t k = a.dim(-1), n = b.dim(1), rows = a.size() / k;
  std::vector<int64_t> shape = a.shape();
  shape.back() = n;
  Tensor<Real> c(shape);
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < n; ++j) {
      Real acc = 0;
      for (int64_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * n + j];
      c.data()[i * n + j] = acc;
    }
  return c;
}

// Dense reference attention: mask, bias, softmax with libm exp, weighted sum.
Tensor<double> naive_attention(const Tensor<double>& q, const Tensor<double>& k,
                               const Tensor<double>& v, const Tensor<double>& bias) {
  const int64_t B = q.dim(0), H = q.dim(1), T = q.dim(2), D = q.dim(3);
  Tensor<double> out({B, H, T, D});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t i = 0; i < T; ++i) {
        std::vector<double> s(static_cast<size_t>(T), -1e300);
        for (int64_t j = 0; j <= i; ++j) {
          double dot = 0;
          for (int64_t d = 0; d < D; ++d)
            dot += q[((b * H + h) * T + i) * D + d] * k[((b * H + h) * T + j) * D + d];
          s[static_cast<size_t>(j)] =
              dot / std::sqrt(static_cast<double>(D)) + bias[(h * T + i) * T + j];
        }
        double mx = *std::max_element(s.begin(), s.begin() + i + 1);
        double z = 0;
        for (int64_t j = 0; j <= i; ++j) z += std::exp(s[static_cast<size_t>(j)] - mx);
        for (int64_t d = 0; d < D; ++d) {
          double acc = 0;
          for (int64_t j = 0; j <= i; ++j)
            acc += std::exp(s[static_cast<size_t>(j)] - mx) / z *
                   v[((b * H + h) * T + j) * D + d];
          out.data()[((b * H + h) * T + i) * D + d] = acc;
        }
      }
  return out;
}

// Finite-difference check harness for a single op composition.
template <typename Build>
double fd_check(std::vector<Tensor<double>> params, Build build, int64_t coords = 60,
                uint64_t seed = 7) {
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Tape<double>::Var> vars;
    for (auto& p : params) vars.push_back(tape.leaf(p, true));
    auto loss = build(tape, vars);
    tape.backward(loss);
    for (auto v : vars) analytic.push_back(tape.grad(v).clone());
  }
  auto loss_fn = [&]() {
    Tape<double> tape;
    std::vector<Tape<double>::Var> vars;
    for (auto& p : params) vars.push_back(tape.leaf(p, true));
    return static_cast<double>(tape.value(build(tape, vars))[0]);
  };
  auto res = icrl::nn::finite_diff_check<double>(params, analytic, loss_fn, coords, seed);
  return res.max_rel_err;
}

}  // namespace

TEST_CASE("matmul matches naive oracle and reports shape errors") {
  Rng rng(1);
  auto a = random_tensor<double>({2, 3}, rng);
  auto b = random_tensor<double>({3, 4}, rng);
  auto c = icrl::nn::matmul(a, b);
  CHECK(c.shape() == std::vector<int64_t>{2, 4});
  auto ref = naive_matmul(a, b);
  for (int64_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));

  // folded leading dims
  auto a3 = random_tensor<float>({4, 5, 6}, rng);
  auto b2 = random_tensor<float>({6, 3}, rng);
  auto c3 = icrl::nn::matmul(a3, b2);
  auto ref3 = naive_matmul(a3, b2);
  CHECK(c3.shape() == std::vector<int64_t>{4, 5, 3});
  for (int64_t i = 0; i < c3.size(); ++i)
    CHECK(c3[i] == doctest::Approx(ref3[i]).epsilon(1e-5));

  try {
    icrl::nn::matmul(a, random_tensor<double>({4, 2}, rng));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
}

TEST_CASE("softmax of a constant vector is uniform; rows sum to one") {
  auto x = Tensor<float>::full({3, 7}, 0.42f);
  auto y = icrl::nn::softmax_last(x);
  for (int64_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(1.0 / 7).epsilon(1e-6));

  Rng rng(2);
  auto r = random_tensor<float>({5, 11}, rng, -4, 4);
  auto s = icrl::nn::softmax_last(r);
  for (int64_t row = 0; row < 5; ++row) {
    double sum = 0;
    for (int64_t j = 0; j < 11; ++j) sum += s[row * 11 + j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("fast float exp tracks libm within 3e-7 relative") {
  Rng rng(3);
  for (int i = 0; i < 20000; ++i) {
    const float x = static_cast<float>(rng.uniform(-30.0, 25.0));
    const double ref = std::exp(static_cast<double>(x));
    const double got = icrl::nn::detail::fast_exp(x);
    CHECK(std::abs(got - ref) / ref < 3e-7);
  }
}

TEST_CASE("mse identity, offset, and naive oracle") {
  Rng rng(4);
  auto x = random_tensor<double>({3, 5}, rng);
  CHECK(icrl::nn::mse(x, x) == 0.0);

  auto y = x.clone();
  for (int64_t i = 0; i < y.size(); ++i) y.data()[i] += 0.25;
  CHECK(icrl::nn::mse(x, y) == doctest::Approx(0.0625).epsilon(1e-12));

  auto a = random_tensor<double>({4, 6}, rng);
  auto b = random_tensor<double>({4, 6}, rng);
  double acc = 0;
  for (int64_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  CHECK(icrl::nn::mse(a, b) == doctest::Approx(acc / a.size()).epsilon(1e-9));

  // gradient of mse(x, x) is zero
  Tape<double> tape;
  auto vx = tape.leaf(x, true);
  auto loss = tape.mse(vx, x);
  tape.backward(loss);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(tape.grad(vx)[i] == 0.0);
}

TEST_CASE("alibi bias formula, slopes, and translation invariance") {
  std::vector<int64_t> pos{0, 1, 2, 3};
  auto bias = icrl::nn::alibi_bias<double>(2, pos, pos);
  const double m1 = std::pow(2.0, -4.0);  // 2^(-8*1/2)
  CHECK(bias[(0 * 4 + 3) * 4 + 0] == doctest::Approx(-m1 * 3).epsilon(1e-12));
  CHECK(bias[(0 * 4 + 2) * 4 + 2] == 0.0);
  CHECK(std::isinf(bias[(0 * 4 + 0) * 4 + 3]));

  auto slopes = icrl::nn::alibi_slopes(8);
  for (int h = 1; h <= 8; ++h)
    CHECK(slopes[static_cast<size_t>(h - 1)] == doctest::Approx(std::pow(0.5, h)).epsilon(1e-12));

  std::vector<int64_t> shifted{1000, 1001, 1002, 1003};
  auto bias2 = icrl::nn::alibi_bias<double>(2, shifted, shifted);
  for (int64_t i = 0; i < bias.size(); ++i) {
    if (std::isinf(bias[i]))
      CHECK(std::isinf(bias2[i]));
    else
      CHECK(bias[i] == bias2[i]);
  }
}

TEST_CASE("causal attention matches dense oracle and is causal") {
  Rng rng(5);
  const int64_t B = 2, H = 2, T = 6, D = 3;
  auto q = random_tensor<double>({B, H, T, D}, rng);
  auto k = random_tensor<double>({B, H, T, D}, rng);
  auto v = random_tensor<double>({B, H, T, D}, rng);
  std::vector<int64_t> pos(T);
  for (int64_t i = 0; i < T; ++i) pos[i] = i;
  auto bias = icrl::nn::alibi_bias<double>(H, pos, pos);

  auto out = icrl::nn::causal_attention(q, k, v, bias);
  auto ref = naive_attention(q, k, v, bias);
  for (int64_t i = 0; i < out.size(); ++i)
    CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-10));

  // perturbing position 4 leaves outputs at positions 0..3 bit-unchanged
  auto q2 = q.clone();
  auto k2 = k.clone();
  auto v2 = v.clone();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t d = 0; d < D; ++d) {
        q2.data()[((b * H + h) * T + 4) * D + d] += 3.0;
        k2.data()[((b * H + h) * T + 4) * D + d] -= 2.0;
        v2.data()[((b * H + h) * T + 4) * D + d] += 1.0;
      }
  auto out2 = icrl::nn::causal_attention(q2, k2, v2, bias);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t i = 0; i < 4; ++i)
        for (int64_t d = 0; d < D; ++d) {
          const int64_t idx = ((b * H + h) * T + i) * D + d;
          CHECK(out[idx] == out2[idx]);
        }
}

TEST_CASE("per-primitive finite-difference checks stay under 1e-6") {
  Rng rng(6);

  SUBCASE("matmul") {
    auto err = fd_check({random_tensor<double>({3, 4}, rng), random_tensor<double>({4, 5}, rng)},
                        [](Tape<double>& t, auto& v) {
                          auto c = t.matmul(v[0], v[1]);
                          return t.mse(c, Tensor<double>::zeros({3, 5}));
                        });
    CHECK(err < 1e-6);
  }
  SUBCASE("add and scale") {
    auto err = fd_check({random_tensor<double>({2, 7}, rng), random_tensor<double>({2, 7}, rng)},
                        [](Tape<double>& t, auto& v) {
                          auto c = t.add(v[0], t.scale(v[1], 1.7));
                          return t.mse(c, Tensor<double>::full({2, 7}, 0.3));
                        });
    CHECK(err < 1e-6);
  }
  SUBCASE("add_bias") {
    auto err = fd_check({random_tensor<double>({4, 3}, rng), random_tensor<double>({3}, rng)},
                        [](Tape<double>& t, auto& v) {
                          return t.mse(t.add_bias(v[0], v[1]), Tensor<double>::zeros({4, 3}));
                        });
    CHECK(err < 1e-6);
  }
  SUBCASE("concat and split") {
    auto err = fd_check({random_tensor<double>({2, 3}, rng), random_tensor<double>({2, 2}, rng)},
                        [](Tape<double>& t, auto& v) {
                          auto c = t.concat_last({v[0], v[1]});
                          std::vector<int64_t> widths{1, 4};
                          auto parts = t.split_last(c, widths);
                          return t.mse(parts[1], Tensor<double>::full({2, 4}, 0.1));
                        });
    CHECK(err < 1e-6);
  }
  SUBCASE("layer_norm") {
    auto err = fd_check({random_tensor<double>({3, 6}, rng), random_tensor<double>({6}, rng, 0.5, 1.5),
                         random_tensor<double>({6}, rng)},
                        [](Tape<double>& t, auto& v) {
                          return t.mse(t.layer_norm(v[0], v[1], v[2]),
                                       Tensor<double>::full({3, 6}, 0.2));
                        });
    CHECK(err < 1e-6);
  }
  SUBCASE("gelu") {
    auto err = fd_check({random_tensor<double>({4, 5}, rng, -3, 3)}, [](Tape<double>& t, auto& v) {
      return t.mse(t.gelu(v[0]), Tensor<double>::zeros({4, 5}));
    });
    CHECK(err < 1e-6);
  }
  SUBCASE("softmax") {
    auto err = fd_check({random_tensor<double>({3, 5}, rng, -2, 2)}, [](Tape<double>& t, auto& v) {
      return t.mse(t.softmax_last(v[0]), Tensor<double>::full({3, 5}, 0.2));
    });
    CHECK(err < 1e-6);
  }
  SUBCASE("transpose_12") {
    auto err = fd_check({random_tensor<double>({2, 3, 4, 2}, rng)}, [](Tape<double>& t, auto& v) {
      return t.mse(t.transpose_12(v[0]), Tensor<double>::zeros({2, 4, 3, 2}));
    });
    CHECK(err < 1e-6);
  }
  SUBCASE("causal_attention") {
    const int64_t B = 1, H = 2, T = 5, D = 3;
    std::vector<int64_t> pos{0, 1, 2, 3, 4};
    auto bias = icrl::nn::alibi_bias<double>(H, pos, pos);
    auto err = fd_check({random_tensor<double>({B, H, T, D}, rng),
                         random_tensor<double>({B, H, T, D}, rng),
                         random_tensor<double>({B, H, T, D}, rng)},
                        [bias](Tape<double>& t, auto& v) {
                          auto out = t.causal_attention(v[0], v[1], v[2], bias);
                          return t.mse(out, Tensor<double>::full({1, 2, 5, 3}, 0.1));
                        },
                        120);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("backward of sum(W x) and disconnected leaves") {
  Rng rng(8);
  auto w = random_tensor<double>({3, 4}, rng);
  auto x = random_tensor<double>({4, 2}, rng);

  Tape<double> tape;
  auto vw = tape.leaf(w, true);
  auto vx = tape.constant(x);
  auto vunused = tape.leaf(random_tensor<double>({2, 2}, rng), true);
  auto loss = tape.reduce_sum(tape.matmul(vw, vx));
  tape.backward(loss);

  // d/dW sum(W x) = ones [3,2] * x^T -> row sums of x
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 4; ++j) {
      double expect = x[j * 2 + 0] + x[j * 2 + 1];
      CHECK(tape.grad(vw)[i * 4 + j] == doctest::Approx(expect).epsilon(1e-12));
    }
  for (int64_t i = 0; i < 4; ++i) CHECK(tape.grad(vunused)[i] == 0.0);

  Tape<double> t2;
  auto big = t2.leaf(w, true);
  CHECK_THROWS_AS(t2.backward(big), ShapeError);  // non-scalar loss
}

TEST_CASE("adam: zero grad is a no-op, sign property, unit-step asymptote") {
  using icrl::nn::adam_step;
  AdamConfig cfg;

  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<Tensor<float>> params{Tensor<float>::full({3}, 1.5f)};
    std::vector<Tensor<float>> grads{Tensor<float>::zeros({3})};
    auto st = AdamState<float>::init(params);
    adam_step(params, grads, st, cfg);
    for (int64_t i = 0; i < 3; ++i) CHECK(params[0][i] == 1.5f);
  }

  SUBCASE("first step moves opposite the gradient sign") {
    std::vector<Tensor<double>> params{Tensor<double>::zeros({4})};
    std::vector<Tensor<double>> grads{Tensor<double>::from({4}, {0.5, -2.0, 1e-3, -1e-3})};
    auto st = AdamState<double>::init(params);
    adam_step(params, grads, st, cfg);
    for (int64_t i = 0; i < 4; ++i) {
      CHECK(std::signbit(params[0][i]) != std::signbit(grads[0][i]));
      CHECK(params[0][i] != 0.0);
    }
  }

  SUBCASE("constant gradient: per-step move approaches lr") {
    std::vector<Tensor<double>> params{Tensor<double>::zeros({1})};
    std::vector<Tensor<double>> grads{Tensor<double>::from({1}, {0.37})};
    auto st = AdamState<double>::init(params);
    double prev = 0;
    double step_size = 0;
    for (int i = 0; i < 400; ++i) {
      adam_step(params, grads, st, cfg);
      step_size = std::abs(params[0][0] - prev);
      prev = params[0][0];
    }
    CHECK(step_size == doctest::Approx(cfg.lr).epsilon(0.05));
  }
}

TEST_CASE("finite trap catches non-finite primitive output in debug mode") {
  icrl::nn::debug_check_finite() = true;
  auto x = Tensor<double>::full({2}, 1e308);
  CHECK_THROWS_AS(icrl::nn::add(x, x), icrl::nn::NumericError);
  icrl::nn::debug_check_finite() = false;
}
