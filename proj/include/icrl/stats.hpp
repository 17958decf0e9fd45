#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace icrl {

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean: empty input");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Fractional ranks with ties averaged (1-based).
inline std::vector<double> ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

/// Spearman rank correlation (Pearson correlation of the rank vectors).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length series of size >= 2");
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx, dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// Interquartile mean: drops floor(n/4) values from each tail, averages the rest.
inline double iqm(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("iqm: empty input");
  std::sort(v.begin(), v.end());
  const size_t trim = v.size() / 4;
  double acc = 0;
  for (size_t i = trim; i < v.size() - trim; ++i) acc += v[i];
  return acc / static_cast<double>(v.size() - 2 * trim);
}

/// Centered moving average with window w (shrinks at the edges).
inline std::vector<double> moving_average(const std::vector<double>& v, int w) {
  if (w < 1) throw std::invalid_argument("moving_average: window must be >= 1");
  const int n = static_cast<int>(v.size());
  std::vector<double> out(v.size());
  const int half = w / 2;
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double acc = 0;
    for (int j = lo; j <= hi; ++j) acc += v[j];
    out[i] = acc / static_cast<double>(hi - lo + 1);
  }
  return out;
}

}  // namespace icrl
