#pragma once

// Independent reference implementations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "orgpose/geometry/pose.hpp"
#include "orgpose/numerics/tape.hpp"
#include "orgpose/numerics/tensor.hpp"
#include "orgpose/org/detection.hpp"

namespace orgpose::testing {

inline nn::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                                double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  nn::Tensor t({rows, cols});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline double max_abs_diff(const nn::Tensor& a, const nn::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(const nn::Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

/// Neighbors of every row by exhaustive search: sort all other rows by
/// (squared distance, index) and keep the first min(k, n-1).
inline std::vector<std::vector<std::size_t>> brute_force_knn(const nn::Tensor& x, std::size_t k) {
  const std::size_t n = x.rows();
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) d += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      cand.emplace_back(d, j);
    }
    std::sort(cand.begin(), cand.end());
    for (std::size_t m = 0; m < std::min(k, cand.size()); ++m) out[i].push_back(cand[m].second);
  }
  return out;
}

/// relu(W^T [x_i || x_j - x_i] + b) for every neighbor j of i, combined by
/// max or sum, evaluated with plain loops.
inline nn::Tensor enumerate_gnn_layer(const nn::Tensor& x, const std::vector<std::vector<std::size_t>>& neighbors,
                                      const nn::Tensor& w, const nn::Tensor& b, bool use_max) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const std::size_t out_dim = w.cols();
  nn::Tensor out({n, out_dim});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> acc(out_dim, use_max ? -INFINITY : 0.0);
    for (std::size_t j : neighbors[i]) {
      std::vector<double> e(2 * d);
      for (std::size_t c = 0; c < d; ++c) {
        e[c] = x(i, c);
        e[d + c] = x(j, c) - x(i, c);
      }
      for (std::size_t o = 0; o < out_dim; ++o) {
        double z = b[o];
        for (std::size_t c = 0; c < 2 * d; ++c) z += e[c] * w(c, o);
        z = std::max(z, 0.0);
        acc[o] = use_max ? std::max(acc[o], z) : acc[o] + z;
      }
    }
    for (std::size_t o = 0; o < out_dim; ++o) out(i, o) = acc[o];
  }
  return out;
}

/// Sorted-copy order statistics.
inline double sorted_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double plain_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// d(p, p*) written out from its definition.
inline double distance_by_hand(const geometry::Vec3& dt, const geometry::Vec3& dr, double beta, double gamma) {
  return dt.cwiseAbs().sum() * std::exp(-beta) + beta + dr.cwiseAbs().sum() * std::exp(-gamma) + gamma;
}

/// Tuple loss by explicit enumeration: every absolute term plus every
/// ordered pair (i, j), i != j, inside each tuple of `s` consecutive poses.
inline double enumerate_tuple_loss(const std::vector<geometry::Pose>& pred, const std::vector<geometry::Pose>& gt,
                                   std::size_t s, double beta, double gamma, std::size_t* terms = nullptr) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < gt.size(); ++i, ++count) {
    total += distance_by_hand(pred[i].t - gt[i].t, pred[i].r - gt[i].r, beta, gamma);
  }
  for (std::size_t base = 0; base < gt.size(); base += s) {
    for (std::size_t i = base; i < base + s; ++i) {
      for (std::size_t j = base; j < base + s; ++j) {
        if (i == j) continue;
        const geometry::Vec3 dt = (pred[i].t - pred[j].t) - (gt[i].t - gt[j].t);
        const geometry::Vec3 dr = (pred[i].r - pred[j].r) - (gt[i].r - gt[j].r);
        total += distance_by_hand(dt, dr, beta, gamma);
        ++count;
      }
    }
  }
  if (terms) *terms = count;
  return total;
}

inline std::vector<org::Detection> random_detections(std::size_t n, int categories, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> x(10.0, 630.0);
  std::uniform_real_distribution<double> y(10.0, 470.0);
  std::uniform_real_distribution<double> s(5.0, 200.0);
  std::uniform_int_distribution<int> c(0, categories - 1);
  std::vector<org::Detection> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({x(rng), y(rng), s(rng), s(rng), c(rng), 1.0});
  return out;
}

inline geometry::Pose random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t(-3.0, 3.0);
  std::uniform_real_distribution<double> r(-0.8, 0.8);
  geometry::Pose p;
  p.t = {t(rng), t(rng), t(rng)};
  p.r = {r(rng), r(rng), r(rng)};
  return p;
}

/// Central-difference gradient of a scalar function of one tensor.
inline nn::Tensor numeric_gradient(const std::function<double(const nn::Tensor&)>& f, nn::Tensor x, double h = 1e-6) {
  nn::Tensor g = nn::Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    x[i] = v + h;
    const double plus = f(x);
    x[i] = v - h;
    const double minus = f(x);
    x[i] = v;
    g[i] = (plus - minus) / (2.0 * h);
  }
  return g;
}

}  // namespace orgpose::testing
