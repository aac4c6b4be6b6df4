#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "la2/attention.hpp"
#include "la2/model.hpp"
#include "la2/tensor.hpp"

namespace la2::testing {

inline Tensor uniform(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0, bool grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

/// Largest elementwise |analytic - numeric| / max(|analytic|, |numeric|, floor)
/// over every entry of every leaf, central differences with step `h`.
inline double gradcheck(const std::function<Tensor()>& loss_fn, std::vector<Tensor> leaves, double h = 1e-6,
                        double floor = 1e-3) {
  for (auto& t : leaves) t.zero_grad();
  backward(loss_fn());
  double worst = 0.0;
  for (auto& t : leaves) {
    const std::vector<double> analytic = t.grad();
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double x0 = data[i];
      data[i] = x0 + h;
      double fp, fm;
      {
        NoGradGuard ng;
        fp = loss_fn().item();
        data[i] = x0 - h;
        fm = loss_fn().item();
      }
      data[i] = x0;
      const double numeric = (fp - fm) / (2 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

/// Scalar probe sum(out * r) with fixed random weights, so every output
/// entry contributes a distinct gradient.
inline Tensor probe(const Tensor& out, const Tensor& r) { return sum(mul(out, r)); }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Distance of a global-attention input from the two places where finite
/// differences break down: the pole at D = 0 and the kinks of |x| in the
/// l1 norms. Returns min(|D|, min |q|, min |k|) / floors, so values >= 1
/// mean the instance is safe to check.
inline double fd_margin(const Tensor& h_bar, const GlaLayerParams& p, double d_floor = 0.05, double x_floor = 1e-3) {
  NoGradGuard ng;
  const RowMatrix q = p.q_global(h_bar).matrix();
  const RowMatrix k = p.k_global(h_bar).matrix();
  const Eigen::Index dh = static_cast<Eigen::Index>(p.branch_width() / p.heads);
  double margin = std::min(q.cwiseAbs().minCoeff(), k.cwiseAbs().minCoeff()) / x_floor;
  for (Eigen::Index h = 0; h < static_cast<Eigen::Index>(p.heads); ++h) {
    RowMatrix qh = q.middleCols(h * dh, dh), kh = k.middleCols(h * dh, dh);
    for (Eigen::Index i = 0; i < qh.rows(); ++i) qh.row(i) /= qh.row(i).cwiseAbs().sum();
    for (Eigen::Index i = 0; i < kh.rows(); ++i) kh.row(i) /= kh.row(i).cwiseAbs().sum();
    const Eigen::VectorXd d = qh * kh.colwise().sum().transpose();
    margin = std::min(margin, d.cwiseAbs().minCoeff() / d_floor);
  }
  return margin;
}

inline double fd_margin(const Tensor& h, const GlaLayerParams& p, const IndexMatrix&) { return fd_margin(p.norm_attn(h), p); }

/// fd_margin over every block of a forward pass.
inline double fd_margin(const OperatorModel& m, const Tensor& f, const PointSet& pts, const KnnIndex& knn) {
  NoGradGuard ng;
  Tensor h = encode(f, pts, m);
  double margin = 1e300;
  for (const auto& layer : m.layers) {
    margin = std::min(margin, fd_margin(h, layer, knn.idx));
    h = la2_layer(h, knn.idx, layer);
  }
  return margin;
}

}  // namespace la2::testing
