#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "goalinf/linalg.hpp"
#include "goalinf/rng.hpp"

namespace goalinf {

/// N draws from N(mean, S S^T) through the factor: each row of the result
/// is mean + S eps with eps standard normal. S may be non-square
/// (a non-symmetric square root is enough for sampling).
inline Matrix sample_factor_gaussian(const Vector& mean, const Matrix& s, Index n_samples,
                                     Rng& rng) {
  detail::require(s.rows() == mean.size(), "sample_factor_gaussian: mean/factor mismatch");
  const Index latent = s.cols();
  // Draw in blocks so the dense product stays a single gemm per block.
  const Index block = std::max<Index>(1, std::min<Index>(n_samples, 4096));
  Matrix out(n_samples, mean.size());
  Matrix eps(latent, block);
  Index done = 0;
  while (done < n_samples) {
    const Index cur = std::min(block, n_samples - done);
    for (Index j = 0; j < cur; ++j) {
      for (Index i = 0; i < latent; ++i) eps(i, j) = rng.normal();
    }
    out.middleRows(done, cur) =
        (s * eps.leftCols(cur)).transpose().rowwise() + mean.transpose();
    done += cur;
  }
  return out;
}

/// Per-row maximum: the nonlinear pushforward g(x) = max_i x_i.
inline Vector pushforward_max(const Matrix& samples) {
  detail::require(samples.rows() >= 1, "pushforward_max: need at least one sample");
  return samples.rowwise().maxCoeff();
}

/// Gaussian kernel density estimate with the Silverman bandwidth
/// 1.06 sigma N^{-1/5}, evaluated at the given points.
inline Vector gaussian_kde(const Vector& samples, const Vector& eval_points) {
  const Index n = samples.size();
  detail::require(n >= 2, "gaussian_kde: need at least two samples");
  const double mean = samples.mean();
  const double var = (samples.array() - mean).square().sum() / static_cast<double>(n - 1);
  const double sigma = std::sqrt(var);
  if (sigma == 0.0) throw DegenerateSample("gaussian_kde: sample standard deviation is zero");
  const double bandwidth = 1.06 * sigma * std::pow(static_cast<double>(n), -0.2);

  const double norm = 1.0 / (static_cast<double>(n) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  Vector density(eval_points.size());
  for (Index k = 0; k < eval_points.size(); ++k) {
    const auto u = (samples.array() - eval_points[k]) / bandwidth;
    density[k] = norm * (-0.5 * u.square()).exp().sum();
  }
  return density;
}

/// Two-sample Kolmogorov-Smirnov statistic: the sup-distance between the
/// empirical CDFs.
inline double ks_statistic(Vector a, Vector b) {
  detail::require(a.size() >= 1 && b.size() >= 1, "ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  double ks = 0.0;
  Index i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    // Step both CDFs past the smaller value; ties advance both sides
    // before the gap is measured.
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    ks = std::max(ks, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return ks;
}

}  // namespace goalinf
