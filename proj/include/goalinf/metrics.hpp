#pragma once

#include <cmath>
#include <numbers>
#include <thread>
#include <utility>
#include <vector>

#include "goalinf/approx.hpp"
#include "goalinf/linalg.hpp"
#include "goalinf/model.hpp"
#include "goalinf/rng.hpp"

namespace goalinf {

/// Geodesic distance on the SPD cone: sqrt(1/2 sum_i ln^2 sigma_i) with
/// sigma_i the eigenvalues of the pencil (g1, g2).
inline double forstner(const SpdMatrix& g1, const SpdMatrix& g2) {
  detail::require(g1.dim() == g2.dim(), "forstner: dimension mismatch");
  const EigPairs pairs = generalized_eigh(g1.dense(), g2);
  double acc = 0.0;
  for (Index i = 0; i < pairs.values.size(); ++i) {
    if (pairs.values[i] <= 0.0) {
      throw NotPositiveDefinite("forstner: pencil has a nonpositive eigenvalue");
    }
    const double t = std::log(pairs.values[i]);
    acc += t * t;
  }
  return std::sqrt(0.5 * acc);
}

/// sqrt((m1 - m2)^T Gamma^-1 (m1 - m2)), through the Cholesky factor.
inline double mahalanobis(const Vector& m1, const Vector& m2, const SpdMatrix& gamma) {
  detail::require(m1.size() == m2.size() && m1.size() == gamma.dim(),
                  "mahalanobis: dimension mismatch");
  const Vector diff = m1 - m2;
  return gamma.chol_lower().triangularView<Eigen::Lower>().solve(diff).norm();
}

/// Hellinger distance between the exact QoI posterior and its rank-r
/// optimal approximation, in closed form from the goal-oriented
/// eigenvalues: sqrt(1 - prod_{i>r} 2^{1/2} (1-l)^{1/4} / (2-l)^{1/2}).
inline double hellinger_truncation(const Vector& lambdas, Index r) {
  double log_prod = 0.0;
  for (Index i = r; i < lambdas.size(); ++i) {
    const double l = lambdas[i];
    log_prod += 0.5 * std::numbers::ln2 + 0.25 * std::log1p(-l) - 0.5 * std::log(2.0 - l);
  }
  return std::sqrt(std::max(0.0, -std::expm1(log_prod)));
}

/// Equal-means Gaussian Hellinger distance via Cholesky log-determinants:
/// sqrt(1 - |G1|^{1/4} |G2|^{1/4} / |(G1+G2)/2|^{1/2}).
inline double hellinger_gaussian(const Vector& mu, const SpdMatrix& g1, const SpdMatrix& g2) {
  detail::require(mu.size() == g1.dim() && g1.dim() == g2.dim(),
                  "hellinger_gaussian: dimension mismatch");
  const SpdMatrix mid(Matrix(0.5 * (g1.dense() + g2.dense())));
  const double log_bc = 0.25 * g1.log_det() + 0.25 * g2.log_det() - 0.5 * mid.log_det();
  return std::sqrt(std::max(0.0, -std::expm1(log_bc)));
}

/// Monte Carlo estimate of the Bayes risk E ||A y - z||^2 weighted by the
/// exact posterior precision of the QoI, with its standard error. Draws
/// are sharded deterministically: shard k uses an independent stream
/// derived from the caller's rng, so the estimate is a pure function of
/// (seed, shard count).
inline std::pair<double, double> empirical_bayes_risk(const GoalProblem& pb, const MeanMap& map,
                                                      Index n_samples, Rng& rng,
                                                      int threads = 1) {
  detail::require(n_samples >= 100, "empirical_bayes_risk: need at least 100 samples");
  // Gamma_Z|Y does not depend on the data realization.
  const SpdMatrix gamma_zy = posterior_qoi(pb, Vector::Zero(pb.d())).cov;
  const Matrix weight_chol = gamma_zy.chol_lower();

  const int shards = std::max(1, threads);
  std::vector<std::uint64_t> shard_seeds(shards);
  for (auto& s : shard_seeds) s = rng.next_u64();

  std::vector<double> sums(shards, 0.0), sums_sq(shards, 0.0);
  auto run_shard = [&](int k) {
    Rng shard_rng(shard_seeds[k]);
    const Index begin = n_samples * k / shards;
    const Index end = n_samples * (k + 1) / shards;
    for (Index s = begin; s < end; ++s) {
      auto [z, y] = sample_joint(pb, shard_rng);
      const Vector resid = map.apply(y) - z;
      const double loss =
          weight_chol.triangularView<Eigen::Lower>().solve(resid).squaredNorm();
      sums[k] += loss;
      sums_sq[k] += loss * loss;
    }
  };
  if (shards == 1) {
    run_shard(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(shards);
    for (int k = 0; k < shards; ++k) pool.emplace_back(run_shard, k);
    for (auto& t : pool) t.join();
  }
  double sum = 0.0, sum_sq = 0.0;
  for (int k = 0; k < shards; ++k) {
    sum += sums[k];
    sum_sq += sums_sq[k];
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  return {mean, std::sqrt(var / n)};
}

/// Constant C(Y, g) of the expectation bound
/// |E_exact[g] - E_approx[g]| <= C(Y, g) d_Hell:
/// 2 sqrt(2) (|Gamma_Z| / |Gamma_Z|Y|)^{1/4}
///   exp(||mu_Z|Y||^2_{Gamma_Z^-1} / (2(beta-2))) E_prior[|g|^beta]^{1/beta},
/// with the moment supplied by the caller and all determinants as
/// log-determinants.
inline double expectation_bound_constant(const GoalProblem& pb, const Vector& y, double g_moment,
                                         double beta) {
  if (!(beta > 2.0)) throw BetaOutOfRange("expectation_bound_constant: beta must exceed 2");
  const Gaussian post = posterior_qoi(pb, y);
  const SpdMatrix gamma_z = qoi_prior_cov(pb);
  const double log_det_ratio = gamma_z.log_det() - post.cov.log_det();
  const double mean_term = mahalanobis(post.mean, Vector::Zero(pb.p()), gamma_z);
  return 2.0 * std::sqrt(2.0) * std::exp(0.25 * log_det_ratio) *
         std::exp(mean_term * mean_term / (2.0 * (beta - 2.0))) * g_moment;
}

}  // namespace goalinf
