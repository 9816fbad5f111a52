#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <utility>

#include "goalinf/linalg.hpp"
#include "goalinf/matrix_market.hpp"
#include "goalinf/model.hpp"

namespace goalinf {

/// Eigenvalues below this are treated as numerically spurious update
/// directions and discarded.
inline constexpr double kSpectrumDropTol = 1e-12;

/// Eigenvalues at or above 1 - kDegenerateLambdaTol are rejected: both
/// ln(1 - lambda) and 1/(1 - lambda) diverge there.
inline constexpr double kDegenerateLambdaTol = 1e-14;

/// Leading eigenpairs of (H, Gamma_pr^-1), H = G^T Gamma_obs^-1 G.
/// Directions w_i are Gamma_pr^-1-orthonormal.
struct ParamSpectrum {
  Vector deltas_sq;  ///< descending, >= 0
  Matrix w;          ///< n x k
  Index count() const { return deltas_sq.size(); }
};

/// Eigenpairs (lambda_i, q_i) of the goal-oriented pencil
/// (G Gamma_pr O^T Gamma_Z^-1 O Gamma_pr G^T, Gamma_Y), with the derived
/// direction families:
///   q_hat_i  = O Gamma_pr G^T q_i          (Gamma_Z^-1-orthonormal)
///   q_bar_i  = Pi S_pr^T G^T q_i
///   q_tilde_i = S_pr q_bar_i               (Gamma_pr^-1-orthonormal)
struct GoalSpectrum {
  Vector lambdas;  ///< descending, strictly inside (0, 1)
  Matrix q;        ///< d x k
  Matrix q_hat;    ///< p x k
  Matrix q_bar;    ///< n x k
  Matrix q_tilde;  ///< n x k
  Index count() const { return lambdas.size(); }
};

/// Covariance stored as base - directions diag(weights) directions^T.
/// Storage stays O(m r); call densify() only when a dense oracle is needed.
struct LowRankUpdateCov {
  SpdMatrix base;
  Matrix directions;  ///< m x r
  Vector weights;     ///< positive, length r

  Index dim() const { return base.dim(); }
  Index rank() const { return weights.size(); }

  SpdMatrix densify() const {
    if (rank() == 0) return base;
    return SpdMatrix(
        Matrix(base.dense() - directions * weights.asDiagonal() * directions.transpose()));
  }
};

/// Rank-r data-to-QoI map A = left right^T, applied in O((p + d) r).
struct MeanMap {
  Matrix left;   ///< p x r
  Matrix right;  ///< d x r

  Index rank() const { return left.cols(); }
  Vector apply(const Vector& y) const {
    detail::require(y.size() == right.rows(), "MeanMap::apply: dimension mismatch");
    return left * (right.transpose() * y);
  }
};

namespace detail {

/// S_obs^-1 G S_pr, via an LU solve so non-triangular square roots work.
inline Matrix whitened_forward(const GoalProblem& pb) {
  return pb.S_obs.partialPivLu().solve(pb.G * pb.S_pr);
}

inline void check_rank(Index r, Index available, const char* op) {
  if (r > available) {
    throw RankTooLarge(std::string(op) + ": requested rank exceeds available pairs");
  }
}

}  // namespace detail

/// Leading k_max eigenpairs of (H, Gamma_pr^-1), computed as the standard
/// symmetric eigendecomposition of Ghat^T Ghat with Ghat = S_obs^-1 G S_pr
/// and mapped back via w = S_pr u.
inline ParamSpectrum param_spectrum(const GoalProblem& pb, Index k_max = -1) {
  if (k_max < 0) k_max = pb.n();
  detail::require(k_max <= pb.n(), "param_spectrum: k_max exceeds parameter dimension");
  const Matrix ghat = detail::whitened_forward(pb);
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(Matrix(ghat.transpose() * ghat), 1e-6));
  if (es.info() != Eigen::Success) throw Error("param_spectrum: eigensolver failed");
  const Index n = pb.n();
  ParamSpectrum sp;
  sp.deltas_sq.resize(k_max);
  sp.w.resize(n, k_max);
  for (Index i = 0; i < k_max; ++i) {
    sp.deltas_sq[i] = std::max(0.0, es.eigenvalues()[n - 1 - i]);
    sp.w.col(i) = pb.S_pr * es.eigenvectors().col(n - 1 - i);
  }
  return sp;
}

/// Optimal prior-to-posterior update of the parameter covariance:
/// Gamma_pr - sum_{i<=r} delta_i^2/(1+delta_i^2) w_i w_i^T.
inline LowRankUpdateCov param_opt_cov(const ParamSpectrum& sp, const GoalProblem& pb, Index r) {
  detail::check_rank(r, sp.count(), "param_opt_cov");
  Index kept = 0;
  while (kept < r && sp.deltas_sq[kept] > 0.0) ++kept;
  LowRankUpdateCov cov{pb.Gamma_pr, sp.w.leftCols(kept), Vector(kept)};
  for (Index i = 0; i < kept; ++i) {
    cov.weights[i] = sp.deltas_sq[i] / (1.0 + sp.deltas_sq[i]);
  }
  return cov;
}

/// Distance of the rank-r optimum from the exact posterior covariance:
/// sqrt(1/2 sum_{i>r} ln^2(1 + delta_i^2)).
inline double param_opt_error(const ParamSpectrum& sp, Index r) {
  double acc = 0.0;
  for (Index i = r; i < sp.count(); ++i) {
    const double t = std::log1p(sp.deltas_sq[i]);
    acc += t * t;
  }
  return std::sqrt(0.5 * acc);
}

/// Suboptimal QoI covariance: push the rank-r parameter optimum through O.
inline SpdMatrix naive_qoi_cov(const GoalProblem& pb, const ParamSpectrum& sp, Index r) {
  detail::check_rank(r, sp.count(), "naive_qoi_cov");
  const SpdMatrix hat_pos = param_opt_cov(sp, pb, r).densify();
  return SpdMatrix(Matrix(pb.O * hat_pos.dense() * pb.O.transpose()));
}

/// Goal-oriented spectrum through the whitened pencil
/// (Ghat Pi Ghat^T, I + Ghat Ghat^T), where Pi projects onto
/// range(S_pr^T O^T); eigenvectors are mapped back by w -> S_obs^-T w and
/// rescaled to the A-normalization q_i^T A q_i = 1. Pairs with lambda
/// below the drop tolerance are discarded.
inline GoalSpectrum goal_spectrum(const GoalProblem& pb, Index k_max = -1) {
  const Index bound = std::min(pb.p(), pb.d());
  if (k_max < 0) k_max = bound;
  detail::require(k_max <= bound, "goal_spectrum: k_max exceeds min(p, d)");
  const Matrix ghat = detail::whitened_forward(pb);
  const RangeProjector proj(Matrix(pb.S_pr.transpose() * pb.O.transpose()));

  const Matrix projected = proj.apply_matrix(ghat.transpose());  // n x d
  const Matrix a = symmetrize(Matrix(ghat * projected), 1e-6);
  const SpdMatrix b(
      Matrix(Matrix::Identity(pb.d(), pb.d()) + ghat * ghat.transpose()));
  const EigPairs pairs = generalized_eigh(a, b);

  Index kept = 0;
  while (kept < k_max && kept < pairs.values.size() && pairs.values[kept] > kSpectrumDropTol) {
    ++kept;
  }
  GoalSpectrum gs;
  gs.lambdas = pairs.values.head(kept);
  for (Index i = 0; i < kept; ++i) {
    if (gs.lambdas[i] >= 1.0 - kDegenerateLambdaTol) {
      throw DegenerateEigenvalue(
          "goal_spectrum: eigenvalue numerically equal to 1 (singular posterior direction)");
    }
  }
  // Back-map and A-normalization: the B-orthonormal vectors give
  // q^T Gamma_Y q = 1, so dividing by sqrt(lambda) yields q^T A q = 1.
  const Matrix mapped =
      pb.S_obs.transpose().partialPivLu().solve(Matrix(pairs.vectors.leftCols(kept)));
  gs.q.resize(pb.d(), kept);
  for (Index i = 0; i < kept; ++i) {
    gs.q.col(i) = mapped.col(i) / std::sqrt(gs.lambdas[i]);
  }
  const Matrix gt_q = pb.G.transpose() * gs.q;  // n x kept
  gs.q_hat = pb.O * (pb.Gamma_pr.dense() * gt_q);
  gs.q_bar = proj.apply_matrix(Matrix(pb.S_pr.transpose() * gt_q));
  gs.q_tilde = pb.S_pr * gs.q_bar;
  return gs;
}

/// Optimal QoI covariance: Gamma_Z - sum_{i<=r} lambda_i q_hat_i q_hat_i^T.
inline LowRankUpdateCov optimal_qoi_cov(const GoalSpectrum& gs, const GoalProblem& pb, Index r) {
  detail::check_rank(r, gs.count(), "optimal_qoi_cov");
  return LowRankUpdateCov{qoi_prior_cov(pb), gs.q_hat.leftCols(r), gs.lambdas.head(r)};
}

/// Distance of the rank-r optimum from the exact QoI posterior covariance:
/// sqrt(1/2 sum_{i>r} ln^2(1 - lambda_i)).
inline double optimal_qoi_error(const GoalSpectrum& gs, Index r) {
  double acc = 0.0;
  for (Index i = r; i < gs.count(); ++i) {
    const double t = std::log1p(-gs.lambdas[i]);
    acc += t * t;
  }
  return std::sqrt(0.5 * acc);
}

/// Goal-oriented parameter covariance whose pushforward through O equals
/// the optimal QoI covariance: Gamma_pr - sum_{i<=r} lambda_i qt_i qt_i^T.
inline LowRankUpdateCov goal_param_cov(const GoalSpectrum& gs, const GoalProblem& pb, Index r) {
  detail::check_rank(r, gs.count(), "goal_param_cov");
  return LowRankUpdateCov{pb.Gamma_pr, gs.q_tilde.leftCols(r), gs.lambdas.head(r)};
}

/// Non-symmetric square root of the optimal QoI covariance:
/// S = O S_pr (sum_{i<=r} (sqrt(1-lambda_i)-1) qb_i qb_i^T + I), p x n.
inline Matrix qoi_sqrt(const GoalSpectrum& gs, const GoalProblem& pb, Index r) {
  detail::check_rank(r, gs.count(), "qoi_sqrt");
  for (Index i = 0; i < r; ++i) {
    if (gs.lambdas[i] >= 1.0 - kDegenerateLambdaTol) {
      throw DegenerateEigenvalue("qoi_sqrt: eigenvalue numerically equal to 1");
    }
  }
  const Matrix os = pb.O * pb.S_pr;  // p x n
  if (r == 0) return os;
  Vector coeff(r);
  for (Index i = 0; i < r; ++i) coeff[i] = std::sqrt(1.0 - gs.lambdas[i]) - 1.0;
  const Matrix qb = gs.q_bar.leftCols(r);
  return os + (os * qb) * coeff.asDiagonal() * qb.transpose();
}

/// Minimum-Bayes-risk rank-r posterior mean map A = sum_i lambda_i q_hat_i q_i^T.
inline MeanMap mean_map(const GoalSpectrum& gs, Index r) {
  detail::check_rank(r, gs.count(), "mean_map");
  MeanMap m{Matrix(gs.q_hat.leftCols(r)), Matrix(gs.q.leftCols(r))};
  for (Index i = 0; i < r; ++i) m.left.col(i) *= gs.lambdas[i];
  return m;
}

/// Predicted Bayes risk of the rank-r mean map:
/// sum_{i>r} lambda_i/(1-lambda_i) + dim_constant. The additive constant
/// is supplied by the caller; the QoI dimension p is the value the Monte
/// Carlo oracle confirms.
inline double predicted_bayes_risk(const GoalSpectrum& gs, Index r, Index dim_constant) {
  double acc = 0.0;
  for (Index i = r; i < gs.count(); ++i) {
    if (gs.lambdas[i] >= 1.0 - kDegenerateLambdaTol) {
      throw DegenerateEigenvalue("predicted_bayes_risk: eigenvalue numerically equal to 1");
    }
    acc += gs.lambdas[i] / (1.0 - gs.lambdas[i]);
  }
  return acc + static_cast<double>(dim_constant);
}

/// CSV + Matrix Market export of a goal spectrum.
inline void write_goal_spectrum(const GoalSpectrum& gs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "spectrum.csv");
  if (!csv) throw IoError("cannot write " + (dir / "spectrum.csv").string());
  csv.precision(17);
  csv << "index,lambda\n";
  for (Index i = 0; i < gs.count(); ++i) csv << (i + 1) << "," << gs.lambdas[i] << "\n";
  mm::write_matrix(dir / "q.mtx", gs.q);
  mm::write_matrix(dir / "q_hat.mtx", gs.q_hat);
  mm::write_matrix(dir / "q_tilde.mtx", gs.q_tilde);
}

inline void write_param_spectrum(const ParamSpectrum& sp, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "spectrum.csv");
  if (!csv) throw IoError("cannot write " + (dir / "spectrum.csv").string());
  csv.precision(17);
  csv << "index,delta_sq\n";
  for (Index i = 0; i < sp.count(); ++i) csv << (i + 1) << "," << sp.deltas_sq[i] << "\n";
}

}  // namespace goalinf
