#pragma once

#include <filesystem>
#include <fstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "goalinf/linalg.hpp"
#include "goalinf/matrix_market.hpp"
#include "goalinf/rng.hpp"

namespace goalinf {

/// Gaussian distribution given by a mean and either a dense SPD covariance
/// or a (possibly non-square) factor S with cov = S S^T.
struct Gaussian {
  Vector mean;
  SpdMatrix cov;      // valid when has_dense_cov
  Matrix cov_factor;  // valid otherwise
  bool has_dense_cov = true;

  static Gaussian from_dense(Vector mean, SpdMatrix cov) {
    detail::require(mean.size() == cov.dim(), "Gaussian: mean/cov dimension mismatch");
    return Gaussian{std::move(mean), std::move(cov), Matrix(), true};
  }
  static Gaussian from_factor(Vector mean, Matrix factor) {
    detail::require(mean.size() == factor.rows(), "Gaussian: mean/factor dimension mismatch");
    return Gaussian{std::move(mean), SpdMatrix(), std::move(factor), false};
  }
};

/// A goal-oriented linear-Gaussian inverse problem:
///   Y = G X + eps,  eps ~ N(0, Gamma_obs),  X ~ N(0, Gamma_pr),  Z = O X.
/// The prior mean is fixed at zero; callers with a nonzero prior mean
/// shift the data. Square roots of both covariances are mandatory and
/// are computed by Cholesky when not supplied.
struct GoalProblem {
  Matrix G;             // d x n forward map
  SpdMatrix Gamma_obs;  // d x d noise covariance
  Matrix S_obs;         // d x d, Gamma_obs = S_obs S_obs^T
  SpdMatrix Gamma_pr;   // n x n prior covariance
  Matrix S_pr;          // n x n, Gamma_pr = S_pr S_pr^T
  Matrix O;             // p x n goal operator, full row rank, p < n

  Index n() const { return G.cols(); }
  Index d() const { return G.rows(); }
  Index p() const { return O.rows(); }

  static GoalProblem make(Matrix g, SpdMatrix gamma_obs, SpdMatrix gamma_pr, Matrix o) {
    Matrix s_obs = gamma_obs.chol_lower();
    Matrix s_pr = gamma_pr.chol_lower();
    return make(std::move(g), std::move(gamma_obs), std::move(s_obs), std::move(gamma_pr),
                std::move(s_pr), std::move(o));
  }

  static GoalProblem make(Matrix g, SpdMatrix gamma_obs, Matrix s_obs, SpdMatrix gamma_pr,
                          Matrix s_pr, Matrix o) {
    GoalProblem pb{std::move(g), std::move(gamma_obs), std::move(s_obs), std::move(gamma_pr),
                   std::move(s_pr), std::move(o)};
    const Index n = pb.n(), d = pb.d(), p = pb.p();
    detail::require(pb.Gamma_obs.dim() == d && pb.S_obs.rows() == d && pb.S_obs.cols() == d,
                    "GoalProblem: observation dimensions inconsistent");
    detail::require(pb.Gamma_pr.dim() == n && pb.S_pr.rows() == n && pb.S_pr.cols() == n,
                    "GoalProblem: prior dimensions inconsistent");
    detail::require(pb.O.cols() == n, "GoalProblem: goal operator has wrong column count");
    detail::require(p < n, "GoalProblem: goal operator must have p < n");

    check_sqrt(pb.S_obs, pb.Gamma_obs, "S_obs");
    check_sqrt(pb.S_pr, pb.Gamma_pr, "S_pr");

    // Full row rank of O, by QR of O^T.
    Eigen::ColPivHouseholderQR<Matrix> qr(pb.O.transpose());
    const auto rdiag = qr.matrixR().diagonal().head(p).array().abs();
    if (rdiag.minCoeff() < 1e-12 * rdiag.maxCoeff()) {
      throw RankDeficient("GoalProblem: goal operator is not full row rank");
    }
    return pb;
  }

 private:
  static void check_sqrt(const Matrix& s, const SpdMatrix& gamma, const char* name) {
    const double err = (s * s.transpose() - gamma.dense()).norm();
    if (err > 1e-10 * gamma.dense().norm()) {
      throw DimensionMismatch(std::string("GoalProblem: ") + name +
                              " is not a square root of its covariance");
    }
  }
};

/// Exact posterior of the parameters given data y:
///   Gamma_pos = (H + Gamma_pr^-1)^-1 with H = G^T Gamma_obs^-1 G,
///   mu_pos   = Gamma_pos G^T Gamma_obs^-1 y.
inline Gaussian posterior_params(const GoalProblem& pb, const Vector& y) {
  detail::require(y.size() == pb.d(), "posterior_params: data dimension mismatch");
  detail::require(y.allFinite(), "posterior_params: data must be finite");
  const Matrix h = pb.G.transpose() * pb.Gamma_obs.solve(pb.G);
  const Matrix prior_precision = pb.Gamma_pr.solve(Matrix(Matrix::Identity(pb.n(), pb.n())));
  const SpdMatrix posterior_precision(Matrix(h + prior_precision));
  const SpdMatrix gamma_pos(posterior_precision.solve(Matrix(Matrix::Identity(pb.n(), pb.n()))));
  Vector mu = gamma_pos.dense() * (pb.G.transpose() * pb.Gamma_obs.solve(y));
  return Gaussian::from_dense(std::move(mu), gamma_pos);
}

/// Exact posterior of the QoI: push posterior_params through O.
inline Gaussian posterior_qoi(const GoalProblem& pb, const Vector& y) {
  Gaussian pos = posterior_params(pb, y);
  Vector mu = pb.O * pos.mean;
  SpdMatrix cov(Matrix(pb.O * pos.cov.dense() * pb.O.transpose()));
  return Gaussian::from_dense(std::move(mu), std::move(cov));
}

/// Prior covariance of the QoI, Gamma_Z = O Gamma_pr O^T. SPD because O
/// is full row rank.
inline SpdMatrix qoi_prior_cov(const GoalProblem& pb) {
  return SpdMatrix(Matrix(pb.O * pb.Gamma_pr.dense() * pb.O.transpose()));
}

/// Marginal covariance of the data, Gamma_Y = Gamma_obs + G Gamma_pr G^T.
inline SpdMatrix data_marginal_cov(const GoalProblem& pb) {
  return SpdMatrix(Matrix(pb.Gamma_obs.dense() + pb.G * pb.Gamma_pr.dense() * pb.G.transpose()));
}

/// Reduced linear model Y = G O_dagger Z + Delta consistent with the
/// goal-oriented problem: O_dagger = Gamma_pr O^T Gamma_Z^-1 and
/// Gamma_Delta = Gamma_obs + G (Gamma_pr - Gamma_pr O^T Gamma_Z^-1 O Gamma_pr) G^T.
inline std::pair<Matrix, SpdMatrix> reduced_model(const GoalProblem& pb) {
  const SpdMatrix gamma_z = qoi_prior_cov(pb);
  const Matrix o_dagger = pb.Gamma_pr.dense() * gamma_z.solve(pb.O).transpose();
  const Matrix residual_cov =
      pb.Gamma_pr.dense() - o_dagger * (pb.O * pb.Gamma_pr.dense());
  SpdMatrix gamma_delta(
      Matrix(pb.Gamma_obs.dense() + pb.G * symmetrize(residual_cov, 1e-6) * pb.G.transpose()));
  return {o_dagger, std::move(gamma_delta)};
}

/// One noisy observation of a fixed parameter vector: y = G x + S_obs eps.
inline Vector simulate(const GoalProblem& pb, const Vector& x, Rng& rng) {
  detail::require(x.size() == pb.n(), "simulate: parameter dimension mismatch");
  Vector eps(pb.d());
  for (Index i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
  return pb.G * x + pb.S_obs * eps;
}

/// One draw from the joint distribution of (Z, Y): x ~ N(0, Gamma_pr)
/// through S_pr, then (O x, G x + noise).
inline std::pair<Vector, Vector> sample_joint(const GoalProblem& pb, Rng& rng) {
  Vector xi(pb.n());
  for (Index i = 0; i < xi.size(); ++i) xi[i] = rng.normal();
  const Vector x = pb.S_pr * xi;
  return {pb.O * x, simulate(pb, x, rng)};
}

/// Directory serialization: G.mtx, Gamma_obs.mtx, S_pr.mtx, O.mtx and a
/// problem.json with dimensions and a provenance string.
inline void save_problem(const GoalProblem& pb, const std::filesystem::path& dir,
                         const std::string& provenance = "") {
  std::filesystem::create_directories(dir);
  mm::write_matrix(dir / "G.mtx", pb.G);
  mm::write_matrix(dir / "Gamma_obs.mtx", pb.Gamma_obs.dense(), true);
  mm::write_matrix(dir / "S_pr.mtx", pb.S_pr);
  mm::write_matrix(dir / "O.mtx", pb.O);
  nlohmann::json meta{{"n", pb.n()}, {"d", pb.d()}, {"p", pb.p()}, {"provenance", provenance}};
  std::ofstream out(dir / "problem.json");
  if (!out) throw IoError("cannot write " + (dir / "problem.json").string());
  out << meta.dump(2) << "\n";
}

inline GoalProblem load_problem(const std::filesystem::path& dir) {
  Matrix g = mm::read_matrix(dir / "G.mtx");
  SpdMatrix gamma_obs(mm::read_matrix(dir / "Gamma_obs.mtx"));
  Matrix o = mm::read_matrix(dir / "O.mtx");
  if (std::filesystem::exists(dir / "S_pr.mtx")) {
    Matrix s_pr = mm::read_matrix(dir / "S_pr.mtx");
    SpdMatrix gamma_pr(Matrix(s_pr * s_pr.transpose()));
    Matrix s_obs = gamma_obs.chol_lower();
    return GoalProblem::make(std::move(g), std::move(gamma_obs), std::move(s_obs),
                             std::move(gamma_pr), std::move(s_pr), std::move(o));
  }
  SpdMatrix gamma_pr(mm::read_matrix(dir / "Gamma_pr.mtx"));
  return GoalProblem::make(std::move(g), std::move(gamma_obs), std::move(gamma_pr), std::move(o));
}

}  // namespace goalinf
