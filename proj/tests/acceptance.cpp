// Acceptance gate: one self-contained check per release criterion, each
// printing a single PASS/FAIL line. Exit status is the number of failures.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "goalinf/approx.hpp"
#include "goalinf/metrics.hpp"
#include "goalinf/problems.hpp"
#include "goalinf/sampling.hpp"
#include "test_util.hpp"

using namespace goalinf;
using testutil::random_matrix;
using testutil::random_problem;
using testutil::random_spd;

namespace {

int g_failures = 0;

void report(int idx, const char* name, bool ok, double seconds) {
  std::printf("%-4s criterion %2d: %s (%.1fs)\n", ok ? "PASS" : "FAIL", idx, name, seconds);
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

void criterion(int idx, const char* name, const std::function<bool()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = false;
  try {
    ok = body();
  } catch (const std::exception& e) {
    std::printf("     criterion %2d threw: %s\n", idx, e.what());
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(idx, name, ok, secs);
}

// Shared fixture: the same 50-problem random suite for criteria 2-8.
std::vector<GoalProblem> random_suite() {
  std::vector<GoalProblem> suite;
  suite.reserve(50);
  Rng rng(20260826);
  for (int i = 0; i < 50; ++i) suite.push_back(random_problem(rng, 40, 30, 12));
  return suite;
}

bool check(bool cond, const char* what) {
  if (!cond) std::printf("     violated: %s\n", what);
  return cond;
}

}  // namespace

int main() {
  const std::vector<GoalProblem> suite = random_suite();

  criterion(1, "diagonal closed forms (n=30, p=15) to 1e-10", [] {
    const Index n = 30, p = 15;
    const GoalProblem pb = diagonal_problem(n, p);
    const ParamSpectrum ps = param_spectrum(pb);
    const GoalSpectrum gs = goal_spectrum(pb);

    Vector d2(n), lam(p);
    for (Index i = 0; i < n; ++i) {
      d2[i] = static_cast<double>(n - (i + 1)) * static_cast<double>(i + 1);
    }
    for (Index i = 0; i < p; ++i) lam[i] = d2[i] / (1.0 + d2[i]);
    std::sort(d2.begin(), d2.end(), std::greater<>());
    std::sort(lam.begin(), lam.end(), std::greater<>());

    bool ok = check(gs.count() == p, "lambda count equals p");
    // Mode n has h_n floored at 1e-8, so its delta^2 is ~3e-7 instead of 0;
    // compare that one mode against the floor instead of the exact formula.
    for (Index i = 0; i + 1 < n && ok; ++i) {
      ok = check(std::abs(ps.deltas_sq[i] - d2[i]) < 1e-10, "delta^2 closed form");
    }
    ok = ok && check(std::abs(ps.deltas_sq[n - 1] - 1e-8 * 30.0) < 1e-10,
                     "floored last delta^2");
    for (Index i = 0; i < p && ok; ++i) {
      ok = check(std::abs(gs.lambdas[i] - lam[i]) < 1e-10, "lambda closed form");
    }
    return ok;
  });

  criterion(2, "full-rank exactness on 50 random problems", [&] {
    Rng rng(2);
    for (const GoalProblem& pb : suite) {
      const GoalSpectrum gs = goal_spectrum(pb);
      const Matrix exact = testutil::exact_qoi_cov(pb);
      if (!check(testutil::rel_frob(optimal_qoi_cov(gs, pb, gs.count()).densify().dense(),
                                    exact) < 1e-8,
                 "full-rank covariance exactness")) {
        return false;
      }
      const MeanMap map = mean_map(gs, gs.count());
      const Matrix exact_map = testutil::exact_qoi_mean_map(pb);
      for (int k = 0; k < 20; ++k) {
        const Vector y = random_matrix(pb.d(), 1, rng).col(0);
        const Vector ref = exact_map * y;
        if (!check((map.apply(y) - ref).norm() <= 1e-8 * (1.0 + ref.norm()),
                   "full-rank mean exactness")) {
          return false;
        }
      }
    }
    return true;
  });

  criterion(3, "error formulas match direct Forstner distances to 1e-8", [&] {
    for (const GoalProblem& pb : suite) {
      const GoalSpectrum gs = goal_spectrum(pb);
      const ParamSpectrum ps = param_spectrum(pb);
      const SpdMatrix exact_qoi(testutil::exact_qoi_cov(pb));
      const SpdMatrix exact_pos(testutil::exact_param_cov(pb));
      for (Index r = 0; r <= gs.count(); ++r) {
        const double direct = forstner(exact_qoi, optimal_qoi_cov(gs, pb, r).densify());
        if (!check(std::abs(direct - optimal_qoi_error(gs, r)) < 1e-8,
                   "optimal error formula")) {
          return false;
        }
      }
      for (Index r = 0; r <= ps.count(); ++r) {
        const double direct = forstner(exact_pos, param_opt_cov(ps, pb, r).densify());
        if (!check(std::abs(direct - param_opt_error(ps, r)) < 1e-8,
                   "parameter error formula")) {
          return false;
        }
      }
    }
    return true;
  });

  criterion(4, "optimality sandwich at every rank, slack 1e-10", [&] {
    for (const GoalProblem& pb : suite) {
      const GoalSpectrum gs = goal_spectrum(pb);
      const ParamSpectrum ps = param_spectrum(pb);
      const SpdMatrix exact_qoi(testutil::exact_qoi_cov(pb));
      const SpdMatrix exact_pos(testutil::exact_param_cov(pb));
      const Index r_max = std::min(gs.count(), ps.count());
      for (Index r = 0; r <= r_max; ++r) {
        const double opt = forstner(exact_qoi, optimal_qoi_cov(gs, pb, r).densify());
        const double nav = forstner(exact_qoi, naive_qoi_cov(pb, ps, r));
        const double par = forstner(exact_pos, param_opt_cov(ps, pb, r).densify());
        if (!check(opt <= nav + 1e-10 && nav <= par + 1e-10, "sandwich ordering")) {
          return false;
        }
      }
    }
    return true;
  });

  criterion(5, "computational pencil matches the defining pencil to 1e-9", [&] {
    for (const GoalProblem& pb : suite) {
      const GoalSpectrum gs = goal_spectrum(pb);
      const Vector ref = testutil::defining_pencil_eigenvalues(pb);
      for (Index i = 0; i < gs.count(); ++i) {
        if (!check(std::abs(gs.lambdas[i] - ref[i]) < 1e-9, "pencil eigenvalue match")) {
          return false;
        }
      }
      for (Index i = gs.count(); i < ref.size(); ++i) {
        if (!check(std::abs(ref[i]) < 1e-8, "discarded eigenvalues are zero")) return false;
      }
    }
    return true;
  });

  criterion(6, "square-root factor and q-tilde orthonormality", [&] {
    for (const GoalProblem& pb : suite) {
      const GoalSpectrum gs = goal_spectrum(pb);
      for (Index r = 0; r <= gs.count(); ++r) {
        const Matrix s = qoi_sqrt(gs, pb, r);
        const Matrix target = optimal_qoi_cov(gs, pb, r).densify().dense();
        if (!check((s * s.transpose() - target).norm() < 1e-10 * target.norm(),
                   "S S^T reproduces the truncated covariance")) {
          return false;
        }
      }
      const Matrix gram = gs.q_tilde.transpose() * pb.Gamma_pr.solve(gs.q_tilde);
      if (!check((gram - Matrix::Identity(gs.count(), gs.count())).norm() < 1e-8,
                 "q_tilde prior-precision orthonormality")) {
        return false;
      }
    }
    return true;
  });

  criterion(7, "goal-oriented parameter covariance pushforward", [&] {
    for (const GoalProblem& pb : suite) {
      const GoalSpectrum gs = goal_spectrum(pb);
      for (Index r = 0; r <= gs.count(); ++r) {
        const Matrix gpar = goal_param_cov(gs, pb, r).densify().dense();
        const Matrix pushed = pb.O * gpar * pb.O.transpose();
        const Matrix target = optimal_qoi_cov(gs, pb, r).densify().dense();
        if (!check((pushed - target).norm() < 1e-10 * target.norm(),
                   "O update O^T equals the optimal covariance")) {
          return false;
        }
      }
      // Null-space structure: the update directions q_tilde live in
      // Gamma_pr-weighted range of O^T (q_tilde = S_pr Pi S_pr^T G^T q),
      // i.e. projecting again changes nothing.
      const RangeProjector proj(Matrix(pb.S_pr.transpose() * pb.O.transpose()));
      const Matrix reproj = pb.S_pr * proj.apply_matrix(gs.q_bar);
      if (!check((reproj - gs.q_tilde).norm() < 1e-8 * (1.0 + gs.q_tilde.norm()),
                 "q_tilde lies in the projected subspace")) {
        return false;
      }
    }
    return true;
  });

  criterion(8, "Hellinger formula and expectation bound", [&] {
    for (const GoalProblem& pb : suite) {
      const GoalSpectrum gs = goal_spectrum(pb);
      const SpdMatrix exact(testutil::exact_qoi_cov(pb));
      Rng rng(8);
      const Vector y = random_matrix(pb.d(), 1, rng).col(0);
      const double c = expectation_bound_constant(pb, y, 10.0, 3.0);
      if (!check(std::isfinite(c) && c > 0.0, "bound constant finite and positive")) {
        return false;
      }
      for (Index r = 0; r <= gs.count(); ++r) {
        const SpdMatrix approx = optimal_qoi_cov(gs, pb, r).densify();
        const double oracle = hellinger_gaussian(Vector::Zero(pb.p()), exact, approx);
        const double formula = hellinger_truncation(gs.lambdas, r);
        // Squared distances: the distance has a sqrt(eps) roundoff floor at
        // zero, while the squared form is accurate to ~1e-13 everywhere.
        if (!check(std::abs(formula * formula - oracle * oracle) < 1e-9,
                   "Hellinger truncation formula")) {
          return false;
        }
        // g(z) = z_1: the exact and rank-r measures share the exact mean
        // (truncation perturbs only the covariance), so the expectation gap
        // is exactly zero and the bound holds as long as C >= 0.
        if (!check(0.0 <= c * formula + 1e-15, "expectation bound for z_1")) return false;
      }
    }
    return true;
  });

  criterion(9, "Monte Carlo Bayes risk within 3 SE of the predicted tail + p", [] {
    Rng prob_rng(99);
    const GoalProblem pb = random_problem(prob_rng, 20, 16, 6);
    const GoalSpectrum gs = goal_spectrum(pb);
    for (Index r = 0; r <= gs.count(); ++r) {
      const MeanMap map = mean_map(gs, r);
      Rng mc(1000 + static_cast<std::uint64_t>(r));
      const auto [risk, se] = empirical_bayes_risk(pb, map, 20000, mc);
      const double predicted = predicted_bayes_risk(gs, r, pb.p());
      if (!check(std::abs(risk - predicted) <= 3.0 * se,
                 "risk within 3 standard errors")) {
        std::printf("     r=%lld risk=%.6f predicted=%.6f se=%.6f\n",
                    static_cast<long long>(r), risk, predicted, se);
        return false;
      }
    }
    return true;
  });

  criterion(10, "heat desk ordering and max-QoI KS at N=1e5", [] {
    const GoalProblem pb = heat_problem(HeatConfig::desk_default());
    const GoalSpectrum gs = goal_spectrum(pb);
    const ParamSpectrum ps = param_spectrum(pb);
    const SpdMatrix exact(testutil::exact_qoi_cov(pb));

    const Index r = 20;
    const double opt20 = forstner(exact, optimal_qoi_cov(gs, pb, std::min(r, gs.count())).densify());
    const double nav20 = forstner(exact, naive_qoi_cov(pb, ps, r));
    bool ok = check(opt20 < nav20, "rank-20 optimal strictly below naive");

    double prev = std::numeric_limits<double>::infinity();
    for (Index k = 0; k <= std::min<Index>(r, gs.count()) && ok; ++k) {
      const double e = forstner(exact, optimal_qoi_cov(gs, pb, k).densify());
      ok = check(e <= prev + 1e-10, "optimal error curve non-increasing");
      prev = e;
    }
    if (!ok) return false;

    // Max-QoI pushforward: exact posterior vs full-rank approximation.
    Rng data_rng(10, 1);
    const auto [x, y] = sample_joint(pb, data_rng);
    (void)x;
    const Gaussian post = posterior_qoi(pb, y);
    const Vector approx_mean = mean_map(gs, gs.count()).apply(y);
    const Matrix approx_factor = qoi_sqrt(gs, pb, gs.count());

    const Index n_samples = 100000;
    Rng r1(10, 2), r2(10, 3);
    const Vector max_exact = pushforward_max(
        sample_factor_gaussian(post.mean, post.cov.chol_lower(), n_samples, r1));
    const Vector max_approx = pushforward_max(
        sample_factor_gaussian(approx_mean, approx_factor, n_samples, r2));
    const double ks = ks_statistic(max_exact, max_approx);
    std::printf("     heat: opt20=%.3e naive20=%.3e ks=%.4f\n", opt20, nav20, ks);
    return check(ks < 0.01, "KS below 0.01 at N = 1e5");
  });

  criterion(11, "Schur eigenpair relations and Cauchy interlacing on 100 matrices", [] {
    Rng rng(11);
    for (int rep = 0; rep < 100; ++rep) {
      const Index n = 4 + static_cast<Index>(rng.next_u64() % 12);
      const Index split =
          1 + static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(n - 1));
      const SpdMatrix sigma = random_spd(n, rng);
      const Matrix prec = sigma.dense().inverse();
      const auto [s_of_a, s_of_c] = schur_complements(sigma, split);

      // Inverse-block relations.
      const Matrix p11 = prec.topLeftCorner(split, split);
      const Matrix p22 = prec.bottomRightCorner(n - split, n - split);
      if (!check((s_of_c.dense() * p11 - Matrix::Identity(split, split)).norm() <= 1e-8 &&
                     (s_of_a.dense() * p22 - Matrix::Identity(n - split, n - split)).norm() <=
                         1e-8,
                 "Schur complement inverse-block identity")) {
        return false;
      }

      // Eigenvalue reciprocity, both partitions.
      auto reciprocal_match = [](const Matrix& sc, const Matrix& pblock) {
        Eigen::SelfAdjointEigenSolver<Matrix> es_sc(sc);
        Eigen::SelfAdjointEigenSolver<Matrix> es_p(pblock);
        Vector recip = es_p.eigenvalues().cwiseInverse();
        std::sort(recip.begin(), recip.end());
        return (es_sc.eigenvalues() - recip).norm() <= 1e-8 * (1.0 + recip.norm());
      };
      if (!check(reciprocal_match(s_of_c.dense(), p11) &&
                     reciprocal_match(s_of_a.dense(), p22),
                 "Schur complement eigenvalue reciprocity")) {
        return false;
      }

      // Eigenpair correspondence, all three parts, driven by the pencil
      // (B C^-1 B^T, A): (beta, w) there gives (1-beta, w) for (S(C), A);
      // for beta > 0, (1/(1-beta), B^T w) for (S(A)^-1, C^-1) and
      // (beta/(1-beta), B^T w) for (C^-1 B^T S(C)^-1 B C^-1, C^-1).
      {
        const Matrix& s = sigma.dense();
        const Matrix a = s.topLeftCorner(split, split);
        const Matrix b = s.topRightCorner(split, n - split);
        const SpdMatrix c(Matrix(s.bottomRightCorner(n - split, n - split)));
        const Matrix c_inv = c.solve(Matrix(Matrix::Identity(n - split, n - split)));
        const Matrix sa_inv =
            s_of_a.solve(Matrix(Matrix::Identity(n - split, n - split)));
        const EigPairs pairs =
            generalized_eigh(Matrix(b * c.solve(Matrix(b.transpose()))), SpdMatrix(a));
        for (Index i = 0; i < pairs.values.size(); ++i) {
          const double beta = pairs.values[i];
          const Vector w = pairs.vectors.col(i);
          if (!check(beta < 1.0, "pencil eigenvalue below one")) return false;
          if (!check((s_of_c.dense() * w - (1.0 - beta) * (a * w)).norm() <= 1e-8,
                     "Schur eigenpair part (i)")) {
            return false;
          }
          if (beta <= 1e-8) continue;
          const Vector btw = b.transpose() * w;
          if (!check((sa_inv * btw - (c_inv * btw) / (1.0 - beta)).norm() <=
                         1e-8 * (1.0 + btw.norm()),
                     "Schur eigenpair part (ii)")) {
            return false;
          }
          const Matrix third = c_inv * b.transpose() * s_of_c.solve(Matrix(b * c_inv));
          if (!check((third * btw - (beta / (1.0 - beta)) * (c_inv * btw)).norm() <=
                         1e-8 * (1.0 + btw.norm()),
                     "Schur eigenpair part (iii)")) {
            return false;
          }
        }
      }

      // Cauchy interlacing for a random full-column-rank projection of the
      // pencil (Sigma, I).
      {
        const Index m = split;
        const Matrix proj = random_matrix(n, m, rng);
        const Vector full = generalized_eigh(sigma.dense(), SpdMatrix::identity(n)).values;
        const Vector sub =
            generalized_eigh(Matrix(proj.transpose() * sigma.dense() * proj),
                             SpdMatrix(Matrix(proj.transpose() * proj)))
                .values;
        for (Index k = 0; k < m; ++k) {
          if (!check(sub[k] <= full[k] + 1e-8 && sub[k] >= full[n - m + k] - 1e-8,
                     "Cauchy interlacing")) {
            return false;
          }
        }
      }
    }
    return true;
  });

  std::printf("%d of 11 criteria passed\n", 11 - g_failures);
  return g_failures;
}
