// Dual function q(lambda) = min_{x in X} f(x) + lambda . g(x): values,
// gradients, Hessians, moduli, rank conditions and threshold calculators.
#pragma once

#include "driftopt/core.hpp"
#include "driftopt/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace driftopt {

struct DualEval {
  double value = 0.0;  // q(lambda)
  Vec gradient;        // g(x(lambda))
  Vec minimizer;       // x(lambda)
};

/// q(lambda) and its gradient g(x(lambda)), with x(lambda) from the oracle at
/// Q = lambda and V = 1.
inline DualEval dual_value_and_gradient(const ProgramSpec& program, const InnerOracle& oracle,
                                        const Vec& lambda) {
  require_size(lambda.size(), program.m, "multiplier");
  DualEval out;
  out.minimizer = oracle(QueueState(lambda), 1.0);
  out.gradient = program.constraints(out.minimizer);
  out.value = program.objective(out.minimizer) + lambda.dot(out.gradient);
  return out;
}

/// c_h^2 / sigma_F: smoothness modulus of q when f is sigma_F-strongly convex
/// and ||grad g||_F <= c_h.
inline double smoothness_modulus(double sigma_F, double c_h) {
  if (!(sigma_F > 0.0) || !(c_h > 0.0)) {
    throw DomainError("smoothness modulus needs sigma_F > 0 and c_h > 0");
  }
  return c_h * c_h / sigma_F;
}

/// -sum_i c_i a_i a_i' / (lambda . a_i)^2, valid where no rate is clipped.
inline Mat num_dual_hessian(const NumInstance& inst, const Vec& lambda) {
  require_size(lambda.size(), inst.m(), "multiplier");
  if ((lambda.array() < 0.0).any()) throw DomainError("multiplier must be >= 0");
  Mat H = Mat::Zero(inst.m(), inst.m());
  for (Index i = 0; i < inst.n(); ++i) {
    const Vec a = inst.A.col(i);
    const double price = lambda.dot(a);
    if (!(price > 0.0)) {
      throw DomainError("lambda . a_" + std::to_string(i) + " is zero; Hessian undefined");
    }
    H.noalias() -= (inst.c[i] / (price * price)) * (a * a.transpose());
  }
  return H;
}

/// -J [H_f + sum_k lambda_k H_gk]^{-1} J', with J the m x n constraint
/// Jacobian at x(lambda).
inline Mat general_dual_hessian(const Mat& grad_g, const Mat& hess_f,
                                const std::vector<Mat>& hess_g, const Vec& lambda) {
  const Index n = hess_f.rows();
  if (hess_f.cols() != n) throw DimensionError("objective Hessian must be square");
  require_size(grad_g.cols(), n, "constraint Jacobian columns");
  require_size(lambda.size(), grad_g.rows(), "multiplier");
  if (!hess_g.empty()) require_size(static_cast<Index>(hess_g.size()), lambda.size(), "constraint Hessians");
  Mat inner = hess_f;
  for (std::size_t k = 0; k < hess_g.size(); ++k) {
    if (hess_g[k].rows() != n || hess_g[k].cols() != n) {
      throw DimensionError("constraint Hessian " + std::to_string(k) + " has the wrong shape");
    }
    inner += lambda[static_cast<Index>(k)] * hess_g[k];
  }
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(inner, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) {
    throw DomainError("Lagrangian Hessian is not positive definite");
  }
  const Mat H = -grad_g * inner.llt().solve(grad_g.transpose());
  return 0.5 * (H + H.transpose());
}

struct Qualification {
  bool locally_quadratic = false;  // active rows have full row rank
  bool strongly_concave = false;   // whole matrix has full row rank
};

/// Rank with singular values above 1e-10 * sigma_max.
inline Index numerical_rank(const Mat& M) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(M);
  const auto& sv = svd.singularValues();
  const double cut = 1e-10 * sv.maxCoeff();
  return static_cast<Index>((sv.array() > cut).count());
}

inline Qualification qualification_check(const Mat& A_full, const std::vector<Index>& active_rows) {
  if (A_full.size() == 0) throw DomainError("qualification check needs a nonempty matrix");
  Mat active(static_cast<Index>(active_rows.size()), A_full.cols());
  for (std::size_t r = 0; r < active_rows.size(); ++r) {
    const Index k = active_rows[r];
    if (k < 0 || k >= A_full.rows()) throw DomainError("active row index out of range");
    active.row(static_cast<Index>(r)) = A_full.row(k);
  }
  Qualification out;
  out.locally_quadratic = numerical_rank(active) == active.rows();
  out.strongly_concave = numerical_rank(A_full) == A_full.rows();
  return out;
}

/// max{4V^2 ||lambda0 - lambda*||^2 / (2V - gamma), q(lambda*) - q(lambda0)};
/// q(lambda*) - q(lambda(t)) <= theta / t for all t >= 1 when V >= gamma.
inline double theta_bound(double V, double gamma, const Vec& lambda0, const Vec& lambda_star,
                          double q_at_lambda0, double q_at_star) {
  if (!(gamma > 0.0) || !(V >= gamma)) throw PreconditionError("theta bound requires V >= gamma > 0");
  require_size(lambda_star.size(), lambda0.size(), "reference multiplier");
  const double dist2 = (lambda0 - lambda_star).squaredNorm();
  return std::max(4.0 * V * V * dist2 / (2.0 * V - gamma), q_at_star - q_at_lambda0);
}

struct Thresholds {
  double Tq = 0.0;  // iterations until lambda(t) is within D_q of lambda*
  double Tc = 0.0;  // iterations until lambda(t) is within D_c of lambda*
};

inline Thresholds tq_tc_thresholds(double V, double gamma, double lambda0_dist, double dual_gap0,
                                   double Dq, double Lq, double Dc, double Lc) {
  if (!(V > 0.0) || !(gamma > 0.0) || !(Dq > 0.0) || !(Lq > 0.0) || !(Dc > 0.0) ||
      !(Lc > 0.0)) {
    throw DomainError("threshold constants must be positive");
  }
  if (!(lambda0_dist >= 0.0) || !(dual_gap0 >= 0.0)) {
    throw DomainError("initial distance and dual gap must be >= 0");
  }
  if (V < gamma) throw PreconditionError("thresholds require V >= gamma");
  const double denom = 2.0 * V - gamma;
  Thresholds out;
  out.Tq = std::max(4.0 * V * V * lambda0_dist / (denom * Lq * Dq * Dq), dual_gap0 / (Lq * Dq * Dq));
  out.Tc = std::max(8.0 * V * V * lambda0_dist / (denom * Lc * Dc * Dc),
                    2.0 * dual_gap0 / (Lc * Dc * Dc));
  return out;
}

/// A smoothness modulus can never be below the local strong-concavity modulus.
inline bool gamma_geq_Lc_check(double gamma, double Lc) { return gamma >= Lc - 1e-12; }

/// Smallest eigenvalue of -H when H is negative definite, else nullopt.
inline std::optional<double> lc_estimate(const Mat& hessian) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (hessian + hessian.transpose()),
                                         Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  if (!(top < 0.0)) return std::nullopt;
  return -top;
}

struct DualReport {
  Vec lambda;
  double q_value = 0.0;
  Vec gradient;
  std::optional<Mat> hessian;
  double gamma = 0.0;
  std::optional<double> Lc_estimate;
  Qualification qualification;
};

inline DualReport dual_report(const ProgramSpec& program, const InnerOracle& oracle,
                              const Vec& lambda, std::optional<Mat> hessian, double gamma,
                              const Mat& A_full, const std::vector<Index>& active_rows) {
  DualReport r;
  const DualEval e = dual_value_and_gradient(program, oracle, lambda);
  r.lambda = lambda;
  r.q_value = e.value;
  r.gradient = e.gradient;
  r.gamma = gamma;
  if (hessian) r.Lc_estimate = lc_estimate(*hessian);
  r.hessian = std::move(hessian);
  r.qualification = qualification_check(A_full, active_rows);
  return r;
}

}  // namespace driftopt
