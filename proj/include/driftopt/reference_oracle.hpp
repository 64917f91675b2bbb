// Ground-truth solutions for small QP and NUM instances by enumerating
// candidate active sets and solving the KKT conditions on each.
#pragma once

#include "driftopt/core.hpp"
#include "driftopt/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace driftopt {

struct KktSolution {
  Vec x_star;
  double f_star = 0.0;
  Vec lambda_star;
  std::vector<Index> active_set;  // 0-based constraint indices with g_k(x*) = 0
};

struct KktOptions {
  double newton_start = 1.0;  // initial value of every active multiplier (NUM)
  double active_tol = 1e-8;
};

namespace detail {

inline constexpr Index kMaxEnumeratedConstraints = 20;

/// All subsets of {0..m-1}, by increasing size and then lexicographically.
template <class Visit>
bool for_each_subset(Index m, Visit&& visit) {
  std::vector<Index> idx;
  for (Index k = 0; k <= m; ++k) {
    idx.resize(static_cast<std::size_t>(k));
    for (Index j = 0; j < k; ++j) idx[static_cast<std::size_t>(j)] = j;
    while (true) {
      if (visit(idx)) return true;
      // next combination
      Index j = k - 1;
      while (j >= 0 && idx[static_cast<std::size_t>(j)] == m - k + j) --j;
      if (j < 0) break;
      ++idx[static_cast<std::size_t>(j)];
      for (Index l = j + 1; l < k; ++l) {
        idx[static_cast<std::size_t>(l)] = idx[static_cast<std::size_t>(l - 1)] + 1;
      }
    }
  }
  return false;
}

inline bool full_row_rank(const Mat& M) {
  if (M.rows() == 0) return true;
  Eigen::JacobiSVD<Mat> svd(M);
  const auto& sv = svd.singularValues();
  return (sv.array() > 1e-10 * sv.maxCoeff()).count() == M.rows();
}

inline Mat select_rows(const Mat& A, const std::vector<Index>& rows) {
  Mat out(static_cast<Index>(rows.size()), A.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = A.row(rows[r]);
  return out;
}

/// Maximizer of sum_k log(lambda_k) over {lambda > 0 : M lambda = w}, by
/// infeasible-start Newton. nullopt when the set has no interior.
inline std::optional<Vec> analytic_center(const Mat& M, const Vec& w, Vec lambda) {
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  const Index rank =
      sv.size() == 0 ? 0 : static_cast<Index>((sv.array() > 1e-10 * sv.maxCoeff()).count());
  const Mat U = svd.matrixU().leftCols(rank);
  const Mat Mr = U.transpose() * M;
  const Vec wr = U.transpose() * w;
  const Index q = lambda.size();
  Vec nu = Vec::Zero(rank);

  auto residual = [&](const Vec& l, const Vec& v) {
    Vec r(q + rank);
    r.head(q) = -l.cwiseInverse() + Mr.transpose() * v;
    r.tail(rank) = Mr * l - wr;
    return r;
  };

  for (int it = 0; it < 200; ++it) {
    const Vec r = residual(lambda, nu);
    if (r.norm() <= 1e-11 * (1.0 + lambda.cwiseInverse().norm())) {
      if ((M * lambda - w).norm() > 1e-9 * (1.0 + w.norm())) return std::nullopt;
      return lambda;
    }
    Mat K = Mat::Zero(q + rank, q + rank);
    K.topLeftCorner(q, q) = lambda.array().square().inverse().matrix().asDiagonal();
    K.topRightCorner(q, rank) = Mr.transpose();
    K.bottomLeftCorner(rank, q) = Mr;
    const Vec d = K.fullPivLu().solve(-r);
    const Vec dl = d.head(q);
    const Vec dn = d.tail(rank);
    double t = 1.0;
    while (t > 1e-20 && ((lambda + t * dl).array() <= 0.0).any()) t *= 0.5;
    while (t > 1e-20 && residual(lambda + t * dl, nu + t * dn).norm() > (1.0 - 0.01 * t) * r.norm()) {
      t *= 0.5;
    }
    if (t <= 1e-20) return std::nullopt;
    lambda += t * dl;
    nu += t * dn;
  }
  return std::nullopt;
}

/// Chooses the multiplier for a known optimum: the unique solution of the
/// stationarity system when the active rows are independent, otherwise the
/// analytic center of all valid multipliers. `fallback` is a valid multiplier
/// found during enumeration.
inline Vec select_multiplier(const Mat& A, const std::vector<Index>& active, const Vec& w,
                             const Vec& fallback) {
  const Mat A_K = select_rows(A, active);
  if (active.empty() || full_row_rank(A_K)) return fallback;
  const Vec start_active = [&] {
    Vec s(static_cast<Index>(active.size()));
    const double scale = 1e-2 * (1.0 + fallback.cwiseAbs().maxCoeff());
    for (std::size_t r = 0; r < active.size(); ++r) {
      s[static_cast<Index>(r)] = std::max(fallback[active[r]], scale);
    }
    return s;
  }();
  const auto center = analytic_center(A_K.transpose(), w, start_active);
  if (!center) return fallback;
  Vec lambda = Vec::Zero(A.rows());
  for (std::size_t r = 0; r < active.size(); ++r) lambda[active[r]] = (*center)[static_cast<Index>(r)];
  return lambda;
}

inline std::vector<Index> active_constraints(const Vec& g, double tol) {
  std::vector<Index> out;
  for (Index k = 0; k < g.size(); ++k) {
    if (std::abs(g[k]) <= tol) out.push_back(k);
  }
  return out;
}

}  // namespace detail

/// Solves min x'Px + c'x s.t. Ax <= b exactly: for each candidate active set
/// S, solves 2Px + c + A_S' lambda_S = 0, A_S x = b_S and keeps the first
/// primal- and dual-feasible candidate.
inline KktSolution kkt_solve_qp(const QpInstance& inst, const KktOptions& opts = {}) {
  inst.validate();
  const Index m = inst.m();
  const Index n = inst.n();
  if (m > detail::kMaxEnumeratedConstraints) {
    throw PreconditionError("KKT enumeration supports at most 20 constraints");
  }
  std::optional<KktSolution> found;
  detail::for_each_subset(m, [&](const std::vector<Index>& S) {
    const Index s = static_cast<Index>(S.size());
    const Mat A_S = detail::select_rows(inst.A, S);
    Mat K = Mat::Zero(n + s, n + s);
    K.topLeftCorner(n, n) = 2.0 * inst.P;
    K.topRightCorner(n, s) = A_S.transpose();
    K.bottomLeftCorner(s, n) = A_S;
    Vec rhs(n + s);
    rhs.head(n) = -inst.c;
    for (Index r = 0; r < s; ++r) rhs[n + r] = inst.b[S[static_cast<std::size_t>(r)]];
    Eigen::FullPivLU<Mat> lu(K);
    if (!lu.isInvertible()) return false;
    const Vec sol = lu.solve(rhs);
    const Vec x = sol.head(n);
    const Vec lam_S = sol.tail(s);
    const Vec g = inst.A * x - inst.b;
    if ((g.array() > 1e-9 * (1.0 + inst.b.cwiseAbs().maxCoeff())).any()) return false;
    if (s > 0 && lam_S.minCoeff() < -1e-12) return false;
    KktSolution out;
    out.x_star = x;
    out.lambda_star = Vec::Zero(m);
    for (Index r = 0; r < s; ++r) {
      out.lambda_star[S[static_cast<std::size_t>(r)]] = std::max(lam_S[r], 0.0);
    }
    found = std::move(out);
    return true;
  });
  if (!found) throw InfeasibleError("no KKT point exists: the QP is infeasible");

  KktSolution& sol = *found;
  sol.f_star = sol.x_star.dot(inst.P * sol.x_star) + inst.c.dot(sol.x_star);
  const Vec g = inst.A * sol.x_star - inst.b;
  sol.active_set = detail::active_constraints(g, opts.active_tol);
  const Vec w = -(2.0 * inst.P * sol.x_star + inst.c);
  sol.lambda_star = detail::select_multiplier(inst.A, sol.active_set, w, sol.lambda_star);
  return sol;
}

namespace detail {

inline Vec num_rates(const NumInstance& inst, const Vec& lambda) {
  return log_utility_box_argmin(inst, QueueState(lambda.cwiseMax(0.0)), 1.0);
}

/// Damped Newton on A_S x(lambda) = b_S with lambda zero outside S.
inline std::optional<Vec> num_newton(const NumInstance& inst, const std::vector<Index>& S,
                                     double start) {
  const Index m = inst.m();
  const Index s = static_cast<Index>(S.size());
  const Mat A_S = select_rows(inst.A, S);
  Vec b_S(s);
  for (Index r = 0; r < s; ++r) b_S[r] = inst.b[S[static_cast<std::size_t>(r)]];

  auto embed = [&](const Vec& lam_S) {
    Vec lam = Vec::Zero(m);
    for (Index r = 0; r < s; ++r) lam[S[static_cast<std::size_t>(r)]] = lam_S[r];
    return lam;
  };
  auto residual = [&](const Vec& lam_S) -> Vec { return A_S * num_rates(inst, embed(lam_S)) - b_S; };

  Vec lam_S = Vec::Constant(s, start);
  Vec F = residual(lam_S);
  for (int it = 0; it < 100; ++it) {
    if (F.norm() <= 1e-10) return embed(lam_S);
    const Vec lam = embed(lam_S);
    const Vec price = inst.A.transpose() * lam;
    Mat J = Mat::Zero(s, s);
    for (Index i = 0; i < inst.n(); ++i) {
      if (!(price[i] > 0.0)) continue;
      const double rate = inst.c[i] / price[i];
      if (rate >= inst.xmax[i]) continue;  // clipped: locally constant
      const Vec a_S = A_S.col(i);
      J.noalias() -= (inst.c[i] / (price[i] * price[i])) * (a_S * a_S.transpose());
    }
    const Vec step = J.completeOrthogonalDecomposition().solve(-F);
    if (!step.allFinite()) return std::nullopt;
    double t = 1.0;
    int halvings = 0;
    Vec trial;
    Vec F_trial;
    for (; halvings <= 60; ++halvings, t *= 0.5) {
      trial = lam_S + t * step;
      if ((trial.array() <= 0.0).any()) continue;
      F_trial = residual(trial);
      if (F_trial.norm() < F.norm()) break;
    }
    if (halvings > 60) return std::nullopt;
    lam_S = trial;
    F = F_trial;
  }
  if (F.norm() <= 1e-10) return embed(lam_S);
  return std::nullopt;
}

}  // namespace detail

/// Solves the compact NUM problem: for each candidate set S of tight links,
/// finds lambda_S > 0 with sum_i c_i (a_i)_k / (lambda . a_i) = b_k on S and
/// keeps the first candidate whose rates satisfy every capacity.
inline KktSolution kkt_solve_num(const NumInstance& inst, const KktOptions& opts = {}) {
  inst.validate();
  const Index m = inst.m();
  if (m > detail::kMaxEnumeratedConstraints) {
    throw PreconditionError("KKT enumeration supports at most 20 constraints");
  }
  std::optional<KktSolution> found;
  detail::for_each_subset(m, [&](const std::vector<Index>& S) {
    if (S.empty()) {
      const Vec x = inst.xmax;
      if (((inst.A * x - inst.b).array() > 1e-8).any()) return false;
      found = KktSolution{x, 0.0, Vec::Zero(m), {}};
      return true;
    }
    const auto lam = detail::num_newton(inst, S, opts.newton_start);
    if (!lam) return false;
    const Vec x = detail::num_rates(inst, *lam);
    if (((inst.A * x - inst.b).array() > 1e-8).any()) return false;
    found = KktSolution{x, 0.0, *lam, {}};
    return true;
  });
  if (!found) throw ConvergenceError("no active set produced a KKT point", Vec(), kInf);

  KktSolution& sol = *found;
  for (Index i = 0; i < inst.n(); ++i) {
    if (!(sol.x_star[i] > 0.0 && sol.x_star[i] < inst.xmax[i])) {
      throw DomainError("NUM optimum is not interior to the rate box");
    }
  }
  sol.f_star = -(inst.c.array() * sol.x_star.array().log()).sum();
  const Vec g = inst.A * sol.x_star - inst.b;
  sol.active_set = detail::active_constraints(g, opts.active_tol);
  const Vec w = inst.c.cwiseQuotient(sol.x_star);
  sol.lambda_star = detail::select_multiplier(inst.A, sol.active_set, w, sol.lambda_star);
  return sol;
}

}  // namespace driftopt
