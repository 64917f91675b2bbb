// Inner-minimization oracles: argmin over X of V f(x) + Q . g(x).
#pragma once

#include "driftopt/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace driftopt {

// ---------------------------------------------------------------------------
// Problem instances

/// Network utility maximization in compact form:
///   min sum_i -c_i log x_i  s.t.  A x <= b,  0 <= x <= xmax.
struct NumInstance {
  Vec c;     // utility weights, > 0
  Mat A;     // m x n routing matrix with 0/1 entries
  Vec b;     // link capacities, > 0
  Vec xmax;  // per-flow caps, each > max(b)

  Index n() const { return A.cols(); }
  Index m() const { return A.rows(); }

  void validate() const {
    if (A.rows() < 1 || A.cols() < 1) throw DomainError("NUM routing matrix is empty");
    require_size(c.size(), n(), "NUM utility weights");
    require_size(b.size(), m(), "NUM capacities");
    require_size(xmax.size(), n(), "NUM rate caps");
    if ((c.array() <= 0.0).any()) throw DomainError("NUM utility weights must be > 0");
    if ((b.array() <= 0.0).any()) throw DomainError("NUM capacities must be > 0");
    for (Index k = 0; k < m(); ++k) {
      for (Index i = 0; i < n(); ++i) {
        if (A(k, i) != 0.0 && A(k, i) != 1.0) {
          throw DomainError("NUM routing matrix entries must be 0 or 1");
        }
      }
    }
    for (Index i = 0; i < n(); ++i) {
      if (A.col(i).sum() == 0.0) {
        throw DomainError("flow " + std::to_string(i) + " uses no link");
      }
    }
    const double bmax = b.maxCoeff();
    for (Index i = 0; i < n(); ++i) {
      if (!(xmax[i] > bmax)) {
        throw DomainError("NUM rate cap xmax_" + std::to_string(i) +
                          " must exceed the largest capacity");
      }
    }
  }
};

/// min x'Px + c'x  s.t.  A x <= b, x in R^n.
struct QpInstance {
  Mat P;
  Vec c;
  Mat A;
  Vec b;

  Index n() const { return P.rows(); }
  Index m() const { return A.rows(); }

  void validate() const {
    if (P.rows() < 1 || P.rows() != P.cols()) throw DimensionError("QP matrix P must be square");
    require_size(c.size(), n(), "QP linear term");
    require_size(A.cols(), n(), "QP constraint matrix columns");
    if (A.rows() < 1) throw DomainError("QP needs at least one constraint");
    require_size(b.size(), m(), "QP right-hand side");
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw DomainError("QP matrix P must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(P, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) {
      throw DomainError("QP matrix P must be positive definite");
    }
  }

  /// Smallest eigenvalue of 2P, the strong convexity modulus of x'Px + c'x.
  double convexity_modulus() const {
    Eigen::SelfAdjointEigenSolver<Mat> eig(2.0 * P, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
  }
};

/// Largest Euclidean row norm: the common Lipschitz modulus of a_k'x - b_k.
inline double max_row_norm(const Mat& A) { return A.rowwise().norm().maxCoeff(); }

inline ProgramSpec make_program(const NumInstance& inst, double alpha, double beta) {
  inst.validate();
  ProgramSpec p;
  p.n = inst.n();
  p.m = inst.m();
  p.objective = [c = inst.c](const Vec& x) {
    double f = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
      if (!(x[i] > 0.0)) return kInf;
      f -= c[i] * std::log(x[i]);
    }
    return f;
  };
  p.objective_gradient = [c = inst.c](const Vec& x) -> Vec {
    return -c.cwiseQuotient(x);
  };
  p.constraints = [A = inst.A, b = inst.b](const Vec& x) -> Vec { return A * x - b; };
  p.constraint_jacobian = [A = inst.A](const Vec&) { return A; };
  p.feasible_set = Box{Vec::Zero(inst.n()), inst.xmax};
  p.alpha = alpha;
  p.beta = beta;
  p.validate();
  return p;
}

inline ProgramSpec make_program(const QpInstance& inst, double alpha, double beta) {
  inst.validate();
  ProgramSpec p;
  p.n = inst.n();
  p.m = inst.m();
  p.objective = [P = inst.P, c = inst.c](const Vec& x) { return x.dot(P * x) + c.dot(x); };
  p.objective_gradient = [P = inst.P, c = inst.c](const Vec& x) -> Vec {
    return 2.0 * (P * x) + c;
  };
  p.constraints = [A = inst.A, b = inst.b](const Vec& x) -> Vec { return A * x - b; };
  p.constraint_jacobian = [A = inst.A](const Vec&) { return A; };
  p.feasible_set = Box::unbounded(inst.n());
  p.alpha = alpha;
  p.beta = beta;
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Closed-form oracles

/// x_i = clip(c_i V / (q . a_i), 0, xmax_i); a zero denominator (only possible
/// at q . a_i = 0) resolves to the cap.
inline Vec log_utility_box_argmin(const NumInstance& inst, const QueueState& q, double V) {
  if (!(V > 0.0)) throw DomainError("V must be > 0");
  require_size(q.size(), inst.m(), "NUM oracle queue");
  const Vec price = inst.A.transpose() * q.values();
  Vec x(inst.n());
  for (Index i = 0; i < inst.n(); ++i) {
    x[i] = price[i] > 0.0 ? std::clamp(inst.c[i] * V / price[i], 0.0, inst.xmax[i])
                          : inst.xmax[i];
  }
  return x;
}

namespace detail {

/// Cholesky factor of P with a guard on its condition number.
inline Eigen::LLT<Mat> factor_qp(const QpInstance& inst) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(inst.P, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) {
    throw NumericalError("QP matrix P is singular or ill-conditioned");
  }
  Eigen::LLT<Mat> llt(inst.P);
  if (llt.info() != Eigen::Success) throw NumericalError("Cholesky factorization of P failed");
  return llt;
}

inline Vec solve_qp_stationarity(const Eigen::LLT<Mat>& llt, const QpInstance& inst,
                                 const QueueState& q, double V) {
  // 2VPx = -(Vc + A'q)
  const Vec rhs = -(V * inst.c + inst.A.transpose() * q.values());
  return llt.solve(rhs) / (2.0 * V);
}

}  // namespace detail

/// Unconstrained minimizer of V(x'Px + c'x) + q'(Ax - b).
inline Vec quadratic_argmin(const QpInstance& inst, const QueueState& q, double V) {
  if (!(V > 0.0)) throw DomainError("V must be > 0");
  require_size(q.size(), inst.m(), "QP oracle queue");
  return detail::solve_qp_stationarity(detail::factor_qp(inst), inst, q, V);
}

// ---------------------------------------------------------------------------
// Generic projected-gradient oracle

struct InnerSolveOptions {
  double tol = 1e-10;
  int max_inner = 200000;
  /// Lipschitz constant of grad f + (q/V) . grad g. Estimated by power
  /// iteration on a finite-difference Hessian when absent.
  std::optional<double> lipschitz;
  std::optional<Vec> start;
};

namespace detail {

inline Vec penalized_gradient(const ProgramSpec& p, const Vec& x, const Vec& q, double V) {
  if (p.objective_gradient && p.constraint_jacobian) {
    return V * p.objective_gradient(x) + p.constraint_jacobian(x).transpose() * q;
  }
  Vec grad(p.n);
  Vec xp = x;
  Vec xm = x;
  for (Index i = 0; i < p.n; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    grad[i] = (p.penalized(xp, q, V) - p.penalized(xm, q, V)) / (2.0 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return grad;
}

inline Vec default_start(const Box& box) {
  Vec x(box.size());
  for (Index i = 0; i < box.size(); ++i) {
    const double lo = box.lo[i];
    const double hi = box.hi[i];
    if (std::isfinite(lo) && std::isfinite(hi)) {
      x[i] = 0.5 * (lo + hi);
    } else if (std::isfinite(lo)) {
      x[i] = std::max(lo + 1.0, 0.0);
    } else if (std::isfinite(hi)) {
      x[i] = std::min(hi - 1.0, 0.0);
    } else {
      x[i] = 0.0;
    }
  }
  return x;
}

/// Largest curvature of the penalized objective at x, per unit V.
inline double estimate_inner_lipschitz(const ProgramSpec& p, const Vec& x, const Vec& q,
                                       double V) {
  Vec v = Vec::Ones(p.n).normalized();
  double est = 0.0;
  for (int it = 0; it < 30; ++it) {
    const double h = 1e-5 * std::max(1.0, x.norm());
    const Vec hv = (penalized_gradient(p, x + h * v, q, V) -
                    penalized_gradient(p, x - h * v, q, V)) /
                   (2.0 * h);
    const double nrm = hv.norm();
    if (!(nrm > 0.0) || !std::isfinite(nrm)) break;
    est = nrm;
    v = hv / nrm;
  }
  return std::max(est / V, 1e-12);
}

}  // namespace detail

/// Projected gradient on V f + q . g over the program's box, stopped when the
/// unit-step projected-gradient map ||x - P_X(x - grad)|| drops below tol.
/// Steps start at 1/(V L) and then follow Barzilai-Borwein lengths, each
/// accepted only under the quadratic upper-bound test.
inline Vec projected_gradient_inner(const ProgramSpec& program, const QueueState& q, double V,
                                    const InnerSolveOptions& opts = {}) {
  if (!(V > 0.0)) throw DomainError("V must be > 0");
  require_size(q.size(), program.m, "generic oracle queue");
  const Box& box = program.feasible_set;
  const Vec& qv = q.values();

  Vec x = box.project(opts.start.value_or(detail::default_start(box)));
  double phi = program.penalized(x, qv, V);
  if (!std::isfinite(phi)) {
    x = box.project(detail::default_start(box));
    phi = program.penalized(x, qv, V);
    if (!std::isfinite(phi)) throw DomainError("inner objective is not finite at the start point");
  }
  Vec grad = detail::penalized_gradient(program, x, qv, V);

  const double L = opts.lipschitz ? *opts.lipschitz
                                  : detail::estimate_inner_lipschitz(program, x, qv, V);
  double step = 1.0 / (V * L);

  Vec best = x;
  double best_measure = kInf;
  for (int it = 0; it < opts.max_inner; ++it) {
    const double measure = (x - box.project(x - grad)).norm();
    if (measure < best_measure) {
      best_measure = measure;
      best = x;
    }
    if (measure <= opts.tol) return x;

    Vec x_next;
    double phi_next = kInf;
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(phi));
    for (int halving = 0; halving < 100; ++halving) {
      x_next = box.project(x - step * grad);
      const Vec d = x_next - x;
      phi_next = program.penalized(x_next, qv, V);
      const double model = phi + grad.dot(d) + d.squaredNorm() / (2.0 * step);
      if (std::isfinite(phi_next) && phi_next <= model + noise) break;
      step *= 0.5;
    }
    if (!std::isfinite(phi_next)) break;

    const Vec grad_next = detail::penalized_gradient(program, x_next, qv, V);
    const Vec s = x_next - x;
    const Vec y = grad_next - grad;
    const double sy = s.dot(y);
    if (sy > 0.0) step = s.squaredNorm() / sy;
    x = x_next;
    phi = phi_next;
    grad = grad_next;
  }
  throw ConvergenceError("generic inner oracle did not reach tolerance", best, best_measure);
}

// ---------------------------------------------------------------------------
// Type-erased oracle

enum class OracleKind { log_utility_box, quadratic, projected_gradient };

inline std::string_view to_string(OracleKind kind) {
  switch (kind) {
    case OracleKind::log_utility_box:
      return "log-utility-box";
    case OracleKind::quadratic:
      return "quadratic";
    case OracleKind::projected_gradient:
      return "projected-gradient-generic";
  }
  return "unknown";
}

/// Given (Q, V), returns the unique minimizer of V f(x) + Q . g(x) over X.
class InnerOracle {
 public:
  using Fn = std::function<Vec(const QueueState&, double)>;

  InnerOracle(OracleKind kind, Fn fn) : kind_(kind), fn_(std::move(fn)) {}

  static InnerOracle log_utility(NumInstance inst) {
    inst.validate();
    return InnerOracle(OracleKind::log_utility_box,
                       [inst = std::move(inst)](const QueueState& q, double V) {
                         return log_utility_box_argmin(inst, q, V);
                       });
  }

  static InnerOracle quadratic(QpInstance inst) {
    inst.validate();
    auto llt = std::make_shared<const Eigen::LLT<Mat>>(detail::factor_qp(inst));
    return InnerOracle(OracleKind::quadratic,
                       [inst = std::move(inst), llt](const QueueState& q, double V) {
                         if (!(V > 0.0)) throw DomainError("V must be > 0");
                         require_size(q.size(), inst.m(), "QP oracle queue");
                         return detail::solve_qp_stationarity(*llt, inst, q, V);
                       });
  }

  static InnerOracle projected_gradient(ProgramSpec program, InnerSolveOptions opts = {}) {
    program.validate();
    return InnerOracle(OracleKind::projected_gradient,
                       [program = std::move(program), opts](const QueueState& q, double V) {
                         return projected_gradient_inner(program, q, V, opts);
                       });
  }

  Vec operator()(const QueueState& q, double V) const { return fn_(q, V); }
  OracleKind kind() const { return kind_; }

 private:
  OracleKind kind_;
  Fn fn_;
};

}  // namespace driftopt
