// Domain types shared by every driftopt module: strongly convex programs with
// box feasible sets, virtual queues, Lyapunov quantities and iterate traces.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace driftopt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Vector or matrix sizes disagree.
struct DimensionError : Error {
  using Error::Error;
};

/// An argument lies outside the domain where the operation is defined.
struct DomainError : Error {
  using Error::Error;
};

/// A documented precondition of an algorithm or bound does not hold.
struct PreconditionError : Error {
  using Error::Error;
};

/// Singular or badly conditioned linear algebra.
struct NumericalError : Error {
  using Error::Error;
};

struct InfeasibleError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

/// An iterative method ran out of budget. Carries the best point found.
struct ConvergenceError : Error {
  ConvergenceError(const std::string& what, Vec best_iterate, double best_measure)
      : Error(what), best(std::move(best_iterate)), measure(best_measure) {}
  Vec best;
  double measure;
};

inline void require_size(Index got, Index want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

// ---------------------------------------------------------------------------
// Feasible set

/// Axis-aligned box [lo, hi]; infinite bounds are allowed, so R^n is the
/// unbounded box.
struct Box {
  Vec lo;
  Vec hi;

  static Box unbounded(Index n) {
    return Box{Vec::Constant(n, -kInf), Vec::Constant(n, kInf)};
  }

  Index size() const { return lo.size(); }

  void validate() const {
    require_size(hi.size(), lo.size(), "box upper bound");
    for (Index i = 0; i < lo.size(); ++i) {
      if (std::isnan(lo[i]) || std::isnan(hi[i]) || lo[i] > hi[i]) {
        throw DomainError("box bound " + std::to_string(i) + " has lo > hi or NaN");
      }
    }
  }

  bool bounded() const { return lo.allFinite() && hi.allFinite(); }

  Vec project(const Vec& x) const { return x.cwiseMax(lo).cwiseMin(hi); }

  bool contains(const Vec& x, double tol = 0.0) const {
    return x.size() == lo.size() && ((x - lo).array() >= -tol).all() &&
           ((hi - x).array() >= -tol).all();
  }
};

// ---------------------------------------------------------------------------
// Programs

using ScalarFn = std::function<double(const Vec&)>;
using VectorFn = std::function<Vec(const Vec&)>;
using MatrixFn = std::function<Mat(const Vec&)>;

/// min f(x) s.t. g_k(x) <= 0, x in X, with f strongly convex (modulus alpha)
/// and each g_k convex and Lipschitz (common modulus beta) on X.
///
/// Gradient and Jacobian oracles are optional; the generic inner solver falls
/// back to central differences without them.
struct ProgramSpec {
  Index n = 0;
  Index m = 0;
  ScalarFn objective;
  VectorFn constraints;
  VectorFn objective_gradient;   // optional
  MatrixFn constraint_jacobian;  // optional, m x n
  Box feasible_set;
  double alpha = 0.0;
  double beta = 0.0;

  void validate() const {
    if (n < 1 || m < 1) throw DomainError("program needs n >= 1 and m >= 1");
    if (!(alpha > 0.0)) throw DomainError("strong convexity modulus alpha must be > 0");
    if (!(beta > 0.0)) throw DomainError("Lipschitz modulus beta must be > 0");
    if (!objective || !constraints) throw DomainError("program is missing f or g");
    require_size(feasible_set.size(), n, "feasible set");
    feasible_set.validate();
  }

  /// V f(x) + q . g(x), the per-iteration drift-plus-penalty expression.
  double penalized(const Vec& x, const Vec& q, double V) const {
    return V * objective(x) + q.dot(constraints(x));
  }
};

/// Largest observed |g_k(y) - g_k(x)| / ||y - x|| over random pairs in X.
/// Infinite box sides are sampled within `radius` of the origin.
inline double sampled_lipschitz_ratio(const ProgramSpec& program, int pairs, std::uint64_t seed,
                                      double radius = 10.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Box& box = program.feasible_set;
  auto sample = [&] {
    Vec x(program.n);
    for (Index i = 0; i < program.n; ++i) {
      const double lo = std::isfinite(box.lo[i]) ? box.lo[i] : -radius;
      const double hi = std::isfinite(box.hi[i]) ? box.hi[i] : radius;
      x[i] = lo + (hi - lo) * unit(rng);
    }
    return x;
  };
  double worst = 0.0;
  for (int s = 0; s < pairs; ++s) {
    const Vec x = sample();
    const Vec y = sample();
    const double dist = (y - x).norm();
    if (dist == 0.0) continue;
    const Vec dg = program.constraints(y) - program.constraints(x);
    worst = std::max(worst, dg.cwiseAbs().maxCoeff() / dist);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Virtual queues

/// One nonnegative virtual queue per constraint.
class QueueState {
 public:
  QueueState() = default;

  explicit QueueState(Vec q) : q_(std::move(q)) {
    for (Index k = 0; k < q_.size(); ++k) {
      if (!(q_[k] >= 0.0)) {
        throw DomainError("queue entry " + std::to_string(k) + " is negative or NaN");
      }
    }
  }

  static QueueState zeros(Index m) { return QueueState(Vec::Zero(m)); }

  const Vec& values() const { return q_; }
  Index size() const { return q_.size(); }
  double operator[](Index k) const { return q_[k]; }
  double norm() const { return q_.norm(); }

 private:
  Vec q_;
};

/// Q_k <- max(Q_k + g_k, 0).
inline QueueState queue_update(const QueueState& q, const Vec& gvals) {
  require_size(gvals.size(), q.size(), "queue_update constraint values");
  return QueueState((q.values() + gvals).cwiseMax(0.0));
}

/// L = ||Q||^2 / 2.
inline double lyapunov(const QueueState& q) { return 0.5 * q.values().squaredNorm(); }

/// Absolute gap between the measured drift L(Q(t+1)) - L(Q(t)) and the closed
/// form Q(t+1).g - ||Q(t+1) - Q(t)||^2 / 2. Zero in exact arithmetic whenever
/// q_next = queue_update(q, gvals).
inline double drift_identity_residual(const QueueState& q, const QueueState& q_next,
                                      const Vec& gvals) {
  require_size(q_next.size(), q.size(), "drift_identity_residual next queue");
  require_size(gvals.size(), q.size(), "drift_identity_residual constraint values");
  const double measured = lyapunov(q_next) - lyapunov(q);
  const double closed =
      q_next.values().dot(gvals) - 0.5 * (q_next.values() - q.values()).squaredNorm();
  return std::abs(measured - closed);
}

// ---------------------------------------------------------------------------
// Traces

/// Solver state observed at iteration t, before the queue is advanced.
/// x and xbar may be empty for traces read back from CSV.
struct TraceSample {
  std::int64_t t = 0;
  Vec x;       // x(t)
  Vec xbar;    // running average reported at t
  Vec queue;   // Q(t)
  Vec lambda;  // lambda(t) = Q(t) / V
  double f_avg = 0.0;
  Vec g_avg;
  double qnorm = 0.0;
  double dual_value = std::numeric_limits<double>::quiet_NaN();  // q(lambda(t))
  std::optional<double> lambda_dist;  // ||lambda(t) - lambda*||
  std::optional<double> dual_gap;     // q(lambda*) - q(lambda(t))
};

class IterateTrace {
 public:
  void append(TraceSample s) {
    if (!samples_.empty() && s.t <= samples_.back().t) {
      throw DomainError("trace iteration indices must be strictly increasing");
    }
    for (Index k = 0; k < s.queue.size(); ++k) {
      if (!(s.queue[k] >= 0.0)) throw DomainError("trace queue entry is negative");
    }
    samples_.push_back(std::move(s));
  }

  const std::vector<TraceSample>& samples() const { return samples_; }
  bool empty() const { return samples_.empty(); }
  std::size_t size() const { return samples_.size(); }
  const TraceSample& back() const { return samples_.back(); }

  /// q(lambda(0)), recorded by the solver when it starts.
  std::optional<double> initial_dual_value;

 private:
  std::vector<TraceSample> samples_;
};

}  // namespace driftopt
