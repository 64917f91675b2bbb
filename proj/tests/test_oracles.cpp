#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace driftopt;

namespace {

/// Golden-section minimizer of a unimodal scalar function on [lo, hi].
double golden_min(const std::function<double(double)>& h, double lo, double hi) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  for (int it = 0; it < 200; ++it) {
    const double c = b - r * (b - a);
    const double d = a + r * (b - a);
    if (h(c) < h(d)) {
      b = d;
    } else {
      a = c;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST(NumInstance, Validation) {
  NumInstance inst = num_6_1_instance();
  EXPECT_NO_THROW(inst.validate());
  NumInstance bad = inst;
  bad.xmax[1] = 10.0;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = inst;
  bad.A(0, 0) = 0.5;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = inst;
  bad.c[2] = 0.0;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = inst;
  bad.b = Vec{{1.0, 2.0}};
  EXPECT_THROW(bad.validate(), DimensionError);
  bad = inst;
  bad.A.col(0).setZero();
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(QpInstance, Validation) {
  QpInstance qp = qp_6_2_instance();
  EXPECT_NO_THROW(qp.validate());
  QpInstance bad = qp;
  bad.P(0, 1) = 1.5;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = qp;
  bad.P = Mat{{1, 3}, {3, 5}};
  EXPECT_THROW(bad.validate(), DomainError);
  bad = qp;
  bad.c = Vec{{1.0}};
  EXPECT_THROW(bad.validate(), DimensionError);
}

TEST(QpInstance, ConvexityModulusIsMinEigenvalueOfTwoP) {
  const double expected = 2.0 * (3.0 - std::sqrt(8.0));
  EXPECT_NEAR(qp_6_2_instance().convexity_modulus(), expected, 1e-12);
}

TEST(MaxRowNorm, Builtins) {
  EXPECT_DOUBLE_EQ(max_row_norm(num_6_1_instance().A), std::sqrt(3.0));
  EXPECT_DOUBLE_EQ(max_row_norm(qp_6_2_instance().A), std::sqrt(2.0));
}

TEST(LogUtilityOracle, ZeroQueueGivesCaps) {
  const NumInstance inst = num_6_1_instance();
  EXPECT_EQ(log_utility_box_argmin(inst, QueueState::zeros(3), 363.0), inst.xmax);
}

TEST(LogUtilityOracle, MatchesScalarLineSearch) {
  const NumInstance inst = num_6_1_instance();
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const QueueState q = fixtures::random_queue(rng, 3, 300.0);
    const double V = 1.0 + 500.0 * std::uniform_real_distribution<double>(0, 1)(rng);
    const Vec x = log_utility_box_argmin(inst, q, V);
    for (Index i = 0; i < inst.n(); ++i) {
      const double price = q.values().dot(inst.A.col(i));
      const auto h = [&](double xi) { return -V * inst.c[i] * std::log(xi) + price * xi; };
      const double ref = golden_min(h, 1e-12, inst.xmax[i]);
      EXPECT_NEAR(x[i], ref, 1e-6 * (1.0 + ref));
    }
  }
}

TEST(QuadraticOracle, SatisfiesStationarity) {
  const QpInstance qp = qp_6_2_instance();
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const QueueState q = fixtures::random_queue(rng, 2, 100.0);
    const double V = 0.5 + 20.0 * std::uniform_real_distribution<double>(0, 1)(rng);
    const Vec x = quadratic_argmin(qp, q, V);
    const Vec grad = V * (2.0 * qp.P * x + qp.c) + qp.A.transpose() * q.values();
    EXPECT_LE(grad.norm(), 1e-9 * (1.0 + q.norm()));
  }
  EXPECT_THROW(quadratic_argmin(qp, QueueState::zeros(3), 1.0), DimensionError);
}

TEST(QuadraticOracle, UnconstrainedMinimumAtZeroQueue) {
  const Vec x = quadratic_argmin(qp_6_2_instance(), QueueState::zeros(2), 4.0);
  EXPECT_NEAR(x[0], -1.5, 1e-12);
  EXPECT_NEAR(x[1], 0.5, 1e-12);
}

TEST(GenericOracle, AgreesWithClosedFormsOnBuiltins) {
  std::mt19937_64 rng(13);
  for (const auto& tag : builtin_tags()) {
    const auto b = builtin(tag);
    const auto generic = InnerOracle::projected_gradient(b.program);
    EXPECT_EQ(generic.kind(), OracleKind::projected_gradient);
    for (int trial = 0; trial < 100; ++trial) {
      const QueueState q = fixtures::random_queue(rng, b.program.m, 50.0);
      const double V = b.constants.V_values.empty() ? 100.0 : b.constants.V_values.front();
      const Vec exact = b.oracle(q, V);
      const Vec approx = generic(q, V);
      EXPECT_LE((exact - approx).cwiseAbs().maxCoeff(), 1e-6) << tag;
    }
  }
}

TEST(GenericOracle, FiniteDifferenceFallback) {
  ProgramSpec p;
  p.n = 2;
  p.m = 1;
  const Vec a{{0.7, 0.2}};
  p.objective = [a](const Vec& x) { return (x - a).squaredNorm(); };
  p.constraints = [](const Vec& x) { return Vec{{x.sum() - 0.5}}; };
  p.feasible_set = Box{Vec::Zero(2), Vec::Ones(2)};
  p.alpha = 2.0;
  p.beta = std::sqrt(2.0);
  // V (x - a)^2 + q (x1 + x2): x = a - q / (2V), clipped to the box.
  const QueueState q(Vec{{1.0}});
  const Vec x = projected_gradient_inner(p, q, 2.0);
  EXPECT_NEAR(x[0], 0.45, 1e-6);
  EXPECT_NEAR(x[1], 0.0, 1e-6);
}

TEST(GenericOracle, ReportsBestIterateOnBudgetExhaustion) {
  const auto b = builtin("num_6_1");
  InnerSolveOptions opts;
  opts.max_inner = 2;
  opts.tol = 1e-300;
  try {
    projected_gradient_inner(b.program, QueueState(Vec{{5.0, 1.0, 7.0}}), 363.0, opts);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.best.size(), 3);
    EXPECT_TRUE(b.program.feasible_set.contains(e.best));
    EXPECT_GT(e.measure, 0.0);
  }
}

TEST(InnerOracle, KindsAndDimensionChecks) {
  const auto num = builtin("num_6_1");
  const auto qp = builtin("qp_6_2");
  EXPECT_EQ(num.oracle.kind(), OracleKind::log_utility_box);
  EXPECT_EQ(qp.oracle.kind(), OracleKind::quadratic);
  EXPECT_EQ(to_string(OracleKind::quadratic), "quadratic");
  EXPECT_THROW(num.oracle(QueueState::zeros(2), 1.0), DimensionError);
  EXPECT_THROW(qp.oracle(QueueState::zeros(2), 0.0), DomainError);
}

TEST(MakeProgram, NumObjectiveAndGradient) {
  const auto b = builtin("num_6_1");
  const Vec x{{2.0, 3.2, 4.8}};
  const double f = -(std::log(2.0) + 2.0 * std::log(3.2) + 3.0 * std::log(4.8));
  EXPECT_NEAR(b.program.objective(x), f, 1e-12);
  EXPECT_EQ(b.program.objective(Vec{{0.0, 1.0, 1.0}}), kInf);
  const Vec grad = b.program.objective_gradient(x);
  for (Index i = 0; i < 3; ++i) {
    Vec xp = x;
    Vec xm = x;
    xp[i] += 1e-6;
    xm[i] -= 1e-6;
    EXPECT_NEAR(grad[i], (b.program.objective(xp) - b.program.objective(xm)) / 2e-6, 1e-6);
  }
  EXPECT_EQ(b.program.constraints(x), (Vec{{0.0, -2.8, 0.0}}));
}
