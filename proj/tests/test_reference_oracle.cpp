#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace driftopt;

namespace {

/// Largest objective decrease found among random feasible points near x*.
double best_feasible_improvement(const ProgramSpec& p, const Vec& x_star, double f_star,
                                 std::mt19937_64& rng, int samples, double radius) {
  double best = -kInf;
  for (int s = 0; s < samples; ++s) {
    const Vec x = p.feasible_set.project(x_star + fixtures::random_vec(rng, p.n, -radius, radius));
    if ((p.constraints(x).array() > 0.0).any()) continue;
    best = std::max(best, f_star - p.objective(x));
  }
  return best;
}

}  // namespace

TEST(KktQp, Builtin) {
  const auto s = kkt_solve_qp(qp_6_2_instance());
  EXPECT_LE((s.x_star - Vec{{-1.0, -1.0}}).norm(), 1e-12);
  EXPECT_NEAR(s.f_star, 8.0, 1e-12);
  EXPECT_LE((s.lambda_star - Vec{{5.0, 8.0}}).norm(), 1e-12);
  EXPECT_EQ(s.active_set, (std::vector<Index>{0, 1}));
}

TEST(KktNum, Builtin) {
  const auto s = kkt_solve_num(num_6_1_instance());
  EXPECT_LE((s.x_star - Vec{{2.0, 3.2, 4.8}}).norm(), 1e-9);
  const double f = -(std::log(2.0) + 2.0 * std::log(3.2) + 3.0 * std::log(4.8));
  EXPECT_NEAR(s.f_star, f, 1e-9);
  EXPECT_LE((s.lambda_star - Vec{{0.5, 0.0, 0.125}}).norm(), 1e-9);
  EXPECT_EQ(s.active_set, (std::vector<Index>{0, 2}));
}

TEST(KktNum, RankDeficientCounterexample) {
  const auto inst = num_5_2_instance();
  const auto s = kkt_solve_num(inst);
  EXPECT_LE((s.x_star - Vec{{0.8553, 2.1447, 1.1447, 5.8553}}).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_LE((s.lambda_star - Vec{{0.3858, 0.0903, 0.7833, 0.0805}}).cwiseAbs().maxCoeff(), 1e-3);
  // stationarity c_i / x_i = a_i' lambda and feasibility
  const Vec lhs = inst.c.cwiseQuotient(s.x_star);
  EXPECT_LE((lhs - inst.A.transpose() * s.lambda_star).norm(), 1e-9);
  EXPECT_LE((inst.A * s.x_star - inst.b).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_TRUE((s.lambda_star.array() > 0.0).all());
}

TEST(KktNum, MultiplierIsAnalyticCenterOfSegment) {
  // All valid multipliers are lambda* + s mu; the analytic center maximizes
  // sum log lambda_k along that line.
  const auto s = kkt_solve_num(num_5_2_instance());
  const Vec mu{{1.0, 1.0, -1.0, -1.0}};
  double deriv = 0.0;
  for (Index k = 0; k < 4; ++k) deriv += mu[k] / s.lambda_star[k];
  EXPECT_NEAR(deriv, 0.0, 1e-8);
}

TEST(KktQp, RandomInstancesSatisfyKktAndBeatPerturbations) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 3);
    const Index m = 1 + static_cast<Index>(rng() % 5);
    const QpInstance qp = fixtures::random_qp(rng, n, m);
    const auto s = kkt_solve_qp(qp);
    const Vec g = qp.A * s.x_star - qp.b;
    EXPECT_LE(g.maxCoeff(), 1e-9);
    EXPECT_GE(s.lambda_star.minCoeff(), -1e-12);
    EXPECT_LE(std::abs(s.lambda_star.dot(g)), 1e-8);
    const Vec stat = 2.0 * qp.P * s.x_star + qp.c + qp.A.transpose() * s.lambda_star;
    EXPECT_LE(stat.norm(), 1e-8);
    const auto p = make_program(qp, qp.convexity_modulus(), max_row_norm(qp.A));
    EXPECT_LE(best_feasible_improvement(p, s.x_star, s.f_star, rng, 500, 0.5), 1e-9);
  }
}

TEST(KktNum, NoFeasiblePerturbationImproves) {
  std::mt19937_64 rng(32);
  for (const auto& tag : {"num_6_1", "num_5_2_rank_deficient"}) {
    const auto b = builtin(tag);
    EXPECT_LE(best_feasible_improvement(b.program, b.reference->x_star, b.reference->f_star, rng,
                                        5000, 0.3),
              1e-9)
        << tag;
  }
}

TEST(KktQp, InfeasibleAndOversized) {
  QpInstance qp;
  qp.P = Mat::Identity(2, 2);
  qp.c = Vec::Zero(2);
  qp.A = Mat{{1.0, 0.0}, {-1.0, 0.0}};
  qp.b = Vec{{-1.0, -1.0}};
  EXPECT_THROW(kkt_solve_qp(qp), InfeasibleError);

  std::mt19937_64 rng(33);
  const QpInstance big = fixtures::random_qp(rng, 3, 21);
  EXPECT_THROW(kkt_solve_qp(big), PreconditionError);
}

TEST(Subsets, CardinalityThenLexicographic) {
  std::vector<std::vector<Index>> seen;
  detail::for_each_subset(3, [&](const std::vector<Index>& s) {
    seen.push_back(s);
    return false;
  });
  const std::vector<std::vector<Index>> expected{{},     {0},    {1},    {2},      {0, 1},
                                                 {0, 2}, {1, 2}, {0, 1, 2}};
  EXPECT_EQ(seen, expected);
}

TEST(AnalyticCenter, SimplexCenter) {
  // maximize sum log l over {l > 0 : l1 + l2 + l3 = 3} -> (1, 1, 1)
  const auto c = detail::analytic_center(Mat::Ones(1, 3), Vec{{3.0}}, Vec{{0.1, 2.0, 0.9}});
  ASSERT_TRUE(c.has_value());
  EXPECT_LE((*c - Vec::Ones(3)).norm(), 1e-9);
  EXPECT_FALSE(detail::analytic_center(Mat::Ones(1, 2), Vec{{-1.0}}, Vec{{1.0, 1.0}}).has_value());
}
