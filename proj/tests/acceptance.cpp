// Acceptance harness: one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.
#include "driftopt/driftopt.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace driftopt;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[FAILED " << what << "] ";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

TraceReference reference_of(const ProblemBundle& b) {
  return TraceReference{b.reference->lambda_star, b.reference->f_star};
}

constexpr double kQpV = 4.0 / 0.34;

// 1. Reference solutions for the three builtins.
void criterion_1(Outcome& o) {
  struct Case {
    const char* tag;
    std::function<void(const KktSolution&, Outcome&)> verify;
  };
  const std::vector<Case> cases{
      {"num_6_1",
       [](const KktSolution& s, Outcome& o) {
         o.check((s.x_star - Vec{{2.0, 3.2, 4.8}}).cwiseAbs().maxCoeff() <= 1e-3, "num_6_1 x*");
         o.check(std::abs(s.f_star - (-7.5253)) <= 1e-3, "num_6_1 f* vs -7.5253");
         o.detail << "num_6_1 f*=" << s.f_star << " ";
       }},
      {"qp_6_2",
       [](const KktSolution& s, Outcome& o) {
         o.check((s.x_star - Vec{{-1.0, -1.0}}).cwiseAbs().maxCoeff() <= 1e-6, "qp_6_2 x*");
         o.check(std::abs(s.f_star - 8.0) <= 1e-6, "qp_6_2 f*");
         o.detail << "qp_6_2 f*=" << s.f_star << " ";
       }},
      {"num_5_2_rank_deficient",
       [](const KktSolution& s, Outcome& o) {
         o.check((s.x_star - Vec{{0.8553, 2.1447, 1.1447, 5.8553}}).cwiseAbs().maxCoeff() <= 1e-3,
                 "num_5_2 x*");
         const double err = (s.lambda_star - Vec{{0.3858, 0.0903, 0.7833, 0.0805}}).cwiseAbs().maxCoeff();
         o.check(err <= 1e-3, "num_5_2 lambda*");
         o.detail << "num_5_2 lambda* err=" << err << " ";
       }},
  };
  for (const auto& c : cases) {
    const auto start = Clock::now();
    const auto b = builtin(c.tag);
    const double elapsed = seconds_since(start);
    o.check(b.reference.has_value(), std::string(c.tag) + " reference");
    if (b.reference) c.verify(*b.reference, o);
    o.check(elapsed < 1.0, std::string(c.tag) + " runtime");
  }
}

// 2. Objective never exceeds f* for Q(0) = 0 at V = 363.
void criterion_2(Outcome& o) {
  const auto start = Clock::now();
  const auto b = builtin("num_6_1");
  SolverConfig cfg;
  cfg.V = 363.0;
  cfg.iters = 100000;
  cfg.sampling = Sampling::full();
  const auto trace = run(b.program, b.oracle, cfg);
  double worst = -kInf;
  for (const auto& s : trace.samples()) worst = std::max(worst, s.f_avg - b.reference->f_star);
  const double elapsed = seconds_since(start);
  o.check(trace.size() == 100000, "sample count");
  o.check(worst <= 1e-9, "f(xbar) <= f* + 1e-9");
  o.check(elapsed < 10.0, "runtime");
  o.detail << "max f(xbar)-f*=" << worst << " samples=" << trace.size();
}

// 3. Primal bound audits on qp_6_2 for two initial queues.
void criterion_3(Outcome& o) {
  const auto b = builtin("qp_6_2");
  for (const Vec& q0 : {Vec{{0.0, 0.0}}, Vec{{10.0, 10.0}}}) {
    const auto start = Clock::now();
    SolverConfig cfg;
    cfg.V = kQpV;
    cfg.q0 = q0;
    cfg.iters = 100000;
    const auto trace = run(b.program, b.oracle, cfg, reference_of(b));
    const auto report = audit_bounds(trace, b.reference, b.program, cfg, b.gamma());
    const double elapsed = seconds_since(start);
    const std::string tag = "Q0=(" + std::to_string(q0[0]) + "," + std::to_string(q0[1]) + ") ";
    for (const auto* name : {"objective_bound", "constraint_bound", "queue_bound"}) {
      const auto* c = report.find(name);
      o.check(c && c->applicable, tag + name + " applicable");
    }
    o.check(report.all_passed(), tag + "all applicable bounds");
    o.check(elapsed < 10.0, tag + "runtime");
    o.detail << tag << "objective margin=" << report.find("objective_bound")->worst_margin << " ";
  }
}

// 4. O(1/t) constraint violation for the standard running average.
void criterion_4(Outcome& o) {
  for (const auto& [tag, V] : std::vector<std::pair<std::string, double>>{{"num_6_1", 363.0}, {"qp_6_2", kQpV}}) {
    const auto b = builtin(tag);
    SolverConfig cfg;
    cfg.V = V;
    cfg.iters = 100000;
    const auto trace = run(b.program, b.oracle, cfg);
    const auto series = error_series(trace, *b.reference);
    FitWindow w;
    w.t_min = 1e3;
    w.t_max = 1e5;
    const auto fit = fit_power_decay(series.t, series.constraint, w);
    o.check(fit.exponent >= 0.85 && fit.exponent <= 1.15, tag + " exponent");
    o.detail << tag << " p=" << fit.exponent << " ";
  }
}

// 5. Geometric decay with shifted running averages.
void criterion_5(Outcome& o) {
  struct Case {
    const char* tag;
    double V;
    std::int64_t iters;
    double lo;
    double hi;
  };
  for (const auto& c : {Case{"num_6_1", 422.0, 10000, 0.995, 0.9995}, Case{"qp_6_2", kQpV, 2500, 0.985, 0.999}}) {
    const auto b = builtin(c.tag);
    SolverConfig cfg;
    cfg.V = c.V;
    cfg.iters = c.iters;
    cfg.variant = Variant::dpp_shifted;
    const auto trace = run(b.program, b.oracle, cfg);
    const auto series = error_series(trace, *b.reference);
    const auto geo = fit_geometric(series.t, series.objective);
    const auto pow = fit_power_decay(series.t, series.objective);
    o.check(geo.ratio >= c.lo && geo.ratio <= c.hi, std::string(c.tag) + " ratio");
    o.check(geo.quality > pow.quality, std::string(c.tag) + " geometric beats power");
    o.detail << c.tag << " r=" << geo.ratio << " R2 geo/pow=" << geo.quality << "/" << pow.quality << " ";
  }
}

// 6. Dual gap bound and per-step monotonicity on qp_6_2.
void criterion_6(Outcome& o) {
  const auto b = builtin("qp_6_2");
  const double V = std::max(kQpV, b.constants.gamma_computed);
  for (const Vec& q0 : {Vec{{0.0, 0.0}}, Vec{{10.0, 10.0}}}) {
    SolverConfig cfg;
    cfg.V = V;
    cfg.q0 = q0;
    cfg.iters = 10000;
    cfg.sampling = Sampling::full();
    const auto trace = run(b.program, b.oracle, cfg, reference_of(b));
    for (const double gamma : {b.gamma(), b.constants.gamma_computed}) {
      const Vec lambda0 = q0 / V;
      const double theta = theta_bound(V, gamma, lambda0, b.reference->lambda_star,
                                       *trace.initial_dual_value, b.reference->f_star);
      bool ok = true;
      for (const auto& s : trace.samples()) {
        if (*s.dual_gap > theta / static_cast<double>(s.t) + 1e-9) ok = false;
      }
      o.check(ok, "theta/t bound (gamma=" + std::to_string(gamma) + ")");
    }

    SolverState st = initial_state(b.program, cfg);
    double prev_dist = (st.lambda - b.reference->lambda_star).norm();
    double prev_q = dual_value_and_gradient(b.program, b.oracle, st.lambda).value;
    double worst_dist = -kInf;
    double worst_q = -kInf;
    for (int t = 0; t < 10000; ++t) {
      dpp_step(b.program, b.oracle, cfg, st);
      const double dist = (st.lambda - b.reference->lambda_star).norm();
      const double q = dual_value_and_gradient(b.program, b.oracle, st.lambda).value;
      worst_dist = std::max(worst_dist, dist - prev_dist);
      worst_q = std::max(worst_q, prev_q - q);
      prev_dist = dist;
      prev_q = q;
    }
    o.check(worst_dist <= 1e-9, "lambda distance nonincreasing");
    o.check(worst_q <= 1e-9, "dual value nondecreasing");
    o.detail << "Q0=(" << q0[0] << "," << q0[1] << ") max dist increase=" << worst_dist
             << " max q decrease=" << worst_q << " ";
  }
}

// 7. Drift identity on runs and random pairs.
void criterion_7(Outcome& o) {
  double worst = 0.0;
  for (const auto& tag : builtin_tags()) {
    const auto b = builtin(tag);
    SolverConfig cfg;
    cfg.V = choose_V(b.program);
    cfg.iters = 10000;
    run(b.program, b.oracle, cfg, std::nullopt, [&](const StepRecord& r) {
      worst = std::max(worst, drift_identity_residual(r.before, r.after, r.g));
    });
  }
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> qd(0.0, 100.0);
  std::uniform_real_distribution<double> gd(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    Vec q(4);
    Vec g(4);
    for (Index k = 0; k < 4; ++k) {
      q[k] = qd(rng);
      g[k] = gd(rng);
    }
    const QueueState qs(q);
    worst = std::max(worst, drift_identity_residual(qs, queue_update(qs, g), g));
  }
  o.check(worst <= 1e-9, "residual");
  o.detail << "max residual=" << worst;
}

// 8. Rank-deficient counterexample.
void criterion_8(Outcome& o) {
  const auto b = builtin("num_5_2_rank_deficient");
  const auto& inst = std::get<NumInstance>(b.instance);
  const Vec mu{{1.0, 1.0, -1.0, -1.0}};
  o.check((inst.A.transpose() * mu).isZero(0.0), "mu'A = 0 exactly");
  o.check(mu.dot(inst.b) == 0.0, "mu'b = 0 exactly");
  const double null_res = (num_dual_hessian(inst, b.reference->lambda_star) * mu).norm();
  o.check(null_res <= 1e-6, "Hessian null direction");
  o.check(!qualification_check(inst.A, b.reference->active_set).strongly_concave,
          "rank-deficient instance not strongly concave");
  const auto num = builtin("num_6_1");
  o.check(qualification_check(num.constraint_matrix(), num.reference->active_set).strongly_concave,
          "num_6_1 strongly concave");
  o.detail << "||H mu||=" << null_res;
}

// 9. Oracle and algorithm equivalences.
void criterion_9(Outcome& o) {
  double worst_iter = 0.0;
  double worst_oracle = 0.0;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> qd(0.0, 50.0);
  for (const auto& tag : builtin_tags()) {
    const auto b = builtin(tag);
    SolverConfig a;
    a.V = choose_V(b.program);
    a.iters = 10000;
    SolverConfig d = a;
    d.variant = Variant::dual_subgradient;
    SolverState sa = initial_state(b.program, a);
    SolverState sd = initial_state(b.program, d);
    for (int t = 0; t < 10000; ++t) {
      const auto ra = dpp_step(b.program, b.oracle, a, sa);
      const auto rd = dpp_step(b.program, b.oracle, d, sd);
      worst_iter = std::max(worst_iter, (ra.x - rd.x).cwiseAbs().maxCoeff());
    }
    const auto generic = InnerOracle::projected_gradient(b.program);
    for (int i = 0; i < 100; ++i) {
      Vec q(b.program.m);
      for (Index k = 0; k < q.size(); ++k) q[k] = qd(rng);
      const QueueState qs(q);
      worst_oracle = std::max(worst_oracle, (b.oracle(qs, a.V) - generic(qs, a.V)).cwiseAbs().maxCoeff());
    }
  }
  const auto num = builtin("num_6_1");
  const auto& inst = std::get<NumInstance>(num.instance);
  double worst_hess = 0.0;
  for (int i = 0; i < 20; ++i) {
    Vec lambda(3);
    for (Index k = 0; k < 3; ++k) lambda[k] = 0.3 + qd(rng) / 25.0;
    const Vec x = num.oracle(QueueState(lambda), 1.0);
    const Mat Hf = (inst.c.array() / x.array().square()).matrix().asDiagonal();
    worst_hess = std::max(worst_hess, (num_dual_hessian(inst, lambda) -
                                       general_dual_hessian(inst.A, Hf, {}, lambda))
                                          .cwiseAbs()
                                          .maxCoeff());
  }
  o.check(worst_iter <= 1e-12, "dpp vs dual subgradient");
  o.check(worst_oracle <= 1e-6, "closed form vs generic oracle");
  o.check(worst_hess <= 1e-8, "NUM vs general dual Hessian");
  o.detail << "iterates=" << worst_iter << " oracle=" << worst_oracle << " hessian=" << worst_hess;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<void(Outcome&)>> criteria{
      criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
      criterion_6, criterion_7, criterion_8, criterion_9};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  if (wanted.empty()) {
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) wanted.insert(i);
  }

  int failures = 0;
  for (int id : wanted) {
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::printf("criterion %d: unknown\n", id);
      ++failures;
      continue;
    }
    Outcome o;
    const auto start = Clock::now();
    try {
      criteria[static_cast<std::size_t>(id - 1)](o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    const double elapsed = seconds_since(start);
    std::printf("criterion %d: %s (%.3fs) %s\n", id, o.pass ? "PASS" : "FAIL", elapsed,
                o.detail.str().c_str());
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
