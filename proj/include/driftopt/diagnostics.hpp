// Convergence-rate estimation and bound auditing over iterate traces.
#pragma once

#include "driftopt/core.hpp"
#include "driftopt/dual_analysis.hpp"
#include "driftopt/reference_oracle.hpp"
#include "driftopt/solver.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace driftopt {

// ---------------------------------------------------------------------------
// Error series

struct ErrorSeries {
  std::vector<double> t;
  std::vector<double> objective;   // |f(xbar(t)) - f*|
  std::vector<double> constraint;  // max_k max(g_k(xbar(t)), 0)
};

inline ErrorSeries error_series(const IterateTrace& trace, double f_star) {
  ErrorSeries out;
  for (const auto& s : trace.samples()) {
    out.t.push_back(static_cast<double>(s.t));
    out.objective.push_back(std::abs(s.f_avg - f_star));
    out.constraint.push_back(s.g_avg.size() == 0 ? 0.0 : std::max(s.g_avg.maxCoeff(), 0.0));
  }
  return out;
}

inline ErrorSeries error_series(const IterateTrace& trace, const KktSolution& reference) {
  return error_series(trace, reference.f_star);
}

// ---------------------------------------------------------------------------
// Rate fits

enum class DecayModel { power, geometric };

inline std::string_view to_string(DecayModel m) {
  return m == DecayModel::power ? "power" : "geometric";
}

/// power:     e(t) ~ C t^-p
/// geometric: e(t) ~ (C / t) r^t
struct RateFit {
  DecayModel model = DecayModel::power;
  double exponent = 0.0;  // p (power)
  double ratio = 0.0;     // r (geometric)
  double C = 0.0;
  double quality = 0.0;   // 1 - SS_res / SS_tot on log e(t), clamped to [0, 1]
  double t_lo = 0.0;
  double t_hi = 0.0;
  std::size_t samples = 0;
};

/// Tail selection: the last `fraction` of the log-time range, optionally
/// overridden by explicit bounds.
struct FitWindow {
  double fraction = 0.5;
  std::optional<double> t_min;
  std::optional<double> t_max;
};

namespace detail {

struct Tail {
  std::vector<double> t;
  std::vector<double> log_e;
};

inline Tail select_tail(std::span<const double> t, std::span<const double> e, const FitWindow& w) {
  if (t.size() != e.size()) throw DimensionError("time and error series differ in length");
  if (t.empty()) throw DomainError("empty series");
  if (!(w.fraction > 0.0 && w.fraction <= 1.0)) throw DomainError("window fraction must be in (0, 1]");
  const double first = std::max(t.front(), 1e-300);
  const double last = t.back();
  double lo = std::exp(std::log(last) - w.fraction * (std::log(last) - std::log(first)));
  double hi = last;
  if (w.t_min) lo = *w.t_min;
  if (w.t_max) hi = *w.t_max;
  Tail out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < lo * (1.0 - 1e-12) || t[i] > hi * (1.0 + 1e-12)) continue;
    if (!(e[i] > 0.0) || !std::isfinite(e[i])) continue;
    out.t.push_back(t[i]);
    out.log_e.push_back(std::log(e[i]));
  }
  if (out.t.size() < 10) {
    throw DomainError("rate fit needs at least 10 positive samples in the window, got " +
                      std::to_string(out.t.size()));
  }
  return out;
}

struct LineFit {
  double slope;
  double intercept;
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("rate fit needs distinct sample times");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

inline double log_quality(const std::vector<double>& log_e, const std::vector<double>& predicted) {
  double mean = 0.0;
  for (double v : log_e) mean += v;
  mean /= static_cast<double>(log_e.size());
  double ss_tot = 0.0;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < log_e.size(); ++i) {
    ss_tot += (log_e[i] - mean) * (log_e[i] - mean);
    ss_res += (log_e[i] - predicted[i]) * (log_e[i] - predicted[i]);
  }
  if (!(ss_tot > 0.0)) return ss_res <= 1e-24 ? 1.0 : 0.0;
  return std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
}

}  // namespace detail

/// Least-squares line through (log t, log e) over the tail window; p = -slope.
inline RateFit fit_power_decay(std::span<const double> t, std::span<const double> e,
                               const FitWindow& window = {}) {
  const auto tail = detail::select_tail(t, e, window);
  std::vector<double> log_t(tail.t.size());
  std::transform(tail.t.begin(), tail.t.end(), log_t.begin(), [](double v) { return std::log(v); });
  const auto line = detail::least_squares(log_t, tail.log_e);
  std::vector<double> pred(log_t.size());
  for (std::size_t i = 0; i < log_t.size(); ++i) pred[i] = line.intercept + line.slope * log_t[i];
  RateFit fit;
  fit.model = DecayModel::power;
  fit.exponent = -line.slope;
  fit.C = std::exp(line.intercept);
  fit.quality = detail::log_quality(tail.log_e, pred);
  fit.t_lo = tail.t.front();
  fit.t_hi = tail.t.back();
  fit.samples = tail.t.size();
  return fit;
}

/// Least-squares line through (t, log(t e)) over the tail window; r = exp(slope).
inline RateFit fit_geometric(std::span<const double> t, std::span<const double> e,
                             const FitWindow& window = {}) {
  const auto tail = detail::select_tail(t, e, window);
  std::vector<double> y(tail.t.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(tail.t[i]) + tail.log_e[i];
  const auto line = detail::least_squares(tail.t, y);
  const double ratio = std::exp(line.slope);
  if (!(ratio < 1.0)) throw DomainError("series does not decay geometrically (fitted r >= 1)");
  std::vector<double> pred(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    pred[i] = line.intercept + line.slope * tail.t[i] - std::log(tail.t[i]);
  }
  RateFit fit;
  fit.model = DecayModel::geometric;
  fit.ratio = ratio;
  fit.C = std::exp(line.intercept);
  fit.quality = detail::log_quality(tail.log_e, pred);
  fit.t_lo = tail.t.front();
  fit.t_hi = tail.t.back();
  fit.samples = tail.t.size();
  return fit;
}

inline nlohmann::json to_json(const RateFit& f) {
  nlohmann::json j;
  j["model"] = std::string(to_string(f.model));
  if (f.model == DecayModel::power) {
    j["exponent"] = f.exponent;
  } else {
    j["ratio"] = f.ratio;
  }
  j["C"] = f.C;
  j["quality"] = f.quality;
  j["t_lo"] = f.t_lo;
  j["t_hi"] = f.t_hi;
  j["samples"] = f.samples;
  return j;
}

// ---------------------------------------------------------------------------
// Bound audits

struct BoundCheck {
  std::string name;
  bool applicable = false;
  bool pass = true;
  double worst_margin = kInf;  // min over samples of (bound - observed); < 0 means violated
  std::size_t checked = 0;
  std::string note;
};

struct AuditReport {
  std::vector<BoundCheck> checks;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const BoundCheck& c) { return !c.applicable || c.pass; });
  }

  const BoundCheck* find(std::string_view name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

inline nlohmann::json to_json(const AuditReport& r) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checks) {
    nlohmann::json j;
    j["bound"] = c.name;
    j["applicable"] = c.applicable;
    j["pass"] = c.pass;
    j["worst_margin"] = c.applicable && c.checked > 0 ? nlohmann::json(c.worst_margin) : nlohmann::json();
    j["checked"] = c.checked;
    if (!c.note.empty()) j["note"] = c.note;
    checks.push_back(std::move(j));
  }
  return nlohmann::json{{"all_passed", r.all_passed()}, {"checks", checks}};
}

namespace detail {

inline void record(BoundCheck& c, double bound, double observed, double tol) {
  ++c.checked;
  c.worst_margin = std::min(c.worst_margin, bound - observed);
  if (observed > bound + tol) c.pass = false;
}

inline BoundCheck applicable(std::string name) {
  BoundCheck c;
  c.name = std::move(name);
  c.applicable = true;
  return c;
}

inline BoundCheck not_applicable(std::string name, std::string why) {
  BoundCheck c;
  c.name = std::move(name);
  c.applicable = false;
  c.note = std::move(why);
  return c;
}

}  // namespace detail

/// Audits every applicable convergence bound at every sampled t:
///  - objective_bound:  f(xbar(t)) <= f* + ||Q(0)||^2 / (2Vt)       (V >= m beta^2/alpha)
///  - constraint_bound: g_k(xbar(t)) <= (sqrt(||Q(0)||^2 + V^2||l*||^2) + V||l*||) / t
///  - queue_bound:      ||Q(t)|| <= sqrt(||Q(0)||^2 + V^2||l*||^2) + V||l*||
///  - dual_gap_bound:   q(l*) - q(l(t)) <= theta / t                (V >= gamma)
///  - lambda_distance_monotone: ||l(t) - l*|| nonincreasing        (V >= gamma)
///  - dual_value_monotone:      q(l(t)) nondecreasing              (V >= gamma / 2)
/// The first two apply to the standard running average only. With Q(0) = 0
/// the objective bound is checked with an absolute tolerance of 1e-9.
inline AuditReport audit_bounds(const IterateTrace& trace, const std::optional<KktSolution>& reference,
                                const ProgramSpec& program, const SolverConfig& config,
                                std::optional<double> gamma = std::nullopt) {
  if (!reference) throw PreconditionError("bound audit needs a reference solution");
  if (trace.empty()) throw PreconditionError("bound audit needs a nonempty trace");
  const double V = effective_V(config);
  const Vec lambda0 = config.initial_queue(program.m) / config.V;
  const Vec Q0 = lambda0 * V;
  const double q0n2 = Q0.squaredNorm();
  const double lam_star = reference->lambda_star.norm();
  const double f_star = reference->f_star;
  const double queue_cap = std::sqrt(q0n2 + V * V * lam_star * lam_star) + V * lam_star;
  const bool primal_theorems = V >= choose_V(program) * (1.0 - 1e-12);
  const bool standard_average = config.variant != Variant::dpp_shifted;

  AuditReport report;

  // objective
  if (!primal_theorems) {
    report.checks.push_back(detail::not_applicable("objective_bound", "V < m beta^2 / alpha"));
  } else if (!standard_average) {
    report.checks.push_back(detail::not_applicable("objective_bound", "shifted running average"));
  } else {
    BoundCheck c = detail::applicable("objective_bound");
    for (const auto& s : trace.samples()) {
      const double bound = f_star + q0n2 / (2.0 * V * static_cast<double>(s.t));
      const double tol = q0n2 == 0.0 ? 1e-9 : 1e-8 * std::max(1.0, std::abs(bound));
      detail::record(c, bound, s.f_avg, tol);
    }
    report.checks.push_back(c);
  }

  // constraints
  if (!primal_theorems) {
    report.checks.push_back(detail::not_applicable("constraint_bound", "V < m beta^2 / alpha"));
  } else if (!standard_average) {
    report.checks.push_back(detail::not_applicable("constraint_bound", "shifted running average"));
  } else {
    BoundCheck c = detail::applicable("constraint_bound");
    for (const auto& s : trace.samples()) {
      if (s.g_avg.size() == 0) continue;
      const double bound = queue_cap / static_cast<double>(s.t);
      detail::record(c, bound, s.g_avg.maxCoeff(), 1e-9 + 1e-8 * bound);
    }
    report.checks.push_back(c);
  }

  // queue
  if (!primal_theorems) {
    report.checks.push_back(detail::not_applicable("queue_bound", "V < m beta^2 / alpha"));
  } else {
    BoundCheck c = detail::applicable("queue_bound");
    for (const auto& s : trace.samples()) {
      detail::record(c, queue_cap, s.qnorm, 1e-9 + 1e-8 * queue_cap);
    }
    report.checks.push_back(c);
  }

  const bool have_dual = std::all_of(trace.samples().begin(), trace.samples().end(),
                                     [](const TraceSample& s) { return s.dual_gap.has_value(); });
  const bool have_dist = std::all_of(trace.samples().begin(), trace.samples().end(),
                                     [](const TraceSample& s) { return s.lambda_dist.has_value(); });

  // dual gap
  if (!gamma) {
    report.checks.push_back(detail::not_applicable("dual_gap_bound", "no smoothness modulus given"));
  } else if (V < *gamma) {
    report.checks.push_back(detail::not_applicable("dual_gap_bound", "V < gamma"));
  } else if (!have_dual || !trace.initial_dual_value) {
    report.checks.push_back(detail::not_applicable("dual_gap_bound", "trace has no dual values"));
  } else {
    BoundCheck c = detail::applicable("dual_gap_bound");
    const double theta =
        theta_bound(V, *gamma, lambda0, reference->lambda_star, *trace.initial_dual_value, f_star);
    for (const auto& s : trace.samples()) {
      detail::record(c, theta / static_cast<double>(s.t), *s.dual_gap, 1e-9);
    }
    report.checks.push_back(c);
  }

  // monotone distance
  if (!gamma) {
    report.checks.push_back(detail::not_applicable("lambda_distance_monotone", "no smoothness modulus given"));
  } else if (V < *gamma) {
    report.checks.push_back(detail::not_applicable("lambda_distance_monotone", "V < gamma"));
  } else if (!have_dist) {
    report.checks.push_back(detail::not_applicable("lambda_distance_monotone", "trace has no distances"));
  } else {
    BoundCheck c = detail::applicable("lambda_distance_monotone");
    const auto& ss = trace.samples();
    for (std::size_t i = 1; i < ss.size(); ++i) {
      detail::record(c, *ss[i - 1].lambda_dist, *ss[i].lambda_dist, 1e-9);
    }
    report.checks.push_back(c);
  }

  // monotone dual value
  if (!gamma) {
    report.checks.push_back(detail::not_applicable("dual_value_monotone", "no smoothness modulus given"));
  } else if (V < *gamma / 2.0) {
    report.checks.push_back(detail::not_applicable("dual_value_monotone", "V < gamma / 2"));
  } else if (!have_dual) {
    report.checks.push_back(detail::not_applicable("dual_value_monotone", "trace has no dual values"));
  } else {
    BoundCheck c = detail::applicable("dual_value_monotone");
    const auto& ss = trace.samples();
    for (std::size_t i = 1; i < ss.size(); ++i) {
      detail::record(c, *ss[i - 1].dual_gap, *ss[i].dual_gap, 1e-9);
    }
    report.checks.push_back(c);
  }
  return report;
}

}  // namespace driftopt
