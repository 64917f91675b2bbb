// Drift-plus-penalty, its shifted-running-average variant, and the dual
// subgradient method, all driven by an InnerOracle.
#pragma once

#include "driftopt/core.hpp"
#include "driftopt/oracles.hpp"

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace driftopt {

enum class Variant { dpp, dpp_shifted, dual_subgradient };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::dpp:
      return "dpp";
    case Variant::dpp_shifted:
      return "dpp-shifted";
    case Variant::dual_subgradient:
      return "dual-subgradient";
  }
  return "unknown";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  if (s == "dpp") return Variant::dpp;
  if (s == "dpp-shifted" || s == "dpp_shifted") return Variant::dpp_shifted;
  if (s == "dual-subgradient" || s == "dual_subgradient") return Variant::dual_subgradient;
  return std::nullopt;
}

/// Which iterations get recorded in the trace. The final iteration is always
/// recorded.
struct Sampling {
  enum class Kind { logarithmic, linear };
  Kind kind = Kind::logarithmic;
  std::int64_t stride = 1;  // linear only
  int per_decade = 200;     // logarithmic only

  static Sampling logarithmic(int per_decade = 200) {
    return Sampling{Kind::logarithmic, 1, per_decade};
  }
  static Sampling linear(std::int64_t stride) { return Sampling{Kind::linear, stride, 0}; }
  static Sampling full() { return linear(1); }

  /// Sorted sample indices in [1, iters].
  std::set<std::int64_t> indices(std::int64_t iters) const {
    std::set<std::int64_t> out;
    if (kind == Kind::linear) {
      for (std::int64_t t = stride; t <= iters; t += stride) out.insert(t);
    } else {
      const double top = std::log10(static_cast<double>(std::max<std::int64_t>(iters, 1)));
      const auto steps = static_cast<std::int64_t>(std::ceil(top * per_decade));
      for (std::int64_t k = 0; k <= steps; ++k) {
        const auto t = static_cast<std::int64_t>(
            std::llround(std::pow(10.0, static_cast<double>(k) / per_decade)));
        if (t >= 1 && t <= iters) out.insert(t);
      }
    }
    if (iters >= 1) out.insert(iters);
    return out;
  }
};

struct SolverConfig {
  double V = 1.0;
  Vec q0;  // initial queue Q(0); empty means zero
  std::int64_t iters = 1;
  Variant variant = Variant::dpp;
  std::optional<double> step;  // dual-subgradient step c; defaults to 1/V
  Sampling sampling = Sampling::logarithmic();

  double step_size() const { return step.value_or(1.0 / V); }

  Vec initial_queue(Index m) const { return q0.size() == 0 ? Vec::Zero(m) : q0; }

  void validate(Index m) const {
    if (!(V > 0.0)) throw PreconditionError("V must be > 0");
    if (iters < 1) throw PreconditionError("iteration budget must be >= 1");
    if (q0.size() != 0) {
      require_size(q0.size(), m, "initial queue");
      if (!((q0.array() >= 0.0).all())) throw PreconditionError("initial queue must be >= 0");
    }
    if (step && !(*step > 0.0)) throw PreconditionError("step size c must be > 0");
    if (sampling.kind == Sampling::Kind::linear && sampling.stride < 1) {
      throw PreconditionError("linear sampling stride must be >= 1");
    }
    if (sampling.kind == Sampling::Kind::logarithmic && sampling.per_decade < 1) {
      throw PreconditionError("logarithmic sampling needs >= 1 sample per decade");
    }
  }
};

// ---------------------------------------------------------------------------
// Averaging

/// Index range [first, last] averaged into xbar(t_plus_1), or nullopt when
/// xbar(t_plus_1) holds the previous value (odd t_plus_1).
struct WindowRange {
  std::int64_t first;
  std::int64_t last;
  bool operator==(const WindowRange&) const = default;
};

inline std::optional<WindowRange> shifted_average_window(std::int64_t t_plus_1) {
  if (t_plus_1 < 1) throw PreconditionError("shifted window needs t + 1 >= 1");
  if (t_plus_1 % 2 != 0) return std::nullopt;
  const std::int64_t s = t_plus_1 / 2;
  return WindowRange{s, 2 * s - 1};
}

enum class AveragingMode { standard, shifted };

/// Running average of x(0), x(1), ... in either mode.
///
/// Standard mode keeps xbar(t) = mean of x(0..t-1) incrementally. Shifted mode
/// keeps the iterates of the current window in a deque (at most about t/2 of
/// them) and forms the window mean on request; xbar(1) is taken as x(0).
class AveragingState {
 public:
  AveragingState() = default;
  AveragingState(AveragingMode mode, Index n) : mode_(mode), standard_(Vec::Zero(n)) {}

  AveragingMode mode() const { return mode_; }
  std::int64_t count() const { return count_; }

  /// Feeds x(count()).
  void push(const Vec& x) {
    const std::int64_t t = count_;
    ++count_;
    cache_valid_ = false;
    if (mode_ == AveragingMode::standard) {
      const double tt = static_cast<double>(t);
      standard_ = standard_ * (tt / (tt + 1.0)) + x * (1.0 / (tt + 1.0));
      return;
    }
    window_.push_back(x);
    if (auto range = shifted_average_window(count_)) {
      while (window_first_ < range->first) {
        window_.pop_front();
        ++window_first_;
      }
    }
  }

  /// xbar(count()). Requires count() >= 1.
  const Vec& average() const {
    if (count_ < 1) throw PreconditionError("running average is undefined before x(0)");
    if (mode_ == AveragingMode::standard) return standard_;
    if (!cache_valid_) {
      cache_ = shifted_mean();
      cache_valid_ = true;
    }
    return cache_;
  }

 private:
  Vec shifted_mean() const {
    if (count_ == 1) return window_.front();
    // Odd counts hold the previous window, which excludes the newest iterate.
    const auto range = shifted_average_window(count_ % 2 == 0 ? count_ : count_ - 1);
    const auto len = static_cast<std::size_t>(range->last - range->first + 1);
    const Vec& anchor = window_.front();
    Vec dev = Vec::Zero(anchor.size());
    for (std::size_t i = 1; i < len; ++i) dev += window_[i] - anchor;
    return anchor + dev / static_cast<double>(len);
  }

  AveragingMode mode_ = AveragingMode::standard;
  std::int64_t count_ = 0;
  Vec standard_;
  std::deque<Vec> window_;
  std::int64_t window_first_ = 0;
  mutable Vec cache_;
  mutable bool cache_valid_ = false;
};

// ---------------------------------------------------------------------------
// State and single steps

struct SolverState {
  std::int64_t t = 0;  // index of the next iteration
  QueueState queue;    // Q(t)
  Vec lambda;          // lambda(t)
  AveragingState average;
};

/// Quantities of one completed iteration t.
struct StepRecord {
  std::int64_t t = 0;
  Vec x;              // x(t)
  Vec g;              // g(x(t))
  QueueState before;  // Q(t)
  QueueState after;   // Q(t+1)
};

/// Equivalent penalty weight: V for the queue variants, 1/c for the dual
/// subgradient method.
inline double effective_V(const SolverConfig& config) {
  return config.variant == Variant::dual_subgradient ? 1.0 / config.step_size() : config.V;
}

inline SolverState initial_state(const ProgramSpec& program, const SolverConfig& config) {
  config.validate(program.m);
  SolverState s;
  const Vec q0 = config.initial_queue(program.m);
  s.lambda = q0 / config.V;
  s.queue = config.variant == Variant::dual_subgradient
                ? QueueState(s.lambda / config.step_size())
                : QueueState(q0);
  s.average = AveragingState(
      config.variant == Variant::dpp_shifted ? AveragingMode::shifted : AveragingMode::standard,
      program.n);
  return s;
}

/// x(t) for the current state: argmin V f + Q.g for the queue variants,
/// argmin f + lambda.g for the dual subgradient method.
inline Vec primal_iterate(const InnerOracle& oracle, const SolverConfig& config,
                          const SolverState& state) {
  if (config.variant == Variant::dual_subgradient) {
    return oracle(QueueState(state.lambda), 1.0);
  }
  return oracle(state.queue, config.V);
}

using SampleHook = std::function<void(const SolverState&, const Vec& x_t)>;

/// One iteration. `before_update` sees the state at t together with x(t)
/// before the queue and the average advance.
inline StepRecord dpp_step(const ProgramSpec& program, const InnerOracle& oracle,
                           const SolverConfig& config, SolverState& state,
                           const SampleHook& before_update = {}) {
  StepRecord rec;
  rec.t = state.t;
  rec.x = primal_iterate(oracle, config, state);
  if (before_update) before_update(state, rec.x);
  rec.g = program.constraints(rec.x);
  rec.before = state.queue;

  if (config.variant == Variant::dual_subgradient) {
    const double c = config.step_size();
    state.lambda = (state.lambda + c * rec.g).cwiseMax(0.0);
    state.queue = QueueState(state.lambda / c);
  } else {
    state.queue = queue_update(state.queue, rec.g);
    state.lambda = state.queue.values() / config.V;
  }
  rec.after = state.queue;
  state.average.push(rec.x);
  ++state.t;
  return rec;
}

// ---------------------------------------------------------------------------
// Full runs

/// Reference point used to annotate traces.
struct TraceReference {
  Vec lambda_star;
  double f_star = 0.0;
};

/// Oracle failure inside run(); holds the trace through the last good sample.
struct SolverError : Error {
  SolverError(const std::string& what, IterateTrace partial_trace, std::int64_t failed_at)
      : Error(what), partial(std::move(partial_trace)), iteration(failed_at) {}
  IterateTrace partial;
  std::int64_t iteration;
};

using StepObserver = std::function<void(const StepRecord&)>;

inline TraceSample make_sample(const ProgramSpec& program, const SolverState& state,
                               const Vec& x_t, const std::optional<TraceReference>& reference) {
  TraceSample s;
  s.t = state.t;
  s.x = x_t;
  s.xbar = state.average.average();
  s.queue = state.queue.values();
  s.lambda = state.lambda;
  s.f_avg = program.objective(s.xbar);
  s.g_avg = program.constraints(s.xbar);
  s.qnorm = state.queue.norm();
  s.dual_value = program.objective(x_t) + state.lambda.dot(program.constraints(x_t));
  if (reference) {
    s.lambda_dist = (state.lambda - reference->lambda_star).norm();
    s.dual_gap = reference->f_star - s.dual_value;
  }
  return s;
}

/// Runs config.iters iterations from Q(0) and returns the sampled trace.
/// Sample t reports xbar(t), Q(t), lambda(t) and q(lambda(t)); the sample at
/// t = iters costs one extra oracle call.
inline IterateTrace run(const ProgramSpec& program, const InnerOracle& oracle,
                        const SolverConfig& config,
                        const std::optional<TraceReference>& reference = std::nullopt,
                        const StepObserver& observer = {}) {
  SolverState state = initial_state(program, config);
  const auto wanted = config.sampling.indices(config.iters);
  IterateTrace trace;

  const SampleHook hook = [&](const SolverState& s, const Vec& x_t) {
    if (s.t == 0) {
      trace.initial_dual_value = program.objective(x_t) + s.lambda.dot(program.constraints(x_t));
    } else if (wanted.count(s.t) != 0) {
      trace.append(make_sample(program, s, x_t, reference));
    }
  };

  auto fail = [&](const std::exception& e) {
    throw SolverError(std::string("oracle failure at iteration ") + std::to_string(state.t) +
                          ": " + e.what(),
                      trace, state.t);
  };

  while (state.t < config.iters) {
    try {
      const StepRecord rec = dpp_step(program, oracle, config, state, hook);
      if (observer) observer(rec);
    } catch (const Error& e) {
      fail(e);
    }
  }
  try {
    hook(state, primal_iterate(oracle, config, state));
  } catch (const Error& e) {
    fail(e);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Penalty parameter

/// m beta^2 / alpha, or max(m beta^2 / alpha, gamma) when gamma is given.
inline double choose_V(const ProgramSpec& program, std::optional<double> gamma = std::nullopt) {
  const double base = static_cast<double>(program.m) * program.beta * program.beta / program.alpha;
  return gamma ? std::max(base, *gamma) : base;
}

/// Warning text when V is below the value choose_V would pick.
inline std::optional<std::string> check_V(const ProgramSpec& program, double V,
                                          std::optional<double> gamma = std::nullopt) {
  const double wanted = choose_V(program, gamma);
  if (V < wanted * (1.0 - 1e-12)) {
    return "V = " + std::to_string(V) + " is below the recommended " + std::to_string(wanted) +
           "; the convergence-time guarantees do not apply";
  }
  return std::nullopt;
}

}  // namespace driftopt
