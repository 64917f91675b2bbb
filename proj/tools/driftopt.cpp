// driftopt command-line front end: solve, fit, audit, kkt, info.
#include "driftopt/driftopt.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

using driftopt::Index;
using driftopt::Vec;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitBoundFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProblemSource {
  std::string builtin;
  std::string path;

  driftopt::ProblemBundle load() const {
    if (builtin.empty() == path.empty()) {
      throw UsageError("exactly one of --builtin and --problem is required");
    }
    if (!builtin.empty()) {
      try {
        return driftopt::builtin(builtin);
      } catch (const driftopt::DomainError& e) {
        throw UsageError(e.what());
      }
    }
    return driftopt::load_problem(path);
  }
};

void add_source(CLI::App* cmd, ProblemSource& src) {
  cmd->add_option("--builtin", src.builtin, "Built-in problem tag")
      ->check(CLI::IsMember(driftopt::builtin_tags()));
  cmd->add_option("--problem", src.path, "JSON problem file")->check(CLI::ExistingFile);
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(); }

Vec parse_q0(const std::string& text, Index m) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size()) throw UsageError("--q0: '" + cell + "' is not a number");
    vals.push_back(v);
  }
  if (vals.size() == 1) return Vec::Constant(m, vals[0]);
  if (static_cast<Index>(vals.size()) != m) {
    throw UsageError("--q0 needs 1 or " + std::to_string(m) + " values");
  }
  return Eigen::Map<const Vec>(vals.data(), m);
}

driftopt::Sampling parse_sampling(const std::string& text) {
  if (text == "log") return driftopt::Sampling::logarithmic();
  if (text.rfind("linear:", 0) == 0) {
    const std::string rest = text.substr(7);
    std::size_t used = 0;
    long long stride = 0;
    try {
      stride = std::stoll(rest, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != rest.size() || stride < 1) {
      throw UsageError("--sample linear:<stride> needs a positive integer stride");
    }
    return driftopt::Sampling::linear(stride);
  }
  throw UsageError("--sample must be 'log' or 'linear:<stride>'");
}

std::string default_summary_path(const std::string& out) {
  std::filesystem::path p(out);
  p.replace_extension(".json");
  if (p == std::filesystem::path(out)) p += ".summary.json";
  return p.string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("cannot write '" + path + "'");
  os << text;
  if (!os) throw UsageError("write to '" + path + "' failed");
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw driftopt::ParseError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw driftopt::ParseError("'" + path + "' is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// solve

struct SolveArgs {
  ProblemSource src;
  std::string algorithm = "dpp";
  std::optional<double> V;
  std::string q0;
  long long iters = 1000;
  std::optional<double> step;
  std::string sample = "log";
  std::string out;
  std::string summary;
};

json config_json(const driftopt::SolverConfig& cfg, const Vec& q0, const SolveArgs& a,
                 const std::string& tag) {
  json j;
  j["problem"] = tag;
  j["algorithm"] = std::string(driftopt::to_string(cfg.variant));
  j["V"] = cfg.V;
  j["q0"] = vec_json(q0);
  j["iters"] = cfg.iters;
  j["step"] = optional_json(cfg.step);
  j["sample"] = a.sample;
  return j;
}

json final_json(const driftopt::IterateTrace& trace, const driftopt::ProblemBundle& b) {
  json j;
  if (trace.empty()) return j;
  const auto& s = trace.back();
  j["t"] = s.t;
  j["f_avg"] = s.f_avg;
  j["g_avg"] = vec_json(s.g_avg);
  j["max_violation"] = s.g_avg.size() == 0 ? 0.0 : std::max(s.g_avg.maxCoeff(), 0.0);
  j["qnorm"] = s.qnorm;
  j["xbar"] = vec_json(s.xbar);
  if (b.reference) {
    j["f_err"] = std::abs(s.f_avg - b.reference->f_star);
    j["lambda_dist"] = optional_json(s.lambda_dist);
    j["dual_gap"] = optional_json(s.dual_gap);
  }
  return j;
}

int run_solve(const SolveArgs& a) {
  const auto bundle = a.src.load();
  const Index m = bundle.program.m;
  const auto variant = driftopt::parse_variant(a.algorithm);
  if (!variant) throw UsageError("unknown --algorithm '" + a.algorithm + "'");

  driftopt::SolverConfig cfg;
  cfg.variant = *variant;
  cfg.V = a.V.value_or(driftopt::choose_V(bundle.program));
  cfg.q0 = a.q0.empty() ? Vec::Zero(m) : parse_q0(a.q0, m);
  cfg.iters = a.iters;
  cfg.step = a.step;
  cfg.sampling = parse_sampling(a.sample);
  cfg.validate(m);

  if (auto warn = driftopt::check_V(bundle.program, driftopt::effective_V(cfg))) {
    std::cerr << "warning: " << *warn << '\n';
  }

  std::optional<driftopt::TraceReference> ref;
  std::optional<double> f_star;
  if (bundle.reference) {
    ref = driftopt::TraceReference{bundle.reference->lambda_star, bundle.reference->f_star};
    f_star = bundle.reference->f_star;
  }

  const std::string summary_path = a.summary.empty() ? default_summary_path(a.out) : a.summary;
  json summary;
  summary["config"] = config_json(cfg, cfg.initial_queue(m), a, bundle.tag);
  summary["f_star"] = optional_json(f_star);

  auto emit = [&](const driftopt::IterateTrace& trace) {
    std::ostringstream csv;
    driftopt::write_trace_csv(csv, trace, m, f_star);
    write_text(a.out, csv.str());
    summary["initial_dual_value"] = optional_json(trace.initial_dual_value);
    summary["samples"] = trace.size();
    summary["final"] = final_json(trace, bundle);
    write_text(summary_path, summary.dump(2) + "\n");
  };

  try {
    const auto trace = driftopt::run(bundle.program, bundle.oracle, cfg, ref);
    summary["status"] = "ok";
    emit(trace);
  } catch (const driftopt::SolverError& e) {
    summary["status"] = "numerical_failure";
    summary["error"] = e.what();
    summary["failed_at"] = e.iteration;
    emit(e.partial);
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string trace;
  std::string series = "constraint";
  std::string model = "power";
  double window = 0.5;
  std::optional<double> t_min;
  std::optional<double> t_max;
};

driftopt::LoadedTrace load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw driftopt::ParseError("cannot open trace '" + path + "'");
  return driftopt::read_trace_csv(in);
}

int run_fit(const FitArgs& a) {
  const auto loaded = load_trace(a.trace);
  std::vector<double> t;
  std::vector<double> e;
  if (a.series == "obj") {
    if (loaded.f_err.empty() && !loaded.trace.empty()) {
      throw driftopt::ParseError("trace has no f_err column; cannot fit the objective series");
    }
    for (std::size_t i = 0; i < loaded.trace.size(); ++i) {
      t.push_back(static_cast<double>(loaded.trace.samples()[i].t));
      e.push_back(loaded.f_err[i]);
    }
  } else {
    if (loaded.m == 0) throw driftopt::ParseError("trace has no g_k columns");
    const auto s = driftopt::error_series(loaded.trace, 0.0);
    t = s.t;
    e = s.constraint;
  }
  driftopt::FitWindow w;
  w.fraction = a.window;
  w.t_min = a.t_min;
  w.t_max = a.t_max;
  const auto fit = a.model == "power" ? driftopt::fit_power_decay(t, e, w)
                                      : driftopt::fit_geometric(t, e, w);
  json j = driftopt::to_json(fit);
  j["series"] = a.series;
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// audit

struct AuditArgs {
  std::string trace;
  ProblemSource src;
  std::string summary;
  std::optional<double> V;
  std::string q0;
  std::string algorithm;
  std::optional<double> step;
  std::optional<double> gamma;
};

int run_audit(const AuditArgs& a) {
  const auto bundle = a.src.load();
  const Index m = bundle.program.m;
  if (!bundle.reference) {
    throw driftopt::NumericalError("no reference solution: " + bundle.reference_error);
  }
  auto loaded = load_trace(a.trace);
  if (loaded.m != m) throw driftopt::ParseError("trace has the wrong number of constraint columns");

  driftopt::SolverConfig cfg;
  std::optional<double> initial_dual;
  const std::string summary_path = a.summary.empty() ? default_summary_path(a.trace) : a.summary;
  if (std::filesystem::exists(summary_path)) {
    const json s = read_json_file(summary_path);
    try {
      const auto& c = s.at("config");
      cfg.V = c.at("V").get<double>();
      const auto q0 = c.at("q0").get<std::vector<double>>();
      if (static_cast<Index>(q0.size()) != m) throw driftopt::ParseError("summary q0 has the wrong size");
      cfg.q0 = Eigen::Map<const Vec>(q0.data(), m);
      const auto v = driftopt::parse_variant(c.at("algorithm").get<std::string>());
      if (!v) throw driftopt::ParseError("summary has an unknown algorithm");
      cfg.variant = *v;
      if (!c.at("step").is_null()) cfg.step = c.at("step").get<double>();
      if (s.contains("initial_dual_value") && !s["initial_dual_value"].is_null()) {
        initial_dual = s["initial_dual_value"].get<double>();
      }
    } catch (const json::exception& e) {
      throw driftopt::ParseError("malformed summary '" + summary_path + "': " + e.what());
    }
  } else if (!a.V) {
    throw UsageError("no summary at '" + summary_path + "'; pass --V (and --q0) explicitly");
  }
  if (a.V) cfg.V = *a.V;
  if (!a.q0.empty()) cfg.q0 = parse_q0(a.q0, m);
  if (!a.algorithm.empty()) {
    const auto v = driftopt::parse_variant(a.algorithm);
    if (!v) throw UsageError("unknown --algorithm '" + a.algorithm + "'");
    cfg.variant = *v;
  }
  if (a.step) cfg.step = a.step;
  cfg.validate(m);

  if (!initial_dual) {
    driftopt::SolverState st = driftopt::initial_state(bundle.program, cfg);
    const Vec x0 = driftopt::primal_iterate(bundle.oracle, cfg, st);
    initial_dual = bundle.program.objective(x0) + st.lambda.dot(bundle.program.constraints(x0));
  }
  loaded.trace.initial_dual_value = initial_dual;

  const double gamma = a.gamma.value_or(bundle.gamma());
  const auto report = driftopt::audit_bounds(loaded.trace, bundle.reference, bundle.program, cfg, gamma);
  json j = driftopt::to_json(report);
  j["gamma"] = gamma;
  j["V"] = driftopt::effective_V(cfg);
  std::cout << j.dump(2) << '\n';
  return report.all_passed() ? kExitOk : kExitBoundFailed;
}

// ---------------------------------------------------------------------------
// kkt / info

json indices_json(const std::vector<Index>& idx) {
  json a = json::array();
  for (Index k : idx) a.push_back(k + 1);
  return a;
}

json kkt_json(const driftopt::KktSolution& s, Index m) {
  std::vector<Index> slack;
  for (Index k = 0; k < m; ++k) {
    if (std::find(s.active_set.begin(), s.active_set.end(), k) == s.active_set.end()) slack.push_back(k);
  }
  json j;
  j["x_star"] = vec_json(s.x_star);
  j["f_star"] = s.f_star;
  j["lambda_star"] = vec_json(s.lambda_star);
  j["active_set"] = indices_json(s.active_set);
  j["slack_set"] = indices_json(slack);
  return j;
}

int run_kkt(const ProblemSource& src) {
  const auto bundle = src.load();
  if (!bundle.reference) throw driftopt::NumericalError("no reference solution: " + bundle.reference_error);
  std::cout << kkt_json(*bundle.reference, bundle.program.m).dump(2) << '\n';
  return kExitOk;
}

json constant_json(const driftopt::Constant& c) {
  return json{{"value", c.value}, {"provenance", std::string(driftopt::to_string(c.provenance))}};
}

int run_info(const ProblemSource& src) {
  const auto b = src.load();
  json j;
  j["tag"] = b.tag;
  j["problem"] = driftopt::to_json(b);
  j["oracle"] = std::string(driftopt::to_string(b.oracle.kind()));
  j["n"] = b.program.n;
  j["m"] = b.program.m;
  json k;
  k["alpha"] = constant_json(b.constants.alpha);
  k["beta"] = constant_json(b.constants.beta);
  k["gamma"] = b.constants.gamma ? constant_json(*b.constants.gamma) : json();
  k["gamma_computed"] = b.constants.gamma_computed;
  k["V_values"] = b.constants.V_values;
  k["choose_V"] = driftopt::choose_V(b.program, b.gamma());
  j["constants"] = k;
  if (b.reference) {
    j["reference"] = kkt_json(*b.reference, b.program.m);
    j["Lc"] = optional_json(b.Lc());
    const auto qual = driftopt::qualification_check(b.constraint_matrix(), b.reference->active_set);
    j["qualification"] = {{"locally_quadratic", qual.locally_quadratic},
                          {"strongly_concave", qual.strongly_concave}};
  } else {
    j["reference"] = json();
    j["reference_error"] = b.reference_error;
  }
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drift-plus-penalty and dual subgradient solver toolkit"};
  app.require_subcommand(1);

  SolveArgs solve;
  auto* cmd_solve = app.add_subcommand("solve", "Run a solver and write a CSV trace plus JSON summary");
  add_source(cmd_solve, solve.src);
  cmd_solve->add_option("--algorithm", solve.algorithm, "dpp | dpp-shifted | dual-subgradient")
      ->check(CLI::IsMember({"dpp", "dpp-shifted", "dual-subgradient"}));
  cmd_solve->add_option("--V", solve.V, "Penalty weight (default: m beta^2 / alpha)");
  cmd_solve->add_option("--q0", solve.q0, "Initial queue: scalar or comma-separated vector");
  cmd_solve->add_option("--iters", solve.iters, "Iteration budget");
  cmd_solve->add_option("--step", solve.step, "Dual-subgradient step size (default 1/V)");
  cmd_solve->add_option("--sample", solve.sample, "log | linear:<stride>");
  cmd_solve->add_option("--out", solve.out, "CSV output path")->required();
  cmd_solve->add_option("--summary", solve.summary, "JSON summary path (default: --out with .json)");

  FitArgs fit;
  auto* cmd_fit = app.add_subcommand("fit", "Fit a decay model to a trace error series");
  cmd_fit->add_option("--trace", fit.trace, "CSV trace")->required()->check(CLI::ExistingFile);
  cmd_fit->add_option("--series", fit.series, "obj | constraint")
      ->check(CLI::IsMember({"obj", "constraint"}));
  cmd_fit->add_option("--model", fit.model, "power | geometric")
      ->check(CLI::IsMember({"power", "geometric"}));
  cmd_fit->add_option("--window", fit.window, "Tail fraction of the log-t range")
      ->check(CLI::Range(1e-9, 1.0));
  cmd_fit->add_option("--t-min", fit.t_min, "Lower end of the fit window");
  cmd_fit->add_option("--t-max", fit.t_max, "Upper end of the fit window");

  AuditArgs audit;
  auto* cmd_audit = app.add_subcommand("audit", "Check a trace against the theoretical bounds");
  cmd_audit->add_option("--trace", audit.trace, "CSV trace")->required()->check(CLI::ExistingFile);
  add_source(cmd_audit, audit.src);
  cmd_audit->add_option("--summary", audit.summary, "Run summary (default: trace path with .json)");
  cmd_audit->add_option("--V", audit.V, "Penalty weight used for the run");
  cmd_audit->add_option("--q0", audit.q0, "Initial queue used for the run");
  cmd_audit->add_option("--algorithm", audit.algorithm, "Algorithm used for the run");
  cmd_audit->add_option("--step", audit.step, "Dual-subgradient step used for the run");
  cmd_audit->add_option("--gamma", audit.gamma, "Dual smoothness modulus");

  ProblemSource kkt_src;
  auto* cmd_kkt = app.add_subcommand("kkt", "Print the reference KKT solution");
  add_source(cmd_kkt, kkt_src);

  ProblemSource info_src;
  auto* cmd_info = app.add_subcommand("info", "Print problem data, constants and diagnostics");
  add_source(cmd_info, info_src);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (cmd_solve->parsed()) return run_solve(solve);
    if (cmd_fit->parsed()) return run_fit(fit);
    if (cmd_audit->parsed()) return run_audit(audit);
    if (cmd_kkt->parsed()) return run_kkt(kkt_src);
    if (cmd_info->parsed()) return run_info(info_src);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const driftopt::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const driftopt::PreconditionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const driftopt::DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const driftopt::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const driftopt::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUsage;
}
