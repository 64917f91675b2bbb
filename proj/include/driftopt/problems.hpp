// Built-in NUM and QP instances and the JSON problem-file loader.
#pragma once

#include "driftopt/core.hpp"
#include "driftopt/dual_analysis.hpp"
#include "driftopt/oracles.hpp"
#include "driftopt/reference_oracle.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace driftopt {

/// Where a stored constant came from.
enum class Provenance { paper, computed, supplied };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::paper:
      return "paper";
    case Provenance::computed:
      return "computed";
    case Provenance::supplied:
      return "supplied";
  }
  return "unknown";
}

struct Constant {
  double value = 0.0;
  Provenance provenance = Provenance::computed;
};

struct ProblemConstants {
  Constant alpha;
  Constant beta;
  std::optional<Constant> gamma;  // stored or supplied smoothness modulus
  double gamma_computed = 0.0;    // ||A||_F^2 / alpha
  std::vector<double> V_values;   // penalty values used in the reference experiments
};

using Instance = std::variant<NumInstance, QpInstance>;

struct ProblemBundle {
  std::string tag;
  Instance instance;
  ProgramSpec program;
  InnerOracle oracle;
  ProblemConstants constants;
  std::optional<KktSolution> reference;
  std::string reference_error;  // why `reference` is absent

  bool is_num() const { return std::holds_alternative<NumInstance>(instance); }

  const Mat& constraint_matrix() const {
    return std::visit([](const auto& inst) -> const Mat& { return inst.A; }, instance);
  }

  /// Smoothness modulus to use by default: the stored one if any, else computed.
  double gamma() const {
    return constants.gamma ? constants.gamma->value : constants.gamma_computed;
  }

  /// Hessian of the dual function at lambda.
  Mat dual_hessian(const Vec& lambda) const {
    if (const auto* num = std::get_if<NumInstance>(&instance)) return num_dual_hessian(*num, lambda);
    const auto& qp = std::get<QpInstance>(instance);
    return general_dual_hessian(qp.A, 2.0 * qp.P, {}, lambda);
  }

  /// Local strong-concavity modulus at lambda*, when the Hessian there is
  /// negative definite.
  std::optional<double> Lc() const {
    if (!reference) return std::nullopt;
    try {
      return lc_estimate(dual_hessian(reference->lambda_star));
    } catch (const DomainError&) {
      return std::nullopt;
    }
  }
};

namespace detail {

inline double frobenius_squared(const Mat& A) { return A.squaredNorm(); }

inline ProblemBundle assemble(std::string tag, Instance instance, ProblemConstants constants) {
  ProgramSpec program = std::visit(
      [&](const auto& inst) {
        return make_program(inst, constants.alpha.value, constants.beta.value);
      },
      instance);
  InnerOracle oracle = std::visit(
      [](const auto& inst) {
        if constexpr (std::is_same_v<std::decay_t<decltype(inst)>, NumInstance>) {
          return InnerOracle::log_utility(inst);
        } else {
          return InnerOracle::quadratic(inst);
        }
      },
      instance);
  const Mat& A = std::visit([](const auto& inst) -> const Mat& { return inst.A; }, instance);
  constants.gamma_computed = smoothness_modulus(constants.alpha.value, std::sqrt(frobenius_squared(A)));

  ProblemBundle b{std::move(tag), std::move(instance), std::move(program), std::move(oracle),
                  std::move(constants), std::nullopt, {}};
  if (A.rows() > detail::kMaxEnumeratedConstraints) {
    b.reference_error = "more than 20 constraints; no reference solution";
  } else {
    try {
      b.reference = std::visit(
          [](const auto& inst) {
            if constexpr (std::is_same_v<std::decay_t<decltype(inst)>, NumInstance>) {
              return kkt_solve_num(inst);
            } else {
              return kkt_solve_qp(inst);
            }
          },
          b.instance);
    } catch (const Error& e) {
      b.reference_error = e.what();
    }
  }
  if (b.constants.gamma) {
    if (const auto lc = b.Lc(); lc && !gamma_geq_Lc_check(b.constants.gamma->value, *lc)) {
      throw DomainError("stored smoothness modulus is below the local concavity modulus");
    }
  }
  return b;
}

inline Mat matrix_from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Mat M(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) M(r, c++) = v;
    ++r;
  }
  return M;
}

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace detail

inline const std::vector<std::string>& builtin_tags() {
  static const std::vector<std::string> tags{"num_6_1", "qp_6_2", "num_5_2_rank_deficient"};
  return tags;
}

/// Three-flow NUM: utilities log x1 + 2 log x2 + 3 log x3 over links
/// x1+x2+x3 <= 10, x1+x2 <= 8, x2+x3 <= 8 with rates capped at 11.
inline NumInstance num_6_1_instance() {
  return NumInstance{detail::vec({1, 2, 3}),
                     detail::matrix_from_rows({{1, 1, 1}, {1, 1, 0}, {0, 1, 1}}),
                     detail::vec({10, 8, 8}), detail::vec({11, 11, 11})};
}

/// Two-variable QP with both constraints active at x* = (-1, -1).
inline QpInstance qp_6_2_instance() {
  return QpInstance{detail::matrix_from_rows({{1, 2}, {2, 5}}), detail::vec({1, 1}),
                    detail::matrix_from_rows({{1, 1}, {0, 1}}), detail::vec({-2, -1})};
}

/// Four flows on four links whose routing matrix has rank 3: mu = (1,1,-1,-1)
/// has mu'A = 0 and mu'b = 0, so the dual is not locally quadratic.
inline NumInstance num_5_2_instance() {
  return NumInstance{
      detail::vec({1, 1, 1, 1}),
      detail::matrix_from_rows({{1, 1, 0, 0}, {0, 0, 1, 1}, {1, 0, 1, 0}, {0, 1, 0, 1}}),
      detail::vec({3, 7, 2, 8}), detail::vec({10, 10, 10, 10})};
}

inline ProblemBundle builtin(std::string_view tag) {
  if (tag == "num_6_1") {
    ProblemConstants k;
    k.alpha = {2.0 / 121.0, Provenance::paper};
    k.beta = {std::sqrt(3.0), Provenance::paper};
    k.gamma = Constant{422.0, Provenance::paper};
    k.V_values = {363.0, 422.0};
    return detail::assemble("num_6_1", num_6_1_instance(), k);
  }
  if (tag == "qp_6_2") {
    ProblemConstants k;
    k.alpha = {0.34, Provenance::paper};
    k.beta = {std::sqrt(2.0), Provenance::paper};
    k.gamma = Constant{9.0, Provenance::paper};
    k.V_values = {4.0 / 0.34};
    return detail::assemble("qp_6_2", qp_6_2_instance(), k);
  }
  if (tag == "num_5_2_rank_deficient") {
    const NumInstance inst = num_5_2_instance();
    ProblemConstants k;
    k.alpha = {(inst.c.array() / inst.xmax.array().square()).minCoeff(), Provenance::computed};
    k.beta = {max_row_norm(inst.A), Provenance::computed};
    return detail::assemble("num_5_2_rank_deficient", inst, k);
  }
  throw DomainError("unknown builtin problem '" + std::string(tag) + "'");
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline Vec json_vec(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw ParseError(std::string("problem file: '") + key + "' must be an array of numbers");
  }
  const auto& a = j[key];
  Vec v(static_cast<Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw ParseError(std::string("problem file: '") + key + "' has a non-number");
    v[static_cast<Index>(i)] = a[i].get<double>();
  }
  return v;
}

inline Mat json_mat(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].empty()) {
    throw ParseError(std::string("problem file: '") + key + "' must be a nonempty array of rows");
  }
  const auto& rows = j[key];
  const std::size_t cols = rows[0].is_array() ? rows[0].size() : 0;
  Mat M(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!rows[r].is_array() || rows[r].size() != cols) {
      throw ParseError(std::string("problem file: '") + key + "' rows differ in length");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!rows[r][c].is_number()) throw ParseError(std::string("problem file: '") + key + "' has a non-number");
      M(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c].get<double>();
    }
  }
  return M;
}

inline nlohmann::json to_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline nlohmann::json to_json(const Mat& M) {
  nlohmann::json a = nlohmann::json::array();
  for (Index r = 0; r < M.rows(); ++r) a.push_back(to_json(Vec(M.row(r).transpose())));
  return a;
}

inline std::optional<double> json_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_number()) throw ParseError(std::string("problem file: '") + key + "' must be a number");
  return j[key].get<double>();
}

}  // namespace detail

/// Builds a bundle from the problem schema
///   {"kind": "num"|"qp", "A", "b", "c", "P" (qp), "xmax" (num),
///    "alpha"?, "beta"?, "gamma"?, "V"?, "name"?}
/// Missing alpha is computed (min eig of 2P, or min c_i / xmax_i^2); missing
/// beta is the largest row norm of A.
inline ProblemBundle problem_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("problem file: top level must be an object");
  if (!j.contains("kind") || !j["kind"].is_string()) throw ParseError("problem file: missing 'kind'");
  const std::string kind = j["kind"].get<std::string>();
  const std::string name = j.contains("name") && j["name"].is_string() ? j["name"].get<std::string>()
                                                                         : std::string("file");

  Instance instance;
  double alpha_default = 0.0;
  if (kind == "num") {
    NumInstance inst{detail::json_vec(j, "c"), detail::json_mat(j, "A"), detail::json_vec(j, "b"),
                     detail::json_vec(j, "xmax")};
    inst.validate();
    alpha_default = (inst.c.array() / inst.xmax.array().square()).minCoeff();
    instance = std::move(inst);
  } else if (kind == "qp") {
    QpInstance inst{detail::json_mat(j, "P"), detail::json_vec(j, "c"), detail::json_mat(j, "A"),
                    detail::json_vec(j, "b")};
    inst.validate();
    alpha_default = inst.convexity_modulus();
    instance = std::move(inst);
  } else {
    throw ParseError("problem file: 'kind' must be \"num\" or \"qp\"");
  }
  const Mat& A = std::visit([](const auto& inst) -> const Mat& { return inst.A; }, instance);

  ProblemConstants k;
  if (auto a = detail::json_number(j, "alpha")) {
    k.alpha = {*a, Provenance::supplied};
  } else {
    k.alpha = {alpha_default, Provenance::computed};
  }
  if (auto b = detail::json_number(j, "beta")) {
    k.beta = {*b, Provenance::supplied};
  } else {
    k.beta = {max_row_norm(A), Provenance::computed};
  }
  if (auto g = detail::json_number(j, "gamma")) k.gamma = Constant{*g, Provenance::supplied};
  if (j.contains("V")) {
    if (!j["V"].is_array()) throw ParseError("problem file: 'V' must be an array of numbers");
    for (const auto& v : j["V"]) {
      if (!v.is_number()) throw ParseError("problem file: 'V' must be an array of numbers");
      k.V_values.push_back(v.get<double>());
    }
  }
  return detail::assemble(name, std::move(instance), std::move(k));
}

inline ProblemBundle parse_problem(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("problem file is not valid JSON: ") + e.what());
  }
  return problem_from_json(j);
}

inline ProblemBundle load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open problem file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem(ss.str());
}

inline nlohmann::json to_json(const ProblemBundle& b) {
  nlohmann::json j;
  j["name"] = b.tag;
  if (const auto* num = std::get_if<NumInstance>(&b.instance)) {
    j["kind"] = "num";
    j["A"] = detail::to_json(num->A);
    j["b"] = detail::to_json(num->b);
    j["c"] = detail::to_json(num->c);
    j["xmax"] = detail::to_json(num->xmax);
  } else {
    const auto& qp = std::get<QpInstance>(b.instance);
    j["kind"] = "qp";
    j["P"] = detail::to_json(qp.P);
    j["c"] = detail::to_json(qp.c);
    j["A"] = detail::to_json(qp.A);
    j["b"] = detail::to_json(qp.b);
  }
  j["alpha"] = b.constants.alpha.value;
  j["beta"] = b.constants.beta.value;
  if (b.constants.gamma) j["gamma"] = b.constants.gamma->value;
  if (!b.constants.V_values.empty()) j["V"] = b.constants.V_values;
  return j;
}

/// Numerical equality of two bundles: instance data, constants and reference.
inline bool same_problem(const ProblemBundle& a, const ProblemBundle& b) {
  if (a.instance.index() != b.instance.index()) return false;
  const bool inst_eq = std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.instance);
        if constexpr (std::is_same_v<T, NumInstance>) {
          return x.c == y.c && x.A == y.A && x.b == y.b && x.xmax == y.xmax;
        } else {
          return x.P == y.P && x.c == y.c && x.A == y.A && x.b == y.b;
        }
      },
      a.instance);
  if (!inst_eq) return false;
  const auto& ka = a.constants;
  const auto& kb = b.constants;
  if (ka.alpha.value != kb.alpha.value || ka.beta.value != kb.beta.value) return false;
  if (ka.gamma.has_value() != kb.gamma.has_value()) return false;
  if (ka.gamma && ka.gamma->value != kb.gamma->value) return false;
  if (ka.gamma_computed != kb.gamma_computed || ka.V_values != kb.V_values) return false;
  if (a.reference.has_value() != b.reference.has_value()) return false;
  if (a.reference) {
    const auto& ra = *a.reference;
    const auto& rb = *b.reference;
    if (ra.x_star != rb.x_star || ra.f_star != rb.f_star || ra.lambda_star != rb.lambda_star ||
        ra.active_set != rb.active_set) {
      return false;
    }
  }
  return true;
}

}  // namespace driftopt
