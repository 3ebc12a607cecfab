#pragma once

// Suite runner: a registry of seeded checks, each split into a sampler that
// produces a JSON instance and an evaluator that turns an instance into a
// report. Witnesses are those instances, so any failure replays standalone.

#include "phient/channels.hpp"
#include "phient/characterizations.hpp"
#include "phient/ensemble.hpp"
#include "phient/entropy.hpp"
#include "phient/frechet.hpp"
#include "phient/phi_catalog.hpp"
#include "phient/report.hpp"
#include "phient/sampling.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace phient {

inline constexpr const char* kArtifactVersion = "0.1.0";

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Instance helpers
// ---------------------------------------------------------------------------

namespace detail {

inline HermitianMatrix mat(const json& j, const char* key) { return hermitian_from_json(j.at(key)); }

inline ScalarFunction phi_of(const json& inst) { return builtin(inst.at("phi").get<std::string>(), true); }

inline Variant variant_of(const json& inst) { return parse_variant(inst.value("variant", std::string("trace"))); }

inline double tol_of(const json& inst) { return inst.at("tolerance").get<double>(); }

inline ThirdOrderMethod third_order_method_of(const json& inst) {
  return inst.value("method", std::string("hybrid")) == "hybrid" ? ThirdOrderMethod::hybrid
                                                                 : ThirdOrderMethod::divided_difference;
}

inline std::vector<std::size_t> random_supports(std::size_t n, Rng& rng) {
  std::vector<std::size_t> s(n);
  for (auto& x : s) x = 2 + rng.index(2);
  return s;
}

/// T atoms: a positive definite perturbation family coupled to z.
inline MatrixEnsemble coupled_partner(const MatrixEnsemble& z, Rng& rng) {
  std::vector<HermitianMatrix> atoms;
  for (std::size_t i = 0; i < z.size(); ++i) atoms.push_back(sample_psd(z.dim, kSpectralFloor, rng));
  return {z.dim, z.weights, std::move(atoms)};
}

inline FunctionalKind kind_from_string(const std::string& s) {
  for (auto k : {FunctionalKind::bregman_A, FunctionalKind::map_B, FunctionalKind::map_C, FunctionalKind::gap_F_t})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown functional '" + s + "'");
}

}  // namespace detail

struct CheckContext {
  ScalarFunction phi;
  Variant variant = Variant::trace;
  Eigen::Index dim = 2;
  double tolerance = 0.0;
};

/// One registered check.
struct CheckSpec {
  std::string name;
  bool phi_dependent = true;
  std::vector<Variant> variants;
  double default_tolerance = 1e-10;
  bool default_enabled = true;
  std::function<bool(const ScalarFunction&, Variant)> in_class;
  /// Draws one instance for a trial.
  std::function<json(const CheckContext&, Rng&, std::int64_t trial)> sample;
  /// Evaluates an instance; the caller attaches the instance as witness.
  std::function<VerificationReport(const json&)> evaluate;
};

inline bool tagged(const ScalarFunction& f, Variant v) { return f.has_tag(required_class(v)); }

inline json base_instance(const std::string& check, const CheckContext& c) {
  return {{"check", check}, {"phi", c.phi.name}, {"variant", to_string(c.variant)}, {"dim", c.dim},
          {"tolerance", c.tolerance}};
}

inline VerificationReport worst_over_lambdas(const std::function<VerificationReport(double)>& one,
                                             const std::vector<double>& lambdas) {
  VerificationReport acc;
  for (double l : lambdas) {
    auto r = one(l);
    if (acc.trials == 0) {
      acc.check_name = r.check_name;
      acc.tolerance = r.tolerance;  // absorb() finalizes against it
    }
    absorb(acc, r);
  }
  acc.trials = 1;
  acc.violations = acc.holds ? 0 : 1;
  return acc;
}

inline json functional_instance(const std::string& check, FunctionalKind kind, const CheckContext& c, Rng& rng) {
  json inst = base_instance(check, c);
  inst["functional"] = to_string(kind);
  const Eigen::Index d = c.dim;
  auto put = [&](const char* u, const char* v) {
    const HermitianMatrix a = sample_psd(d, kSpectralFloor, rng);
    const HermitianMatrix w = sample_psd(d, kSpectralFloor, rng);
    inst[u] = to_json_value(a);
    // v = w - u keeps u + v positive definite; F_t takes two domain points.
    inst[v] = to_json_value(kind == FunctionalKind::gap_F_t ? w : w - a);
  };
  put("u1", "v1");
  put("u2", "v2");
  if (kind == FunctionalKind::gap_F_t) inst["t"] = rng.uniform(0.05, 0.95);
  inst["lambdas"] = trial_lambdas(default_lambdas(), rng, 2);
  return inst;
}

inline VerificationReport evaluate_functional_instance(const json& inst) {
  const auto kind = detail::kind_from_string(inst.at("functional").get<std::string>());
  std::optional<double> t;
  if (inst.contains("t")) t = inst.at("t").get<double>();
  const BivariateFunctional F(kind, detail::phi_of(inst), detail::variant_of(inst), t);
  const auto u1 = detail::mat(inst, "u1"), v1 = detail::mat(inst, "v1");
  const auto u2 = detail::mat(inst, "u2"), v2 = detail::mat(inst, "v2");
  const double tol = detail::tol_of(inst);
  return worst_over_lambdas(
      [&](double l) {
        auto r = joint_convexity_instance(F, u1, v1, u2, v2, l, tol);
        r.witness = l;
        return r;
      },
      inst.at("lambdas").get<std::vector<double>>());
}

/// Hard cap on the order-3 derivative oracle checks' relative errors.
inline constexpr std::array<double, 3> kOracleTolerances{1e-6, 1e-4, 1e-3};

struct OracleErrors {
  std::array<double, 3> rel{};
};

inline OracleErrors frechet_oracle_errors(const ScalarFunction& f, const HermitianMatrix& a, const HermitianMatrix& x,
                                          ThirdOrderMethod method = ThirdOrderMethod::hybrid) {
  OracleErrors e;
  const SpectralDecomposition sd = spectral_decompose(a);
  const double xn = x.frobenius();
  const std::array<HermitianMatrix, 3> exact{frechet_d1(f, sd, x.matrix()), frechet_d2(f, sd, x.matrix(), x.matrix()),
                                             frechet_d3(f, a, x, x, x, method)};
  for (int k = 1; k <= 3; ++k) {
    const HermitianMatrix fd = finite_diff_oracle(f, a, x, k);
    e.rel[static_cast<std::size_t>(k - 1)] =
        relative_error(exact[static_cast<std::size_t>(k - 1)].matrix(), fd.matrix(), std::pow(xn, k));
  }
  return e;
}

inline std::vector<CheckSpec> check_registry() {
  using V = Variant;
  const std::vector<V> both{V::trace, V::operator_valued};
  const std::vector<V> trace_only{V::trace};
  const std::vector<V> operator_only{V::operator_valued};
  std::vector<CheckSpec> reg;

  reg.push_back({"subadditivity", true, both, 1e-10, true, tagged,
                 [](const CheckContext& c, Rng& rng, std::int64_t trial) {
                   json inst = base_instance("subadditivity", c);
                   const std::size_t n = 1 + static_cast<std::size_t>(trial % 3);
                   inst["product"] = to_json_value(sample_product(c.dim, detail::random_supports(n, rng), kSpectralFloor, rng));
                   return inst;
                 },
                 [](const json& inst) {
                   return check_subadditivity(detail::phi_of(inst), product_from_json(inst.at("product")),
                                              detail::variant_of(inst), true, detail::tol_of(inst));
                 }});

  reg.push_back({"efron_stein", false, operator_only, 1e-10, true, [](const ScalarFunction&, V) { return true; },
                 [](const CheckContext& c, Rng& rng, std::int64_t trial) {
                   json inst = base_instance("efron_stein", c);
                   const std::size_t n = 1 + static_cast<std::size_t>(trial % 3);
                   inst["product"] = to_json_value(sample_product(c.dim, detail::random_supports(n, rng), kSpectralFloor, rng));
                   return inst;
                 },
                 [](const json& inst) {
                   return check_operator_efron_stein(product_from_json(inst.at("product")), detail::tol_of(inst));
                 }});

  reg.push_back({"poly_efron_stein", false, trace_only, 1e-10, true, [](const ScalarFunction&, V) { return true; },
                 [](const CheckContext& c, Rng& rng, std::int64_t trial) {
                   json inst = base_instance("poly_efron_stein", c);
                   inst["product"] = to_json_value(sample_product(c.dim, detail::random_supports(2, rng), kSpectralFloor, rng));
                   inst["p"] = 1 + trial % 3;
                   return inst;
                 },
                 [](const json& inst) {
                   return check_polynomial_efron_stein(product_from_json(inst.at("product")), inst.at("p").get<int>(),
                                                       detail::tol_of(inst));
                 }});

  reg.push_back({"dual_representation", true, both, 1e-9, true, tagged,
                 [](const CheckContext& c, Rng& rng, std::int64_t) {
                   json inst = base_instance("dual_representation", c);
                   const auto z = sample_ensemble(c.dim, 2 + rng.index(3), kSpectralFloor, rng);
                   inst["z"] = to_json_value(z);
                   inst["t"] = to_json_value(detail::coupled_partner(z, rng));
                   return inst;
                 },
                 [](const json& inst) {
                   return dual_representation_gap(detail::phi_of(inst), ensemble_from_json(inst.at("z")),
                                                  ensemble_from_json(inst.at("t")), detail::variant_of(inst),
                                                  detail::tol_of(inst));
                 }});

  reg.push_back({"interpolation_scan", true, both, 1e-9, true, tagged,
                 [](const CheckContext& c, Rng& rng, std::int64_t) {
                   json inst = base_instance("interpolation_scan", c);
                   const auto z = sample_ensemble(c.dim, 2 + rng.index(3), kSpectralFloor, rng);
                   inst["z"] = to_json_value(z);
                   inst["t"] = to_json_value(detail::coupled_partner(z, rng));
                   inst["grid"] = uniform_grid(11);
                   return inst;
                 },
                 [](const json& inst) {
                   return interpolation_derivative_scan(detail::phi_of(inst), ensemble_from_json(inst.at("z")),
                                                        ensemble_from_json(inst.at("t")),
                                                        inst.at("grid").get<std::vector<double>>(),
                                                        detail::variant_of(inst), detail::tol_of(inst));
                 }});

  const std::vector<std::pair<std::string, FunctionalKind>> items{{"char_b", FunctionalKind::bregman_A},
                                                                  {"char_c", FunctionalKind::map_B},
                                                                  {"char_d", FunctionalKind::map_C},
                                                                  {"char_f", FunctionalKind::gap_F_t}};
  for (const auto& [name, kind] : items) {
    reg.push_back({name, true, both, 1e-10, true, tagged,
                   [name = name, kind = kind](const CheckContext& c, Rng& rng, std::int64_t) {
                     return functional_instance(name, kind, c, rng);
                   },
                   evaluate_functional_instance});
  }

  reg.push_back({"char_g", true, both, 1e-10, true, tagged,
                 [](const CheckContext& c, Rng& rng, std::int64_t) {
                   json inst = base_instance("char_g", c);
                   inst["product"] = to_json_value(sample_product(c.dim, detail::random_supports(2, rng), kSpectralFloor, rng));
                   return inst;
                 },
                 [](const json& inst) {
                   return conditional_jensen_check(detail::phi_of(inst), product_from_json(inst.at("product")),
                                                   detail::variant_of(inst), detail::tol_of(inst));
                 }});

  reg.push_back({"char_h", true, both, 1e-10, true, tagged,
                 [](const CheckContext& c, Rng& rng, std::int64_t) {
                   json inst = base_instance("char_h", c);
                   const auto z1 = sample_ensemble(c.dim, 2 + rng.index(3), kSpectralFloor, rng);
                   inst["z1"] = to_json_value(z1);
                   inst["z2"] = to_json_value(detail::coupled_partner(z1, rng));
                   inst["lambdas"] = trial_lambdas(default_lambdas(), rng, 2);
                   return inst;
                 },
                 [](const json& inst) {
                   const auto f = detail::phi_of(inst);
                   const auto z1 = ensemble_from_json(inst.at("z1")), z2 = ensemble_from_json(inst.at("z2"));
                   return worst_over_lambdas(
                       [&](double l) {
                         auto r = entropy_convexity_check(f, z1, z2, l, detail::variant_of(inst), detail::tol_of(inst));
                         r.witness = l;
                         return r;
                       },
                       inst.at("lambdas").get<std::vector<double>>());
                 }});

  reg.push_back({"condition_a", true, trace_only, 1e-10, true,
                 [](const ScalarFunction& f, V) { return f.has_tag(ClassTag::C2); },
                 [](const CheckContext& c, Rng& rng, std::int64_t) {
                   json inst = base_instance("condition_a", c);
                   inst["a1"] = to_json_value(sample_psd(c.dim, kSpectralFloor, rng));
                   inst["a2"] = to_json_value(sample_psd(c.dim, kSpectralFloor, rng));
                   inst["h"] = to_json_value(sample_hermitian(c.dim, rng));
                   inst["lambdas"] = trial_lambdas(default_lambdas(), rng, 2);
                   return inst;
                 },
                 [](const json& inst) {
                   const auto f = detail::phi_of(inst);
                   const auto a1 = detail::mat(inst, "a1"), a2 = detail::mat(inst, "a2"), h = detail::mat(inst, "h");
                   return worst_over_lambdas(
                       [&](double l) {
                         auto r = condition_a_instance(f, a1, a2, h, l, detail::tol_of(inst));
                         r.witness = l;
                         return r;
                       },
                       inst.at("lambdas").get<std::vector<double>>());
                 }});

  reg.push_back({"condition_e", true, trace_only, 1e-4, true,
                 [](const ScalarFunction& f, V) { return f.has_tag(ClassTag::C2); },
                 [](const CheckContext& c, Rng& rng, std::int64_t) {
                   json inst = base_instance("condition_e", c);
                   inst["a"] = to_json_value(sample_with_spectrum_in(c.dim, kConditionELo, kConditionEHi, rng));
                   inst["h"] = to_json_value(sample_hermitian(c.dim, rng));
                   inst["k"] = to_json_value(sample_hermitian(c.dim, rng));
                   // At d = 1 the exact path reproduces the scalar reduction to roundoff.
                   inst["method"] = c.dim == 1 ? "divided_difference" : "hybrid";
                   return inst;
                 },
                 [](const json& inst) {
                   return condition_e_check(detail::phi_of(inst), detail::mat(inst, "a"), detail::mat(inst, "h"),
                                            detail::mat(inst, "k"), detail::tol_of(inst),
                                            detail::third_order_method_of(inst));
                 }});

  auto channel_sample = [](const std::string& check) {
    return [check](const CheckContext& c, Rng& rng, std::int64_t trial) {
      json inst = base_instance(check, c);
      inst["channel"] = to_json_value(random_unital_channel(c.dim, 1 + static_cast<std::size_t>(trial % 3), rng));
      inst["ensemble"] = to_json_value(sample_ensemble(c.dim, 2 + rng.index(3), kSpectralFloor, rng));
      return inst;
    };
  };

  // Operator variant compares N(H(Z)) with H(N(Z)); see check_covariant_monotonicity.
  reg.push_back({"monotonicity", true, both, 1e-10, true, tagged, channel_sample("monotonicity"),
                 [](const json& inst) {
                   const auto f = detail::phi_of(inst);
                   const auto n = channel_from_json(inst.at("channel"));
                   const auto e = ensemble_from_json(inst.at("ensemble"));
                   if (detail::variant_of(inst) == Variant::trace)
                     return check_monotonicity(f, n, e, Variant::trace, true, detail::tol_of(inst));
                   return check_covariant_monotonicity(f, n, e, true, detail::tol_of(inst));
                 }});

  // H(N(Z)) <= H(Z) taken literally in the Loewner order. Not in any class:
  // unitary channels already break it.
  reg.push_back({"monotonicity_literal", true, operator_only, 1e-10, false,
                 [](const ScalarFunction&, V) { return false; }, channel_sample("monotonicity_literal"),
                 [](const json& inst) {
                   return check_monotonicity(detail::phi_of(inst), channel_from_json(inst.at("channel")),
                                             ensemble_from_json(inst.at("ensemble")), Variant::operator_valued, true,
                                             detail::tol_of(inst));
                 }});

  reg.push_back({"jensen", true, both, 1e-10, true,
                 [](const ScalarFunction& f, V v) {
                   return v == V::trace ? !f.has_tag(ClassTag::OutsideClass) : f.has_tag(ClassTag::OperatorConvex);
                 },
                 [](const CheckContext& c, Rng& rng, std::int64_t trial) {
                   json inst = base_instance("jensen", c);
                   inst["channel"] = to_json_value(random_unital_channel(c.dim, 1 + static_cast<std::size_t>(trial % 3), rng));
                   inst["a"] = to_json_value(sample_psd(c.dim, kSpectralFloor, rng));
                   return inst;
                 },
                 [](const json& inst) {
                   return operator_jensen_check(detail::phi_of(inst), channel_from_json(inst.at("channel")),
                                                detail::mat(inst, "a"), detail::variant_of(inst), detail::tol_of(inst));
                 }});

  // Margin is -max_k err_k / cap_k, so tolerance 1 means every order within its cap.
  reg.push_back({"frechet_oracle", true, trace_only, 1.0, true, [](const ScalarFunction&, V) { return true; },
                 [](const CheckContext& c, Rng& rng, std::int64_t) {
                   json inst = base_instance("frechet_oracle", c);
                   inst["a"] = to_json_value(sample_with_spectrum_in(c.dim, 0.5, 4.0, rng));
                   inst["x"] = to_json_value(sample_hermitian(c.dim, rng));
                   inst["method"] = c.dim == 1 ? "divided_difference" : "hybrid";
                   return inst;
                 },
                 [](const json& inst) {
                   const auto e = frechet_oracle_errors(detail::phi_of(inst), detail::mat(inst, "a"), detail::mat(inst, "x"),
                                                        detail::third_order_method_of(inst));
                   double worst = 0.0;
                   for (std::size_t k = 0; k < 3; ++k) worst = std::max(worst, e.rel[k] / kOracleTolerances[k]);
                   auto r = make_report("frechet_oracle", -worst, 1.0, detail::tol_of(inst));
                   r.note = "relative errors " + std::to_string(e.rel[0]) + ", " + std::to_string(e.rel[1]) + ", " +
                            std::to_string(e.rel[2]);
                   return r;
                 }});

  reg.push_back({"trace_duality", true, trace_only, 1e-8, true, [](const ScalarFunction&, V) { return true; },
                 [](const CheckContext& c, Rng& rng, std::int64_t) {
                   json inst = base_instance("trace_duality", c);
                   inst["a"] = to_json_value(sample_with_spectrum_in(c.dim, 0.5, 4.0, rng));
                   inst["x"] = to_json_value(sample_hermitian(c.dim, rng));
                   inst["y"] = to_json_value(sample_hermitian(c.dim, rng));
                   return inst;
                 },
                 [](const json& inst) {
                   const auto f = detail::phi_of(inst);
                   const auto a = detail::mat(inst, "a"), x = detail::mat(inst, "x"), y = detail::mat(inst, "y");
                   const double lhs = trace(frechet_d2(f, a, x, y));
                   const double rhs = hs_inner(x.matrix(), frechet_d1(f.derivative_view(), a, y).matrix()).real();
                   const double floor = 1e-12 * x.frobenius() * y.frobenius();
                   return make_report("trace_duality", -std::abs(lhs - rhs), std::max(std::abs(lhs), floor),
                                      detail::tol_of(inst));
                 }});
  return reg;
}

inline const CheckSpec* find_check(const std::vector<CheckSpec>& reg, const std::string& name) {
  for (const auto& c : reg)
    if (c.name == name) return &c;
  return nullptr;
}

/// Re-evaluates a witness instance on its own.
inline VerificationReport replay_witness(const json& instance) {
  static const auto reg = check_registry();
  const auto* spec = find_check(reg, instance.at("check").get<std::string>());
  if (!spec) throw std::invalid_argument("replay_witness: unknown check");
  auto r = spec->evaluate(instance);
  r.witness = instance;
  return r;
}

// ---------------------------------------------------------------------------
// Configuration and suite report
// ---------------------------------------------------------------------------

struct RunConfig {
  std::uint64_t seed = 20240601;
  std::vector<int> dims{2, 3, 4};
  std::int64_t trials = 200;
  std::map<std::string, double> tolerances;
  std::vector<std::string> phi_list{"square", "xlogx"};
  std::string variant = "both";
  std::string output_path;
  /// Empty: every default-enabled check.
  std::vector<std::string> checks;
  bool allow_outside_class = false;
  /// 0: PHI_LAB_THREADS, else hardware concurrency.
  unsigned threads = 0;
};

/// Configuration echo; thread count and output path are left out so serial
/// and parallel runs produce identical reports.
inline json config_echo(const RunConfig& c) {
  return {{"seed", c.seed},       {"dims", c.dims},       {"trials", c.trials},
          {"tolerances", c.tolerances}, {"phi_list", c.phi_list}, {"variant", c.variant},
          {"checks", c.checks},   {"allow_outside_class", c.allow_outside_class}};
}

inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  c.seed = j.value("seed", c.seed);
  c.dims = j.value("dims", c.dims);
  c.trials = j.value("trials", c.trials);
  c.tolerances = j.value("tolerances", c.tolerances);
  c.phi_list = j.value("phi_list", c.phi_list);
  c.variant = j.value("variant", c.variant);
  c.output_path = j.value("output_path", c.output_path);
  c.checks = j.value("checks", c.checks);
  c.allow_outside_class = j.value("allow_outside_class", c.allow_outside_class);
  c.threads = j.value("threads", c.threads);
  return c;
}

/// Throws ConfigError before any computation.
inline void validate_config(const RunConfig& c) {
  if (c.phi_list.empty()) throw ConfigError("config: phi_list is empty");
  if (c.trials < 1) throw ConfigError("config: trials must be >= 1");
  if (c.dims.empty()) throw ConfigError("config: dims is empty");
  for (int d : c.dims)
    if (d < 1 || d > 16) throw ConfigError("config: dimension " + std::to_string(d) + " outside [1, 16]");
  if (c.variant != "trace" && c.variant != "operator" && c.variant != "both")
    throw ConfigError("config: variant must be trace, operator or both");
  for (const auto& name : c.phi_list) {
    try {
      builtin(name, true);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  const auto reg = check_registry();
  for (const auto& name : c.checks)
    if (!find_check(reg, name)) throw ConfigError("config: unknown check '" + name + "'");
  for (const auto& [name, tol] : c.tolerances) {
    if (!find_check(reg, name)) throw ConfigError("config: tolerance override for unknown check '" + name + "'");
    if (!(tol >= 0.0)) throw ConfigError("config: tolerance for '" + name + "' must be >= 0");
  }
}

struct SuiteEntry {
  std::string check;
  std::string phi;
  std::string variant;
  int dim = 0;
  bool in_class = true;
  std::string status;  // pass | fail | skip
  VerificationReport report;
  std::int64_t errors = 0;
  std::string first_error;
  double wall_seconds = 0.0;
};

struct SuiteReport {
  json config;
  std::vector<SuiteEntry> entries;
  int pass = 0, fail = 0, skip = 0;
  std::string artifact_version = kArtifactVersion;
  int exit_code = 0;
};

inline void to_json(json& j, const SuiteEntry& e) {
  j = json{{"check", e.check},   {"phi", e.phi},       {"variant", e.variant},         {"dim", e.dim},
           {"in_class", e.in_class}, {"status", e.status}, {"report", e.report},         {"errors", e.errors},
           {"first_error", e.first_error}, {"wall_seconds", e.wall_seconds}};
}

inline void from_json(const json& j, SuiteEntry& e) {
  e.check = j.at("check").get<std::string>();
  e.phi = j.at("phi").get<std::string>();
  e.variant = j.at("variant").get<std::string>();
  e.dim = j.at("dim").get<int>();
  e.in_class = j.at("in_class").get<bool>();
  e.status = j.at("status").get<std::string>();
  e.report = j.at("report").get<VerificationReport>();
  e.errors = j.value("errors", std::int64_t{0});
  e.first_error = j.value("first_error", std::string());
  e.wall_seconds = j.value("wall_seconds", 0.0);
}

inline void to_json(json& j, const SuiteReport& r) {
  j = json{{"artifact_version", r.artifact_version},
           {"config", r.config},
           {"entries", r.entries},
           {"summary", {{"pass", r.pass}, {"fail", r.fail}, {"skip", r.skip}}},
           {"exit_code", r.exit_code}};
}

inline void from_json(const json& j, SuiteReport& r) {
  r.artifact_version = j.at("artifact_version").get<std::string>();
  r.config = j.at("config");
  r.entries = j.at("entries").get<std::vector<SuiteEntry>>();
  r.pass = j.at("summary").at("pass").get<int>();
  r.fail = j.at("summary").at("fail").get<int>();
  r.skip = j.at("summary").at("skip").get<int>();
  r.exit_code = j.at("exit_code").get<int>();
}

/// Report JSON with wall-clock fields removed.
inline json strip_timing(json j) {
  if (j.contains("entries"))
    for (auto& e : j["entries"]) e.erase("wall_seconds");
  return j;
}

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("PHI_LAB_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs `count` independent jobs on at most `threads` workers; job k writes
/// only slot k, so results do not depend on scheduling.
template <class Result>
std::vector<Result> parallel_map(std::int64_t count, unsigned threads, const std::function<Result(std::int64_t)>& job) {
  std::vector<Result> out(static_cast<std::size_t>(count));
  const unsigned workers = static_cast<unsigned>(std::min<std::int64_t>(std::max(1u, threads), count));
  if (workers <= 1) {
    for (std::int64_t k = 0; k < count; ++k) out[static_cast<std::size_t>(k)] = job(k);
    return out;
  }
  std::atomic<std::int64_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::int64_t k = next++; k < count; k = next++) {
        try {
          out[static_cast<std::size_t>(k)] = job(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

struct TrialOutcome {
  VerificationReport report;
  std::optional<std::string> error;
};

/// Runs one (check, phi, variant, dim) cell for `trials` trials.
inline SuiteEntry run_cell(const CheckSpec& spec, const ScalarFunction& phi, Variant v, int dim, std::int64_t trials,
                           std::uint64_t seed, double tolerance, unsigned threads) {
  SuiteEntry entry;
  entry.check = spec.name;
  entry.phi = spec.phi_dependent ? phi.name : "-";
  entry.variant = to_string(v);
  entry.dim = dim;
  const CheckContext ctx{phi, v, dim, tolerance};
  const std::string key = spec.name + "|" + entry.phi + "|" + entry.variant + "|" + std::to_string(dim);
  const auto start = std::chrono::steady_clock::now();
  const auto outcomes = parallel_map<TrialOutcome>(trials, threads, [&](std::int64_t k) {
    TrialOutcome o;
    try {
      Rng rng(seed, key, static_cast<std::uint64_t>(k));
      json inst = spec.sample(ctx, rng, k);
      inst["trial"] = k;
      o.report = spec.evaluate(inst);
      o.report.witness = std::move(inst);
    } catch (const std::exception& e) {
      o.error = e.what();
    }
    return o;
  });
  VerificationReport acc;
  acc.check_name = spec.name;
  acc.tolerance = tolerance;
  acc.seed = seed;
  for (const auto& o : outcomes) {
    if (o.error) {
      if (entry.errors++ == 0) entry.first_error = *o.error;
      continue;
    }
    VerificationReport t = o.report;
    t.trials = 1;
    t.violations = t.holds ? 0 : 1;
    absorb(acc, t);
  }
  acc.check_name = spec.name + "[" + entry.phi + "," + entry.variant + ",d=" + std::to_string(dim) + "]";
  acc.note = "sampled over " + std::to_string(acc.trials) + " trials: corroboration, not proof";
  entry.report = acc;
  entry.status = (acc.holds && entry.errors == 0 && acc.trials > 0) ? "pass" : "fail";
  entry.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return entry;
}

inline SuiteReport run_suite(const RunConfig& config) {
  validate_config(config);
  const auto reg = check_registry();
  std::vector<const CheckSpec*> selected;
  if (config.checks.empty()) {
    for (const auto& s : reg)
      if (s.default_enabled) selected.push_back(&s);
  } else {
    for (const auto& name : config.checks) selected.push_back(find_check(reg, name));
  }
  std::vector<ScalarFunction> phis;
  for (const auto& name : config.phi_list) phis.push_back(builtin(name, true));
  const unsigned threads = resolve_threads(config.threads);

  SuiteReport out;
  out.config = config_echo(config);
  for (const CheckSpec* spec : selected) {
    const double tol = config.tolerances.count(spec->name) ? config.tolerances.at(spec->name) : spec->default_tolerance;
    const std::vector<ScalarFunction> cell_phis = spec->phi_dependent ? phis : std::vector<ScalarFunction>{square()};
    for (const auto& phi : cell_phis) {
      for (Variant v : spec->variants) {
        if (config.variant == "trace" && v != Variant::trace) continue;
        if (config.variant == "operator" && v != Variant::operator_valued) continue;
        for (int d : config.dims) {
          const bool in_class = spec->in_class(phi, v);
          if (!in_class && !config.allow_outside_class && spec->default_enabled) {
            SuiteEntry skipped;
            skipped.check = spec->name;
            skipped.phi = spec->phi_dependent ? phi.name : "-";
            skipped.variant = to_string(v);
            skipped.dim = d;
            skipped.in_class = false;
            skipped.status = "skip";
            skipped.report.check_name = spec->name;
            skipped.report.tolerance = tol;
            skipped.report.seed = config.seed;
            skipped.report.note = phi.name + " outside the class this check needs";
            out.entries.push_back(std::move(skipped));
            ++out.skip;
            continue;
          }
          SuiteEntry e = run_cell(*spec, phi, v, d, config.trials, config.seed, tol, threads);
          e.in_class = in_class;
          if (e.status == "pass") {
            ++out.pass;
          } else {
            ++out.fail;
            if (e.in_class) out.exit_code = 1;
          }
          out.entries.push_back(std::move(e));
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Counterexample search
// ---------------------------------------------------------------------------

namespace detail {

/// Adds delta to one Hermitian-symmetric coordinate of a matrix JSON value.
inline void perturb_matrix(json& m, Rng& rng, double scale) {
  CMatrix a = matrix_from_json(m);
  const Eigen::Index d = a.rows();
  const auto i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(d)));
  const auto j = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(d)));
  const double re = scale * rng.normal();
  if (i == j) {
    a(i, i) += re;
  } else {
    const cplx delta(re, scale * rng.normal());
    a(i, j) += delta;
    a(j, i) += std::conj(delta);
  }
  m = matrix_to_json(HermitianMatrix::symmetrized(a).matrix());
}

inline void collect_matrices(json& j, std::vector<json*>& out) {
  if (j.is_object()) {
    if (j.contains("re") && j.contains("dim")) {
      out.push_back(&j);
      return;
    }
    for (auto& [k, v] : j.items()) collect_matrices(v, out);
  } else if (j.is_array()) {
    for (auto& v : j) collect_matrices(v, out);
  }
}

}  // namespace detail

/// Random sampling for the first half of the budget, then coordinate
/// perturbation of the best instance found. Success means a replayable
/// witness with margin below -10 * tolerance.
inline VerificationReport counterexample_search(const ScalarFunction& f, const std::string& check_name,
                                                std::int64_t budget, std::uint64_t seed, int dim = 1,
                                                Variant variant = Variant::trace, double tolerance = -1.0) {
  const auto reg = check_registry();
  const CheckSpec* spec = find_check(reg, check_name);
  if (!spec) throw std::invalid_argument("counterexample_search: unknown check '" + check_name + "'");
  if (std::find(spec->variants.begin(), spec->variants.end(), variant) == spec->variants.end()) {
    throw std::invalid_argument("counterexample_search: " + check_name + " has no " + to_string(variant) + " variant");
  }
  if (budget < 1) throw std::invalid_argument("counterexample_search: budget must be >= 1");
  const double tol = tolerance >= 0.0 ? tolerance : spec->default_tolerance;
  const CheckContext ctx{f, variant, dim, tol};
  const std::string key = "search|" + check_name + "|" + f.name + "|" + to_string(variant) + "|" + std::to_string(dim);

  std::optional<json> best_inst;
  VerificationReport best;
  std::int64_t used = 0;
  for (std::int64_t k = 0; k < budget; ++k) {
    ++used;
    Rng rng(seed, key, static_cast<std::uint64_t>(k));
    json inst;
    if (!best_inst || k < budget / 2) {
      inst = spec->sample(ctx, rng, k);
    } else {
      inst = *best_inst;
      std::vector<json*> mats;
      detail::collect_matrices(inst, mats);
      if (mats.empty()) continue;
      const double scale = 0.3 * std::pow(0.5, static_cast<double>(rng.index(8)));
      detail::perturb_matrix(*mats[rng.index(mats.size())], rng, scale);
    }
    inst["trial"] = k;
    VerificationReport r;
    try {
      r = spec->evaluate(inst);
    } catch (const std::exception&) {
      continue;  // perturbation left the domain
    }
    if (!best_inst || r.margin < best.margin) {
      best = r;
      best_inst = inst;
    }
    if (best.margin < -10.0 * tol) break;
  }
  VerificationReport out = best;
  out.check_name = "search:" + check_name + "[" + f.name + "," + to_string(variant) + ",d=" + std::to_string(dim) + "]";
  out.tolerance = tol;
  out.trials = used;
  out.seed = seed;
  const bool found = best_inst && best.margin < -10.0 * tol;
  out.holds = !found;
  out.violations = found ? 1 : 0;
  if (best_inst) out.witness = *best_inst;
  out.note = found ? "counterexample found; witness replays standalone"
                   : "budget exhausted without a violation below -10*tolerance (not a proof)";
  if (!best_inst) out.margin = out.raw_margin = std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace phient
