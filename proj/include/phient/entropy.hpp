#pragma once

// Phi-entropies of finitely supported random matrices (trace-valued and
// operator-valued), conditional entropies on product ensembles, variance and
// Efron-Stein quantities, subadditivity and the dual representation.

#include "phient/ensemble.hpp"
#include "phient/frechet.hpp"
#include "phient/phi_catalog.hpp"
#include "phient/report.hpp"
#include "phient/spectral.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace phient {

enum class Variant { trace, operator_valued };

inline std::string to_string(Variant v) { return v == Variant::trace ? "trace" : "operator"; }

inline Variant parse_variant(const std::string& s) {
  if (s == "trace") return Variant::trace;
  if (s == "operator") return Variant::operator_valued;
  throw std::invalid_argument("unknown variant '" + s + "' (expected trace or operator)");
}

using EntropyValue = std::variant<double, HermitianMatrix>;

/// Thrown when a class-gated check is called with a function outside the
/// class and no override.
class ClassGateError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_class(const ScalarFunction& f, ClassTag tag, bool allow_override, const std::string& check) {
  if (f.has_tag(tag) || allow_override) return;
  throw ClassGateError(check + ": " + f.name + " is not tagged " + to_string(tag) + "; pass the override to run it");
}

/// Class each variant of the subadditivity and monotonicity checks needs.
inline ClassTag required_class(Variant v) { return v == Variant::trace ? ClassTag::C2 : ClassTag::C3; }

// ---------------------------------------------------------------------------
// Entropies
// ---------------------------------------------------------------------------

inline HermitianMatrix expectation(const MatrixEnsemble& e) {
  CMatrix acc = CMatrix::Zero(e.dim, e.dim);
  for (std::size_t i = 0; i < e.size(); ++i) acc += e.weights[i] * e.atoms[i].matrix();
  return HermitianMatrix::symmetrized(acc);
}

/// E Phi(Z) - Phi(E Z).
inline HermitianMatrix operator_phi_entropy(const ScalarFunction& f, const MatrixEnsemble& e) {
  CMatrix acc = CMatrix::Zero(e.dim, e.dim);
  for (std::size_t i = 0; i < e.size(); ++i) acc += e.weights[i] * apply_scalar_function(f, e.atoms[i]).matrix();
  return HermitianMatrix::symmetrized(acc - apply_scalar_function(f, expectation(e)).matrix());
}

/// Normalised trace of the operator-valued entropy.
inline double matrix_phi_entropy(const ScalarFunction& f, const MatrixEnsemble& e) {
  return normalized_trace(operator_phi_entropy(f, e));
}

inline EntropyValue phi_entropy(const ScalarFunction& f, const MatrixEnsemble& e, Variant v) {
  if (v == Variant::trace) return matrix_phi_entropy(f, e);
  return operator_phi_entropy(f, e);
}

/// E A^2 - (E A)^2.
inline HermitianMatrix variance(const MatrixEnsemble& e) {
  CMatrix second = CMatrix::Zero(e.dim, e.dim);
  for (std::size_t i = 0; i < e.size(); ++i) second += e.weights[i] * (e.atoms[i].matrix() * e.atoms[i].matrix());
  const CMatrix mean = expectation(e).matrix();
  return HermitianMatrix::symmetrized(second - mean * mean);
}

enum class IntegrateOver {
  /// Average over X_i, holding X_{-i} fixed.
  factor_i,
  /// Average over X_{-i}, holding X_i fixed.
  complement,
};

/// Phi-entropy of a slice of a product ensemble. With `factor_i`, `fixed`
/// lists the n-1 outcomes of the other factors (factor order, i skipped);
/// with `complement`, `fixed` holds the single outcome of X_i. Indices are
/// 0-based.
inline EntropyValue conditional_entropy(const ScalarFunction& f, const ProductEnsemble& p, std::size_t i,
                                        const std::vector<std::size_t>& fixed, Variant v,
                                        IntegrateOver over = IntegrateOver::factor_i) {
  if (over == IntegrateOver::factor_i) return phi_entropy(f, p.slice(i, fixed), v);
  if (fixed.size() != 1) throw std::invalid_argument("conditional_entropy: complement slice needs one fixed outcome");
  return phi_entropy(f, p.complement_slice(i, fixed[0]), v);
}

/// E_{X_{-i}} H^{(i)}(Z) as a matrix (operator variant) or its normalised trace.
inline HermitianMatrix expected_conditional_operator_entropy(const ScalarFunction& f, const ProductEnsemble& p,
                                                             std::size_t i) {
  CMatrix acc = CMatrix::Zero(p.dim(), p.dim());
  for (const auto& [others, w] : p.complement_outcomes(i)) acc += w * operator_phi_entropy(f, p.slice(i, others)).matrix();
  return HermitianMatrix::symmetrized(acc);
}

inline json entropy_witness(const ScalarFunction& f, Variant v, const ProductEnsemble& p) {
  return {{"phi", f.name}, {"variant", to_string(v)}, {"product", to_json_value(p)}};
}

/// Margin of sum_i E H^{(i)}(Z) - H(Z): a scalar (trace) or the minimum
/// eigenvalue of the difference (operator).
inline VerificationReport check_subadditivity(const ScalarFunction& f, const ProductEnsemble& p, Variant v,
                                              bool allow_outside_class = false, double tolerance = 1e-10) {
  require_class(f, required_class(v), allow_outside_class, "check_subadditivity");
  const MatrixEnsemble joint = p.joint();
  const HermitianMatrix h = operator_phi_entropy(f, joint);
  CMatrix sum = CMatrix::Zero(p.dim(), p.dim());
  for (std::size_t i = 0; i < p.factor_count(); ++i) sum += expected_conditional_operator_entropy(f, p, i).matrix();
  const HermitianMatrix rhs = HermitianMatrix::symmetrized(sum);
  VerificationReport r;
  if (v == Variant::trace) {
    const double a = normalized_trace(rhs), b = normalized_trace(h);
    r = make_report("subadditivity[" + f.name + ",trace]", a - b, 1.0 + std::abs(a) + std::abs(b), tolerance);
  } else {
    const double gap = min_eigenvalue(rhs - h);
    r = make_report("subadditivity[" + f.name + ",operator]", gap, 1.0 + spectral_norm(rhs) + spectral_norm(h),
                    tolerance);
  }
  r.witness = entropy_witness(f, v, p);
  return r;
}

// ---------------------------------------------------------------------------
// Efron-Stein
// ---------------------------------------------------------------------------

/// 1/2 sum_i E (Z - Z^{(i)})^2 where Z^{(i)} resamples factor i independently;
/// exact double sums over each factor's support.
inline HermitianMatrix efron_stein_quantity(const ProductEnsemble& p) {
  const Eigen::Index d = p.dim();
  CMatrix acc = CMatrix::Zero(d, d);
  for (std::size_t f = 0; f < p.outcome_count(); ++f) {
    const auto o = p.outcome(f);
    const double w = p.weight(o);
    const CMatrix& z = p.images()[f].matrix();
    for (std::size_t i = 0; i < p.factor_count(); ++i) {
      auto alt = o;
      for (std::size_t x = 0; x < p.support_size(i); ++x) {
        if (x == o[i]) continue;
        alt[i] = x;
        const CMatrix diff = z - p.at(alt).matrix();
        acc += (0.5 * w * p.factor(i)[x]) * (diff * diff);
      }
    }
  }
  return HermitianMatrix::symmetrized(acc);
}

/// Var(Z) <= E(Z) in the Loewner order.
inline VerificationReport check_operator_efron_stein(const ProductEnsemble& p, double tolerance = 1e-10) {
  const HermitianMatrix es = efron_stein_quantity(p);
  const HermitianMatrix var = variance(p.joint());
  auto r = make_report("operator_efron_stein", min_eigenvalue(es - var), 1.0 + spectral_norm(es) + spectral_norm(var),
                       tolerance);
  r.witness = {{"product", to_json_value(p)}};
  return r;
}

/// ||Var Z||_p^p <= ||E(Z)||_p^p for natural p.
inline VerificationReport check_polynomial_efron_stein(const ProductEnsemble& p, int power, double tolerance = 1e-10) {
  if (power < 1) throw std::invalid_argument("check_polynomial_efron_stein: p must be a natural number >= 1");
  const double rhs = std::pow(schatten_norm(efron_stein_quantity(p), power), power);
  const double lhs = std::pow(schatten_norm(variance(p.joint()), power), power);
  auto r = make_report("polynomial_efron_stein[p=" + std::to_string(power) + "]", rhs - lhs, 1.0 + rhs + lhs, tolerance);
  r.witness = {{"product", to_json_value(p)}, {"p", power}};
  return r;
}

// ---------------------------------------------------------------------------
// Dual representation
// ---------------------------------------------------------------------------

inline void require_coupled(const MatrixEnsemble& z, const MatrixEnsemble& t, const char* where) {
  if (z.size() != t.size() || z.dim != t.dim) throw std::invalid_argument(std::string(where) + ": Z and T are not coupled");
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z.weights[i] != t.weights[i]) throw std::invalid_argument(std::string(where) + ": Z and T weights differ");
  }
}

/// E[D Phi[T](Z - T) - D Phi[E T](Z - T) + Phi(T) - Phi(E T)] as a matrix.
inline HermitianMatrix dual_representation_value(const ScalarFunction& f, const MatrixEnsemble& z,
                                                 const MatrixEnsemble& t) {
  require_coupled(z, t, "dual_representation");
  for (const auto& a : t.atoms) {
    const double lo = min_eigenvalue(a);
    if (!(lo > 0.0)) {
      throw std::domain_error("dual_representation: T atom is not positive definite (min eigenvalue " +
                              std::to_string(lo) + ")");
    }
  }
  const HermitianMatrix mean_t = expectation(t);
  const SpectralDecomposition sd_mean = spectral_decompose(mean_t);
  const CMatrix phi_mean = apply_scalar_function(f, sd_mean).matrix();
  CMatrix acc = CMatrix::Zero(z.dim, z.dim);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const CMatrix diff = z.atoms[i].matrix() - t.atoms[i].matrix();
    const SpectralDecomposition sd = spectral_decompose(t.atoms[i]);
    const CMatrix term = frechet_d1(f, sd, diff).matrix() - frechet_d1(f, sd_mean, diff).matrix() +
                         apply_scalar_function(f, sd).matrix() - phi_mean;
    acc += t.weights[i] * term;
  }
  return HermitianMatrix::symmetrized(acc);
}

inline json coupled_witness(const ScalarFunction& f, Variant v, const MatrixEnsemble& z, const MatrixEnsemble& t) {
  return {{"phi", f.name}, {"variant", to_string(v)}, {"z", to_json_value(z)}, {"t", to_json_value(t)}};
}

/// Margin H(Z) - value(T); zero when T = Z.
inline VerificationReport dual_representation_gap(const ScalarFunction& f, const MatrixEnsemble& z,
                                                  const MatrixEnsemble& t, Variant v, double tolerance = 1e-9) {
  const HermitianMatrix value = dual_representation_value(f, z, t);
  const HermitianMatrix h = operator_phi_entropy(f, z);
  VerificationReport r;
  if (v == Variant::trace) {
    const double a = normalized_trace(h), b = normalized_trace(value);
    r = make_report("dual_representation[" + f.name + ",trace]", a - b, 1.0 + std::abs(a) + std::abs(b), tolerance);
  } else {
    r = make_report("dual_representation[" + f.name + ",operator]", min_eigenvalue(h - value),
                    1.0 + spectral_norm(h) + spectral_norm(value), tolerance);
  }
  r.witness = coupled_witness(f, v, z, t);
  return r;
}

/// T_s = (1 - s) Z + s T atomwise.
inline MatrixEnsemble interpolate(const MatrixEnsemble& z, const MatrixEnsemble& t, double s) {
  std::vector<HermitianMatrix> atoms;
  for (std::size_t i = 0; i < z.size(); ++i) atoms.push_back(z.atoms[i] * (1.0 - s) + t.atoms[i] * s);
  return {z.dim, z.weights, std::move(atoms)};
}

/// F(s) = value(T_s) must be nonincreasing along the grid (Loewner order for
/// the operator variant). Margin is the worst step F(s_k) - F(s_{k+1}).
inline VerificationReport interpolation_derivative_scan(const ScalarFunction& f, const MatrixEnsemble& z,
                                                        const MatrixEnsemble& t, const std::vector<double>& grid,
                                                        Variant v, double tolerance = 1e-9) {
  require_coupled(z, t, "interpolation_derivative_scan");
  if (grid.size() < 2) throw std::invalid_argument("interpolation_derivative_scan: grid needs two points");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] >= 0.0 && grid[k] <= 1.0)) throw std::invalid_argument("interpolation_derivative_scan: grid outside [0, 1]");
    if (k && !(grid[k] > grid[k - 1])) throw std::invalid_argument("interpolation_derivative_scan: grid not increasing");
  }
  std::vector<HermitianMatrix> values;
  for (double s : grid) values.push_back(dual_representation_value(f, z, interpolate(z, t, s)));
  double worst = std::numeric_limits<double>::infinity();
  double scale = 1.0;
  std::size_t at = 0;
  for (std::size_t k = 0; k + 1 < values.size(); ++k) {
    const HermitianMatrix step = values[k] - values[k + 1];
    const double m = v == Variant::trace ? normalized_trace(step) : min_eigenvalue(step);
    if (m < worst) {
      worst = m;
      at = k;
    }
    scale = std::max(scale, 1.0 + spectral_norm(values[k]));
  }
  scale = std::max(scale, 1.0 + spectral_norm(values.back()));
  auto r = make_report("interpolation_scan[" + f.name + "," + to_string(v) + "]", worst, scale, tolerance);
  r.witness = coupled_witness(f, v, z, t);
  r.witness["grid"] = grid;
  r.witness["worst_step"] = at;
  return r;
}

inline std::vector<double> uniform_grid(std::size_t points) {
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k) g[k] = static_cast<double>(k) / static_cast<double>(points - 1);
  return g;
}

}  // namespace phient
