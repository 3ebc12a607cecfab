#pragma once

// Sampled certification of the convexity characterisations of the entropy
// classes: the functionals A, B, C and F_t, conditions (a) and (e), the
// integral and Taylor relations between them, the convexity lemma, the
// conditional Jensen inequality, and convexity of Z -> H(Z).

#include "phient/ensemble.hpp"
#include "phient/entropy.hpp"
#include "phient/frechet.hpp"
#include "phient/phi_catalog.hpp"
#include "phient/report.hpp"
#include "phient/sampling.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace phient {

enum class FunctionalKind { bregman_A, map_B, map_C, gap_F_t };

inline std::string to_string(FunctionalKind k) {
  switch (k) {
    case FunctionalKind::bregman_A: return "bregman_A";
    case FunctionalKind::map_B: return "map_B";
    case FunctionalKind::map_C: return "map_C";
    case FunctionalKind::gap_F_t: return "gap_F_t";
  }
  return "?";
}

struct BivariateFunctional {
  FunctionalKind kind;
  ScalarFunction phi;
  std::optional<double> t;
  Variant variant = Variant::trace;

  BivariateFunctional(FunctionalKind k, ScalarFunction f, Variant v, std::optional<double> t_ = std::nullopt)
      : kind(k), phi(std::move(f)), t(t_), variant(v) {
    if ((kind == FunctionalKind::gap_F_t) != t.has_value()) {
      throw std::invalid_argument("BivariateFunctional: t must be given exactly for gap_F_t");
    }
    if (t && !(*t >= 0.0 && *t <= 1.0)) throw std::invalid_argument("BivariateFunctional: t outside [0, 1]");
  }

  std::string name() const {
    std::string s = to_string(kind) + "[" + phi.name + "," + to_string(variant);
    if (t) s += ",t=" + std::to_string(*t);
    return s + "]";
  }
};

/// Matrix value of the functional before any trace is taken.
inline HermitianMatrix functional_matrix(const BivariateFunctional& F, const HermitianMatrix& u,
                                         const HermitianMatrix& v) {
  require_same_dim(u, v, "eval_functional");
  const ScalarFunction& f = F.phi;
  switch (F.kind) {
    case FunctionalKind::bregman_A: {
      const auto sd = spectral_decompose(u);
      return apply_scalar_function(f, u + v) - apply_scalar_function(f, sd) - frechet_d1(f, sd, v.matrix());
    }
    case FunctionalKind::map_B:
      return frechet_d1(f, u + v, v) - frechet_d1(f, u, v);
    case FunctionalKind::map_C:
      return frechet_d2(f, u, v, v);
    case FunctionalKind::gap_F_t: {
      const double t = *F.t;
      return apply_scalar_function(f, u) * t + apply_scalar_function(f, v) * (1.0 - t) -
             apply_scalar_function(f, u * t + v * (1.0 - t));
    }
  }
  throw std::logic_error("unreachable");
}

/// Unnormalised trace for the trace variant, the matrix itself otherwise.
inline EntropyValue eval_functional(const BivariateFunctional& F, const HermitianMatrix& u, const HermitianMatrix& v) {
  const HermitianMatrix m = functional_matrix(F, u, v);
  if (F.variant == Variant::trace) return trace(m);
  return m;
}

// ---------------------------------------------------------------------------
// Sampled convexity
// ---------------------------------------------------------------------------

/// Grid used by every sampled convexity check; two random values are added
/// per trial.
inline const std::vector<double>& default_lambdas() {
  static const std::vector<double> g{0.25, 0.5, 0.75};
  return g;
}

/// Draws (u, v) pairs. u must stay in the function's domain.
using PairSampler = std::function<std::pair<HermitianMatrix, HermitianMatrix>(Rng&)>;

/// Slack of a convexity inequality lambda*X1 + (1-lambda)*X2 - X_mix as a
/// normalised margin.
struct Slack {
  double raw;
  double scale;
  double margin() const { return raw / scale; }
};

inline Slack convexity_slack(const HermitianMatrix& m1, const HermitianMatrix& m2, const HermitianMatrix& mix,
                             double lambda, Variant v) {
  const HermitianMatrix gap = m1 * lambda + m2 * (1.0 - lambda) - mix;
  if (v == Variant::trace) {
    const double a = trace(m1), b = trace(m2), c = trace(mix);
    return {trace(gap), 1.0 + std::abs(a) + std::abs(b) + std::abs(c)};
  }
  return {min_eigenvalue(gap), 1.0 + spectral_norm(m1) + spectral_norm(m2) + spectral_norm(mix)};
}

inline std::vector<double> trial_lambdas(const std::vector<double>& grid, Rng& rng, int extra_random) {
  std::vector<double> l = grid;
  for (int i = 0; i < extra_random; ++i) l.push_back(rng.uniform(0.02, 0.98));
  return l;
}

/// One joint-convexity trial on given points; the report's witness replays it.
inline VerificationReport joint_convexity_instance(const BivariateFunctional& F, const HermitianMatrix& u1,
                                                   const HermitianMatrix& v1, const HermitianMatrix& u2,
                                                   const HermitianMatrix& v2, double lambda, double tolerance) {
  const HermitianMatrix m1 = functional_matrix(F, u1, v1);
  const HermitianMatrix m2 = functional_matrix(F, u2, v2);
  const HermitianMatrix mix = functional_matrix(F, u1 * lambda + u2 * (1.0 - lambda), v1 * lambda + v2 * (1.0 - lambda));
  const Slack s = convexity_slack(m1, m2, mix, lambda, F.variant);
  auto r = make_report("joint_convexity[" + F.name() + "]", s.raw, s.scale, tolerance);
  r.witness = {{"u1", to_json_value(u1)}, {"v1", to_json_value(v1)}, {"u2", to_json_value(u2)},
               {"v2", to_json_value(v2)}, {"lambda", lambda}};
  return r;
}

inline VerificationReport joint_convexity_test(const BivariateFunctional& F, const PairSampler& sampler,
                                               std::int64_t trials, std::uint64_t seed,
                                               const std::vector<double>& lambdas = default_lambdas(),
                                               double tolerance = 1e-10) {
  VerificationReport acc;
  acc.check_name = "joint_convexity[" + F.name() + "]";
  acc.tolerance = tolerance;
  acc.seed = seed;
  for (std::int64_t k = 0; k < trials; ++k) {
    Rng rng(seed, acc.check_name, static_cast<std::uint64_t>(k));
    const auto [u1, v1] = sampler(rng);
    const auto [u2, v2] = sampler(rng);
    VerificationReport trial;
    trial.trials = 0;
    for (double lambda : trial_lambdas(lambdas, rng, 2)) {
      auto r = joint_convexity_instance(F, u1, v1, u2, v2, lambda, tolerance);
      r.violations = r.holds ? 0 : 1;
      r.witness["trial"] = k;
      absorb(trial, r);
    }
    trial.trials = 1;
    trial.violations = trial.violations > 0 ? 1 : 0;
    absorb(acc, trial);
  }
  acc.note = "sampled: no proof; " + std::to_string(acc.violations) + " violating trials of " + std::to_string(trials);
  return acc;
}

// ---------------------------------------------------------------------------
// Condition (a): concavity of A -> <h, (D Psi[A])^{-1} h>
// ---------------------------------------------------------------------------

/// <h, (D Psi[A])^{-1}(h)> with Psi = Phi', via the superoperator inverse.
inline double inverse_quadratic_form(const ScalarFunction& f, const HermitianMatrix& a, const HermitianMatrix& h) {
  const ScalarFunction psi = f.derivative_view();
  const SuperOperatorMatrix tinv = superop_inverse(superop_matrix(psi, a));
  return hs_inner(h.matrix(), tinv.apply(h.matrix())).real();
}

struct ConditionASample {
  HermitianMatrix a1, a2, h;
};
using ConditionASampler = std::function<ConditionASample(Rng&)>;

inline VerificationReport condition_a_instance(const ScalarFunction& f, const HermitianMatrix& a1,
                                               const HermitianMatrix& a2, const HermitianMatrix& h, double lambda,
                                               double tolerance) {
  if (f.is_affine()) {
    // Affine Phi is in every class; D Psi vanishes so there is no inverse to take.
    auto r = make_report("condition_a[" + f.name + "]", 0.0, 1.0, tolerance);
    r.note = "affine";
    return r;
  }
  const double q1 = inverse_quadratic_form(f, a1, h);
  const double q2 = inverse_quadratic_form(f, a2, h);
  const double qm = inverse_quadratic_form(f, a1 * lambda + a2 * (1.0 - lambda), h);
  auto r = make_report("condition_a[" + f.name + "]", qm - lambda * q1 - (1.0 - lambda) * q2,
                       1.0 + std::abs(q1) + std::abs(q2) + std::abs(qm), tolerance);
  r.witness = {{"a1", to_json_value(a1)}, {"a2", to_json_value(a2)}, {"h", to_json_value(h)}, {"lambda", lambda}};
  return r;
}

inline VerificationReport condition_a_check(const ScalarFunction& f, const ConditionASampler& sampler,
                                            std::int64_t trials, std::uint64_t seed, double tolerance = 1e-10) {
  VerificationReport acc;
  acc.check_name = "condition_a[" + f.name + "]";
  acc.tolerance = tolerance;
  acc.seed = seed;
  for (std::int64_t k = 0; k < trials; ++k) {
    Rng rng(seed, acc.check_name, static_cast<std::uint64_t>(k));
    const auto s = sampler(rng);
    VerificationReport trial;
    for (double lambda : trial_lambdas(default_lambdas(), rng, 2)) {
      auto r = condition_a_instance(f, s.a1, s.a2, s.h, lambda, tolerance);
      r.witness["trial"] = k;
      absorb(trial, r);
    }
    trial.trials = 1;
    trial.violations = trial.violations > 0 ? 1 : 0;
    absorb(acc, trial);
  }
  acc.note = "sampled: no proof; " + std::to_string(acc.violations) + " violating trials of " + std::to_string(trials);
  return acc;
}

// ---------------------------------------------------------------------------
// Condition (e)
// ---------------------------------------------------------------------------

/// Spectral window on which condition (e) is evaluated.
inline constexpr double kConditionELo = 0.5;
inline constexpr double kConditionEHi = 4.0;

struct ConditionESides {
  double lhs;
  double rhs;
};

/// With T = D Psi[A] and g = T^{-1} h:
///   lhs = Tr[h T^{-1}(D^3 Psi[A](k, k, g))]
///   rhs = 2 Tr[h T^{-1}(D^2 Psi[A](k, T^{-1}(D^2 Psi[A](k, g))))]
inline ConditionESides condition_e_sides(const ScalarFunction& f, const HermitianMatrix& a, const HermitianMatrix& h,
                                         const HermitianMatrix& k, ThirdOrderMethod method) {
  if (f.is_affine()) return {0.0, 0.0};
  require_same_dim(a, h, "condition_e_check");
  require_same_dim(a, k, "condition_e_check");
  const RVector ev = eigenvalues(a);
  if (ev(0) < kConditionELo || ev(ev.size() - 1) > kConditionEHi) {
    throw std::domain_error("condition_e_check: spectrum [" + std::to_string(ev(0)) + ", " +
                            std::to_string(ev(ev.size() - 1)) + "] outside [0.5, 4]");
  }
  const ScalarFunction psi = f.derivative_view();
  const SpectralDecomposition sd = spectral_decompose(a);
  const SuperOperatorMatrix tinv = superop_inverse(superop_matrix(psi, sd));
  const HermitianMatrix g = tinv.apply(h);
  const HermitianMatrix third = frechet_d3(psi, a, k, k, g, method);
  const double lhs = hs_inner(h.matrix(), tinv.apply(third.matrix())).real();
  const HermitianMatrix inner = tinv.apply(frechet_d2(psi, sd, k.matrix(), g.matrix()));
  const HermitianMatrix outer = frechet_d2(psi, sd, k.matrix(), inner.matrix());
  const double rhs = 2.0 * hs_inner(h.matrix(), tinv.apply(outer.matrix())).real();
  return {lhs, rhs};
}

inline VerificationReport condition_e_check(const ScalarFunction& f, const HermitianMatrix& a, const HermitianMatrix& h,
                                            const HermitianMatrix& k, double tolerance = 1e-4,
                                            ThirdOrderMethod method = ThirdOrderMethod::hybrid) {
  const auto s = condition_e_sides(f, a, h, k, method);
  auto r = make_report("condition_e[" + f.name + "]", s.lhs - s.rhs, 1.0 + std::abs(s.lhs) + std::abs(s.rhs), tolerance);
  r.witness = {{"a", to_json_value(a)}, {"h", to_json_value(h)}, {"k", to_json_value(k)}};
  return r;
}

// ---------------------------------------------------------------------------
// Integral and Taylor relations
// ---------------------------------------------------------------------------

/// Gauss-Legendre nodes and weights on [0, 1] (Golub-Welsch).
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need at least one point");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = i / std::sqrt(4.0 * i * i - 1.0);
    jacobi(i, i - 1) = jacobi(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    x[static_cast<std::size_t>(i)] = 0.5 * (es.eigenvalues()(i) + 1.0);
    const double v0 = es.eigenvectors()(0, i);
    w[static_cast<std::size_t>(i)] = v0 * v0;  // weights on [-1, 1] are 2 v0^2; halved for [0, 1]
  }
  return {x, w};
}

inline double value_norm(const HermitianMatrix& m, Variant v) {
  return v == Variant::trace ? std::abs(trace(m)) : m.frobenius();
}

inline double value_distance(const HermitianMatrix& a, const HermitianMatrix& b, Variant v) {
  return v == Variant::trace ? std::abs(trace(a) - trace(b)) : (a - b).frobenius();
}

/// A(u, v) = int_0^1 (1 - s) C(u + s v, v) ds and B(u, v) = int_0^1 C(u + s v, v) ds,
/// by Gauss-Legendre quadrature. Margin is minus the worse relative error.
inline VerificationReport integral_relation_check(const ScalarFunction& f, const HermitianMatrix& u,
                                                  const HermitianMatrix& v, int quadrature_points = 32,
                                                  Variant variant = Variant::trace, double tolerance = 1e-6) {
  const BivariateFunctional A(FunctionalKind::bregman_A, f, variant);
  const BivariateFunctional B(FunctionalKind::map_B, f, variant);
  const BivariateFunctional C(FunctionalKind::map_C, f, variant);
  const auto [x, w] = gauss_legendre(quadrature_points);
  HermitianMatrix ia = HermitianMatrix::zero(u.dim()), ib = HermitianMatrix::zero(u.dim());
  for (std::size_t q = 0; q < x.size(); ++q) {
    const HermitianMatrix c = functional_matrix(C, u + v * x[q], v);
    ia += c * (w[q] * (1.0 - x[q]));
    ib += c * w[q];
  }
  const HermitianMatrix a = functional_matrix(A, u, v);
  const HermitianMatrix b = functional_matrix(B, u, v);
  const double floor = 1e-14 * (1.0 + v.frobenius() * v.frobenius());
  const double ea = value_distance(a, ia, variant) / std::max(value_norm(a, variant), floor);
  const double eb = value_distance(b, ib, variant) / std::max(value_norm(b, variant), floor);
  auto r = make_report("integral_relation[" + f.name + "," + to_string(variant) + "]", -std::max(ea, eb), 1.0, tolerance);
  r.witness = {{"u", to_json_value(u)}, {"v", to_json_value(v)}, {"points", quadrature_points},
               {"rel_error_A", ea}, {"rel_error_B", eb}};
  return r;
}

/// Least-squares slope of log(err) against log(eps).
inline double log_log_slope(const std::vector<double>& eps, const std::vector<double>& err) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double lx = std::log(eps[i]), ly = std::log(err[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Errors below this count as exact (polynomial Phi).
inline constexpr double kTaylorExactError = 1e-8;
/// Minimum observed convergence order of A(u, eps v)/eps^2 -> C/2.
inline constexpr double kTaylorMinOrder = 0.95;

/// A(u, eps v) = C(u, v) eps^2 / 2 + o(eps^2) and B(u, eps v) = C(u, v) eps^2 + o(eps^2).
/// Margin is the observed order minus one, with tolerance 1 - kTaylorMinOrder;
/// sequences that agree to kTaylorExactError at every eps get margin 0.
inline VerificationReport taylor_relation_check(const ScalarFunction& f, const HermitianMatrix& u,
                                                const HermitianMatrix& v, const std::vector<double>& eps_sequence,
                                                Variant variant = Variant::trace) {
  if (eps_sequence.size() < 2) throw std::invalid_argument("taylor_relation_check: need at least two eps values");
  const BivariateFunctional A(FunctionalKind::bregman_A, f, variant);
  const BivariateFunctional B(FunctionalKind::map_B, f, variant);
  const BivariateFunctional C(FunctionalKind::map_C, f, variant);
  const HermitianMatrix c = functional_matrix(C, u, v);
  const double cn = value_norm(c, variant);
  std::vector<double> ea, eb;
  for (double eps : eps_sequence) {
    if (!(eps > 0.0)) throw std::invalid_argument("taylor_relation_check: eps must be positive");
    const HermitianMatrix a = functional_matrix(A, u, v * eps) * (1.0 / (eps * eps));
    const HermitianMatrix b = functional_matrix(B, u, v * eps) * (1.0 / (eps * eps));
    const double denom = cn > 0.0 ? cn : 1.0;
    ea.push_back(value_distance(a, c * 0.5, variant) / (0.5 * denom));
    eb.push_back(value_distance(b, c, variant) / denom);
  }
  const auto exact = [](const std::vector<double>& e) {
    for (double x : e)
      if (x > kTaylorExactError) return false;
    return true;
  };
  const double tolerance = 1.0 - kTaylorMinOrder;
  double order = std::numeric_limits<double>::infinity();
  if (!exact(ea)) order = std::min(order, log_log_slope(eps_sequence, ea));
  if (!exact(eb)) order = std::min(order, log_log_slope(eps_sequence, eb));
  const double margin = std::isinf(order) ? 0.0 : order - 1.0;
  auto r = make_report("taylor_relation[" + f.name + "," + to_string(variant) + "]", margin, 1.0, tolerance);
  r.witness = {{"u", to_json_value(u)}, {"v", to_json_value(v)}, {"eps", eps_sequence}, {"rel_error_A", ea},
               {"rel_error_B", eb}, {"observed_order", encode_double(order)}};
  return r;
}

// ---------------------------------------------------------------------------
// Convexity lemma, conditional Jensen, convexity of H
// ---------------------------------------------------------------------------

/// E <X, D Psi[A](X)> >= <E X, D Psi[E A](E X)>.
inline VerificationReport convexity_lemma_check(const ScalarFunction& f, const PairEnsemble& pairs,
                                                double tolerance = 1e-10) {
  const ScalarFunction psi = f.derivative_view();
  const Eigen::Index d = pairs.a.front().dim();
  double lhs = 0.0;
  CMatrix ea = CMatrix::Zero(d, d), ex = CMatrix::Zero(d, d);
  for (std::size_t i = 0; i < pairs.weights.size(); ++i) {
    if (!(min_eigenvalue(pairs.a[i]) > 0.0)) throw std::domain_error("convexity_lemma_check: A atom is not positive definite");
    lhs += pairs.weights[i] * hs_inner(pairs.x[i].matrix(), frechet_d1(psi, pairs.a[i], pairs.x[i]).matrix()).real();
    ea += pairs.weights[i] * pairs.a[i].matrix();
    ex += pairs.weights[i] * pairs.x[i].matrix();
  }
  const auto mean_a = HermitianMatrix::symmetrized(ea);
  const auto mean_x = HermitianMatrix::symmetrized(ex);
  const double rhs = hs_inner(mean_x.matrix(), frechet_d1(psi, mean_a, mean_x).matrix()).real();
  auto r = make_report("convexity_lemma[" + f.name + "]", lhs - rhs, 1.0 + std::abs(lhs) + std::abs(rhs), tolerance);
  json atoms = json::array();
  for (std::size_t i = 0; i < pairs.weights.size(); ++i)
    atoms.push_back({{"w", pairs.weights[i]}, {"a", to_json_value(pairs.a[i])}, {"x", to_json_value(pairs.x[i])}});
  r.witness = {{"phi", f.name}, {"pairs", atoms}};
  return r;
}

/// E_1 H(Z | X_1) >= H(E_1 Z) for a two-factor product ensemble, where
/// H(. | X_1) is the entropy over X_2 at fixed X_1 and E_1 averages over X_1.
inline VerificationReport conditional_jensen_check(const ScalarFunction& f, const ProductEnsemble& p, Variant v,
                                                   double tolerance = 1e-10) {
  if (p.factor_count() != 2) throw std::invalid_argument("conditional_jensen_check: needs exactly two factors");
  const Eigen::Index d = p.dim();
  CMatrix lhs = CMatrix::Zero(d, d);
  for (std::size_t x1 = 0; x1 < p.support_size(0); ++x1) {
    lhs += p.factor(0)[x1] * operator_phi_entropy(f, p.complement_slice(0, x1)).matrix();
  }
  std::vector<HermitianMatrix> averaged;
  for (std::size_t x2 = 0; x2 < p.support_size(1); ++x2) {
    CMatrix acc = CMatrix::Zero(d, d);
    for (std::size_t x1 = 0; x1 < p.support_size(0); ++x1) acc += p.factor(0)[x1] * p.at({x1, x2}).matrix();
    averaged.push_back(HermitianMatrix::symmetrized(acc));
  }
  const HermitianMatrix rhs = operator_phi_entropy(f, MatrixEnsemble{d, p.factor(1), averaged});
  const HermitianMatrix left = HermitianMatrix::symmetrized(lhs);
  VerificationReport r;
  if (v == Variant::trace) {
    const double a = normalized_trace(left), b = normalized_trace(rhs);
    r = make_report("conditional_jensen[" + f.name + ",trace]", a - b, 1.0 + std::abs(a) + std::abs(b), tolerance);
  } else {
    r = make_report("conditional_jensen[" + f.name + ",operator]", min_eigenvalue(left - rhs),
                    1.0 + spectral_norm(left) + spectral_norm(rhs), tolerance);
  }
  r.witness = entropy_witness(f, v, p);
  return r;
}

/// H(lambda Z1 + (1 - lambda) Z2) <= lambda H(Z1) + (1 - lambda) H(Z2) for
/// ensembles on one sample space, combined atom by atom.
inline VerificationReport entropy_convexity_check(const ScalarFunction& f, const MatrixEnsemble& z1,
                                                  const MatrixEnsemble& z2, double lambda, Variant v,
                                                  double tolerance = 1e-10) {
  require_coupled(z1, z2, "entropy_convexity_check");
  const MatrixEnsemble mix = interpolate(z2, z1, lambda);
  const Slack s = convexity_slack(operator_phi_entropy(f, z1), operator_phi_entropy(f, z2), operator_phi_entropy(f, mix),
                                  lambda, v);
  auto r = make_report("entropy_convexity[" + f.name + "," + to_string(v) + "]", s.raw, s.scale, tolerance);
  r.witness = coupled_witness(f, v, z1, z2);
  r.witness["lambda"] = lambda;
  return r;
}

}  // namespace phient
