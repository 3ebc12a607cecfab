#pragma once

// Unital completely positive maps in Kraus form, entropy monotonicity under
// them, and the operator Jensen inequality.

#include "phient/ensemble.hpp"
#include "phient/entropy.hpp"
#include "phient/phi_catalog.hpp"
#include "phient/report.hpp"
#include "phient/sampling.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace phient {

inline constexpr double kUnitalTolerance = 1e-10;

/// N(A) = sum_i K_i A K_i^dagger with sum_i K_i K_i^dagger = I.
struct KrausChannel {
  Eigen::Index dim = 0;
  std::vector<CMatrix> kraus_ops;
  bool trace_preserving = false;

  /// Rejects non-unital families; with `trace_preserving` also checks
  /// sum_i K_i^dagger K_i = I.
  static KrausChannel from_kraus(std::vector<CMatrix> ops, bool trace_preserving = false) {
    if (ops.empty()) throw std::invalid_argument("KrausChannel: no Kraus operators");
    const Eigen::Index d = ops.front().rows();
    CMatrix unital = CMatrix::Zero(d, d), tp = CMatrix::Zero(d, d);
    for (const auto& k : ops) {
      if (k.rows() != d || k.cols() != d) throw std::invalid_argument("KrausChannel: Kraus operators must be d x d");
      unital += k * k.adjoint();
      tp += k.adjoint() * k;
    }
    const double err = (unital - CMatrix::Identity(d, d)).cwiseAbs().maxCoeff();
    if (err > kUnitalTolerance) {
      throw std::invalid_argument("KrausChannel: not unital (max |sum K K^dagger - I| = " + std::to_string(err) + ")");
    }
    if (trace_preserving) {
      const double terr = (tp - CMatrix::Identity(d, d)).cwiseAbs().maxCoeff();
      if (terr > kUnitalTolerance) {
        throw std::invalid_argument("KrausChannel: not trace preserving (max |sum K^dagger K - I| = " +
                                    std::to_string(terr) + ")");
      }
    }
    return {d, std::move(ops), trace_preserving};
  }

  static KrausChannel identity(Eigen::Index d) { return from_kraus({CMatrix::Identity(d, d)}, true); }
};

inline HermitianMatrix apply_channel(const KrausChannel& n, const HermitianMatrix& a) {
  if (a.dim() != n.dim) {
    throw std::invalid_argument("apply_channel: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                                std::to_string(n.dim) + ")");
  }
  CMatrix acc = CMatrix::Zero(n.dim, n.dim);
  for (const auto& k : n.kraus_ops) acc += k * a.matrix() * k.adjoint();
  return HermitianMatrix::symmetrized(acc);
}

/// Pushforward ensemble {(w_i, N(A_i))}.
inline MatrixEnsemble apply_channel(const KrausChannel& n, const MatrixEnsemble& e) {
  std::vector<HermitianMatrix> atoms;
  for (const auto& a : e.atoms) atoms.push_back(apply_channel(n, a));
  return {e.dim, e.weights, std::move(atoms)};
}

/// Kraus set {|i><i|}.
inline KrausChannel dephasing_channel(Eigen::Index d) {
  std::vector<CMatrix> ops;
  for (Eigen::Index i = 0; i < d; ++i) {
    CMatrix p = CMatrix::Zero(d, d);
    p(i, i) = 1.0;
    ops.push_back(p);
  }
  return KrausChannel::from_kraus(std::move(ops), true);
}

inline KrausChannel unitary_channel(const CMatrix& u) { return KrausChannel::from_kraus({u}, true); }

/// Mixed-unitary channel K_i = sqrt(w_i) U_i with Haar U_i and random convex w.
inline KrausChannel random_unital_channel(Eigen::Index d, std::size_t k, Rng& rng) {
  if (k < 1) throw std::invalid_argument("random_unital_channel: k must be >= 1");
  const auto w = k == 1 ? std::vector<double>{1.0} : sample_weights(k, rng);
  std::vector<CMatrix> ops;
  for (std::size_t i = 0; i < k; ++i) ops.push_back(std::sqrt(w[i]) * haar_unitary(d, rng));
  return KrausChannel::from_kraus(std::move(ops), true);
}
inline KrausChannel random_unital_channel(Eigen::Index d, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  return random_unital_channel(d, k, rng);
}

inline json to_json_value(const KrausChannel& n) {
  json ops = json::array();
  for (const auto& k : n.kraus_ops) ops.push_back(matrix_to_json(k));
  return {{"dim", n.dim}, {"kraus", ops}};
}

inline KrausChannel channel_from_json(const json& j) {
  std::vector<CMatrix> ops;
  for (const auto& k : j.at("kraus")) ops.push_back(matrix_from_json(k));
  auto n = KrausChannel::from_kraus(std::move(ops), j.value("trace_preserving", false));
  if (j.contains("dim") && j.at("dim").get<Eigen::Index>() != n.dim) {
    throw std::invalid_argument("channel JSON: 'dim' does not match Kraus operators");
  }
  return n;
}

inline json channel_witness(const ScalarFunction& f, Variant v, const KrausChannel& n, const MatrixEnsemble& e) {
  return {{"phi", f.name}, {"variant", to_string(v)}, {"channel", to_json_value(n)}, {"ensemble", to_json_value(e)}};
}

/// H(Z) - H(N(Z)): a scalar for the trace variant, the minimum eigenvalue of
/// the matrix difference for the operator variant.
inline VerificationReport check_monotonicity(const ScalarFunction& f, const KrausChannel& n, const MatrixEnsemble& e,
                                             Variant v, bool allow_outside_class = false, double tolerance = 1e-10) {
  require_class(f, required_class(v), allow_outside_class, "check_monotonicity");
  const MatrixEnsemble pushed = apply_channel(n, e);
  const HermitianMatrix before = operator_phi_entropy(f, e);
  const HermitianMatrix after = operator_phi_entropy(f, pushed);
  VerificationReport r;
  if (v == Variant::trace) {
    const double a = normalized_trace(before), b = normalized_trace(after);
    r = make_report("monotonicity[" + f.name + ",trace]", a - b, 1.0 + std::abs(a) + std::abs(b), tolerance);
  } else {
    r = make_report("monotonicity[" + f.name + ",operator]", min_eigenvalue(before - after),
                    1.0 + spectral_norm(before) + spectral_norm(after), tolerance);
  }
  r.witness = channel_witness(f, v, n, e);
  return r;
}

/// Operator monotonicity with the channel applied to both sides:
/// N(H(Z)) - H(N(Z)) >= 0.
inline VerificationReport check_covariant_monotonicity(const ScalarFunction& f, const KrausChannel& n,
                                                       const MatrixEnsemble& e, bool allow_outside_class = false,
                                                       double tolerance = 1e-10) {
  require_class(f, ClassTag::C3, allow_outside_class, "check_covariant_monotonicity");
  const HermitianMatrix before = apply_channel(n, operator_phi_entropy(f, e));
  const HermitianMatrix after = operator_phi_entropy(f, apply_channel(n, e));
  auto r = make_report("covariant_monotonicity[" + f.name + "]", min_eigenvalue(before - after),
                       1.0 + spectral_norm(before) + spectral_norm(after), tolerance);
  r.witness = channel_witness(f, Variant::operator_valued, n, e);
  return r;
}

/// phi(N(A)) <= N(phi(A)): Loewner margin for the operator variant, trace
/// margin for the trace variant.
inline VerificationReport operator_jensen_check(const ScalarFunction& f, const KrausChannel& n, const HermitianMatrix& a,
                                                Variant v = Variant::operator_valued, double tolerance = 1e-10) {
  const HermitianMatrix na = apply_channel(n, a);
  const RVector ea = eigenvalues(a), en = eigenvalues(na);
  const double slack = 1e-10 * (1.0 + spectral_norm(a));
  if (en(0) < ea(0) - slack || en(en.size() - 1) > ea(ea.size() - 1) + slack) {
    throw std::logic_error("operator_jensen_check: channel moved the spectrum outside its convex hull");
  }
  const HermitianMatrix lhs = apply_scalar_function(f, na);
  const HermitianMatrix rhs = apply_channel(n, apply_scalar_function(f, a));
  VerificationReport r;
  if (v == Variant::trace) {
    const double x = trace(rhs), y = trace(lhs);
    r = make_report("operator_jensen[" + f.name + ",trace]", x - y, 1.0 + std::abs(x) + std::abs(y), tolerance);
  } else {
    r = make_report("operator_jensen[" + f.name + ",operator]", min_eigenvalue(rhs - lhs),
                    1.0 + spectral_norm(lhs) + spectral_norm(rhs), tolerance);
  }
  r.witness = {{"phi", f.name}, {"channel", to_json_value(n)}, {"a", to_json_value(a)}};
  return r;
}

}  // namespace phient
