#pragma once

// Frechet derivatives of standard matrix functions through divided differences
// in the eigenbasis (Daleckii-Krein), the d^2 x d^2 matricisation of linear
// maps on matrices, finite-difference oracles, and derivative identity checks.

#include "phient/phi_catalog.hpp"
#include "phient/report.hpp"
#include "phient/spectral.hpp"

#include <unsupported/Eigen/KroneckerProduct>

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace phient {

// ---------------------------------------------------------------------------
// Daleckii-Krein derivatives
// ---------------------------------------------------------------------------

/// D f[A](X) = U (f^[1](l_i, l_j) o U^dagger X U) U^dagger.
/// The *_matrix forms accept any square X (the maps are complex linear), the
/// Hermitian forms symmetrize away rounding.
inline CMatrix frechet_d1_matrix(const ScalarFunction& f, const SpectralDecomposition& sd, const CMatrix& x) {
  const auto table = divided_differences(f, sd.eigenvalues, 1);
  const CMatrix xt = sd.to_eigenbasis(x);
  CMatrix m(sd.dim(), sd.dim());
  for (Eigen::Index i = 0; i < sd.dim(); ++i)
    for (Eigen::Index j = 0; j < sd.dim(); ++j) m(i, j) = table(i, j) * xt(i, j);
  return sd.from_eigenbasis(m);
}

inline HermitianMatrix frechet_d1(const ScalarFunction& f, const SpectralDecomposition& sd, const CMatrix& x) {
  return HermitianMatrix::symmetrized(frechet_d1_matrix(f, sd, x));
}

inline HermitianMatrix frechet_d1(const ScalarFunction& f, const HermitianMatrix& a, const HermitianMatrix& x) {
  require_same_dim(a, x, "frechet_d1");
  return frechet_d1(f, spectral_decompose(a), x.matrix());
}

/// Symmetric bilinear D^2 f[A](X, Y) from second divided differences.
inline CMatrix frechet_d2_matrix(const ScalarFunction& f, const SpectralDecomposition& sd, const CMatrix& x,
                                 const CMatrix& y) {
  const Eigen::Index d = sd.dim();
  const auto table = divided_differences(f, sd.eigenvalues, 2);
  const CMatrix xt = sd.to_eigenbasis(x);
  const CMatrix yt = sd.to_eigenbasis(y);
  CMatrix m = CMatrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      cplx acc = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) acc += table(i, k, j) * (xt(i, k) * yt(k, j) + yt(i, k) * xt(k, j));
      m(i, j) = acc;
    }
  return sd.from_eigenbasis(m);
}

inline HermitianMatrix frechet_d2(const ScalarFunction& f, const SpectralDecomposition& sd, const CMatrix& x,
                                  const CMatrix& y) {
  return HermitianMatrix::symmetrized(frechet_d2_matrix(f, sd, x, y));
}

inline HermitianMatrix frechet_d2(const ScalarFunction& f, const HermitianMatrix& a, const HermitianMatrix& x,
                                  const HermitianMatrix& y) {
  require_same_dim(a, x, "frechet_d2");
  require_same_dim(a, y, "frechet_d2");
  return frechet_d2(f, spectral_decompose(a), x.matrix(), y.matrix());
}

enum class ThirdOrderMethod {
  /// Central difference of the exact second-order derivative.
  hybrid,
  /// Third divided differences; O(d^4) table.
  divided_difference,
};

inline HermitianMatrix frechet_d3_divided(const ScalarFunction& f, const SpectralDecomposition& sd, const CMatrix& x,
                                          const CMatrix& y, const CMatrix& w) {
  const Eigen::Index d = sd.dim();
  const auto table = divided_differences(f, sd.eigenvalues, 3);
  const std::array<CMatrix, 3> t{sd.to_eigenbasis(x), sd.to_eigenbasis(y), sd.to_eigenbasis(w)};
  static constexpr std::array<std::array<int, 3>, 6> perms{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  CMatrix m = CMatrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      cplx acc = 0.0;
      for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index l = 0; l < d; ++l) {
          cplx s = 0.0;
          for (const auto& p : perms) s += t[p[0]](i, k) * t[p[1]](k, l) * t[p[2]](l, j);
          acc += table(i, k, l, j) * s;
        }
      m(i, j) = acc;
    }
  return HermitianMatrix::symmetrized(sd.from_eigenbasis(m));
}

/// Step used by the hybrid third-order derivative along a unit direction.
inline double hybrid_third_order_step(const HermitianMatrix& a) { return 1e-5 * (1.0 + spectral_norm(a)); }

inline HermitianMatrix frechet_d3(const ScalarFunction& f, const HermitianMatrix& a, const HermitianMatrix& x,
                                  const HermitianMatrix& y, const HermitianMatrix& w,
                                  ThirdOrderMethod method = ThirdOrderMethod::hybrid) {
  require_same_dim(a, x, "frechet_d3");
  require_same_dim(a, y, "frechet_d3");
  require_same_dim(a, w, "frechet_d3");
  if (method == ThirdOrderMethod::divided_difference) {
    return frechet_d3_divided(f, spectral_decompose(a), x.matrix(), y.matrix(), w.matrix());
  }
  const double wn = w.frobenius();
  if (wn == 0.0) return HermitianMatrix::zero(a.dim());
  const HermitianMatrix unit = w * (1.0 / wn);
  const double h = hybrid_third_order_step(a);
  const auto plus = frechet_d2(f, a + unit * h, x, y);
  const auto minus = frechet_d2(f, a - unit * h, x, y);
  return (plus - minus) * (wn / (2.0 * h));
}

// ---------------------------------------------------------------------------
// Superoperators
// ---------------------------------------------------------------------------

/// Column stacking: entry (i, j) of a d x d matrix goes to i + j d.
inline CVector stack(const CMatrix& x) { return Eigen::Map<const CVector>(x.data(), x.size()); }

inline CMatrix unstack(const CVector& v, Eigen::Index d) {
  if (v.size() != d * d) throw std::invalid_argument("unstack: length is not d^2");
  return Eigen::Map<const CMatrix>(v.data(), d, d);
}

/// d^2 x d^2 matrix of a linear map on d x d matrices under column stacking;
/// X -> B X C is C^T (x) B.
struct SuperOperatorMatrix {
  Eigen::Index dim = 0;
  CMatrix entries;

  CMatrix apply(const CMatrix& x) const { return unstack(entries * stack(x), dim); }
  HermitianMatrix apply(const HermitianMatrix& x) const { return HermitianMatrix::symmetrized(apply(x.matrix())); }
};

inline SuperOperatorMatrix matricise(const std::function<CMatrix(const CMatrix&)>& map, Eigen::Index d) {
  SuperOperatorMatrix t{d, CMatrix(d * d, d * d)};
  for (Eigen::Index l = 0; l < d; ++l)
    for (Eigen::Index k = 0; k < d; ++k) {
      CMatrix unit = CMatrix::Zero(d, d);
      unit(k, l) = 1.0;
      t.entries.col(k + l * d) = stack(map(unit));
    }
  return t;
}

/// T_A = D psi[A] as a superoperator: (conj(U) (x) U) diag(vec G) (U^T (x) U^dagger)
/// with G the first divided differences of psi on the spectrum of A.
inline SuperOperatorMatrix superop_matrix(const ScalarFunction& psi, const SpectralDecomposition& sd) {
  const Eigen::Index d = sd.dim();
  const auto table = divided_differences(psi, sd.eigenvalues, 1);
  CVector g(d * d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i + j * d) = table(i, j);
  const CMatrix& u = sd.eigenvectors;
  const CMatrix left = Eigen::kroneckerProduct(u.conjugate(), u).eval();
  const CMatrix right = Eigen::kroneckerProduct(u.transpose(), u.adjoint()).eval();
  return {d, left * g.asDiagonal() * right};
}

inline SuperOperatorMatrix superop_matrix(const ScalarFunction& psi, const HermitianMatrix& a) {
  return superop_matrix(psi, spectral_decompose(a));
}

/// (D psi[A])^{-1}(H) computed directly in the eigenbasis by entrywise
/// division; an independent route to superop_inverse for Hermitian inputs.
inline HermitianMatrix frechet_d1_inverse_apply(const ScalarFunction& psi, const SpectralDecomposition& sd,
                                                const CMatrix& h) {
  const auto table = divided_differences(psi, sd.eigenvalues, 1);
  CMatrix m = sd.to_eigenbasis(h);
  for (Eigen::Index i = 0; i < sd.dim(); ++i)
    for (Eigen::Index j = 0; j < sd.dim(); ++j) {
      if (table(i, j) == 0.0) throw std::domain_error("frechet_d1_inverse_apply: derivative map is singular");
      m(i, j) /= table(i, j);
    }
  return HermitianMatrix::symmetrized(sd.from_eigenbasis(m));
}

class SingularSuperoperatorError : public std::runtime_error {
 public:
  SingularSuperoperatorError(double smallest, double condition)
      : std::runtime_error("superoperator numerically singular: smallest singular value " + std::to_string(smallest) +
                           ", condition number " + std::to_string(condition)),
        smallest_singular_value(smallest),
        condition_number(condition) {}
  double smallest_singular_value;
  double condition_number;
};

inline constexpr double kMaxSuperoperatorCondition = 1e12;

inline SuperOperatorMatrix superop_inverse(const SuperOperatorMatrix& t) {
  const RVector sv = Eigen::JacobiSVD<CMatrix>(t.entries).singularValues();
  const double smallest = sv(sv.size() - 1);
  const double cond = smallest > 0.0 ? sv(0) / smallest : std::numeric_limits<double>::infinity();
  if (!(cond <= kMaxSuperoperatorCondition)) throw SingularSuperoperatorError(smallest, cond);
  return {t.dim, Eigen::PartialPivLU<CMatrix>(t.entries).inverse()};
}

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

inline double default_fd_step(int order) {
  switch (order) {
    case 1: return 1e-3;
    case 2: return 1e-2;
    default: return 2e-2;
  }
}

/// Central-difference approximation of D^k f[A](X, ..., X), k = 1..3, built
/// only from evaluations of f on shifted matrices. With `richardson`, two step
/// sizes are combined to cancel the O(step^2) term.
inline HermitianMatrix finite_diff_oracle(const ScalarFunction& f, const HermitianMatrix& a, const HermitianMatrix& x,
                                          int order, double step, bool richardson = true) {
  require_same_dim(a, x, "finite_diff_oracle");
  if (order < 1 || order > 3) throw std::invalid_argument("finite_diff_oracle: order must be 1, 2 or 3");
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_oracle: step must be positive");
  auto at = [&](double t) { return apply_scalar_function(f, a + x * t).matrix(); };
  auto stencil = [&](double h) -> CMatrix {
    switch (order) {
      case 1: return (at(h) - at(-h)) / (2.0 * h);
      case 2: return (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h);
      default: return (at(2.0 * h) - 2.0 * at(h) + 2.0 * at(-h) - at(-2.0 * h)) / (2.0 * h * h * h);
    }
  };
  if (!richardson) return HermitianMatrix::symmetrized(stencil(step));
  return HermitianMatrix::symmetrized((4.0 * stencil(0.5 * step) - stencil(step)) / 3.0);
}

/// Step scaled to the operator norm of the direction.
inline HermitianMatrix finite_diff_oracle(const ScalarFunction& f, const HermitianMatrix& a, const HermitianMatrix& x,
                                          int order) {
  const double xn = spectral_norm(x);
  if (xn == 0.0) return HermitianMatrix::zero(a.dim());
  return finite_diff_oracle(f, a, x, order, default_fd_step(order) / xn);
}

/// ||a - b||_F / max(||a||_F, floor); zero when both vanish.
inline double relative_error(const CMatrix& a, const CMatrix& b, double floor = 0.0) {
  const double diff = (a - b).norm();
  const double denom = std::max(a.norm(), floor);
  if (denom == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / denom;
}

inline VerificationReport relative_error_report(std::string name, const CMatrix& expected, const CMatrix& actual,
                                                double tolerance, double floor = 0.0) {
  const double err = relative_error(expected, actual, floor);
  VerificationReport r = make_report(std::move(name), -err, 1.0, tolerance);
  return r;
}

// ---------------------------------------------------------------------------
// Inversion derivatives
// ---------------------------------------------------------------------------

/// A matrix-valued map A -> G(A) with its first two Frechet derivatives.
struct MatrixFamily {
  std::string name;
  std::function<CMatrix(const HermitianMatrix&)> value;
  std::function<CMatrix(const HermitianMatrix&, const HermitianMatrix&)> d1;
  std::function<CMatrix(const HermitianMatrix&, const HermitianMatrix&, const HermitianMatrix&)> d2;
};

inline MatrixFamily identity_family() {
  return {"identity", [](const HermitianMatrix& a) { return a.matrix(); },
          [](const HermitianMatrix&, const HermitianMatrix& h) { return h.matrix(); },
          [](const HermitianMatrix& a, const HermitianMatrix&, const HermitianMatrix&) {
            return CMatrix::Zero(a.dim(), a.dim()).eval();
          }};
}

inline MatrixFamily constant_family(CMatrix c) {
  return {"constant", [c](const HermitianMatrix&) { return c; },
          [c](const HermitianMatrix&, const HermitianMatrix&) { return CMatrix::Zero(c.rows(), c.cols()).eval(); },
          [c](const HermitianMatrix&, const HermitianMatrix&, const HermitianMatrix&) {
            return CMatrix::Zero(c.rows(), c.cols()).eval();
          }};
}

/// G(A) = T_A = D psi[A] as a d^2 x d^2 matrix; DG[A](h) is the
/// superoperator X -> D^2 psi[A](h, X) and D^2G[A](h, k) is X -> D^3 psi[A](h, k, X).
inline MatrixFamily superoperator_family(const ScalarFunction& psi,
                                         ThirdOrderMethod method = ThirdOrderMethod::divided_difference) {
  return {"superop:" + psi.name,
          [psi](const HermitianMatrix& a) { return superop_matrix(psi, a).entries; },
          [psi](const HermitianMatrix& a, const HermitianMatrix& h) {
            const auto sd = spectral_decompose(a);
            return matricise([&](const CMatrix& x) { return frechet_d2_matrix(psi, sd, h.matrix(), x); }, a.dim())
                .entries;
          },
          [psi, method](const HermitianMatrix& a, const HermitianMatrix& h, const HermitianMatrix& k) {
            // Matrix units are not Hermitian; split them into Hermitian parts so
            // the hybrid route (which perturbs A along a Hermitian direction)
            // stays applicable.
            return matricise(
                       [&](const CMatrix& x) {
                         const auto re = HermitianMatrix::symmetrized(x);
                         const auto im = HermitianMatrix::symmetrized(cplx(0.0, -1.0) * x);
                         const CMatrix a_part = frechet_d3(psi, a, h, k, re, method).matrix();
                         const CMatrix b_part = frechet_d3(psi, a, h, k, im, method).matrix();
                         return (a_part + cplx(0.0, 1.0) * b_part).eval();
                       },
                       a.dim())
                .entries;
          }};
}

/// D(G^{-1})[A](h) = -G^{-1} DG[A](h) G^{-1}.
inline CMatrix inverse_derivative(const MatrixFamily& g, const HermitianMatrix& a, const HermitianMatrix& h) {
  const CMatrix ginv = g.value(a).inverse();
  return -ginv * g.d1(a, h) * ginv;
}

/// D^2(G^{-1})[A](h, k) = G^{-1} DG(h) G^{-1} DG(k) G^{-1} + G^{-1} DG(k) G^{-1} DG(h) G^{-1}
///                        - G^{-1} D^2G(h, k) G^{-1}.
inline CMatrix inverse_second_derivative(const MatrixFamily& g, const HermitianMatrix& a, const HermitianMatrix& h,
                                         const HermitianMatrix& k) {
  const CMatrix ginv = g.value(a).inverse();
  const CMatrix dh = g.d1(a, h);
  const CMatrix dk = g.d1(a, k);
  return ginv * dh * ginv * dk * ginv + ginv * dk * ginv * dh * ginv - ginv * g.d2(a, h, k) * ginv;
}

/// Checks both inversion identities against central differences of
/// A -> G(A)^{-1}; margin is minus the worse relative error.
inline VerificationReport inversion_derivative_check(const MatrixFamily& g, const HermitianMatrix& a,
                                                     const HermitianMatrix& h, const HermitianMatrix& k,
                                                     double tolerance = 1e-5) {
  const CMatrix g0 = g.value(a);
  Eigen::FullPivLU<CMatrix> lu(g0);
  if (!lu.isInvertible()) throw std::domain_error("inversion_derivative_check: G(A) is singular");
  auto inv_at = [&](const HermitianMatrix& shift) { return g.value(a + shift).inverse().eval(); };

  const double hn = std::max(spectral_norm(h), 1e-300);
  const double kn = std::max(spectral_norm(k), 1e-300);
  const double s1 = 1e-4 / hn;
  auto first_fd = [&](double s) -> CMatrix { return (inv_at(h * s) - inv_at(h * -s)) / (2.0 * s); };
  const CMatrix fd1 = (4.0 * first_fd(0.5 * s1) - first_fd(s1)) / 3.0;

  const double sh = 1e-3 / hn, sk = 1e-3 / kn;
  auto mixed_fd = [&](double a_, double b_) -> CMatrix {
    return (inv_at(h * a_ + k * b_) - inv_at(h * a_ - k * b_) - inv_at(h * -a_ + k * b_) + inv_at(h * -a_ - k * b_)) /
           (4.0 * a_ * b_);
  };
  const CMatrix fd2 = (4.0 * mixed_fd(0.5 * sh, 0.5 * sk) - mixed_fd(sh, sk)) / 3.0;

  const CMatrix an1 = inverse_derivative(g, a, h);
  const CMatrix an2 = inverse_second_derivative(g, a, h, k);
  const double floor1 = 1e-8 * g0.inverse().norm() * h.frobenius();
  const double floor2 = 1e-6 * g0.inverse().norm() * h.frobenius() * k.frobenius();
  const double err = std::max(relative_error(an1, fd1, floor1), relative_error(an2, fd2, floor2));
  auto r = make_report("inversion_derivative[" + g.name + "]", -err, 1.0, tolerance);
  return r;
}

// ---------------------------------------------------------------------------
// Chain rule and partial derivatives
// ---------------------------------------------------------------------------

/// f o g with derivatives from Faa di Bruno's formula up to order 4.
inline ScalarFunction compose(const ScalarFunction& f, const ScalarFunction& g) {
  ScalarFunction c;
  c.name = f.name + "o" + g.name;
  c.domain = g.domain;
  c.derivative_domain = g.derivative_domain;
  c.max_order = std::min(f.max_order, g.max_order);
  c.derivatives[0] = [f, g](double u) { return f.eval(0, g.eval(0, u)); };
  c.derivatives[1] = [f, g](double u) { return f.eval(1, g.eval(0, u)) * g.eval(1, u); };
  c.derivatives[2] = [f, g](double u) {
    const double y = g.eval(0, u), g1 = g.eval(1, u), g2 = g.eval(2, u);
    return f.eval(2, y) * g1 * g1 + f.eval(1, y) * g2;
  };
  c.derivatives[3] = [f, g](double u) {
    const double y = g.eval(0, u), g1 = g.eval(1, u), g2 = g.eval(2, u), g3 = g.eval(3, u);
    return f.eval(3, y) * g1 * g1 * g1 + 3.0 * f.eval(2, y) * g1 * g2 + f.eval(1, y) * g3;
  };
  c.derivatives[4] = [f, g](double u) {
    const double y = g.eval(0, u), g1 = g.eval(1, u), g2 = g.eval(2, u), g3 = g.eval(3, u), g4 = g.eval(4, u);
    return f.eval(4, y) * g1 * g1 * g1 * g1 + 6.0 * f.eval(3, y) * g1 * g1 * g2 + 3.0 * f.eval(2, y) * g2 * g2 +
           4.0 * f.eval(2, y) * g1 * g3 + f.eval(1, y) * g4;
  };
  return c;
}

/// D(f o g)[A](h) against Df[g(A)](Dg[A](h)).
inline VerificationReport chain_rule_check(const ScalarFunction& f, const ScalarFunction& g, const HermitianMatrix& a,
                                           const HermitianMatrix& h, double tolerance = 1e-6) {
  const auto direct = frechet_d1(compose(f, g), a, h);
  const auto inner = frechet_d1(g, a, h);
  const auto outer = frechet_d1(f, apply_scalar_function(g, a), inner);
  return relative_error_report("chain_rule[" + f.name + "," + g.name + "]", direct.matrix(), outer.matrix(), tolerance,
                               1e-12 * h.frobenius());
}

using BivariateMap = std::function<CMatrix(const HermitianMatrix&, const HermitianMatrix&)>;

/// DF[X,Y](h,k) = D_X F(h) + D_Y F(k), every term by Richardson-extrapolated
/// central differences.
inline VerificationReport partial_derivative_check(const BivariateMap& f, const HermitianMatrix& x,
                                                   const HermitianMatrix& y, const HermitianMatrix& h,
                                                   const HermitianMatrix& k, double tolerance = 1e-6) {
  const double scale = std::max({spectral_norm(h), spectral_norm(k), 1e-300});
  const double s = 1e-3 / scale;
  auto rich = [&](auto&& central) -> CMatrix { return (4.0 * central(0.5 * s) - central(s)) / 3.0; };
  const CMatrix joint = rich([&](double t) -> CMatrix { return (f(x + h * t, y + k * t) - f(x - h * t, y - k * t)) / (2.0 * t); });
  const CMatrix dx = rich([&](double t) -> CMatrix { return (f(x + h * t, y) - f(x - h * t, y)) / (2.0 * t); });
  const CMatrix dy = rich([&](double t) -> CMatrix { return (f(x, y + k * t) - f(x, y - k * t)) / (2.0 * t); });
  return relative_error_report("partial_derivative", joint, dx + dy, tolerance, 1e-12 * (h.frobenius() + k.frobenius()));
}

}  // namespace phient
