#pragma once

// Dense Hermitian linear algebra: the value type every other module builds on,
// its eigendecomposition, standard matrix functions, Loewner comparisons,
// traces and Schatten norms.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace phient {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

/// Relative slack used for the Hermitian, unitary and reconstruction
/// invariants: 1e-10 * (1 + max |entry|).
inline double hermitian_tolerance(const CMatrix& m) {
  const double max_abs = m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
  return 1e-10 * (1.0 + max_abs);
}

/// A d x d complex self-adjoint matrix, d >= 1.
///
/// Construction through `from_entries` validates the Hermitian invariant and
/// reports the first offending (i, j) pair. Results of internal arithmetic go
/// through `symmetrized`, which projects onto the Hermitian part so roundoff
/// never leaks an anti-Hermitian component into later eigensolves.
class HermitianMatrix {
 public:
  HermitianMatrix() : m_(CMatrix::Zero(1, 1)) {}

  static HermitianMatrix from_entries(CMatrix m) {
    if (m.rows() != m.cols()) {
      throw std::invalid_argument("HermitianMatrix: matrix is not square");
    }
    if (m.rows() < 1) {
      throw std::invalid_argument("HermitianMatrix: dimension must be >= 1");
    }
    const double tol = hermitian_tolerance(m);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = i; j < m.cols(); ++j) {
        if (std::abs(m(i, j) - std::conj(m(j, i))) > tol) {
          std::ostringstream os;
          os << "HermitianMatrix: entries (" << i << "," << j << ") and (" << j << "," << i
             << ") are not conjugate: " << m(i, j) << " vs " << m(j, i);
          throw std::domain_error(os.str());
        }
      }
    }
    return symmetrized(m);
  }

  static HermitianMatrix symmetrized(const CMatrix& m) {
    HermitianMatrix h;
    h.m_ = 0.5 * (m + m.adjoint());
    return h;
  }

  static HermitianMatrix zero(Eigen::Index d) { return symmetrized(CMatrix::Zero(d, d)); }
  static HermitianMatrix identity(Eigen::Index d) { return symmetrized(CMatrix::Identity(d, d)); }

  static HermitianMatrix diagonal(std::initializer_list<double> values) {
    RVector v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index k = 0;
    for (double x : values) v(k++) = x;
    return diagonal(v);
  }
  static HermitianMatrix diagonal(const RVector& values) {
    return symmetrized(values.cast<cplx>().asDiagonal().toDenseMatrix());
  }
  static HermitianMatrix real(const Eigen::MatrixXd& m) { return from_entries(m.cast<cplx>()); }

  Eigen::Index dim() const { return m_.rows(); }
  const CMatrix& matrix() const { return m_; }
  cplx operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  HermitianMatrix operator+(const HermitianMatrix& o) const { return symmetrized(m_ + o.m_); }
  HermitianMatrix operator-(const HermitianMatrix& o) const { return symmetrized(m_ - o.m_); }
  HermitianMatrix operator-() const { return symmetrized(-m_); }
  HermitianMatrix operator*(double s) const { return symmetrized(s * m_); }
  friend HermitianMatrix operator*(double s, const HermitianMatrix& h) { return h * s; }
  HermitianMatrix& operator+=(const HermitianMatrix& o) {
    m_ += o.m_;
    return *this;
  }

  /// Frobenius norm.
  double frobenius() const { return m_.norm(); }

 private:
  CMatrix m_;
};

inline void require_same_dim(const HermitianMatrix& a, const HermitianMatrix& b, const char* where) {
  if (a.dim() != b.dim()) {
    std::ostringstream os;
    os << where << ": dimension mismatch (" << a.dim() << " vs " << b.dim() << ")";
    throw std::invalid_argument(os.str());
  }
}

/// Eigenvalues ascending, eigenvectors as the columns of a unitary matrix.
struct SpectralDecomposition {
  RVector eigenvalues;
  CMatrix eigenvectors;

  Eigen::Index dim() const { return eigenvalues.size(); }

  /// U diag(values) U^dagger.
  HermitianMatrix reconstruct(const RVector& values) const {
    return HermitianMatrix::symmetrized(eigenvectors * values.cast<cplx>().asDiagonal() *
                                        eigenvectors.adjoint());
  }
  HermitianMatrix reconstruct() const { return reconstruct(eigenvalues); }

  /// U^dagger X U.
  CMatrix to_eigenbasis(const CMatrix& x) const { return eigenvectors.adjoint() * x * eigenvectors; }
  /// U M U^dagger.
  CMatrix from_eigenbasis(const CMatrix& m) const { return eigenvectors * m * eigenvectors.adjoint(); }
};

inline SpectralDecomposition spectral_decompose(const HermitianMatrix& a) {
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(a.matrix());
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("spectral_decompose: eigensolver did not converge");
  }
  // Eigen returns ascending eigenvalues already.
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// Validating overload for raw matrices; non-Hermitian input raises a
/// domain_error naming the offending entry pair.
inline SpectralDecomposition spectral_decompose(const CMatrix& a) {
  return spectral_decompose(HermitianMatrix::from_entries(a));
}

inline double min_eigenvalue(const HermitianMatrix& a) {
  return Eigen::SelfAdjointEigenSolver<CMatrix>(a.matrix(), Eigen::EigenvaluesOnly).eigenvalues()(0);
}
inline double max_eigenvalue(const HermitianMatrix& a) {
  const auto ev = Eigen::SelfAdjointEigenSolver<CMatrix>(a.matrix(), Eigen::EigenvaluesOnly).eigenvalues();
  return ev(ev.size() - 1);
}
inline RVector eigenvalues(const HermitianMatrix& a) {
  return Eigen::SelfAdjointEigenSolver<CMatrix>(a.matrix(), Eigen::EigenvaluesOnly).eigenvalues();
}

/// Operator norm (largest |eigenvalue|).
inline double spectral_norm(const HermitianMatrix& a) {
  const RVector ev = eigenvalues(a);
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

/// U f(Lambda) U^dagger for a precomputed decomposition.
inline HermitianMatrix apply_to_spectrum(const SpectralDecomposition& sd,
                                         const std::function<double(double)>& f) {
  RVector values = sd.eigenvalues;
  for (Eigen::Index i = 0; i < values.size(); ++i) values(i) = f(values(i));
  return sd.reconstruct(values);
}

struct LoewnerVerdict {
  double min_eigenvalue = 0.0;
  double tolerance = 0.0;
  bool holds = true;
  std::optional<CVector> witness_vector;
};

inline double default_loewner_tolerance(const HermitianMatrix& a, const HermitianMatrix& b) {
  return 1e-8 * (spectral_norm(a) + spectral_norm(b));
}

/// Verdict on A >= B. Failing verdicts always carry the eigenvector of A - B
/// attaining the minimum eigenvalue.
inline LoewnerVerdict loewner_compare(const HermitianMatrix& a, const HermitianMatrix& b, double tol) {
  require_same_dim(a, b, "loewner_compare");
  const SpectralDecomposition sd = spectral_decompose(a - b);
  LoewnerVerdict v;
  v.min_eigenvalue = sd.eigenvalues(0);
  v.tolerance = tol;
  v.holds = v.min_eigenvalue >= -tol;
  if (!v.holds) v.witness_vector = sd.eigenvectors.col(0);
  return v;
}

inline LoewnerVerdict loewner_compare(const HermitianMatrix& a, const HermitianMatrix& b) {
  return loewner_compare(a, b, default_loewner_tolerance(a, b));
}

inline double trace(const HermitianMatrix& a) { return a.matrix().trace().real(); }
inline double normalized_trace(const HermitianMatrix& a) {
  return trace(a) / static_cast<double>(a.dim());
}

/// Tr(A^dagger B).
inline cplx hs_inner(const CMatrix& a, const CMatrix& b) {
  return (a.adjoint() * b).trace();
}
inline cplx hs_inner(const HermitianMatrix& a, const HermitianMatrix& b) {
  require_same_dim(a, b, "hs_inner");
  return hs_inner(a.matrix(), b.matrix());
}

/// (sum |lambda_i|^p)^(1/p), p >= 1.
inline double schatten_norm(const HermitianMatrix& a, double p) {
  if (!(p >= 1.0)) {
    throw std::domain_error("schatten_norm: p must be >= 1, got " + std::to_string(p));
  }
  const RVector ev = eigenvalues(a);
  double s = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) s += std::pow(std::abs(ev(i)), p);
  return std::pow(s, 1.0 / p);
}

}  // namespace phient
