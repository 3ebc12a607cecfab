#pragma once

// Scalar functions Phi with analytic derivatives up to order 4, the
// divided-difference engine behind every Frechet derivative, and class
// membership metadata.

#include "phient/spectral.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace phient {

enum class ClassTag { C1, C2, C3, OperatorConvex, OutsideClass };

inline std::string to_string(ClassTag t) {
  switch (t) {
    case ClassTag::C1: return "C1";
    case ClassTag::C2: return "C2";
    case ClassTag::C3: return "C3";
    case ClassTag::OperatorConvex: return "operator_convex";
    case ClassTag::OutsideClass: return "outside_class";
  }
  return "?";
}

/// Lower bound for arguments of derivative evaluators on functions whose
/// derivatives blow up at zero (xlogx, fractional powers).
inline constexpr double kDerivativeFloor = 1e-12;

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool lo_closed = false;
  bool hi_closed = false;

  bool contains(double x) const {
    const bool above = lo_closed ? x >= lo : x > lo;
    const bool below = hi_closed ? x <= hi : x < hi;
    return above && below;
  }
  std::string str() const {
    std::ostringstream os;
    os << (lo_closed ? "[" : "(") << lo << ", " << hi << (hi_closed ? "]" : ")");
    return os.str();
  }
  static Interval real_line() { return {}; }
  static Interval closed_from(double lo) { return {lo, std::numeric_limits<double>::infinity(), true, false}; }
};

/// A convex (or deliberately non-convex) scalar function with its derivative
/// tower. `derivatives[k]` evaluates the k-th derivative for k <= max_order.
///
/// `polynomial` holds ascending coefficients when the function is a
/// polynomial; divided differences of polynomials are then evaluated exactly
/// through complete homogeneous symmetric sums instead of quotients.
struct ScalarFunction {
  std::string name;
  Interval domain;
  Interval derivative_domain;
  std::array<std::function<double(double)>, 5> derivatives;
  int max_order = 4;
  std::set<ClassTag> class_tags;
  std::vector<double> params;
  std::vector<double> polynomial;

  bool has_tag(ClassTag t) const { return class_tags.count(t) != 0; }
  bool is_polynomial() const { return !polynomial.empty(); }
  int polynomial_degree() const { return static_cast<int>(polynomial.size()) - 1; }
  bool is_affine() const { return is_polynomial() && polynomial_degree() <= 1; }

  double eval(int k, double u) const {
    if (k < 0 || k > max_order) {
      throw std::out_of_range(name + ": derivative order " + std::to_string(k) + " not available");
    }
    const Interval& dom = k == 0 ? domain : derivative_domain;
    if (!dom.contains(u)) {
      std::ostringstream os;
      os << name << ": argument " << u << " outside " << (k == 0 ? "domain " : "derivative domain ")
         << dom.str();
      throw std::domain_error(os.str());
    }
    return derivatives[static_cast<std::size_t>(k)](u);
  }
  double operator()(double u) const { return eval(0, u); }

  /// Psi = Phi' as a function in its own right (derivatives shifted by one).
  ScalarFunction derivative_view() const {
    ScalarFunction psi;
    psi.name = "d(" + name + ")";
    psi.domain = derivative_domain;
    psi.derivative_domain = derivative_domain;
    psi.max_order = max_order - 1;
    for (int k = 0; k < 4; ++k) psi.derivatives[static_cast<std::size_t>(k)] = derivatives[static_cast<std::size_t>(k + 1)];
    psi.params = params;
    if (is_polynomial()) {
      for (std::size_t i = 1; i < polynomial.size(); ++i) psi.polynomial.push_back(static_cast<double>(i) * polynomial[i]);
      if (psi.polynomial.empty()) psi.polynomial.push_back(0.0);
    }
    return psi;
  }
};

namespace detail {

inline std::vector<double> poly_derivative(const std::vector<double>& c) {
  std::vector<double> d;
  for (std::size_t i = 1; i < c.size(); ++i) d.push_back(static_cast<double>(i) * c[i]);
  if (d.empty()) d.push_back(0.0);
  return d;
}

inline double poly_eval(const std::vector<double>& c, double u) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * u + *it;
  return acc;
}

inline ScalarFunction make_polynomial(std::string name, std::vector<double> coeffs, Interval domain) {
  ScalarFunction f;
  f.name = std::move(name);
  f.domain = domain;
  f.derivative_domain = domain;
  f.polynomial = coeffs;
  std::vector<double> c = coeffs;
  for (std::size_t k = 0; k < 5; ++k) {
    f.derivatives[k] = [c](double u) { return poly_eval(c, u); };
    c = poly_derivative(c);
  }
  return f;
}

}  // namespace detail

inline ScalarFunction affine(double a, double b) {
  auto f = detail::make_polynomial("affine:" + std::to_string(a) + ":" + std::to_string(b), {a, b},
                                   Interval::real_line());
  f.params = {a, b};
  f.class_tags = {ClassTag::C1, ClassTag::C2, ClassTag::C3, ClassTag::OperatorConvex};
  return f;
}

inline ScalarFunction square() {
  auto f = detail::make_polynomial("square", {0.0, 0.0, 1.0}, Interval::real_line());
  f.class_tags = {ClassTag::C1, ClassTag::C2, ClassTag::C3, ClassTag::OperatorConvex};
  return f;
}

/// u^3; only used as a test function for third derivatives.
inline ScalarFunction cubic() {
  auto f = detail::make_polynomial("cubic", {0.0, 0.0, 0.0, 1.0}, Interval::real_line());
  f.class_tags = {ClassTag::OutsideClass};
  return f;
}

inline ScalarFunction quartic() {
  auto f = detail::make_polynomial("quartic", {0.0, 0.0, 0.0, 0.0, 1.0}, Interval::real_line());
  f.class_tags = {ClassTag::OutsideClass};
  return f;
}

inline ScalarFunction exponential() {
  ScalarFunction f;
  f.name = "exp";
  f.domain = Interval::real_line();
  f.derivative_domain = Interval::real_line();
  for (auto& d : f.derivatives) d = [](double u) { return std::exp(u); };
  f.class_tags = {ClassTag::OutsideClass};
  return f;
}

/// u log u on [0, inf) with 0 log 0 = 0. Derivatives need u >= 1e-12.
inline ScalarFunction xlogx() {
  ScalarFunction f;
  f.name = "xlogx";
  f.domain = Interval::closed_from(0.0);
  f.derivative_domain = Interval::closed_from(kDerivativeFloor);
  f.derivatives = {
      [](double u) { return u == 0.0 ? 0.0 : u * std::log(u); },
      [](double u) { return std::log(u) + 1.0; },
      [](double u) { return 1.0 / u; },
      [](double u) { return -1.0 / (u * u); },
      [](double u) { return 2.0 / (u * u * u); },
  };
  f.class_tags = {ClassTag::C1, ClassTag::C2, ClassTag::OperatorConvex};
  return f;
}

/// u^p on [0, inf). Exponents outside [1, 2] are only accepted with
/// `allow_outside_class` and are then tagged outside_class.
inline ScalarFunction power(double p, bool allow_outside_class = false) {
  const bool in_range = p >= 1.0 && p <= 2.0;
  if (!in_range && !allow_outside_class) {
    throw std::invalid_argument("power: exponent " + std::to_string(p) +
                                " outside [1, 2]; pass the outside-class override to use it");
  }
  ScalarFunction f;
  std::ostringstream name;
  name << "power:" << p;
  f.name = name.str();
  f.params = {p};
  f.domain = Interval::closed_from(0.0);
  f.derivative_domain = Interval::closed_from(kDerivativeFloor);
  for (std::size_t k = 0; k < 5; ++k) {
    f.derivatives[k] = [p, k](double u) {
      double coef = 1.0;
      for (std::size_t j = 0; j < k; ++j) coef *= (p - static_cast<double>(j));
      if (coef == 0.0) return 0.0;
      return coef * std::pow(u, p - static_cast<double>(k));
    };
  }
  if (p == 1.0 || p == 2.0) {
    f.polynomial = p == 1.0 ? std::vector<double>{0.0, 1.0} : std::vector<double>{0.0, 0.0, 1.0};
  }
  if (in_range) {
    f.class_tags = {ClassTag::C1, ClassTag::C2, ClassTag::OperatorConvex};
  } else {
    f.class_tags = {ClassTag::OutsideClass};
  }
  return f;
}

/// Parses the CLI/config naming scheme: "square", "xlogx", "power:1.5",
/// "affine:2:3", "quartic", "exp", "cubic".
inline ScalarFunction builtin(std::string_view spec, bool allow_outside_class = false) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : spec) {
    if (c == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  auto number = [&](std::size_t i) {
    try {
      std::size_t used = 0;
      double v = std::stod(parts.at(i), &used);
      if (used != parts[i].size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("builtin: bad numeric parameter in '" + std::string(spec) + "'");
    }
  };
  const std::string& head = parts[0];
  auto expect = [&](std::size_t n) {
    if (parts.size() != n) throw std::invalid_argument("builtin: wrong parameter count in '" + std::string(spec) + "'");
  };
  if (head == "square") { expect(1); return square(); }
  if (head == "xlogx") { expect(1); return xlogx(); }
  if (head == "quartic") { expect(1); return quartic(); }
  if (head == "exp") { expect(1); return exponential(); }
  if (head == "cubic") { expect(1); return cubic(); }
  if (head == "power") { expect(2); return power(number(1), allow_outside_class); }
  if (head == "affine") { expect(3); return affine(number(1), number(2)); }
  throw std::invalid_argument("builtin: unknown function '" + std::string(spec) + "'");
}

/// U f(Lambda) U^dagger, after checking the spectrum against f's domain.
inline HermitianMatrix apply_scalar_function(const ScalarFunction& f, const SpectralDecomposition& sd) {
  RVector values = sd.eigenvalues;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!f.domain.contains(values(i))) {
      std::ostringstream os;
      os << f.name << ": eigenvalue " << values(i) << " outside domain " << f.domain.str();
      throw std::domain_error(os.str());
    }
    values(i) = f.derivatives[0](values(i));
  }
  return sd.reconstruct(values);
}

inline HermitianMatrix apply_scalar_function(const ScalarFunction& f, const HermitianMatrix& a) {
  return apply_scalar_function(f, spectral_decompose(a));
}

// ---------------------------------------------------------------------------
// Divided differences
// ---------------------------------------------------------------------------

/// Cluster threshold below which a divided difference of the given order is
/// evaluated by a Taylor expansion around the cluster centre.
///
/// Order 1 uses 1e-7 * (1 + spectral diameter). Higher orders divide by the
/// spread more than once, so the quotient form loses digits much sooner; they
/// switch at a spread of 1e-3 relative to the node magnitude.
inline double coincidence_threshold(int order, double centre, double diameter) {
  if (order <= 1) return 1e-7 * (1.0 + diameter);
  return 1e-3 * std::max(std::abs(centre), 1e-3);
}

namespace detail {

/// Complete homogeneous symmetric polynomials h_0..h_maxdeg of ys.
inline std::vector<double> complete_homogeneous(std::span<const double> ys, int maxdeg) {
  std::vector<double> h(static_cast<std::size_t>(maxdeg + 1), 0.0);
  h[0] = 1.0;
  for (double y : ys) {
    for (int j = 1; j <= maxdeg; ++j) h[static_cast<std::size_t>(j)] += y * h[static_cast<std::size_t>(j - 1)];
  }
  return h;
}

inline double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

/// Divided difference over sorted nodes[lo..hi], with f(nodes[i]) cached in
/// `values`.
class DividedDifferenceEngine {
 public:
  DividedDifferenceEngine(const ScalarFunction& f, double diameter) : f_(f), diameter_(diameter) {}

  double operator()(std::span<const double> sorted_nodes, std::span<const double> cached_values) const {
    if (f_.is_polynomial()) return polynomial(sorted_nodes);
    return recurse(sorted_nodes, cached_values, 0, sorted_nodes.size() - 1);
  }

 private:
  double polynomial(std::span<const double> x) const {
    const int k = static_cast<int>(x.size()) - 1;
    const int deg = f_.polynomial_degree();
    if (k > deg) return 0.0;
    // f[x0..xk] = sum_m c_m h_{m-k}(x0..xk)
    const auto h = complete_homogeneous(x, deg - k);
    double acc = 0.0;
    for (int m = k; m <= deg; ++m) acc += f_.polynomial[static_cast<std::size_t>(m)] * h[static_cast<std::size_t>(m - k)];
    return acc;
  }

  double taylor(std::span<const double> x) const {
    const int k = static_cast<int>(x.size()) - 1;
    const double centre = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    std::vector<double> shifted(x.begin(), x.end());
    for (double& y : shifted) y -= centre;
    const int top = f_.max_order;
    const auto h = complete_homogeneous(shifted, top - k);
    double acc = 0.0;
    for (int m = k; m <= top; ++m) {
      acc += f_.eval(m, centre) / factorial(m) * h[static_cast<std::size_t>(m - k)];
    }
    return acc;
  }

  double recurse(std::span<const double> x, std::span<const double> v, std::size_t lo, std::size_t hi) const {
    if (lo == hi) return v[lo];
    const int order = static_cast<int>(hi - lo);
    const double spread = x[hi] - x[lo];
    const double centre = 0.5 * (x[hi] + x[lo]);
    if (spread <= coincidence_threshold(order, centre, diameter_)) {
      return taylor(x.subspan(lo, hi - lo + 1));
    }
    return (recurse(x, v, lo + 1, hi) - recurse(x, v, lo, hi - 1)) / spread;
  }

  const ScalarFunction& f_;
  double diameter_;
};

}  // namespace detail

/// f[x0, ..., xk] for arbitrary (possibly coincident) nodes.
inline double divided_difference(const ScalarFunction& f, std::span<const double> nodes, double diameter = -1.0) {
  if (nodes.empty()) throw std::invalid_argument("divided_difference: no nodes");
  if (static_cast<int>(nodes.size()) - 1 > f.max_order) {
    throw std::out_of_range(f.name + ": divided difference order exceeds available derivatives");
  }
  std::vector<double> x(nodes.begin(), nodes.end());
  std::sort(x.begin(), x.end());
  if (diameter < 0.0) diameter = x.back() - x.front();
  for (double u : x) {
    if (!f.derivative_domain.contains(u) && !(x.size() == 1 && f.domain.contains(u))) {
      std::ostringstream os;
      os << f.name << ": node " << u << " outside " << f.derivative_domain.str();
      throw std::domain_error(os.str());
    }
  }
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v[i] = f.derivatives[0](x[i]);
  return detail::DividedDifferenceEngine(f, diameter)(x, v);
}

/// Symmetric tensor of divided differences over all index tuples of the nodes:
/// d x d (order 1), d^3 (order 2), d^4 (order 3), stored row-major.
class DividedDifferenceTable {
 public:
  DividedDifferenceTable() = default;
  DividedDifferenceTable(int order, RVector nodes, std::vector<double> values)
      : order_(order), nodes_(std::move(nodes)), values_(std::move(values)) {}

  int order() const { return order_; }
  const RVector& nodes() const { return nodes_; }
  Eigen::Index dim() const { return nodes_.size(); }
  const std::vector<double>& values() const { return values_; }

  double operator()(Eigen::Index i, Eigen::Index j) const { return values_[static_cast<std::size_t>(i * dim() + j)]; }
  double operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) const {
    return values_[static_cast<std::size_t>((i * dim() + j) * dim() + k)];
  }
  double operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k, Eigen::Index l) const {
    return values_[static_cast<std::size_t>(((i * dim() + j) * dim() + k) * dim() + l)];
  }

 private:
  int order_ = 0;
  RVector nodes_;
  std::vector<double> values_;
};

inline DividedDifferenceTable divided_differences(const ScalarFunction& f, const RVector& nodes, int order) {
  if (order < 1 || order > 3) throw std::invalid_argument("divided_differences: order must be 1, 2 or 3");
  if (order > f.max_order) throw std::out_of_range(f.name + ": order exceeds available derivatives");
  const Eigen::Index d = nodes.size();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!f.derivative_domain.contains(nodes(i))) {
      std::ostringstream os;
      os << f.name << ": eigenvalue " << nodes(i) << " outside derivative domain " << f.derivative_domain.str();
      throw std::domain_error(os.str());
    }
  }
  const double diameter = d == 0 ? 0.0 : nodes.maxCoeff() - nodes.minCoeff();
  const detail::DividedDifferenceEngine engine(f, diameter);

  std::vector<double> fv(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) fv[static_cast<std::size_t>(i)] = f.derivatives[0](nodes(i));

  std::size_t total = 1;
  for (int k = 0; k <= order; ++k) total *= static_cast<std::size_t>(d);
  std::vector<double> values(total);

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(order + 1), 0);
  std::vector<Eigen::Index> sorted_idx(idx.size());
  std::vector<double> x(idx.size()), v(idx.size());
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (int p = order; p >= 0; --p) {
      idx[static_cast<std::size_t>(p)] = static_cast<Eigen::Index>(rem % static_cast<std::size_t>(d));
      rem /= static_cast<std::size_t>(d);
    }
    sorted_idx = idx;
    std::sort(sorted_idx.begin(), sorted_idx.end(),
              [&](Eigen::Index a, Eigen::Index b) { return nodes(a) < nodes(b) || (nodes(a) == nodes(b) && a < b); });
    for (std::size_t p = 0; p < sorted_idx.size(); ++p) {
      x[p] = nodes(sorted_idx[p]);
      v[p] = fv[static_cast<std::size_t>(sorted_idx[p])];
    }
    values[flat] = engine(x, v);
  }
  return DividedDifferenceTable(order, nodes, std::move(values));
}

}  // namespace phient
