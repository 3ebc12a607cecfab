#pragma once

// Finitely supported random matrices: plain ensembles, product ensembles
// Z = z(X_1, ..., X_n) over independent discrete factors, and coupled pairs.

#include "phient/report.hpp"
#include "phient/spectral.hpp"

#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace phient {

inline constexpr double kWeightSumTolerance = 1e-12;

/// Spectra of ensembles fed to derivative-based checks are kept above this.
inline constexpr double kSpectralFloor = 1e-3;

namespace detail {

inline void check_weights(const std::vector<double>& w, const std::string& where) {
  if (w.empty()) throw std::invalid_argument(where + ": empty support");
  double s = 0.0;
  for (double x : w) {
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument(where + ": weight outside [0, 1]: " + std::to_string(x));
    s += x;
  }
  if (std::abs(s - 1.0) > kWeightSumTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << where << ": weights sum to " << s << ", not 1";
    throw std::invalid_argument(os.str());
  }
}

inline void check_psd(const HermitianMatrix& a, const std::string& where) {
  const double lo = min_eigenvalue(a);
  const double slack = 1e-10 * (1.0 + spectral_norm(a));
  if (lo < -slack) {
    std::ostringstream os;
    os << where << ": atom is not PSD (min eigenvalue " << lo << ")";
    throw std::domain_error(os.str());
  }
}

}  // namespace detail

struct MatrixEnsemble {
  Eigen::Index dim = 0;
  std::vector<double> weights;
  std::vector<HermitianMatrix> atoms;

  /// Validates weights and PSD atoms.
  static MatrixEnsemble from_atoms(std::vector<double> weights, std::vector<HermitianMatrix> atoms) {
    if (weights.size() != atoms.size()) throw std::invalid_argument("MatrixEnsemble: weight/atom count mismatch");
    detail::check_weights(weights, "MatrixEnsemble");
    const Eigen::Index d = atoms.front().dim();
    for (const auto& a : atoms) {
      if (a.dim() != d) throw std::invalid_argument("MatrixEnsemble: atoms of different dimension");
      detail::check_psd(a, "MatrixEnsemble");
    }
    return {d, std::move(weights), std::move(atoms)};
  }

  /// No PSD requirement; used for directions X in coupled pairs.
  static MatrixEnsemble from_hermitian_atoms(std::vector<double> weights, std::vector<HermitianMatrix> atoms) {
    if (weights.size() != atoms.size()) throw std::invalid_argument("MatrixEnsemble: weight/atom count mismatch");
    detail::check_weights(weights, "MatrixEnsemble");
    const Eigen::Index d = atoms.front().dim();
    for (const auto& a : atoms)
      if (a.dim() != d) throw std::invalid_argument("MatrixEnsemble: atoms of different dimension");
    return {d, std::move(weights), std::move(atoms)};
  }

  static MatrixEnsemble deterministic(const HermitianMatrix& a) { return from_atoms({1.0}, {a}); }

  std::size_t size() const { return atoms.size(); }
};

inline double min_spectrum(const MatrixEnsemble& e) {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& a : e.atoms) lo = std::min(lo, min_eigenvalue(a));
  return lo;
}

/// Z = z(X_1, ..., X_n) with independent discrete factors. Outcome labels are
/// 0-based indices into each factor's weight list; images are stored flat with
/// the last factor varying fastest.
class ProductEnsemble {
 public:
  ProductEnsemble() = default;

  ProductEnsemble(std::vector<std::vector<double>> factors, std::vector<HermitianMatrix> images)
      : factors_(std::move(factors)), images_(std::move(images)) {
    if (factors_.empty()) throw std::invalid_argument("ProductEnsemble: no factors");
    for (std::size_t i = 0; i < factors_.size(); ++i)
      detail::check_weights(factors_[i], "ProductEnsemble factor " + std::to_string(i));
    strides_.assign(factors_.size(), 1);
    for (std::size_t i = factors_.size() - 1; i > 0; --i) strides_[i - 1] = strides_[i] * factors_[i].size();
    if (images_.size() != strides_[0] * factors_[0].size()) {
      throw std::invalid_argument("ProductEnsemble: z map needs " + std::to_string(strides_[0] * factors_[0].size()) +
                                  " images, got " + std::to_string(images_.size()));
    }
    for (const auto& a : images_) {
      if (a.dim() != images_.front().dim()) throw std::invalid_argument("ProductEnsemble: images of different dimension");
      detail::check_psd(a, "ProductEnsemble");
    }
  }

  std::size_t factor_count() const { return factors_.size(); }
  Eigen::Index dim() const { return images_.front().dim(); }
  const std::vector<std::vector<double>>& factors() const { return factors_; }
  const std::vector<double>& factor(std::size_t i) const { return factors_.at(i); }
  std::size_t support_size(std::size_t i) const { return factors_.at(i).size(); }
  std::size_t outcome_count() const { return images_.size(); }
  const std::vector<HermitianMatrix>& images() const { return images_; }

  std::size_t flat_index(const std::vector<std::size_t>& outcome) const {
    if (outcome.size() != factors_.size()) throw std::invalid_argument("ProductEnsemble: outcome tuple has wrong length");
    std::size_t flat = 0;
    for (std::size_t i = 0; i < outcome.size(); ++i) {
      if (outcome[i] >= factors_[i].size()) {
        throw std::out_of_range("ProductEnsemble: outcome " + std::to_string(outcome[i]) + " out of range for factor " +
                                std::to_string(i));
      }
      flat += outcome[i] * strides_[i];
    }
    return flat;
  }

  std::vector<std::size_t> outcome(std::size_t flat) const {
    std::vector<std::size_t> o(factors_.size());
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      o[i] = flat / strides_[i];
      flat %= strides_[i];
    }
    return o;
  }

  const HermitianMatrix& at(const std::vector<std::size_t>& outcome) const { return images_[flat_index(outcome)]; }

  double weight(const std::vector<std::size_t>& outcome) const {
    double w = 1.0;
    for (std::size_t i = 0; i < outcome.size(); ++i) w *= factors_[i][outcome[i]];
    return w;
  }

  /// Joint law as a plain ensemble (one atom per outcome tuple, in flat order).
  MatrixEnsemble joint() const {
    std::vector<double> w(images_.size());
    for (std::size_t f = 0; f < images_.size(); ++f) w[f] = weight(outcome(f));
    return {dim(), std::move(w), images_};
  }

  /// Law of Z over factor i with the other factors held at `others`
  /// (length n-1, in factor order with i skipped).
  MatrixEnsemble slice(std::size_t i, const std::vector<std::size_t>& others) const {
    if (i >= factors_.size()) throw std::out_of_range("ProductEnsemble: factor index " + std::to_string(i) + " out of range");
    if (others.size() + 1 != factors_.size()) {
      throw std::invalid_argument("ProductEnsemble: fixed tuple must have " + std::to_string(factors_.size() - 1) +
                                  " entries");
    }
    std::vector<std::size_t> full;
    for (std::size_t k = 0, j = 0; k < factors_.size(); ++k) full.push_back(k == i ? 0 : others[j++]);
    std::vector<HermitianMatrix> atoms;
    for (std::size_t x = 0; x < factors_[i].size(); ++x) {
      full[i] = x;
      atoms.push_back(at(full));
    }
    return {dim(), factors_[i], std::move(atoms)};
  }

  /// Law of Z over every factor except i, with X_i held at `value`.
  MatrixEnsemble complement_slice(std::size_t i, std::size_t value) const {
    if (i >= factors_.size()) throw std::out_of_range("ProductEnsemble: factor index " + std::to_string(i) + " out of range");
    if (value >= factors_[i].size()) throw std::out_of_range("ProductEnsemble: outcome out of range");
    std::vector<double> w;
    std::vector<HermitianMatrix> atoms;
    for (std::size_t f = 0; f < images_.size(); ++f) {
      const auto o = outcome(f);
      if (o[i] != value) continue;
      double p = 1.0;
      for (std::size_t k = 0; k < o.size(); ++k)
        if (k != i) p *= factors_[k][o[k]];
      w.push_back(p);
      atoms.push_back(images_[f]);
    }
    return {dim(), std::move(w), std::move(atoms)};
  }

  /// All tuples for the factors other than i, with their joint weights.
  std::vector<std::pair<std::vector<std::size_t>, double>> complement_outcomes(std::size_t i) const {
    std::vector<std::size_t> sizes;
    std::vector<std::size_t> which;
    for (std::size_t k = 0; k < factors_.size(); ++k)
      if (k != i) {
        sizes.push_back(factors_[k].size());
        which.push_back(k);
      }
    std::size_t total = 1;
    for (auto s : sizes) total *= s;
    std::vector<std::pair<std::vector<std::size_t>, double>> out;
    for (std::size_t f = 0; f < total; ++f) {
      std::vector<std::size_t> tup(sizes.size());
      std::size_t rem = f;
      for (std::size_t k = sizes.size(); k > 0; --k) {
        tup[k - 1] = rem % sizes[k - 1];
        rem /= sizes[k - 1];
      }
      double w = 1.0;
      for (std::size_t k = 0; k < tup.size(); ++k) w *= factors_[which[k]][tup[k]];
      out.emplace_back(std::move(tup), w);
    }
    return out;
  }

 private:
  std::vector<std::vector<double>> factors_;
  std::vector<HermitianMatrix> images_;
  std::vector<std::size_t> strides_;
};

/// Coupled pair (A, X) on one sample space: A PSD atoms, X Hermitian.
struct PairEnsemble {
  std::vector<double> weights;
  std::vector<HermitianMatrix> a;
  std::vector<HermitianMatrix> x;

  static PairEnsemble from_atoms(std::vector<double> w, std::vector<HermitianMatrix> a, std::vector<HermitianMatrix> x) {
    if (w.size() != a.size() || w.size() != x.size()) throw std::invalid_argument("PairEnsemble: size mismatch");
    detail::check_weights(w, "PairEnsemble");
    for (std::size_t i = 0; i < a.size(); ++i) {
      require_same_dim(a[i], a.front(), "PairEnsemble");
      require_same_dim(x[i], a.front(), "PairEnsemble");
    }
    return {std::move(w), std::move(a), std::move(x)};
  }
};

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline json to_json_value(const MatrixEnsemble& e) {
  json atoms = json::array();
  for (std::size_t i = 0; i < e.size(); ++i) atoms.push_back({{"w", e.weights[i]}, {"m", to_json_value(e.atoms[i])}});
  return {{"dim", e.dim}, {"atoms", atoms}};
}

inline MatrixEnsemble ensemble_from_json(const json& j) {
  std::vector<double> w;
  std::vector<HermitianMatrix> atoms;
  for (const auto& a : j.at("atoms")) {
    w.push_back(a.at("w").get<double>());
    atoms.push_back(hermitian_from_json(a.at("m")));
  }
  if (atoms.empty()) throw std::invalid_argument("ensemble JSON: no atoms");
  auto e = MatrixEnsemble::from_atoms(std::move(w), std::move(atoms));
  if (j.contains("dim") && j.at("dim").get<Eigen::Index>() != e.dim) {
    throw std::invalid_argument("ensemble JSON: 'dim' does not match atoms");
  }
  return e;
}

inline std::string outcome_key(const std::vector<std::size_t>& o) {
  std::string s;
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(o[i]);
  }
  return s;
}

inline std::vector<std::size_t> parse_outcome_key(std::string key) {
  if (!key.empty() && key.front() == '<') key.erase(0, 1);
  if (!key.empty() && key.back() == '>') key.pop_back();
  std::vector<std::size_t> o;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(part, &used);
      if (used != part.size() || v < 0) throw std::invalid_argument(part);
      o.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw std::invalid_argument("product ensemble JSON: bad outcome key '" + key + "'");
    }
  }
  return o;
}

inline json to_json_value(const ProductEnsemble& p) {
  json z = json::object();
  for (std::size_t f = 0; f < p.outcome_count(); ++f) z[outcome_key(p.outcome(f))] = to_json_value(p.images()[f]);
  return {{"factors", p.factors()}, {"z", z}};
}

inline ProductEnsemble product_from_json(const json& j) {
  auto factors = j.at("factors").get<std::vector<std::vector<double>>>();
  std::size_t total = 1;
  for (const auto& f : factors) total *= f.size();
  std::vector<std::optional<HermitianMatrix>> slots(total);
  std::vector<std::size_t> strides(factors.size(), 1);
  for (std::size_t i = factors.size(); i-- > 1;) strides[i - 1] = strides[i] * factors[i].size();
  for (const auto& [key, m] : j.at("z").items()) {
    const auto o = parse_outcome_key(key);
    if (o.size() != factors.size()) throw std::invalid_argument("product ensemble JSON: key '" + key + "' has wrong arity");
    std::size_t flat = 0;
    for (std::size_t i = 0; i < o.size(); ++i) {
      if (o[i] >= factors[i].size()) throw std::invalid_argument("product ensemble JSON: key '" + key + "' out of range");
      flat += o[i] * strides[i];
    }
    if (slots[flat]) throw std::invalid_argument("product ensemble JSON: duplicate key '" + key + "'");
    slots[flat] = hermitian_from_json(m);
  }
  std::vector<HermitianMatrix> images;
  for (std::size_t f = 0; f < total; ++f) {
    if (!slots[f]) throw std::invalid_argument("product ensemble JSON: z map is not total");
    images.push_back(*slots[f]);
  }
  return ProductEnsemble(std::move(factors), std::move(images));
}

}  // namespace phient
