#pragma once

// Seeded samplers. Every random stream is keyed by (seed, label, trial) so a
// trial draws the same numbers whether it runs first, last, or on another
// thread.

#include "phient/ensemble.hpp"
#include "phient/spectral.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace phient {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t stream_key(std::uint64_t seed, std::string_view label, std::uint64_t trial) {
  return splitmix64(splitmix64(seed) ^ splitmix64(fnv1a(label) + splitmix64(trial)));
}

class Rng {
 public:
  explicit Rng(std::uint64_t key) : engine_(splitmix64(key)) {}
  Rng(std::uint64_t seed, std::string_view label, std::uint64_t trial) : Rng(stream_key(seed, label, trial)) {}

  double normal() { return normal_(engine_); }
  double uniform(double lo = 0.0, double hi = 1.0) { return lo + (hi - lo) * unit_(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

/// Entries i.i.d. standard complex Gaussian (real and imaginary variance 1/2).
inline CMatrix complex_gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  CMatrix g(rows, cols);
  const double s = 1.0 / std::sqrt(2.0);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = cplx(s * rng.normal(), s * rng.normal());
  return g;
}

/// G^dagger G / d + floor I.
inline HermitianMatrix sample_psd(Eigen::Index d, double spectral_floor, Rng& rng) {
  const CMatrix g = complex_gaussian(d, d, rng);
  return HermitianMatrix::symmetrized(g.adjoint() * g / static_cast<double>(d) +
                                      spectral_floor * CMatrix::Identity(d, d));
}
inline HermitianMatrix sample_psd(Eigen::Index d, double spectral_floor, std::uint64_t seed) {
  Rng rng(seed);
  return sample_psd(d, spectral_floor, rng);
}

/// Hermitian part of a complex Gaussian matrix, scaled to O(1) spectrum.
inline HermitianMatrix sample_hermitian(Eigen::Index d, Rng& rng) {
  const CMatrix g = complex_gaussian(d, d, rng);
  return HermitianMatrix::symmetrized(g / std::sqrt(static_cast<double>(d)));
}
inline HermitianMatrix sample_hermitian(Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  return sample_hermitian(d, rng);
}

/// Haar unitary: QR of a complex Gaussian with the phases of R's diagonal
/// moved into Q.
inline CMatrix haar_unitary(Eigen::Index d, Rng& rng) {
  const CMatrix g = complex_gaussian(d, d, rng);
  Eigen::HouseholderQR<CMatrix> qr(g);
  CMatrix q = qr.householderQ() * CMatrix::Identity(d, d);
  const CMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < d; ++i) {
    const double mag = std::abs(r(i, i));
    if (mag > 0.0) q.col(i) *= r(i, i) / mag;
  }
  return q;
}

/// U diag(lambda) U^dagger with lambda uniform in [lo, hi] and U Haar.
inline HermitianMatrix sample_with_spectrum_in(Eigen::Index d, double lo, double hi, Rng& rng) {
  RVector lambda(d);
  for (Eigen::Index i = 0; i < d; ++i) lambda(i) = rng.uniform(lo, hi);
  const CMatrix u = haar_unitary(d, rng);
  return HermitianMatrix::symmetrized(u * lambda.cast<cplx>().asDiagonal() * u.adjoint());
}

/// Positive weights summing to one.
inline std::vector<double> sample_weights(std::size_t k, Rng& rng) {
  std::vector<double> w(k);
  double s = 0.0;
  for (auto& x : w) s += (x = rng.uniform(0.1, 1.0));
  for (auto& x : w) x /= s;
  return w;
}

inline MatrixEnsemble sample_ensemble(Eigen::Index d, std::size_t atoms, double spectral_floor, Rng& rng) {
  if (atoms < 1) throw std::invalid_argument("sample_ensemble: need at least one atom");
  auto w = sample_weights(atoms, rng);
  std::vector<HermitianMatrix> a;
  for (std::size_t i = 0; i < atoms; ++i) a.push_back(sample_psd(d, spectral_floor, rng));
  return MatrixEnsemble::from_atoms(std::move(w), std::move(a));
}
inline MatrixEnsemble sample_ensemble(Eigen::Index d, std::size_t atoms, std::uint64_t seed,
                                      double spectral_floor = kSpectralFloor) {
  Rng rng(seed);
  return sample_ensemble(d, atoms, spectral_floor, rng);
}

inline ProductEnsemble sample_product(Eigen::Index d, const std::vector<std::size_t>& support_sizes,
                                      double spectral_floor, Rng& rng) {
  if (support_sizes.empty()) throw std::invalid_argument("sample_product: need at least one factor");
  std::vector<std::vector<double>> factors;
  std::size_t total = 1;
  for (auto s : support_sizes) {
    if (s < 1) throw std::invalid_argument("sample_product: empty factor support");
    factors.push_back(sample_weights(s, rng));
    total *= s;
  }
  std::vector<HermitianMatrix> images;
  for (std::size_t f = 0; f < total; ++f) images.push_back(sample_psd(d, spectral_floor, rng));
  return ProductEnsemble(std::move(factors), std::move(images));
}
inline ProductEnsemble sample_product(Eigen::Index d, std::size_t n, const std::vector<std::size_t>& support_sizes,
                                      std::uint64_t seed, double spectral_floor = kSpectralFloor) {
  if (support_sizes.size() != n) throw std::invalid_argument("sample_product: support_sizes must have n entries");
  Rng rng(seed);
  return sample_product(d, support_sizes, spectral_floor, rng);
}

}  // namespace phient
