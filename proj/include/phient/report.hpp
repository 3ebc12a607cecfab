#pragma once

// Machine-readable verdicts shared by every check, plus JSON encoding of the
// matrix values they carry as witnesses.

#include "phient/spectral.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

namespace phient {

using json = nlohmann::json;

/// Verdict of one inequality or identity check.
///
/// `margin` is normalised by `scale` (always >= 1 for inequality checks, or
/// the magnitude of the compared quantities for relative-error checks), so a
/// single `tolerance` applies regardless of matrix magnitude. holds <=>
/// margin >= -tolerance.
struct VerificationReport {
  std::string check_name;
  bool holds = true;
  double margin = std::numeric_limits<double>::infinity();
  double raw_margin = std::numeric_limits<double>::infinity();
  double scale = 1.0;
  double tolerance = 0.0;
  std::int64_t trials = 0;
  std::int64_t violations = 0;
  std::uint64_t seed = 0;
  json witness;  // null when absent
  std::string note;

  void finalize() { holds = margin >= -tolerance; }
};

/// Single-instance report from an absolute margin and a comparison scale.
inline VerificationReport make_report(std::string name, double raw_margin, double scale, double tolerance) {
  VerificationReport r;
  r.check_name = std::move(name);
  r.raw_margin = raw_margin;
  r.scale = scale;
  r.margin = scale > 0.0 ? raw_margin / scale : raw_margin;
  r.tolerance = tolerance;
  r.trials = 1;
  r.finalize();
  r.violations = r.holds ? 0 : 1;
  return r;
}

/// Folds a per-trial report into an aggregate; the aggregate keeps the worst
/// trial's margin and witness.
inline void absorb(VerificationReport& acc, const VerificationReport& trial) {
  const bool first = acc.trials == 0;
  acc.trials += trial.trials;
  acc.violations += trial.violations;
  if (first || trial.margin < acc.margin) {
    acc.margin = trial.margin;
    acc.raw_margin = trial.raw_margin;
    acc.scale = trial.scale;
    acc.witness = trial.witness;
  }
  acc.finalize();
}

// JSON doubles must survive a round trip; non-finite values are encoded as
// strings because JSON has no literal for them.
inline json encode_double(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}
inline double decode_double(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::numeric_limits<double>::quiet_NaN();
}

inline void to_json(json& j, const VerificationReport& r) {
  j = json{{"check_name", r.check_name},
           {"holds", r.holds},
           {"margin", encode_double(r.margin)},
           {"raw_margin", encode_double(r.raw_margin)},
           {"scale", encode_double(r.scale)},
           {"tolerance", encode_double(r.tolerance)},
           {"trials", r.trials},
           {"violations", r.violations},
           {"seed", r.seed},
           {"witness", r.witness},
           {"note", r.note}};
}

inline void from_json(const json& j, VerificationReport& r) {
  r.check_name = j.at("check_name").get<std::string>();
  r.holds = j.at("holds").get<bool>();
  r.margin = decode_double(j.at("margin"));
  r.raw_margin = decode_double(j.at("raw_margin"));
  r.scale = decode_double(j.at("scale"));
  r.tolerance = decode_double(j.at("tolerance"));
  r.trials = j.at("trials").get<std::int64_t>();
  r.violations = j.value("violations", std::int64_t{0});
  r.seed = j.value("seed", std::uint64_t{0});
  r.witness = j.value("witness", json());
  r.note = j.value("note", std::string());
}

// ---------------------------------------------------------------------------
// Matrix JSON: {"dim": d, "re": [[...]], "im": [[...]]}, row-major; "im" is
// omitted for real matrices and optional on input.
// ---------------------------------------------------------------------------

inline json matrix_to_json(const CMatrix& m) {
  json re = json::array(), im = json::array();
  bool any_imag = false;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json rr = json::array(), ir = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      rr.push_back(m(i, k).real());
      ir.push_back(m(i, k).imag());
      if (m(i, k).imag() != 0.0) any_imag = true;
    }
    re.push_back(rr);
    im.push_back(ir);
  }
  json j{{"dim", m.rows()}, {"re", re}};
  if (any_imag) j["im"] = im;
  return j;
}

inline CMatrix matrix_from_json(const json& j) {
  const auto& re = j.at("re");
  const auto d = static_cast<Eigen::Index>(re.size());
  if (j.contains("dim") && j.at("dim").get<Eigen::Index>() != d) {
    throw std::invalid_argument("matrix JSON: 'dim' does not match row count");
  }
  CMatrix m(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto& row = re.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != d) throw std::invalid_argument("matrix JSON: matrix is not square");
    for (Eigen::Index k = 0; k < d; ++k) m(i, k) = cplx(row.at(static_cast<std::size_t>(k)).get<double>(), 0.0);
  }
  if (j.contains("im")) {
    const auto& im = j.at("im");
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index k = 0; k < d; ++k) {
        m(i, k) += cplx(0.0, im.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>());
      }
    }
  }
  return m;
}

inline json to_json_value(const HermitianMatrix& h) { return matrix_to_json(h.matrix()); }
inline HermitianMatrix hermitian_from_json(const json& j) { return HermitianMatrix::from_entries(matrix_from_json(j)); }

}  // namespace phient
