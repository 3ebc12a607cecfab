#include "phient/channels.hpp"

#include <gtest/gtest.h>

using namespace phient;

namespace {

double maxabs(const CMatrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Kraus, RejectsNonUnital) {
  CMatrix k = CMatrix::Identity(2, 2) * 0.9;
  EXPECT_THROW(KrausChannel::from_kraus({k}), std::invalid_argument);
  EXPECT_THROW(KrausChannel::from_kraus({}), std::invalid_argument);
  EXPECT_THROW(KrausChannel::from_kraus({CMatrix::Identity(2, 2), CMatrix::Zero(3, 3)}), std::invalid_argument);
}

TEST(Kraus, UnitalButNotTracePreserving) {
  // K1 = |0><0| + |0><1| / sqrt2 style families: sum K K^dag = I but sum K^dag K != I
  CMatrix k1 = CMatrix::Zero(2, 2), k2 = CMatrix::Zero(2, 2);
  k1(0, 0) = 1.0 / std::sqrt(2.0);
  k1(0, 1) = 1.0 / std::sqrt(2.0);
  k2(1, 1) = 1.0;
  EXPECT_NO_THROW(KrausChannel::from_kraus({k1, k2}));
  EXPECT_THROW(KrausChannel::from_kraus({k1, k2}, true), std::invalid_argument);
}

TEST(Channels, IdentityDephasingAndUnital) {
  Rng rng(1, "chan", 0);
  const auto a = sample_hermitian(3, rng);
  EXPECT_EQ(maxabs(apply_channel(KrausChannel::identity(3), a).matrix() - a.matrix()), 0.0);
  const auto deph = apply_channel(dephasing_channel(3), a);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const cplx want = i == j ? a.matrix()(i, j) : cplx(0.0);
      EXPECT_NEAR(std::abs(deph.matrix()(i, j) - want), 0.0, 1e-15);
    }
  const auto n = random_unital_channel(3, 4, rng);
  EXPECT_LE(maxabs(apply_channel(n, HermitianMatrix::identity(3)).matrix() - CMatrix::Identity(3, 3)), 1e-12);
  EXPECT_NEAR(trace(apply_channel(n, a)), trace(a), 1e-12);
  EXPECT_THROW(apply_channel(n, HermitianMatrix::identity(2)), std::invalid_argument);
}

TEST(Channels, JsonRoundTrip) {
  const auto n = random_unital_channel(2, 3, 99);
  const auto back = channel_from_json(json::parse(to_json_value(n).dump()));
  ASSERT_EQ(back.kraus_ops.size(), 3u);
  EXPECT_EQ(back.kraus_ops[1], n.kraus_ops[1]);
  json bad = to_json_value(n);
  bad["dim"] = 5;
  EXPECT_THROW(channel_from_json(bad), std::invalid_argument);
}

TEST(Monotonicity, TraceVariantHoldsUnderUnitalChannels) {
  for (std::uint64_t t = 0; t < 20; ++t) {
    Rng rng(2, "mono", t);
    const auto e = sample_ensemble(3, 3, 0.05, rng);
    const auto n = random_unital_channel(3, 1 + t % 3, rng);
    for (const auto& f : {xlogx(), square(), power(1.5)}) {
      const auto r = check_monotonicity(f, n, e, Variant::trace);
      EXPECT_TRUE(r.holds) << f.name << " " << r.margin;
    }
  }
}

TEST(Monotonicity, LiteralOperatorFormFailsForUnitaryChannel) {
  // H(U Z U^dag) = U H(Z) U^dag; the difference with H(Z) is traceless and
  // nonzero, so it cannot be positive semidefinite
  Rng rng(3, "literal", 0);
  const auto e = sample_ensemble(3, 3, 0.05, rng);
  const auto n = unitary_channel(haar_unitary(3, rng));
  const auto r = check_monotonicity(square(), n, e, Variant::operator_valued);
  EXPECT_FALSE(r.holds);
  const auto diff = operator_phi_entropy(square(), e) - operator_phi_entropy(square(), apply_channel(n, e));
  EXPECT_NEAR(trace(diff), 0.0, 1e-12);
  EXPECT_LT(min_eigenvalue(diff), -1e-3);
}

TEST(Monotonicity, CovariantOperatorFormHolds) {
  for (std::uint64_t t = 0; t < 30; ++t) {
    Rng rng(4, "covariant", t);
    const auto e = sample_ensemble(2 + t % 3, 3, 0.05, rng);
    const auto n = random_unital_channel(e.dim, 1 + t % 4, rng);
    const auto r = check_covariant_monotonicity(square(), n, e);
    EXPECT_TRUE(r.holds) << r.margin;
  }
  // unitary channel: equality
  Rng rng(4, "covariant-eq", 0);
  const auto e = sample_ensemble(3, 2, 0.05, rng);
  EXPECT_NEAR(check_covariant_monotonicity(square(), unitary_channel(haar_unitary(3, rng)), e).raw_margin, 0.0, 1e-12);
}

TEST(Monotonicity, ClassGate) {
  const auto e = sample_ensemble(2, 2, 7);
  const auto n = dephasing_channel(2);
  EXPECT_THROW(check_monotonicity(quartic(), n, e, Variant::trace), ClassGateError);
  EXPECT_THROW(check_monotonicity(xlogx(), n, e, Variant::operator_valued), ClassGateError);
  EXPECT_THROW(check_covariant_monotonicity(xlogx(), n, e), ClassGateError);
  EXPECT_NO_THROW(check_covariant_monotonicity(xlogx(), n, e, true));
}

TEST(OperatorJensen, HoldsForOperatorConvexFunctions) {
  for (std::uint64_t t = 0; t < 20; ++t) {
    Rng rng(5, "jensen", t);
    const auto a = sample_psd(3, 0.05, rng);
    const auto n = random_unital_channel(3, 3, rng);
    for (const auto& f : {square(), xlogx(), power(1.5)}) {
      EXPECT_TRUE(operator_jensen_check(f, n, a).holds) << f.name;
      EXPECT_TRUE(operator_jensen_check(f, n, a, Variant::trace).holds) << f.name;
    }
  }
}

TEST(OperatorJensen, ScalarDephasingExample) {
  // dephasing of [[1,1],[1,1]]: phi(I) <= diag(phi(A)) for square gives I <= diag(2, 2)
  Eigen::MatrixXd m(2, 2);
  m << 1, 1, 1, 1;
  const auto r = operator_jensen_check(square(), dephasing_channel(2), HermitianMatrix::real(m));
  EXPECT_TRUE(r.holds);
  EXPECT_NEAR(r.raw_margin, 1.0, 1e-14);
}

TEST(OperatorJensen, UnitalNonTracePreservingChannel) {
  CMatrix k1 = CMatrix::Zero(2, 2), k2 = CMatrix::Zero(2, 2);
  k1(0, 0) = 1.0 / std::sqrt(2.0);
  k1(0, 1) = 1.0 / std::sqrt(2.0);
  k2(1, 1) = 1.0;
  const auto n = KrausChannel::from_kraus({k1, k2});
  for (std::uint64_t t = 0; t < 10; ++t) {
    Rng rng(6, "jensen-ntp", t);
    EXPECT_TRUE(operator_jensen_check(xlogx(), n, sample_psd(2, 0.05, rng)).holds);
  }
}
