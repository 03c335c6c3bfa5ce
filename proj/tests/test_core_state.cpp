#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "ppe/state.hpp"

using namespace ppe;

namespace {

constexpr double kSqrtHalf = std::numbers::sqrt2 / 2;

PureState random_state(Rng& rng, int n) {
  std::normal_distribution<double> g;
  PureState psi(n);
  double s = 0;
  for (auto& a : psi.amps) {
    a = {g(rng), g(rng)};
    s += std::norm(a);
  }
  for (auto& a : psi.amps) a /= std::sqrt(s);
  return psi;
}

Gate random_unitary(Rng& rng) {
  std::uniform_real_distribution<double> u(0, 2 * std::numbers::pi);
  const double a = u(rng), b = u(rng), c = u(rng), th = u(rng) / 4;
  const cplx e1 = std::polar(1.0, a), e2 = std::polar(1.0, b), e3 = std::polar(1.0, c);
  return {e1 * std::cos(th), e2 * std::sin(th), -std::conj(e2) * e3 * std::sin(th), std::conj(e1) * e3 * std::cos(th)};
}

Matrix random_hermitian(Rng& rng, std::size_t d) {
  std::normal_distribution<double> g;
  Matrix m(d);
  for (std::size_t i = 0; i < d; ++i) {
    m(i, i) = g(rng);
    for (std::size_t j = i + 1; j < d; ++j) {
      m(i, j) = {g(rng), g(rng)};
      m(j, i) = std::conj(m(i, j));
    }
  }
  return m;
}

// Dense oracle: build |ψ⟩⟨ψ| and sum over the traced site's bit explicitly.
Matrix dense_trace_out_site(const Matrix& rho, int n, int site) {
  const Index d = Index{1} << n;
  const Index b = site_bit(site, n);
  auto squeeze = [&](Index z) {
    const Index hi = z >> (n - site);
    const Index lo = z & (b - 1);
    return (hi << (n - site - 1)) | lo;
  };
  Matrix out(d / 2);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      if ((i & b) == (j & b)) out(squeeze(i), squeeze(j)) += rho(i, j);
  return out;
}

}  // namespace

// Tripartition

TEST(Tripartition, DimensionsAndSites) {
  Tripartition p{2, 3, 4};
  EXPECT_EQ(p.total(), 9);
  EXPECT_EQ(p.dim_r(), 4u);
  EXPECT_EQ(p.dim_e(), 8u);
  EXPECT_EQ(p.dim_s(), 16u);
  EXPECT_EQ(p.dim_re(), 32u);
  EXPECT_EQ(p.first_e(), 2);
  EXPECT_EQ(p.first_s(), 5);
  EXPECT_NO_THROW(p.validate());
}

TEST(Tripartition, RejectsBadCounts) {
  EXPECT_THROW((Tripartition{0, 1, 1}.validate()), InvalidSpec);
  EXPECT_THROW((Tripartition{1, -1, 1}.validate()), InvalidSpec);
  EXPECT_THROW((Tripartition{1, 1, 0}.validate()), InvalidSpec);
  EXPECT_THROW((Tripartition{1, 20, 2}.validate()), SizeCapExceeded);
  EXPECT_NO_THROW((Tripartition{1, 0, 1}.validate()));
}

// make_product_state

TEST(ProductState, AllUpIsFirstBasisState) {
  const auto psi = make_product_state(ProductStateSpec::all_up(4));
  EXPECT_EQ(psi.amps[0], cplx(1.0));
  for (Index z = 1; z < psi.dim(); ++z) EXPECT_EQ(psi.amps[z], cplx(0.0));
}

TEST(ProductState, PlusIsUniform) {
  const int n = 6;
  const auto psi = make_product_state(ProductStateSpec::plus(n));
  for (const auto& a : psi.amps) {
    EXPECT_NEAR(a.real(), std::pow(2.0, -n / 2.0), 1e-15);
    EXPECT_EQ(a.imag(), 0.0);
  }
}

TEST(ProductState, TwoSiteHandExample) {
  ProductStateSpec s;
  s.sites = {{0.6, 0.8}, {1.0, 0.0}};
  const auto psi = make_product_state(s);
  const cplx want[] = {0.6, 0.0, 0.8, 0.0};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(std::abs(psi.amps[i] - want[i]), 0.0, 1e-15);
}

TEST(ProductState, AmplitudeIsProductOfSites) {
  Rng rng(3);
  const auto spec = random_product_state(rng, 5);
  const auto psi = make_product_state(spec);
  for (Index z = 0; z < psi.dim(); ++z) EXPECT_NEAR(std::abs(psi.amps[z] - spec.amplitude(z, 0, 5)), 0.0, 1e-15);
  EXPECT_NEAR(psi.norm(), 1.0, 1e-12);
}

TEST(ProductState, RejectsUnnormalizedSite) {
  ProductStateSpec s;
  s.sites = {{1.0, 0.1}};
  EXPECT_THROW(make_product_state(s), InvalidSpec);
}

// random_product_state

TEST(RandomProductState, DeterministicAndNormalized) {
  const auto a = random_product_state(42, 7);
  const auto b = random_product_state(42, 7);
  ASSERT_EQ(a.sites.size(), b.sites.size());
  for (std::size_t i = 0; i < a.sites.size(); ++i) {
    EXPECT_EQ(a.sites[i], b.sites[i]);
    EXPECT_NEAR(std::norm(a.sites[i][0]) + std::norm(a.sites[i][1]), 1.0, 1e-12);
  }
  EXPECT_NE(random_product_state(43, 7).sites[0], a.sites[0]);
}

TEST(RandomProductState, HaarFourthMoment) {
  // ∫|A|⁴ over Haar qubits = 1/3.
  const auto s = random_product_state(7, 100000);
  double m = 0;
  for (const auto& site : s.sites) m += std::norm(site[0]) * std::norm(site[0]);
  EXPECT_NEAR(m / 1e5, 1.0 / 3.0, 0.01);
}

// apply_one_qubit

TEST(OneQubit, IdentityLeavesStateUnchanged) {
  Rng rng(1);
  auto psi = random_state(rng, 4);
  const auto before = psi.amps;
  apply_one_qubit(psi, 2, Gate{1.0, 0.0, 0.0, 1.0});
  EXPECT_EQ(psi.amps, before);
}

TEST(OneQubit, XRotationOnUp) {
  auto psi = make_product_state(ProductStateSpec::all_up(1));
  apply_one_qubit(psi, 0, x_rotation(std::numbers::pi / 4));
  EXPECT_NEAR(std::abs(psi.amps[0] - cplx(kSqrtHalf, 0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(psi.amps[1] - cplx(0, -kSqrtHalf)), 0.0, 1e-15);
}

TEST(OneQubit, XRotationGroupProperty) {
  Rng rng(2);
  const double g = 0.37;
  auto a = random_state(rng, 3);
  auto b = a;
  apply_one_qubit(a, 1, x_rotation(g));
  apply_one_qubit(a, 1, x_rotation(g));
  apply_one_qubit(b, 1, x_rotation(2 * g));
  for (Index z = 0; z < a.dim(); ++z) EXPECT_NEAR(std::abs(a.amps[z] - b.amps[z]), 0.0, 1e-14);
}

TEST(OneQubit, SiteZeroIsMostSignificantBit) {
  auto psi = make_product_state(ProductStateSpec::all_up(3));
  apply_one_qubit(psi, 0, Gate{0.0, 1.0, 1.0, 0.0});
  EXPECT_NEAR(std::abs(psi.amps[4]), 1.0, 1e-15);
}

TEST(OneQubit, RejectsNonUnitary) {
  auto psi = make_product_state(ProductStateSpec::all_up(2));
  EXPECT_THROW(apply_one_qubit(psi, 0, Gate{1.0, 0.1, 0.0, 1.0}), InvalidSpec);
  EXPECT_THROW(apply_one_qubit(psi, 5, Gate{1.0, 0.0, 0.0, 1.0}), InvalidSpec);
}

// apply_diagonal

TEST(Diagonal, ZeroPhasesAreIdentity) {
  Rng rng(4);
  auto psi = random_state(rng, 5);
  const auto before = psi.amps;
  DiagonalGenerator gen;
  gen.n_sites = 5;
  apply_diagonal(psi, gen);
  for (Index z = 0; z < psi.dim(); ++z) EXPECT_NEAR(std::abs(psi.amps[z] - before[z]), 0.0, 1e-15);
}

TEST(Diagonal, SingleFieldRelativePhase) {
  const double h = 0.3;
  auto psi = make_product_state(ProductStateSpec::plus(2));
  DiagonalGenerator gen;
  gen.n_sites = 2;
  gen.fields.push_back({1, h});
  apply_diagonal(psi, gen);
  // site 1 up (index 0) vs down (index 1)
  const cplx ratio = psi.amps[0] / psi.amps[1];
  EXPECT_NEAR(std::abs(ratio - std::polar(1.0, -2 * h)), 0.0, 1e-14);
}

TEST(Diagonal, ZZCouplingPhases) {
  const double J = 0.45;
  ProductStateSpec s;
  s.sites = {{kSqrtHalf, kSqrtHalf}, {kSqrtHalf, -kSqrtHalf}};  // |+−⟩
  auto psi = make_product_state(s);
  const auto before = psi.amps;
  DiagonalGenerator gen;
  gen.n_sites = 2;
  gen.pairs.push_back({0, 1, J});
  apply_diagonal(psi, gen);
  const double phases[] = {-J, J, J, -J};  // exp(-i J s0 s1) multiplies each amplitude by e^{-i φ}
  for (int z = 0; z < 4; ++z) {
    const cplx f = psi.amps[z] / before[z];
    EXPECT_NEAR(std::abs(f - std::polar(1.0, phases[z])), 0.0, 1e-14) << z;
  }
}

TEST(Diagonal, OnTheFlyMatchesDenseTable) {
  Rng rng(5);
  DiagonalGenerator gen;
  gen.n_sites = 17;
  std::normal_distribution<double> g;
  for (int i = 0; i < 17; ++i) gen.fields.push_back({i, g(rng)});
  for (int i = 0; i + 1 < 17; ++i) gen.pairs.push_back({i, i + 1, g(rng)});
  gen.subsets.push_back({0b10101, g(rng)});
  auto psi = make_product_state(random_product_state(rng, 17));
  auto ref = psi;
  apply_diagonal(psi, gen);
  for (Index z = 0; z < ref.dim(); z += 97) {
    const cplx want = ref.amps[z] * std::polar(1.0, -gen.angle(z));
    EXPECT_NEAR(std::abs(psi.amps[z] - want), 0.0, 1e-14);
  }
}

TEST(NormPreservation, ThousandRandomGates) {
  Rng rng(6);
  auto psi = random_state(rng, 8);
  std::uniform_int_distribution<int> site(0, 7);
  std::normal_distribution<double> g;
  for (int k = 0; k < 1000; ++k) {
    if (k % 2) {
      apply_one_qubit(psi, site(rng), random_unitary(rng));
    } else {
      DiagonalGenerator gen;
      gen.n_sites = 8;
      gen.fields.push_back({site(rng), g(rng)});
      gen.pairs.push_back({site(rng), site(rng), g(rng)});
      apply_diagonal(psi, gen);
    }
  }
  EXPECT_NEAR(psi.norm(), 1.0, 1e-10);
}

// partial_trace

TEST(PartialTrace, UpUpKeepFirst) {
  const auto rho = partial_trace(make_product_state(ProductStateSpec::all_up(2)), std::vector<int>{0});
  EXPECT_NEAR(std::abs(rho(0, 0) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(rho(1, 1)), 0.0, 1e-15);
}

TEST(PartialTrace, BellStateIsMaximallyMixed) {
  PureState bell(2);
  bell.amps = {kSqrtHalf, 0, 0, kSqrtHalf};
  const auto rho = partial_trace(bell, std::vector<int>{0});
  EXPECT_LT(rho.max_abs_diff(0.5 * Matrix::identity(2)), 1e-15);
}

TEST(PartialTrace, MatchesDenseOracle) {
  Rng rng(8);
  const auto psi = random_state(rng, 3);
  const auto rho = partial_trace(psi, std::vector<int>{0, 2});
  const auto dense = dense_trace_out_site(Matrix::projector(psi.amps), 3, 1);
  EXPECT_LT(rho.max_abs_diff(dense), 1e-14);
  EXPECT_NEAR(rho.trace().real(), 1.0, 1e-12);
}

TEST(PartialTrace, KeepAllIsProjector) {
  Rng rng(9);
  const auto psi = random_state(rng, 4);
  const auto rho = partial_trace(psi, site_range(0, 4));
  EXPECT_LT(rho.max_abs_diff(Matrix::projector(psi.amps)), 1e-15);
}

TEST(PartialTrace, NestedTracesAreAssociative) {
  Rng rng(10);
  const auto psi = random_state(rng, 5);
  // Trace E∪S at once versus S first, then E.
  const auto direct = partial_trace(psi, site_range(0, 2));
  const auto keep_re = partial_trace(psi, site_range(0, 4));
  const auto nested = partial_trace(keep_re, 4, site_range(0, 2));
  EXPECT_LT(direct.max_abs_diff(nested), 1e-12);
}

TEST(PartialTrace, ProductStateGivesTensorOfSiteProjectors) {
  Rng rng(11);
  const auto spec = random_product_state(rng, 4);
  const auto rho = partial_trace(make_product_state(spec), std::vector<int>{1, 3});
  const cplx a[] = {spec.sites[1][0], spec.sites[1][1]};
  const cplx b[] = {spec.sites[3][0], spec.sites[3][1]};
  const auto want = kron(Matrix::projector(a), Matrix::projector(b));
  EXPECT_LT(rho.max_abs_diff(want), 1e-14);
}

TEST(PartialTrace, RejectsEmptyKeep) {
  const auto psi = make_product_state(ProductStateSpec::plus(2));
  EXPECT_THROW(partial_trace(psi, std::vector<int>{}), InvalidSpec);
}

// project_and_condition

TEST(ProjectAndCondition, ProductStateGivesRMarginal) {
  Rng rng(12);
  const auto spec = random_product_state(rng, 5);
  const auto psi = make_product_state(spec);
  Tripartition part{2, 1, 2};
  const auto rho_r = partial_trace(psi, site_range(0, 2));
  for (Index o = 0; o < 4; ++o) {
    const auto c = project_and_condition(psi, part, MeasurementBasis::x(2), o);
    ASSERT_TRUE(c.rho);
    EXPECT_LT(c.rho->max_abs_diff(rho_r), 1e-12);
  }
}

TEST(ProjectAndCondition, ProbabilitiesSumToOneAndFirstMomentIdentity) {
  Rng rng(13);
  const auto psi = random_state(rng, 6);
  Tripartition part{2, 1, 3};
  MeasurementBasis basis = MeasurementBasis::uniform(3, SiteBasis::tilted(0.7, 1.9));
  double total = 0;
  Matrix avg(4);
  for (Index o = 0; o < 8; ++o) {
    const auto c = project_and_condition(psi, part, basis, o);
    total += c.probability;
    if (c.rho) avg.add_scaled(*c.rho, c.probability);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_LT(avg.max_abs_diff(partial_trace(psi, site_range(0, 2))), 1e-10);
}

TEST(ProjectAndCondition, GhzHandExample) {
  PureState ghz(3);
  ghz.amps[0] = kSqrtHalf;
  ghz.amps[7] = kSqrtHalf;
  Tripartition part{1, 0, 2};
  const auto c = project_and_condition(ghz, part, MeasurementBasis::z(2), 0);
  EXPECT_NEAR(c.probability, 0.5, 1e-15);
  ASSERT_TRUE(c.rho);
  EXPECT_NEAR(std::abs((*c.rho)(0, 0) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs((*c.rho)(1, 1)), 0.0, 1e-15);
  // outcome ↑↓ never happens: undefined conditional state
  const auto none = project_and_condition(ghz, part, MeasurementBasis::z(2), 1);
  EXPECT_EQ(none.probability, 0.0);
  EXPECT_FALSE(none.rho);
}

TEST(ProjectAndCondition, ConditionalStatesAreDensityMatrices) {
  Rng rng(14);
  const auto psi = random_state(rng, 7);
  Tripartition part{2, 2, 3};
  for (Index o = 0; o < 8; ++o) {
    const auto c = project_and_condition(psi, part, MeasurementBasis::x(3), o);
    ASSERT_TRUE(c.rho);
    EXPECT_NO_THROW(validate_density_matrix(*c.rho));
  }
}

TEST(MeasurementBasis, SiteBasesAreOrthonormal) {
  for (const auto& b : {SiteBasis::z(), SiteBasis::x(), SiteBasis::tilted(1.1, -0.4), SiteBasis::tilted(3.0, 2.0)})
    EXPECT_TRUE(is_unitary(b.unitary(), 1e-12));
}

TEST(MeasurementBasis, MustCoverS) {
  const auto psi = make_product_state(ProductStateSpec::plus(3));
  EXPECT_THROW(project_and_condition(psi, Tripartition{1, 0, 2}, MeasurementBasis::z(1), 0), InvalidSpec);
  EXPECT_THROW(project_and_condition(psi, Tripartition{1, 1, 2}, MeasurementBasis::z(2), 0), DimensionMismatch);
}

// trace_norm_distance

TEST(TraceNorm, Examples) {
  Rng rng(15);
  const auto psi = random_state(rng, 3);
  const auto rho = partial_trace(psi, std::vector<int>{0, 1});
  EXPECT_NEAR(trace_norm_distance(rho, rho), 0.0, 1e-15);
  Matrix up(2), down(2);
  up(0, 0) = 1;
  down(1, 1) = 1;
  EXPECT_NEAR(trace_norm_distance(up, down), 1.0, 1e-14);
  EXPECT_NEAR(trace_norm_distance(0.5 * Matrix::identity(2), up), 0.5, 1e-14);
  EXPECT_THROW(trace_norm_distance(up, Matrix::identity(4)), DimensionMismatch);
}

TEST(TraceNorm, EigenvaluesMatchEigenOracle) {
  Rng rng(16);
  for (std::size_t d : {2u, 4u, 8u, 16u, 64u}) {
    const auto m = random_hermitian(rng, d);
    Eigen::MatrixXcd e(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(e);
    const auto ours = hermitian_eigenvalues(m);
    for (std::size_t i = 0; i < d; ++i)
      EXPECT_NEAR(ours[i], solver.eigenvalues()[static_cast<Eigen::Index>(i)], 1e-10 * static_cast<double>(d));
  }
}

TEST(TraceNorm, SymmetricAndTriangleInequality) {
  Rng rng(17);
  for (int k = 0; k < 1000; ++k) {
    const auto a = random_hermitian(rng, 4), b = random_hermitian(rng, 4), c = random_hermitian(rng, 4);
    const double ab = trace_norm_distance(a, b), ba = trace_norm_distance(b, a);
    EXPECT_EQ(ab, ba);
    EXPECT_LE(trace_norm_distance(a, c), ab + trace_norm_distance(b, c) + 1e-10);
  }
}

TEST(TraceNorm, UnitTraceInputsStayInUnitInterval) {
  Rng rng(18);
  for (int k = 0; k < 50; ++k) {
    const auto a = partial_trace(random_state(rng, 4), site_range(0, 2));
    const auto b = partial_trace(random_state(rng, 4), site_range(0, 2));
    const double d = trace_norm_distance(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0 + 1e-12);
  }
}
