#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "ppe/lbit.hpp"

using namespace ppe;

namespace {

struct LineFit {
  double slope, intercept;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return {sxy / sxx, my - sxy / sxx * mx};
}

// Hamiltonian with every coupling above `max_order` removed and energies
// resummed from the remaining table.
LBitHamiltonian truncated(const LBitHamiltonian& full, int max_order) {
  LBitHamiltonian h = full;
  std::erase_if(h.couplings, [&](const auto& c) { return c.order > max_order; });
  h.max_order = max_order;
  for (Index z = 0; z < h.energies.size(); ++z) h.energies[z] = h.energy_from_couplings(z);
  return h;
}

}  // namespace

TEST(BuildLbit, SingleSite) {
  const auto h = build_lbit(1, 0.5, 0, 3);
  ASSERT_EQ(h.couplings.size(), 1u);
  const double r = h.couplings[0].r;
  EXPECT_EQ(h.couplings[0].j, r);
  EXPECT_EQ(h.energies[0], r);
  EXPECT_EQ(h.energies[1], -r);
  EXPECT_EQ(effective_field(h, 0, 0), r);
  EXPECT_EQ(effective_field(h, 0, 1), r);
}

TEST(BuildLbit, TwoSites) {
  const auto h = build_lbit(2, 0.5, 0, 4);
  ASSERT_EQ(h.couplings.size(), 3u);
  std::map<Index, double> j;
  for (const auto& c : h.couplings) j[c.mask] = c.j;
  const double j0 = j.at(0b10), j1 = j.at(0b01), j01 = j.at(0b11);
  EXPECT_NEAR(h.energies[0b00], j0 + j1 + j01, 1e-15);
  EXPECT_NEAR(h.energies[0b01], j0 - j1 - j01, 1e-15);
  EXPECT_NEAR(h.energies[0b10], -j0 + j1 - j01, 1e-15);
  EXPECT_NEAR(h.energies[0b11], -j0 - j1 + j01, 1e-15);
  EXPECT_NEAR(effective_field(h, 0, 0b00), j0 + j01, 1e-15);
  EXPECT_NEAR(effective_field(h, 0, 0b01), j0 - j01, 1e-15);
  // Span 1 coupling carries the exponential factor.
  for (const auto& c : h.couplings) {
    if (c.mask == 0b11) {
      EXPECT_NEAR(c.j, c.r * std::exp(-2.0), 1e-15);
    }
  }
}

TEST(BuildLbit, EnergyCacheMatchesCouplings) {
  for (int n : {3, 7, 10}) {
    const auto h = build_lbit(n, 0.7, 0, 100 + n);
    double worst = 0;
    for (Index z = 0; z < h.energies.size(); ++z)
      worst = std::max(worst, std::abs(h.energies[z] - h.energy_from_couplings(z)));
    EXPECT_LT(worst, 1e-12) << n;
  }
}

TEST(BuildLbit, DeterministicUnderSeed) {
  const auto a = build_lbit(8, 0.5, 0, 42), b = build_lbit(8, 0.5, 0, 42), c = build_lbit(8, 0.5, 0, 43);
  EXPECT_EQ(a.energies, b.energies);
  EXPECT_NE(a.energies, c.energies);
}

TEST(BuildLbit, CouplingStatistics) {
  const auto h = build_lbit(12, 0.5, 0, 5);
  ASSERT_EQ(h.couplings.size(), 4095u);
  std::map<int, std::vector<double>> by_span;
  for (const auto& c : h.couplings) by_span[c.span].push_back(c.r);
  auto sample_std = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  };
  for (const auto& [span, rs] : by_span) {
    if (rs.size() >= 1000) {
      EXPECT_NEAR(sample_std(rs), 1.0, 0.1) << "span " << span;
    }
  }

  // ln ⟨|J|⟩_span is linear in span with slope −1/ξ.
  std::vector<double> x, y;
  for (const auto& [span, rs] : by_span) {
    double s = 0;
    for (const auto& c : h.couplings)
      if (c.span == span) s += std::abs(c.j);
    x.push_back(span);
    y.push_back(std::log(s / static_cast<double>(rs.size())));
  }
  const double xi_fit = -1.0 / fit_line(x, y).slope;
  EXPECT_NEAR(xi_fit, 0.5, 0.075);
}

TEST(BuildLbit, TruncationDefaultsAndCaps) {
  const auto h = build_lbit(15, 0.5, 0, 1);
  EXPECT_EQ(h.max_order, 4);
  EXPECT_FALSE(h.warning.empty());
  EXPECT_NEAR(h.truncation_bound(), std::exp(-8.0), 1e-18);
  for (const auto& c : h.couplings) EXPECT_LE(c.order, 4);
  EXPECT_TRUE(build_lbit(6, 0.5, 0, 1).warning.empty());
  EXPECT_EQ(build_lbit(6, 0.5, 0, 1).truncation_bound(), 0.0);
  EXPECT_THROW(build_lbit(17, 0.5, 17, 1), SizeCapExceeded);
  EXPECT_THROW(build_lbit(4, 0.0, 0, 1), InvalidSpec);
  EXPECT_THROW(build_lbit(0, 0.5, 0, 1), SizeCapExceeded);
}

TEST(BuildLbit, CouplingCsvListsEveryTerm) {
  const auto h = build_lbit(3, 0.5, 0, 2);
  std::ostringstream os;
  h.write_coupling_csv(os);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("sites,order,span,r,J\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 8);
  EXPECT_NE(s.find("\n0 1 2,3,2,"), std::string::npos);
}

TEST(EffectiveField, RangeTruncationDecays) {
  // Dropping couplings of order ≥ 3 changes H_i by at most Σ|J| over the
  // dropped terms touching i; the nearest dropped term has span 2.
  const int n = 8, site = 3;
  for (double xi : {0.3, 0.5}) {
    const auto full = build_lbit(n, xi, 0, 9);
    const auto trunc = truncated(full, 2);
    double bound = 0;
    for (const auto& c : full.couplings)
      if (c.order > 2 && (c.mask & site_bit(site, n))) bound += std::abs(c.j);
    double worst = 0;
    for (Index z = 0; z < full.energies.size(); ++z)
      worst = std::max(worst, std::abs(effective_field(full, site, z) - effective_field(trunc, site, z)));
    EXPECT_LE(worst, bound + 1e-12);
    EXPECT_GT(worst, 0.0);
    const double scaled = worst * std::exp(2.0 / xi);
    EXPECT_GT(scaled, 1e-2) << xi;
    EXPECT_LT(scaled, 1e2) << xi;
  }
}

TEST(EvolveLbit, TimeZeroAndEigenstate) {
  const auto h = build_lbit(6, 0.5, 0, 3);
  const auto spec = random_product_state(4, 6);
  EXPECT_EQ(evolve_lbit(spec, h, 0).amps, make_product_state(spec).amps);

  const auto up = ProductStateSpec::all_up(6);
  const auto psi = evolve_lbit(up, h, 123.4);
  EXPECT_NEAR(std::abs(psi.amps[0]), 1.0, 1e-15);
  for (Index z = 1; z < psi.dim(); ++z) EXPECT_EQ(psi.amps[z], cplx(0));
  EXPECT_THROW(evolve_lbit(ProductStateSpec::all_up(5), h, 1), DimensionMismatch);
}

TEST(EvolveLbit, MatchesGenericDiagonalEvolution) {
  const int n = 8;
  const auto h = build_lbit(n, 0.5, 0, 6);
  const auto spec = random_product_state(7, n);
  for (double t : {0.3, 17.0}) {
    DiagonalGenerator gen;
    gen.n_sites = n;
    for (const auto& c : h.couplings) gen.subsets.push_back({c.mask, c.j * t});
    auto oracle = make_product_state(spec);
    apply_diagonal(oracle, gen);
    const auto psi = evolve_lbit(spec, h, t);
    EXPECT_NEAR(psi.norm(), 1.0, 1e-12);
    for (Index z = 0; z < psi.dim(); ++z) EXPECT_NEAR(std::abs(psi.amps[z] - oracle.amps[z]), 0.0, 1e-12);
  }
}

// Closed-form Z ensemble against the statevector route on random instances.
TEST(LbitZClosedForm, MatchesBruteForceOracle) {
  double worst_rho = 0, worst_delta = 0;
  for (int k = 0; k < 50; ++k) {
    const int le = k % 5, ls = 1 + (k / 5) % 5;
    Tripartition part{1, le, ls};
    const int n = part.total();
    const auto h = build_lbit(n, 0.3 + 0.05 * (k % 7), 0, derive_seed(11, {std::uint64_t(k)}));
    const auto spec = random_product_state(derive_seed(12, {std::uint64_t(k)}), n);
    for (double t : {0.37, 1e6}) {
      const auto closed = z_ppe_closed_form(spec, h, t, part);
      const auto brute = build_ppe(evolve_lbit(spec, h, t), part, MeasurementBasis::z(ls));
      ASSERT_EQ(closed.entries.size(), brute.entries.size());
      for (std::size_t i = 0; i < closed.entries.size(); ++i) {
        EXPECT_EQ(closed.entries[i].outcome, brute.entries[i].outcome);
        EXPECT_NEAR(closed.entries[i].weight, brute.entries[i].weight, 1e-10);
        worst_rho = std::max(worst_rho, closed.entries[i].rho.max_abs_diff(brute.entries[i].rho));
      }
      worst_delta = std::max(worst_delta, std::abs(z_delta_closed_form(spec, h, t, part) - delta(brute)));
      worst_delta = std::max(worst_delta, std::abs(delta(closed) - delta(brute)));
    }
  }
  EXPECT_LT(worst_rho, 1e-10);
  EXPECT_LT(worst_delta, 1e-10);
}

TEST(LbitZClosedForm, StationarityAndHermiticity) {
  Tripartition part{1, 3, 4};
  const auto h = build_lbit(part.total(), 0.5, 0, 13);
  const auto spec = random_product_state(14, part.total());
  const LBitZEnsemble ens(spec, h, part);
  const auto ref = ens.ensemble(0);
  for (double t : {0.5, 30.0, 1e4, 1e8}) {
    const auto e = ens.ensemble(t);
    for (std::size_t i = 0; i < e.entries.size(); ++i) {
      EXPECT_EQ(e.entries[i].weight, ref.entries[i].weight);
      EXPECT_EQ(e.entries[i].rho(0, 0), ref.entries[i].rho(0, 0));
      EXPECT_EQ(e.entries[i].rho(1, 1), ref.entries[i].rho(1, 1));
      EXPECT_EQ(e.entries[i].rho(1, 0), std::conj(e.entries[i].rho(0, 1)));
    }
    // Brute-force diagonals also stay put.
    const auto brute = build_ppe(evolve_lbit(spec, h, t), part, MeasurementBasis::z(4));
    for (std::size_t i = 0; i < brute.entries.size(); ++i)
      EXPECT_NEAR(brute.entries[i].rho(0, 0).real(), ref.entries[i].rho(0, 0).real(), 1e-12);
  }
}

TEST(LbitZClosedForm, TimeZeroGivesInitialState) {
  Tripartition part{1, 2, 3};
  const auto h = build_lbit(6, 0.5, 0, 15);
  const auto spec = random_product_state(16, 6);
  const auto ens = z_ppe_closed_form(spec, h, 0, part);
  const auto r0 = Matrix::projector(std::vector<cplx>{spec.sites[0][0], spec.sites[0][1]});
  for (const auto& e : ens.entries) EXPECT_LT(e.rho.max_abs_diff(r0), 1e-15);
  EXPECT_NEAR(z_delta_closed_form(spec, h, 0, part), 0.0, 1e-16);
  EXPECT_LT(delta(x_ppe(spec, h, 0, part)), 1e-12);
  EXPECT_THROW(z_ppe_closed_form(random_product_state(1, 7), build_lbit(7, 0.5, 0, 1), 1, Tripartition{2, 2, 3}),
               InvalidSpec);
}

TEST(LbitZClosedForm, NoEnvironmentMatchesOracle) {
  Tripartition part{1, 0, 2};
  const auto h = build_lbit(3, 0.5, 0, 17);
  const auto spec = random_product_state(18, 3);
  const auto closed = z_ppe_closed_form(spec, h, 2.5, part);
  const auto brute = build_ppe(evolve_lbit(spec, h, 2.5), part, MeasurementBasis::z(2));
  for (std::size_t i = 0; i < closed.entries.size(); ++i)
    EXPECT_LT(closed.entries[i].rho.max_abs_diff(brute.entries[i].rho), 1e-12);
}

TEST(LbitZClosedForm, DeepMblWindowIsFlat) {
  // R couples to S only through spans ≥ L_E + 1, so Δ stays at the float floor
  // while t·e^{−(L_E+1)/ξ} is small.
  const double xi = 0.4;
  Tripartition part{1, 4, 4};
  const double scale = std::exp((part.l_e + 1) / xi);
  for (int k = 0; k < 20; ++k) {
    const auto h = build_lbit(part.total(), xi, 0, derive_seed(19, {std::uint64_t(k)}));
    const LBitZEnsemble ens(random_product_state(derive_seed(20, {std::uint64_t(k)}), part.total()), h, part);
    for (double f = 1e-8; f <= 1e-5; f *= 10) EXPECT_LT(ens.delta(f * scale), 1e-8) << "k=" << k << " f=" << f;
    EXPECT_GT(ens.delta(10 * scale), 1e-6) << "k=" << k;
  }
}

TEST(LbitX, RhoUpUpMatchesSummationOracle) {
  Tripartition part{1, 2, 3};
  double worst = 0;
  for (int k = 0; k < 5; ++k) {
    const auto h = build_lbit(6, 0.6, 0, derive_seed(21, {std::uint64_t(k)}));
    const auto spec = random_product_state(derive_seed(22, {std::uint64_t(k)}), 6);
    for (double t : {0.0, 1.3, 250.0}) {
      const auto ens = x_ppe(spec, h, t, part);
      for (const auto& e : ens.entries)
        worst = std::max(worst, std::abs(e.rho(0, 0).real() - x_rho_upup_by_summation(spec, h, t, part, e.outcome)));
    }
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(LbitX, OnsetGrowsWithEnvironment) {
  const double xi = 0.5;
  std::vector<double> grid;
  for (int k = -4; k <= 36; ++k) grid.push_back(std::pow(10.0, k / 4.0));
  std::vector<double> onset;
  for (int le : {2, 3, 4}) {
    Tripartition part{1, le, 4};
    std::vector<double> mean(grid.size(), 0.0);
    const int reps = 20;
    for (int r = 0; r < reps; ++r) {
      const auto h = build_lbit(part.total(), xi, 0, derive_seed(23, {std::uint64_t(le), std::uint64_t(r)}));
      const auto spec = random_product_state(derive_seed(24, {std::uint64_t(le), std::uint64_t(r)}), part.total());
      for (std::size_t i = 0; i < grid.size(); ++i) mean[i] += delta(x_ppe(spec, h, grid[i], part)) / reps;
    }
    double plateau = 0;
    for (std::size_t i = grid.size() - 8; i < grid.size(); ++i) plateau += mean[i] / 8;
    std::size_t i = 0;
    while (i < grid.size() && mean[i] < 0.1 * plateau) ++i;
    ASSERT_LT(i, grid.size());
    onset.push_back(grid[i]);
  }
  EXPECT_LE(onset[0], onset[1]);
  EXPECT_LE(onset[1], onset[2]);
  EXPECT_LT(onset[0], onset[2]);
}

TEST(DeltaInfinity, ZExamples) {
  Tripartition part{1, 3, 2};
  auto spec = ProductStateSpec::plus(6);
  EXPECT_NEAR(delta_infinity_z(spec, part), 0.25 * std::pow(0.5, 3), 1e-15);
  spec.sites[0] = {1.0, 0.0};
  EXPECT_EQ(delta_infinity_z(spec, part), 0.0);
  EXPECT_THROW(delta_infinity_z(spec, Tripartition{2, 2, 2}), InvalidSpec);
}

TEST(DeltaInfinity, ZMatchesLateTimeAverage) {
  // Long-time average of the closed-form Δ against the dephased value.
  Tripartition part{1, 2, 8};
  const auto h = build_lbit(part.total(), 0.5, 0, 25);
  const auto spec = random_product_state(26, part.total());
  const LBitZEnsemble ens(spec, h, part);
  double avg = 0;
  const int n = 400;
  for (int i = 0; i < n; ++i) avg += ens.delta(1e9 * (1 + i * 0.731)) / n;
  EXPECT_NEAR(avg / delta_infinity_z(spec, part), 1.0, 0.25);
}

TEST(DeltaInfinity, HaarAverageZ) {
  // Haar qubit: E|a|²|b|² = 1/6 and E(|a|⁴ + |b|⁴) = 2/3.
  Rng rng(27);
  for (int le : {2, 3, 4}) {
    Tripartition part{1, le, 1};
    const int n = 10000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double v = delta_infinity_z(random_product_state(rng, part.total()), part);
      s += v;
      s2 += v * v;
    }
    const double mean = s / n, sem = std::sqrt((s2 / n - mean * mean) / n);
    EXPECT_NEAR(mean, std::pow(2.0 / 3.0, le) / 6.0, 3 * sem) << le;
  }
}

TEST(DeltaInfinity, XScalingReference) {
  for (int le = 0; le < 8; ++le) {
    const double a = delta_infinity_x_scaling(Tripartition{1, le, 2});
    const double b = delta_infinity_x_scaling(Tripartition{1, le + 1, 2});
    EXPECT_NEAR(b / a, 2.0 / 3.0, 1e-14);
  }
  EXPECT_NEAR(delta_infinity_x_scaling(Tripartition{1, 0, 2}), 1.0 / 6.0, 1e-15);

  // The per-state expression averages to the reference over Haar specs.
  Rng rng(28);
  Tripartition part{1, 3, 1};
  const int n = 20000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = delta_infinity_x(random_product_state(rng, 5), part);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n, sem = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, delta_infinity_x_scaling(part), 3 * sem);
}

TEST(PhaseDifference, LateTimeAccuracy) {
  // Difference taken before scaling by t keeps the phase well-defined.
  const double e1 = 0.123456789, e2 = 0.123456788;
  const cplx p = phase_difference(e1, e2, 1e8);
  const long double x = (static_cast<long double>(e1) - e2) * 1e8L;
  EXPECT_NEAR(std::arg(p), -std::remainder(static_cast<double>(x), 2 * std::numbers::pi), 1e-9);
  EXPECT_NEAR(std::abs(p), 1.0, 1e-15);
}
