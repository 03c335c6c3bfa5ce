#pragma once

#include <bit>
#include <cmath>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "ppe/ensemble.hpp"
#include "ppe/rng.hpp"
#include "ppe/state.hpp"

namespace ppe {

/// Diagonal ℓ-bit Hamiltonian H = Σ_S J_S Π_{i∈S} Z_i over site subsets S with
/// J_S = r_S exp(-span(S)/ξ), r_S ~ N(0, 1).
struct LBitHamiltonian {
  struct Coupling {
    Index mask;  // basis-index bit layout
    int order;
    int span;
    double r;
    double j;
  };

  int n_sites = 0;
  double xi = 0.5;
  int max_order = 0;
  std::uint64_t seed = 0;
  std::vector<Coupling> couplings;
  std::vector<double> energies;  // E_z for every basis state z
  std::string warning;

  /// Largest possible |J| / |r| among omitted couplings (0 when none omitted).
  double truncation_bound() const {
    return max_order >= n_sites ? 0.0 : std::exp(-static_cast<double>(max_order) / xi);
  }

  /// E_z summed directly from the coupling table.
  double energy_from_couplings(Index z) const {
    double e = 0;
    for (const auto& c : couplings) e += (std::popcount(z & c.mask) & 1) ? -c.j : c.j;
    return e;
  }

  void write_coupling_csv(std::ostream& os) const {
    os << "sites,order,span,r,J\n";
    os.precision(17);
    for (const auto& c : couplings) {
      std::string sites;
      for (int i = 0; i < n_sites; ++i)
        if (c.mask & site_bit(i, n_sites)) sites += (sites.empty() ? "" : " ") + std::to_string(i);
      os << sites << ',' << c.order << ',' << c.span << ',' << c.r << ',' << c.j << '\n';
    }
  }
};

namespace detail {
// In-place unnormalized Walsh–Hadamard transform:
//   out[z] = Σ_m in[m] (-1)^{popcount(m & z)}.
inline void walsh_hadamard(std::vector<double>& a) {
  for (std::size_t h = 1; h < a.size(); h <<= 1)
    for (std::size_t i = 0; i < a.size(); i += 2 * h)
      for (std::size_t j = i; j < i + h; ++j) {
        const double x = a[j], y = a[j + h];
        a[j] = x + y;
        a[j + h] = x - y;
      }
}
}  // namespace detail

/// Draws every coupling of order 1..max_order (max_order = 0 picks all subsets
/// up to 14 sites and order 4 beyond). Draw order is increasing mask.
inline LBitHamiltonian build_lbit(int n_sites, double xi, int max_order, std::uint64_t seed) {
  if (n_sites < 1 || n_sites > kMaxSites) throw SizeCapExceeded("l-bit chain length out of range");
  if (!(xi > 0)) throw InvalidSpec("localization length must be positive");
  LBitHamiltonian h;
  h.n_sites = n_sites;
  h.xi = xi;
  h.seed = seed;
  if (max_order <= 0) {
    max_order = n_sites <= 14 ? n_sites : 4;
    if (max_order < n_sites)
      h.warning = "couplings truncated at order 4; omitted |J| <= |r| * " +
                  std::to_string(std::exp(-4.0 / xi));
  }
  max_order = std::min(max_order, n_sites);
  if (max_order == n_sites && n_sites > 16)
    throw SizeCapExceeded("all-subset l-bit couplings limited to 16 sites");
  h.max_order = max_order;

  Rng rng = make_rng(seed);
  std::normal_distribution<double> gauss;
  const Index dim = Index{1} << n_sites;
  std::vector<double> table(dim, 0.0);
  for (Index mask = 1; mask < dim; ++mask) {
    const int order = std::popcount(mask);
    if (order > max_order) continue;
    // Highest set bit is the leftmost site.
    const int first = n_sites - 1 - (std::bit_width(mask) - 1);
    const int last = n_sites - 1 - std::countr_zero(mask);
    const int span = last - first;
    const double r = gauss(rng);
    const double j = r * std::exp(-static_cast<double>(span) / xi);
    h.couplings.push_back({mask, order, span, r, j});
    table[mask] = j;
  }
  detail::walsh_hadamard(table);
  h.energies = std::move(table);
  return h;
}

/// Field felt by ℓ-bit `site` given the other spins in `z`:
///   (E[z, site up] − E[z, site down]) / 2.
inline double effective_field(const LBitHamiltonian& h, int site, Index z) {
  const Index b = site_bit(site, h.n_sites);
  return 0.5 * (h.energies[z & ~b] - h.energies[z | b]);
}

/// exp(-i (e1 - e2) t) with the difference and reduction in extended precision.
inline cplx phase_difference(double e1, double e2, double t) {
  constexpr long double two_pi = 6.283185307179586476925286766559L;
  long double x = (static_cast<long double>(e1) - static_cast<long double>(e2)) * static_cast<long double>(t);
  x = std::fmod(x, two_pi);
  const double r = static_cast<double>(x);
  return {std::cos(r), -std::sin(r)};
}

/// Exact dephasing evolution of a product state: amplitude(z) = A_z e^{-i E_z t}.
inline PureState evolve_lbit(const ProductStateSpec& spec, const LBitHamiltonian& h, double t) {
  if (spec.size() != h.n_sites) throw DimensionMismatch("state and Hamiltonian sizes differ");
  PureState psi = make_product_state(spec);
  for (Index z = 0; z < psi.dim(); ++z) psi.amps[z] *= phase_factor(h.energies[z], t);
  return psi;
}

/// Z-basis conditional states of a single R spin in closed form. Weights and
/// diagonals are time independent; only the coherence ϱ_↑↓(t, z_S) evolves.
class LBitZEnsemble {
 public:
  LBitZEnsemble(const ProductStateSpec& spec, const LBitHamiltonian& h, const Tripartition& part)
      : part_(part) {
    part.validate();
    if (part.l_r != 1) throw InvalidSpec("closed-form l-bit ensemble needs l_r = 1");
    if (part.total() != h.n_sites || spec.size() != h.n_sites)
      throw DimensionMismatch("spec, Hamiltonian and tripartition disagree");
    spec.validate();
    up_ = spec.sites[0][0];
    down_ = spec.sites[0][1];
    const Index de = part.dim_e(), ds = part.dim_s();
    double kept = 0;
    for (Index s = 0; s < ds; ++s) {
      const double p = std::norm(spec.amplitude(s, part.first_s(), part.l_s));
      if (p < kProbabilityFloor) continue;
      outcomes_.push_back(s);
      weights_.push_back(p);
      kept += p;
    }
    for (auto& w : weights_) w /= kept;
    for (Index e = 0; e < de; ++e) env_.push_back(std::norm(spec.amplitude(e, part.first_e(), part.l_e)));
    // Energies with R up / down for every (z_E, z_S).
    const Index r_bit = Index{1} << (part.l_e + part.l_s);
    e_up_.resize(outcomes_.size() * de);
    e_down_.resize(outcomes_.size() * de);
    for (std::size_t k = 0; k < outcomes_.size(); ++k)
      for (Index e = 0; e < de; ++e) {
        const Index z = e * ds + outcomes_[k];
        e_up_[k * de + e] = h.energies[z];
        e_down_[k * de + e] = h.energies[z | r_bit];
      }
  }

  std::size_t size() const { return outcomes_.size(); }
  const std::vector<double>& weights() const { return weights_; }

  /// ϱ_↑↓(t, z_S) for every retained outcome.
  std::vector<cplx> coherences(double t) const {
    const Index de = part_.dim_e();
    const cplx c = up_ * std::conj(down_);
    std::vector<cplx> out(outcomes_.size());
    for (std::size_t k = 0; k < outcomes_.size(); ++k) {
      cplx s = 0;
      for (Index e = 0; e < de; ++e)
        s += env_[e] * phase_difference(e_up_[k * de + e], e_down_[k * de + e], t);
      out[k] = c * s;
    }
    return out;
  }

  PartialProjectedEnsemble ensemble(double t) const {
    PartialProjectedEnsemble ens;
    ens.dim_r = 2;
    const auto rho = coherences(t);
    for (std::size_t k = 0; k < outcomes_.size(); ++k) {
      Matrix m(2);
      m(0, 0) = std::norm(up_);
      m(1, 1) = std::norm(down_);
      m(0, 1) = rho[k];
      m(1, 0) = std::conj(rho[k]);
      ens.entries.push_back({outcomes_[k], weights_[k], std::move(m)});
    }
    return ens;
  }

  /// Δ = |X| + |Y| with X, Y the centered second moments of the coherence.
  double delta(double t) const {
    const auto rho = coherences(t);
    cplx mean = 0, sq = 0;
    double abs_sq = 0;
    for (std::size_t k = 0; k < rho.size(); ++k) {
      mean += weights_[k] * rho[k];
      sq += weights_[k] * rho[k] * rho[k];
      abs_sq += weights_[k] * std::norm(rho[k]);
    }
    const cplx x = sq - mean * mean;
    const double y = abs_sq - std::norm(mean);
    return std::abs(x) + std::abs(y);
  }

 private:
  Tripartition part_;
  cplx up_, down_;
  std::vector<Index> outcomes_;
  std::vector<double> weights_;
  std::vector<double> env_;
  std::vector<double> e_up_, e_down_;
};

inline PartialProjectedEnsemble z_ppe_closed_form(const ProductStateSpec& spec, const LBitHamiltonian& h,
                                                  double t, const Tripartition& part) {
  return LBitZEnsemble(spec, h, part).ensemble(t);
}

inline double z_delta_closed_form(const ProductStateSpec& spec, const LBitHamiltonian& h, double t,
                                  const Tripartition& part) {
  return LBitZEnsemble(spec, h, part).delta(t);
}

/// X-basis ensemble via the statevector route.
inline PartialProjectedEnsemble x_ppe(const ProductStateSpec& spec, const LBitHamiltonian& h, double t,
                                      const Tripartition& part) {
  return build_ppe(evolve_lbit(spec, h, t), part, MeasurementBasis::x(part.l_s));
}

/// ϱ_↑↑(t, x_S) = |A_↑|² / (|A_↑|² + 𝒢 |A_↓|²) by direct summation over
/// (z_E, z_S, z_S'), with 𝒢 the ratio of R-down to R-up dephasing sums.
inline double x_rho_upup_by_summation(const ProductStateSpec& spec, const LBitHamiltonian& h, double t,
                                      const Tripartition& part, Index x_s) {
  if (part.l_r != 1) throw InvalidSpec("summation oracle needs l_r = 1");
  const Index de = part.dim_e(), ds = part.dim_s();
  const Index r_bit = Index{1} << (part.l_e + part.l_s);
  // <x_S|z_S> for the X basis: 2^{-l_s/2} (-1)^{popcount(x & z)}
  const double amp_norm = std::pow(2.0, -part.l_s);
  auto overlap_sign = [](Index x, Index z) { return (std::popcount(x & z) & 1) ? -1.0 : 1.0; };
  cplx num_up = 0, num_down = 0;
  for (Index e = 0; e < de; ++e) {
    const double we = std::norm(spec.amplitude(e, part.first_e(), part.l_e));
    for (Index s = 0; s < ds; ++s) {
      const cplx as = spec.amplitude(s, part.first_s(), part.l_s);
      for (Index s2 = 0; s2 < ds; ++s2) {
        const cplx as2 = spec.amplitude(s2, part.first_s(), part.l_s);
        const cplx b = std::conj(as2) * as * amp_norm * overlap_sign(x_s, s) * overlap_sign(x_s, s2);
        const Index z = e * ds + s, z2 = e * ds + s2;
        num_up += we * b * phase_difference(h.energies[z], h.energies[z2], t);
        num_down += we * b * phase_difference(h.energies[z | r_bit], h.energies[z2 | r_bit], t);
      }
    }
  }
  const cplx g = num_down / num_up;
  const double pu = std::norm(spec.sites[0][0]), pd = std::norm(spec.sites[0][1]);
  return (pu / (pu + g * pd)).real();
}

/// Dephased (t → ∞, L_S ≫ 1) Z-basis fluctuation |A_↑A_↓|² Σ_{z_E} |A_{z_E}|⁴.
inline double delta_infinity_z(const ProductStateSpec& spec, const Tripartition& part) {
  if (part.l_r != 1) throw InvalidSpec("needs l_r = 1");
  double env = 1;
  for (int i = part.first_e(); i < part.first_e() + part.l_e; ++i) {
    const auto& [a, b] = spec.sites[static_cast<std::size_t>(i)];
    env *= std::norm(a) * std::norm(a) + std::norm(b) * std::norm(b);
  }
  return std::norm(spec.sites[0][0]) * std::norm(spec.sites[0][1]) * env;
}

/// Late-time X-basis fluctuation of one initial state from the second-moment
/// (𝕀 + 𝕊)ρ_RE(∞)^{⊗2} approximation: ½ (1 − Σ|A_{z_R}|⁴) Σ|A_{z_E}|⁴.
inline double delta_infinity_x(const ProductStateSpec& spec, const Tripartition& part) {
  double r4 = 1, e4 = 1;
  for (int i = 0; i < part.first_s(); ++i) {
    const auto& [a, b] = spec.sites[static_cast<std::size_t>(i)];
    const double q = std::norm(a) * std::norm(a) + std::norm(b) * std::norm(b);
    (i < part.l_r ? r4 : e4) *= q;
  }
  return 0.5 * (1 - r4) * e4;
}

/// Haar-product-state average of `delta_infinity_x`: each site contributes
/// E[|a|⁴ + |b|⁴] = 2/3, giving ½ (1 − (2/3)^{L_R}) (2/3)^{L_E}.
inline double delta_infinity_x_scaling(const Tripartition& part) {
  return 0.5 * (1 - std::pow(2.0 / 3.0, part.l_r)) * std::pow(2.0 / 3.0, part.l_e);
}

}  // namespace ppe
