#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ppe/linalg.hpp"
#include "ppe/rng.hpp"
#include "ppe/types.hpp"

namespace ppe {

/// Per-site amplitudes (A_up, A_down) of an unentangled initial state.
struct ProductStateSpec {
  std::vector<std::array<cplx, 2>> sites;

  int size() const { return static_cast<int>(sites.size()); }

  void validate(double tol = 1e-12) const {
    for (std::size_t i = 0; i < sites.size(); ++i) {
      const double n = std::norm(sites[i][0]) + std::norm(sites[i][1]);
      if (std::abs(n - 1.0) > tol)
        throw InvalidSpec("site " + std::to_string(i) + " amplitudes have norm^2 " +
                          std::to_string(n));
    }
  }

  static ProductStateSpec uniform(int n, cplx up, cplx down) {
    ProductStateSpec s;
    s.sites.assign(static_cast<std::size_t>(n), {up, down});
    return s;
  }
  static ProductStateSpec plus(int n) {
    const double a = std::numbers::sqrt2 / 2;
    return uniform(n, a, a);
  }
  static ProductStateSpec all_up(int n) { return uniform(n, 1.0, 0.0); }

  /// Product of the site amplitudes picked out by the bits of `z` restricted to
  /// sites [first, first + count).
  cplx amplitude(Index z, int first, int count) const {
    cplx a = 1.0;
    for (int k = 0; k < count; ++k) {
      const int bit = static_cast<int>((z >> (count - 1 - k)) & 1U);
      a *= sites[static_cast<std::size_t>(first + k)][static_cast<std::size_t>(bit)];
    }
    return a;
  }
};

/// Independent Haar-random single-qubit state on every site.
inline ProductStateSpec random_product_state(Rng& rng, int n_sites) {
  std::normal_distribution<double> gauss;
  ProductStateSpec s;
  s.sites.resize(static_cast<std::size_t>(n_sites));
  for (auto& site : s.sites) {
    cplx up{gauss(rng), gauss(rng)};
    cplx down{gauss(rng), gauss(rng)};
    const double n = std::sqrt(std::norm(up) + std::norm(down));
    site = {up / n, down / n};
  }
  return s;
}

inline ProductStateSpec random_product_state(std::uint64_t seed, int n_sites) {
  Rng rng = make_rng(seed);
  return random_product_state(rng, n_sites);
}

/// Dense statevector over 2^n computational basis states, site 0 the most
/// significant bit, bit value 0 = spin up.
struct PureState {
  int n_sites = 0;
  std::vector<cplx> amps;

  PureState() = default;
  explicit PureState(int n) : n_sites(n), amps(Index{1} << n) {
    if (n < 1 || n > kMaxSites)
      throw SizeCapExceeded("statevector with " + std::to_string(n) + " sites");
  }

  Index dim() const { return amps.size(); }

  double norm() const {
    double s = 0;
    for (const auto& a : amps) s += std::norm(a);
    return std::sqrt(s);
  }
};

inline PureState make_product_state(const ProductStateSpec& spec) {
  spec.validate();
  PureState psi(spec.size());
  const int n = spec.size();
  psi.amps[0] = 1.0;
  // Build site by site: after k sites the first 2^k entries hold the prefix.
  for (int k = 0; k < n; ++k) {
    const Index len = Index{1} << k;
    const auto& [up, down] = spec.sites[static_cast<std::size_t>(k)];
    for (Index j = len; j-- > 0;) {
      const cplx a = psi.amps[j];
      psi.amps[2 * j] = a * up;
      psi.amps[2 * j + 1] = a * down;
    }
  }
  return psi;
}

using Gate = std::array<cplx, 4>;  // row-major 2x2

inline bool is_unitary(const Gate& u, double tol = 1e-12) {
  const cplx a = u[0], b = u[1], c = u[2], d = u[3];
  return std::abs(std::norm(a) + std::norm(c) - 1.0) < tol &&
         std::abs(std::norm(b) + std::norm(d) - 1.0) < tol &&
         std::abs(std::conj(a) * b + std::conj(c) * d) < tol;
}

inline Gate adjoint(const Gate& u) {
  return {std::conj(u[0]), std::conj(u[2]), std::conj(u[1]), std::conj(u[3])};
}

inline Gate gate_product(const Gate& a, const Gate& b) {
  return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
          a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
}

/// exp(-i g X)
inline Gate x_rotation(double g) {
  const cplx c = std::cos(g), s = cplx(0, -std::sin(g));
  return {c, s, s, c};
}

inline void apply_one_qubit_unchecked(PureState& psi, int site, const Gate& u) {
  const Index stride = site_bit(site, psi.n_sites);
  const Index dim = psi.dim();
  cplx* a = psi.amps.data();
  for (Index base = 0; base < dim; base += 2 * stride) {
    for (Index j = base; j < base + stride; ++j) {
      const cplx x0 = a[j], x1 = a[j + stride];
      a[j] = u[0] * x0 + u[1] * x1;
      a[j + stride] = u[2] * x0 + u[3] * x1;
    }
  }
}

inline void apply_one_qubit(PureState& psi, int site, const Gate& u) {
  if (site < 0 || site >= psi.n_sites) throw InvalidSpec("site out of range");
  if (!is_unitary(u)) throw InvalidSpec("single-qubit gate is not unitary");
  apply_one_qubit_unchecked(psi, site, u);
}

/// exp(-i * angle * t) with the argument reduced in extended precision, so that
/// very late times keep ~1e-12 phase accuracy.
inline cplx phase_factor(double angle, double t = 1.0) {
  constexpr long double two_pi = 6.283185307179586476925286766559L;
  long double x = static_cast<long double>(angle) * static_cast<long double>(t);
  x = std::fmod(x, two_pi);
  const double r = static_cast<double>(x);
  return {std::cos(r), -std::sin(r)};
}

/// Generator of a diagonal unitary exp(-i φ(z)), with
/// φ(z) = Σ h_i s_i + Σ J_ij s_i s_j + Σ J_S Π_{i∈S} s_i and s = +1 for up.
struct DiagonalGenerator {
  struct Field {
    int site;
    double h;
  };
  struct Pair {
    int a, b;
    double j;
  };
  struct Subset {
    Index mask;  // bits laid out as basis indices
    double j;
  };

  int n_sites = 0;
  std::vector<Field> fields;
  std::vector<Pair> pairs;
  std::vector<Subset> subsets;

  double angle(Index z) const {
    auto spin = [&](int site) { return (z & site_bit(site, n_sites)) ? -1.0 : 1.0; };
    double phi = 0;
    for (const auto& f : fields) phi += f.h * spin(f.site);
    for (const auto& p : pairs) phi += p.j * spin(p.a) * spin(p.b);
    for (const auto& s : subsets) phi += (std::popcount(z & s.mask) & 1) ? -s.j : s.j;
    return phi;
  }
};

/// Diagonal unitary ready to apply. The factor table is materialized only up to
/// `kDenseCacheSites`; larger registers expand the generator per index.
class DiagonalPhases {
 public:
  static constexpr int kDenseCacheSites = 16;

  explicit DiagonalPhases(DiagonalGenerator gen, double t = 1.0)
      : gen_(std::move(gen)), t_(t) {
    if (gen_.n_sites <= kDenseCacheSites) {
      table_.resize(Index{1} << gen_.n_sites);
      for (Index z = 0; z < table_.size(); ++z) table_[z] = phase_factor(gen_.angle(z), t_);
    }
  }

  /// From an explicit angle per basis state (used for tabulated energies).
  static DiagonalPhases from_angles(std::span<const double> angles, double t = 1.0) {
    DiagonalPhases d;
    d.t_ = t;
    d.gen_.n_sites = std::countr_zero(angles.size());
    d.table_.resize(angles.size());
    for (Index z = 0; z < angles.size(); ++z) d.table_[z] = phase_factor(angles[z], t);
    return d;
  }

  int n_sites() const { return gen_.n_sites; }

  void apply(PureState& psi) const {
    if (psi.n_sites != gen_.n_sites) throw DimensionMismatch("diagonal phase register size");
    if (!table_.empty()) {
      for (Index z = 0; z < psi.dim(); ++z) psi.amps[z] *= table_[z];
    } else {
      for (Index z = 0; z < psi.dim(); ++z) psi.amps[z] *= phase_factor(gen_.angle(z), t_);
    }
  }

 private:
  DiagonalPhases() = default;
  DiagonalGenerator gen_;
  double t_ = 1.0;
  std::vector<cplx> table_;
};

inline void apply_diagonal(PureState& psi, const DiagonalGenerator& gen) {
  DiagonalPhases(gen).apply(psi);
}

// Splits basis index bits into kept and traced parts for an arbitrary site set.
class SiteSplit {
 public:
  SiteSplit(int n_sites, std::span<const int> keep) : n_(n_sites) {
    if (keep.empty()) throw InvalidSpec("partial trace needs a non-empty keep set");
    std::vector<bool> kept(static_cast<std::size_t>(n_sites), false);
    for (int s : keep) {
      if (s < 0 || s >= n_sites) throw InvalidSpec("keep site out of range");
      if (kept[static_cast<std::size_t>(s)]) throw InvalidSpec("duplicate keep site");
      kept[static_cast<std::size_t>(s)] = true;
    }
    for (int s = 0; s < n_sites; ++s) (kept[static_cast<std::size_t>(s)] ? keep_ : trace_).push_back(s);
  }

  Index dim_keep() const { return Index{1} << keep_.size(); }
  Index dim_trace() const { return Index{1} << trace_.size(); }

  Index compose(Index k, Index t) const {
    Index z = 0;
    scatter(z, k, keep_);
    scatter(z, t, trace_);
    return z;
  }

 private:
  void scatter(Index& z, Index part, const std::vector<int>& sites) const {
    const int m = static_cast<int>(sites.size());
    for (int i = 0; i < m; ++i)
      if ((part >> (m - 1 - i)) & 1U) z |= site_bit(sites[static_cast<std::size_t>(i)], n_);
  }

  int n_;
  std::vector<int> keep_, trace_;
};

/// Reduced density matrix on `keep` (ordered by site index).
inline Matrix partial_trace(const PureState& psi, std::span<const int> keep) {
  SiteSplit split(psi.n_sites, keep);
  const Index dk = split.dim_keep(), dt = split.dim_trace();
  std::vector<cplx> m(dk * dt);
  for (Index k = 0; k < dk; ++k)
    for (Index t = 0; t < dt; ++t) m[k * dt + t] = psi.amps[split.compose(k, t)];
  Matrix rho(dk);
  for (Index i = 0; i < dk; ++i)
    for (Index j = i; j < dk; ++j) {
      cplx s = 0;
      for (Index t = 0; t < dt; ++t) s += m[i * dt + t] * std::conj(m[j * dt + t]);
      rho(i, j) = s;
      rho(j, i) = std::conj(s);
    }
  return rho;
}

inline Matrix partial_trace(const Matrix& rho, int n_sites, std::span<const int> keep) {
  if (rho.dim() != (Index{1} << n_sites)) throw DimensionMismatch("density matrix vs site count");
  SiteSplit split(n_sites, keep);
  const Index dk = split.dim_keep(), dt = split.dim_trace();
  Matrix out(dk);
  for (Index i = 0; i < dk; ++i)
    for (Index j = 0; j < dk; ++j) {
      cplx s = 0;
      for (Index t = 0; t < dt; ++t) s += rho(split.compose(i, t), split.compose(j, t));
      out(i, j) = s;
    }
  return out;
}

inline std::vector<int> site_range(int first, int count) {
  std::vector<int> v(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = first + i;
  return v;
}

/// Checks Hermiticity, unit trace and (via Jacobi) positivity.
inline void validate_density_matrix(const Matrix& rho, double tol = 1e-10, double eig_floor = -1e-9) {
  if (rho.hermiticity_error() > tol) throw InvalidSpec("density matrix is not Hermitian");
  if (std::abs(rho.trace() - 1.0) > tol) throw InvalidSpec("density matrix trace is not 1");
  if (hermitian_eigenvalues(rho).front() < eig_floor)
    throw InvalidSpec("density matrix has a negative eigenvalue");
}

/// Single-site measurement basis. Columns of `unitary()` are the outcome-0 and
/// outcome-1 states.
struct SiteBasis {
  enum class Kind { Z, X, Tilted };
  Kind kind = Kind::Z;
  double theta = 0;  // polar angle (Tilted only)
  double phi = 0;    // azimuth (Tilted only)

  static SiteBasis z() { return {}; }
  static SiteBasis x() { return {Kind::X, 0, 0}; }
  static SiteBasis tilted(double theta, double phi) { return {Kind::Tilted, theta, phi}; }

  Gate unitary() const {
    switch (kind) {
      case Kind::Z:
        return {1.0, 0.0, 0.0, 1.0};
      case Kind::X: {
        const double a = std::numbers::sqrt2 / 2;
        return {a, a, a, -a};
      }
      case Kind::Tilted: {
        const double c = std::cos(theta / 2), s = std::sin(theta / 2);
        const cplx e = std::polar(1.0, phi);
        // |0'> = c|up> + e s|down>, |1'> = -conj(e) s|up> + c|down>
        return {c, -std::conj(e) * s, e * s, c};
      }
    }
    return {1.0, 0.0, 0.0, 1.0};
  }
};

/// Per-site basis for the measured region, one entry per S site.
struct MeasurementBasis {
  std::vector<SiteBasis> sites;

  static MeasurementBasis uniform(int n, SiteBasis b) {
    return {std::vector<SiteBasis>(static_cast<std::size_t>(n), b)};
  }
  static MeasurementBasis z(int n) { return uniform(n, SiteBasis::z()); }
  static MeasurementBasis x(int n) { return uniform(n, SiteBasis::x()); }

  bool all_z() const {
    for (const auto& s : sites)
      if (s.kind != SiteBasis::Kind::Z) return false;
    return true;
  }
};

/// Rotates the S sites so that measurement outcomes become computational-basis
/// bits of the returned state.
inline PureState rotate_to_measurement_frame(PureState psi, const Tripartition& part,
                                             const MeasurementBasis& basis) {
  if (static_cast<int>(basis.sites.size()) != part.l_s)
    throw InvalidSpec("measurement basis must cover every S site");
  for (int k = 0; k < part.l_s; ++k) {
    const auto& sb = basis.sites[static_cast<std::size_t>(k)];
    if (sb.kind == SiteBasis::Kind::Z) continue;
    apply_one_qubit_unchecked(psi, part.first_s() + k, adjoint(sb.unitary()));
  }
  return psi;
}

/// Conditional state of R for one column of the rotated amplitude table.
/// `amps` is the statevector in the measurement frame.
inline std::pair<double, Matrix> conditional_from_frame(std::span<const cplx> amps,
                                                        const Tripartition& part, Index outcome) {
  const Index dr = part.dim_r(), de = part.dim_e(), ds = part.dim_s();
  double p = 0;
  for (Index re = 0; re < dr * de; ++re) p += std::norm(amps[re * ds + outcome]);
  Matrix rho(dr);
  if (p < kProbabilityFloor) return {p, rho};
  for (Index r1 = 0; r1 < dr; ++r1)
    for (Index r2 = r1; r2 < dr; ++r2) {
      cplx s = 0;
      for (Index e = 0; e < de; ++e)
        s += amps[(r1 * de + e) * ds + outcome] * std::conj(amps[(r2 * de + e) * ds + outcome]);
      s /= p;
      rho(r1, r2) = s;
      rho(r2, r1) = std::conj(s);
    }
  for (Index r = 0; r < dr; ++r) rho(r, r) = rho(r, r).real();
  return {p, rho};
}

struct ConditionalState {
  double probability = 0;
  std::optional<Matrix> rho;  // empty when probability < kProbabilityFloor
};

/// Born probability of `outcome` on S and the normalized state of R after
/// projecting S and tracing E.
inline ConditionalState project_and_condition(const PureState& psi, const Tripartition& part,
                                              const MeasurementBasis& basis, Index outcome) {
  part.validate();
  if (psi.n_sites != part.total()) throw DimensionMismatch("state does not match tripartition");
  if (outcome >= part.dim_s()) throw InvalidSpec("outcome has more bits than S");
  const PureState frame = rotate_to_measurement_frame(psi, part, basis);
  auto [p, rho] = conditional_from_frame(frame.amps, part, outcome);
  if (p < kProbabilityFloor) return {p, std::nullopt};
  return {p, std::move(rho)};
}

}  // namespace ppe
