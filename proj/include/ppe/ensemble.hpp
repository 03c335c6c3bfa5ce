#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <vector>

#include "ppe/linalg.hpp"
#include "ppe/parallel.hpp"
#include "ppe/state.hpp"

namespace ppe {

/// Weighted collection {p(o_S), ρ_R(o_S)} of conditional states of R, ordered
/// by outcome integer.
struct PartialProjectedEnsemble {
  struct Entry {
    Index outcome = 0;
    double weight = 0;
    Matrix rho;
  };

  Index dim_r = 0;
  std::vector<Entry> entries;
  // Probability mass removed by the p_floor cut before renormalizing.
  double dropped_mass = 0;
  std::size_t dropped_outcomes = 0;

  double total_weight() const {
    double s = 0;
    for (const auto& e : entries) s += e.weight;
    return s;
  }
};

/// Enumerates every outcome on S in `basis`, keeps those above the probability
/// floor and renormalizes their weights.
inline PartialProjectedEnsemble build_ppe(const PureState& psi, const Tripartition& part,
                                          const MeasurementBasis& basis, int threads = 1) {
  part.validate();
  if (psi.n_sites != part.total()) throw DimensionMismatch("state does not match tripartition");
  const PureState frame = rotate_to_measurement_frame(psi, part, basis);
  const Index ds = part.dim_s();

  std::vector<std::pair<double, Matrix>> slots(ds);
  parallel_for(ds, threads, [&](std::size_t o) {
    slots[o] = conditional_from_frame(frame.amps, part, o);
  });

  PartialProjectedEnsemble ens;
  ens.dim_r = part.dim_r();
  double kept = 0;
  for (Index o = 0; o < ds; ++o) {
    auto& [p, rho] = slots[o];
    if (p < kProbabilityFloor) {
      ens.dropped_mass += p;
      ++ens.dropped_outcomes;
      continue;
    }
    kept += p;
    ens.entries.push_back({o, p, std::move(rho)});
  }
  for (auto& e : ens.entries) e.weight /= kept;
  return ens;
}

/// k-th moment Σ p ρ^{⊗k} on the k-fold tensor space.
inline Matrix moment(const PartialProjectedEnsemble& ens, int k) {
  if (k < 1) throw InvalidSpec("moment order must be >= 1");
  const int bits = std::countr_zero(ens.dim_r);
  if (k * bits > 12) throw SizeCapExceeded("moment dimension D_R^k exceeds 2^12");
  Index dim = 1;
  for (int i = 0; i < k; ++i) dim *= ens.dim_r;
  Matrix acc(dim);
  for (const auto& e : ens.entries) {
    Matrix power = e.rho;
    for (int i = 1; i < k; ++i) power = kron(power, e.rho);
    acc.add_scaled(power, e.weight);
  }
  return acc;
}

/// Fluctuation measure ½‖ρ^{(2)} − ρ^{(1)}⊗ρ^{(1)}‖₁.
inline double delta(const PartialProjectedEnsemble& ens) {
  const Matrix first = moment(ens, 1);
  return trace_norm_distance(moment(ens, 2), kron(first, first));
}

/// Σ_o p(o) (Tr[obs ρ(o)])^k.
inline double observable_moment(const PartialProjectedEnsemble& ens, const Matrix& obs, int k) {
  if (obs.dim() != ens.dim_r) throw DimensionMismatch("observable does not act on R");
  if (obs.hermiticity_error() > 1e-10) throw InvalidSpec("observable is not Hermitian");
  if (k < 1) throw InvalidSpec("moment order must be >= 1");
  double s = 0;
  for (const auto& e : ens.entries) {
    double ev = 0;
    for (Index i = 0; i < ens.dim_r; ++i)
      for (Index j = 0; j < ens.dim_r; ++j) ev += (obs(i, j) * e.rho(j, i)).real();
    s += e.weight * std::pow(ev, k);
  }
  return s;
}

/// Second moment of the generalised Hilbert–Schmidt ensemble obtained by
/// tracing D_E out of Haar-random states on D_R·D_E:
///   [D_E² 𝕀 + D_E 𝕊] / (D_R D_E (D_R D_E + 1)).
inline Matrix ghs_second_moment(Index d_r, Index d_e) {
  if (!std::has_single_bit(d_r) || !std::has_single_bit(d_e))
    throw InvalidSpec("gHS dimensions must be powers of two");
  const double dr = static_cast<double>(d_r), de = static_cast<double>(d_e);
  const double norm = dr * de * (dr * de + 1);
  Matrix m = Matrix::identity(d_r * d_r);
  m *= de * de / norm;
  m.add_scaled(swap_operator(d_r), de / norm);
  return m;
}

/// ½‖ρ^{(2)} − ρ^{(2)}_gHS‖₁ with D_E taken from the tripartition.
inline double ghs_distance(const PartialProjectedEnsemble& ens, const Tripartition& part) {
  if (ens.dim_r != part.dim_r()) throw DimensionMismatch("ensemble does not match tripartition");
  return trace_norm_distance(moment(ens, 2), ghs_second_moment(part.dim_r(), part.dim_e()));
}

/// One draw from the gHS ensemble: a normalized complex Gaussian vector on
/// D_R·D_E with the D_E factor traced out.
inline Matrix sample_ghs(Rng& rng, Index d_r, Index d_e) {
  std::normal_distribution<double> gauss;
  std::vector<cplx> v(d_r * d_e);
  double n = 0;
  for (auto& x : v) {
    x = {gauss(rng), gauss(rng)};
    n += std::norm(x);
  }
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  Matrix rho(d_r);
  for (Index i = 0; i < d_r; ++i)
    for (Index j = 0; j < d_r; ++j) {
      cplx s = 0;
      for (Index e = 0; e < d_e; ++e) s += v[i * d_e + e] * std::conj(v[j * d_e + e]);
      rho(i, j) = s;
    }
  return rho;
}

// Binary ensemble dump, little-endian host layout:
//   "PPEN" | u32 version | u64 dim_r | u64 n_entries |
//   n_entries × (u64 outcome | f64 weight | dim_r² × (f64 re, f64 im))
inline constexpr std::uint32_t kEnsembleFormatVersion = 1;

namespace detail {
template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error("truncated ensemble dump");
  return v;
}
}  // namespace detail

inline void write_ensemble(std::ostream& os, const PartialProjectedEnsemble& ens) {
  os.write("PPEN", 4);
  detail::put(os, kEnsembleFormatVersion);
  detail::put<std::uint64_t>(os, ens.dim_r);
  detail::put<std::uint64_t>(os, ens.entries.size());
  for (const auto& e : ens.entries) {
    detail::put<std::uint64_t>(os, e.outcome);
    detail::put(os, e.weight);
    for (const cplx& x : e.rho.data()) {
      detail::put(os, x.real());
      detail::put(os, x.imag());
    }
  }
}

inline PartialProjectedEnsemble read_ensemble(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "PPEN", 4) != 0) throw Error("not an ensemble dump");
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kEnsembleFormatVersion)
    throw Error("unsupported ensemble dump version " + std::to_string(version));
  PartialProjectedEnsemble ens;
  ens.dim_r = detail::get<std::uint64_t>(is);
  const auto n = detail::get<std::uint64_t>(is);
  ens.entries.resize(n);
  for (auto& e : ens.entries) {
    e.outcome = detail::get<std::uint64_t>(is);
    e.weight = detail::get<double>(is);
    e.rho = Matrix(ens.dim_r);
    for (cplx& x : e.rho.data()) {
      const double re = detail::get<double>(is);
      x = {re, detail::get<double>(is)};
    }
  }
  return ens;
}

}  // namespace ppe
