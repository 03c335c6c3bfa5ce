#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ppe/rng.hpp"
#include "ppe/state.hpp"

namespace ppe {

/// Kicked Ising chain with open boundaries:
///   U_F = exp(-i Σ g_j X_j) · exp(-i (Σ h_j Z_j + J Σ Z_j Z_{j+1})).
struct KickedIsingParams {
  double J = 0;
  std::vector<double> g;
  std::vector<double> h;

  int size() const { return static_cast<int>(h.size()); }

  void validate() const {
    if (g.size() != h.size()) throw InvalidSpec("kick and field vectors differ in length");
    if (h.empty()) throw InvalidSpec("empty chain");
  }

  DiagonalGenerator ising_layer() const {
    DiagonalGenerator gen;
    gen.n_sites = size();
    for (int i = 0; i < size(); ++i) gen.fields.push_back({i, h[static_cast<std::size_t>(i)]});
    for (int i = 0; i + 1 < size(); ++i) gen.pairs.push_back({i, i + 1, J});
    return gen;
  }
};

enum class Regime { Ergodic, MBL, SelfDual };

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::Ergodic: return "ergodic";
    case Regime::MBL: return "mbl";
    case Regime::SelfDual: return "sdki";
  }
  return "?";
}

inline Regime regime_from_string(const std::string& s) {
  if (s == "ergodic") return Regime::Ergodic;
  if (s == "mbl") return Regime::MBL;
  if (s == "sdki" || s == "self-dual" || s == "selfdual") return Regime::SelfDual;
  throw InvalidSpec("unknown kicked Ising regime '" + s + "'");
}

struct RegimePreset {
  Regime regime = Regime::Ergodic;
  std::uint64_t seed = 0;
  double gamma = 0.15;  // MBL only
  std::vector<double> fields;  // SelfDual override; empty = ergodic field draw

  static constexpr double kErgodicJ = 0.8;
  static constexpr double kErgodicG = 0.578;
  static constexpr double kFieldMean = 0.6472;
  static constexpr double kErgodicFieldWidth = 0.6;
  static constexpr double kMblScale = 0.7236;
  static constexpr double kSelfDualAngle = std::numbers::pi / 4;

  KickedIsingParams make(int n_sites) const {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> eps;
    KickedIsingParams p;
    const auto n = static_cast<std::size_t>(n_sites);
    switch (regime) {
      case Regime::Ergodic:
        p.J = kErgodicJ;
        p.g.assign(n, kErgodicG);
        for (std::size_t i = 0; i < n; ++i) p.h.push_back(kFieldMean + kErgodicFieldWidth * eps(rng));
        break;
      case Regime::MBL: {
        if (gamma < 0 || gamma > 1) throw InvalidSpec("MBL gamma must lie in [0, 1]");
        p.J = kErgodicJ;
        p.g.assign(n, kMblScale * gamma);
        const double width = kMblScale * std::sqrt(1 - gamma * gamma);
        for (std::size_t i = 0; i < n; ++i) p.h.push_back(kFieldMean + width * eps(rng));
        break;
      }
      case Regime::SelfDual:
        p.J = kSelfDualAngle;
        p.g.assign(n, kSelfDualAngle);
        if (!fields.empty()) {
          if (fields.size() != n) throw InvalidSpec("self-dual field override has wrong length");
          p.h = fields;
        } else {
          for (std::size_t i = 0; i < n; ++i) p.h.push_back(kFieldMean + kErgodicFieldWidth * eps(rng));
        }
        break;
    }
    return p;
  }
};

/// Precomputed Floquet operator; apply with `step`.
class KickedIsingFloquet {
 public:
  explicit KickedIsingFloquet(const KickedIsingParams& p) : diag_(validated(p).ising_layer()) {
    for (double g : p.g) kicks_.push_back(x_rotation(g));
  }

  int n_sites() const { return diag_.n_sites(); }

  void step(PureState& psi) const {
    diag_.apply(psi);
    for (int i = 0; i < n_sites(); ++i)
      apply_one_qubit_unchecked(psi, i, kicks_[static_cast<std::size_t>(i)]);
  }

  void evolve(PureState& psi, int periods) const {
    if (periods < 0) throw InvalidSpec("negative number of Floquet periods");
    for (int k = 0; k < periods; ++k) step(psi);
  }

 private:
  static const KickedIsingParams& validated(const KickedIsingParams& p) {
    p.validate();
    return p;
  }

  DiagonalPhases diag_;
  std::vector<Gate> kicks_;
};

inline void floquet_step(PureState& psi, const KickedIsingParams& p) {
  if (p.size() != psi.n_sites) throw DimensionMismatch("parameters do not match the chain");
  KickedIsingFloquet(p).step(psi);
}

inline void evolve(PureState& psi, const KickedIsingParams& p, int periods) {
  if (p.size() != psi.n_sites) throw DimensionMismatch("parameters do not match the chain");
  KickedIsingFloquet(p).evolve(psi, periods);
}

enum class CircuitFamily { Brickwork, KickedIsing };

/// Last period t for which the R|S fluctuation is guaranteed to vanish.
/// Brickwork circuits decouple R and S while L_E > 4t - 3. One kicked Ising
/// period spreads operators by one site, so R and S stay disjoint up to
/// t = ⌊L_E / 2⌋.
inline int lightcone_onset(CircuitFamily family, int l_e) {
  if (l_e < 0) throw InvalidSpec("negative L_E");
  switch (family) {
    case CircuitFamily::Brickwork: return (l_e + 2) / 4;
    case CircuitFamily::KickedIsing: return l_e / 2;
  }
  return 0;
}

}  // namespace ppe
