#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "ppe/ensemble.hpp"
#include "ppe/linalg.hpp"

namespace ppe {

/// Relative probabilities p̃ with their weights (weights sum to 1).
struct WeightedSamples {
  std::vector<double> values;
  std::vector<double> weights;

  std::size_t size() const { return values.size(); }

  double mean() const {
    double s = 0;
    for (std::size_t i = 0; i < values.size(); ++i) s += weights[i] * values[i];
    return s;
  }
  double variance() const {
    const double m = mean();
    double s = 0;
    for (std::size_t i = 0; i < values.size(); ++i) s += weights[i] * (values[i] - m) * (values[i] - m);
    return s;
  }
  double max() const {
    return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
  }

  static WeightedSamples uniform(std::vector<double> v) {
    WeightedSamples s;
    const double w = v.empty() ? 0.0 : 1.0 / static_cast<double>(v.size());
    s.weights.assign(v.size(), w);
    s.values = std::move(v);
    return s;
  }

  /// Concatenation with each part reweighted by its share of the pooled count.
  static WeightedSamples pool(std::span<const WeightedSamples> parts) {
    std::size_t total = 0;
    for (const auto& p : parts) total += p.size();
    WeightedSamples out;
    for (const auto& p : parts) {
      const double share = static_cast<double>(p.size()) / static_cast<double>(total);
      for (std::size_t i = 0; i < p.size(); ++i) {
        out.values.push_back(p.values[i]);
        out.weights.push_back(p.weights[i] * share);
      }
    }
    return out;
  }
};

/// Bin edges over p̃. Values beyond the last edge are clamped into the last bin
/// and negative values into the first.
struct Binning {
  std::vector<double> edges;

  std::size_t bins() const { return edges.size() - 1; }

  static Binning linear(double lo, double hi, std::size_t n) {
    if (!(hi > lo) || n == 0) throw InvalidSpec("bad linear binning");
    Binning b;
    for (std::size_t i = 0; i <= n; ++i)
      b.edges.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n));
    return b;
  }

  /// n log-spaced bins over [lo, hi] plus an underflow bin [0, lo).
  static Binning log_spaced(double lo, double hi, std::size_t n) {
    if (!(lo > 0) || !(hi > lo) || n == 0) throw InvalidSpec("bad log binning");
    Binning b;
    b.edges.push_back(0.0);
    const double r = std::log(hi / lo);
    for (std::size_t i = 0; i <= n; ++i)
      b.edges.push_back(lo * std::exp(r * static_cast<double>(i) / static_cast<double>(n)));
    b.edges.back() = hi;
    return b;
  }

  std::size_t index(double x) const {
    auto it = std::upper_bound(edges.begin(), edges.end(), x);
    if (it == edges.begin()) return 0;
    const auto i = static_cast<std::size_t>(it - edges.begin()) - 1;
    return std::min(i, bins() - 1);
  }
};

inline constexpr std::size_t kKeepSamplesLimit = std::size_t{1} << 16;

struct PoPHistogram {
  std::vector<double> edges;
  std::vector<double> mass;
  std::size_t count = 0;
  std::optional<WeightedSamples> samples;  // kept when count <= 2^16

  /// Pools two histograms on the same grid, weighting by sample count.
  PoPHistogram& merge(const PoPHistogram& o) {
    if (o.edges != edges) throw DimensionMismatch("histograms use different bins");
    const double n = static_cast<double>(count + o.count);
    for (std::size_t i = 0; i < mass.size(); ++i)
      mass[i] = (mass[i] * static_cast<double>(count) + o.mass[i] * static_cast<double>(o.count)) / n;
    if (samples && o.samples && count + o.count <= kKeepSamplesLimit) {
      const WeightedSamples parts[] = {*samples, *o.samples};
      samples = WeightedSamples::pool(parts);
    } else {
      samples.reset();
    }
    count += o.count;
    return *this;
  }
};

inline PoPHistogram make_histogram(const WeightedSamples& s, const Binning& b) {
  PoPHistogram h;
  h.edges = b.edges;
  h.mass.assign(b.bins(), 0.0);
  h.count = s.size();
  double total = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    h.mass[b.index(s.values[i])] += s.weights[i];
    total += s.weights[i];
  }
  if (total > 0)
    for (auto& m : h.mass) m /= total;
  if (s.size() <= kKeepSamplesLimit) h.samples = s;
  return h;
}

/// True when at least 1 − 1e-9 of the mass sits within 1e-8 of p̃ = 1.
inline bool is_delta_at_one(const PoPHistogram& h, double width = 1e-8, double slack = 1e-9) {
  double near = 0;
  if (h.samples) {
    double total = 0;
    for (std::size_t i = 0; i < h.samples->size(); ++i) {
      total += h.samples->weights[i];
      if (std::abs(h.samples->values[i] - 1.0) < width) near += h.samples->weights[i];
    }
    return near >= (1.0 - slack) * total;
  }
  for (std::size_t i = 0; i < h.mass.size(); ++i)
    if (h.edges[i] > 1.0 - width && h.edges[i + 1] < 1.0 + width) near += h.mass[i];
  return near >= 1.0 - slack;
}

/// p̃(z_R|o_S) = ⟨z_R|ρ(o_S)|z_R⟩ / Σ_o' p(o') ⟨z_R|ρ(o')|z_R⟩ for every outcome,
/// weighted by p(o_S). Empty when z_R has (numerically) zero probability.
inline std::optional<WeightedSamples> relative_conditional_probs(const PartialProjectedEnsemble& ens,
                                                                 Index z_r) {
  if (z_r >= ens.dim_r) throw InvalidSpec("z_R outside R");
  WeightedSamples s;
  double denom = 0;
  for (const auto& e : ens.entries) {
    const double p = e.rho(z_r, z_r).real();
    s.values.push_back(p);
    s.weights.push_back(e.weight);
    denom += e.weight * p;
  }
  if (denom < kProbabilityFloor) return std::nullopt;
  for (auto& v : s.values) v /= denom;
  return s;
}

inline std::optional<PoPHistogram> pop_ppe(const PartialProjectedEnsemble& ens, Index z_r,
                                           const Binning& b) {
  auto s = relative_conditional_probs(ens, z_r);
  if (!s) return std::nullopt;
  return make_histogram(*s, b);
}

/// D·p(z) for every bit-string of a diagonal probability vector, weight 1/D.
inline WeightedSamples bitstring_samples(std::span<const double> probs) {
  const double d = static_cast<double>(probs.size());
  std::vector<double> v(probs.size());
  for (std::size_t z = 0; z < probs.size(); ++z) v[z] = d * probs[z];
  return WeightedSamples::uniform(std::move(v));
}

inline WeightedSamples bitstring_samples(const Matrix& rho) {
  std::vector<double> p(rho.dim());
  for (std::size_t z = 0; z < rho.dim(); ++z) p[z] = rho(z, z).real();
  return bitstring_samples(p);
}

inline PoPHistogram pop_bitstrings(const Matrix& rho, const Binning& b) {
  return make_histogram(bitstring_samples(rho), b);
}

/// Marginal Born probabilities of the sites [first, first + count) of a pure
/// state, ordered as basis indices of that block.
inline std::vector<double> marginal_probabilities(const PureState& psi, int first, int count) {
  if (first < 0 || count < 1 || first + count > psi.n_sites) throw InvalidSpec("bad site block");
  const int shift = psi.n_sites - first - count;
  const Index mask = (Index{1} << count) - 1;
  std::vector<double> p(Index{1} << count, 0.0);
  for (Index z = 0; z < psi.dim(); ++z) p[(z >> shift) & mask] += std::norm(psi.amps[z]);
  return p;
}

/// Marginal Born probabilities of R∪S (R leading, S trailing) with E summed out.
inline std::vector<double> rs_marginal_probabilities(const PureState& psi, const Tripartition& part) {
  const Index de = part.dim_e(), ds = part.dim_s();
  std::vector<double> p(part.dim_r() * ds, 0.0);
  for (Index z = 0; z < psi.dim(); ++z) {
    const Index s = z % ds;
    const Index r = z / (ds * de);
    p[r * ds + s] += std::norm(psi.amps[z]);
  }
  return p;
}

/// Exact product distribution of two independent PoPs (discrete Mellin
/// convolution): every pairwise product with the product weight.
inline WeightedSamples mellin_convolve(const WeightedSamples& a, const WeightedSamples& b) {
  if (a.size() * b.size() > (std::size_t{1} << 20))
    throw SizeCapExceeded("Mellin convolution limited to 2^20 products");
  WeightedSamples out;
  out.values.reserve(a.size() * b.size());
  out.weights.reserve(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      out.values.push_back(a.values[i] * b.values[j]);
      out.weights.push_back(a.weights[i] * b.weights[j]);
    }
  return out;
}

inline constexpr std::size_t kKlBins = 64;
inline constexpr double kKlLowEdge = 1e-4;
inline constexpr double kKlSmoothing = 1e-9;

/// Shared grid for KL comparisons: 64 log bins over [1e-4, 1.05·max p̃] plus an
/// underflow bin.
inline Binning kl_binning(const WeightedSamples& p, const WeightedSamples& q) {
  const double hi = std::max({p.max(), q.max(), 2 * kKlLowEdge}) * 1.05;
  return Binning::log_spaced(kKlLowEdge, hi, kKlBins);
}

/// Σ p ln(p/q) over common bins; q gets additive smoothing first. Returns +inf
/// when p has mass where q has none.
inline double kl_divergence(const PoPHistogram& p, const PoPHistogram& q,
                            double smoothing = kKlSmoothing) {
  if (p.edges != q.edges) throw DimensionMismatch("KL divergence needs a common binning");
  double qtotal = 0;
  for (double m : q.mass) qtotal += m + smoothing;
  double kl = 0;
  for (std::size_t i = 0; i < p.mass.size(); ++i) {
    if (p.mass[i] <= 0) continue;
    const double qi = (q.mass[i] + smoothing) / qtotal;
    if (qi <= 0) return std::numeric_limits<double>::infinity();
    kl += p.mass[i] * std::log(p.mass[i] / qi);
  }
  return std::max(kl, 0.0);
}

inline double kl_divergence(const WeightedSamples& p, const WeightedSamples& q) {
  const Binning b = kl_binning(p, q);
  return kl_divergence(make_histogram(p, b), make_histogram(q, b));
}

/// Analytic PoP densities over p̃.
struct ReferenceDensity {
  enum class Kind { PorterThomas, Erlang, SdkiBeta, Delta };
  Kind kind = Kind::PorterThomas;
  double d_e = 1;   // Erlang shape
  int t = 0;        // SdkiBeta
  int l_re = 0;     // SdkiBeta

  static ReferenceDensity porter_thomas() { return {}; }

  static ReferenceDensity erlang(double d_e) {
    if (!(d_e >= 1)) throw InvalidSpec("Erlang dimension must be >= 1");
    return {Kind::Erlang, d_e, 0, 0};
  }

  static ReferenceDensity delta() { return {Kind::Delta, 1, 0, 0}; }

  /// Beta law of the self-dual kicked Ising outcome PoP; collapses to a delta
  /// at 1 once t <= L_RE.
  static ReferenceDensity sdki_beta(int t, int l_re) {
    if (t < 0 || l_re < 0) throw InvalidSpec("SDKI beta law needs t, L_RE >= 0");
    if (t > 40) throw InvalidSpec("SDKI beta law limited to t <= 40");
    if (t <= l_re) return delta();
    return {Kind::SdkiBeta, 1, t, l_re};
  }

  double d_t() const { return std::ldexp(1.0, t); }
  double d_re() const { return std::ldexp(1.0, l_re); }

  // Beta(α, β) parameters of x = (D_RE / D_t) p̃.
  double alpha() const { return d_re(); }
  double beta() const { return d_t() - d_re(); }

  /// Upper end of the support (infinite for PT and Erlang).
  double support_max() const {
    switch (kind) {
      case Kind::SdkiBeta: return d_t() / d_re();
      case Kind::Delta: return 1.0;
      default: return std::numeric_limits<double>::infinity();
    }
  }

  double pdf(double x) const {
    if (x < 0) return 0.0;
    switch (kind) {
      case Kind::PorterThomas:
        return std::exp(-x);
      case Kind::Erlang: {
        if (x == 0) return d_e == 1 ? d_e : 0.0;
        const double lg = d_e * std::log(d_e) - std::lgamma(d_e) - d_e * x + (d_e - 1) * std::log(x);
        return std::exp(lg);
      }
      case Kind::SdkiBeta: {
        check_beta();
        const double a = alpha(), b = beta();
        const double scale = d_re() / d_t();
        const double u = scale * x;
        if (u >= 1) return 0.0;
        double lg = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + std::log(scale);
        if (a != 1) lg += (a - 1) * std::log(u);
        if (b != 1) lg += (b - 1) * std::log1p(-u);
        if (u == 0 && a > 1) return 0.0;
        return std::exp(lg);
      }
      case Kind::Delta:
        return x == 1.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    return 0.0;
  }

  double cdf(double x) const {
    if (x <= 0) return 0.0;
    switch (kind) {
      case Kind::PorterThomas:
        return -std::expm1(-x);
      case Kind::Erlang:
        return boost::math::gamma_p(d_e, d_e * x);
      case Kind::SdkiBeta: {
        check_beta();
        const double u = d_re() / d_t() * x;
        if (u >= 1) return 1.0;
        return boost::math::ibeta(alpha(), beta(), u);
      }
      case Kind::Delta:
        return x >= 1.0 ? 1.0 : 0.0;
    }
    return 0.0;
  }

  double mean() const { return 1.0; }

  double variance() const {
    switch (kind) {
      case Kind::PorterThomas: return 1.0;
      case Kind::Erlang: return 1.0 / d_e;
      case Kind::SdkiBeta: {
        const double a = alpha(), b = beta(), s = d_t() / d_re();
        return s * s * a * b / ((a + b) * (a + b) * (a + b + 1));
      }
      case Kind::Delta: return 0.0;
    }
    return 0.0;
  }

 private:
  void check_beta() const {
    if (d_re() >= d_t()) throw InvalidSpec("SDKI beta law requires t > L_RE");
  }
};

inline double reference_density(const ReferenceDensity& ref, double x) { return ref.pdf(x); }

/// Reference probability mass in each bin of `b`.
inline std::vector<double> reference_masses(const ReferenceDensity& ref, const Binning& b) {
  std::vector<double> m(b.bins());
  for (std::size_t i = 0; i < b.bins(); ++i) m[i] = ref.cdf(b.edges[i + 1]) - ref.cdf(b.edges[i]);
  // Clamped histograms put the upper tail in the last bin; mirror that.
  m.back() += 1.0 - ref.cdf(b.edges.back());
  return m;
}

/// Total-variation distance between a histogram and the reference law binned
/// on the same grid.
inline double tv_distance(const PoPHistogram& h, const ReferenceDensity& ref) {
  Binning b{h.edges};
  const auto r = reference_masses(ref, b);
  double s = 0;
  for (std::size_t i = 0; i < r.size(); ++i) s += std::abs(h.mass[i] - r[i]);
  // Mass the reference puts below the first edge.
  s += ref.cdf(h.edges.front());
  return 0.5 * s;
}

inline double tv_distance(const PoPHistogram& a, const PoPHistogram& b) {
  if (a.edges != b.edges) throw DimensionMismatch("histograms use different bins");
  double s = 0;
  for (std::size_t i = 0; i < a.mass.size(); ++i) s += std::abs(a.mass[i] - b.mass[i]);
  return 0.5 * s;
}

/// E[p̃^q] of the normalized self-dual kicked Ising outcome PoP:
///   (D_t / D_RE)^q Π_{a<q} (D_RE + a) / (D_t + a), and 1 once t <= L_RE.
inline double sdki_pop_moment(int q, int t, int l_re) {
  if (q < 1) throw InvalidSpec("moment order must be >= 1");
  if (t <= l_re) return 1.0;
  const double dt = std::ldexp(1.0, t), dre = std::ldexp(1.0, l_re);
  double m = 1;
  for (int a = 0; a < q; ++a) m *= (dt / dre) * (dre + a) / (dt + a);
  return m;
}

inline void write_histogram_csv(std::ostream& os, const PoPHistogram& h) {
  os << "bin_lo,bin_hi,mass\n";
  os.precision(17);
  for (std::size_t i = 0; i < h.mass.size(); ++i)
    os << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.mass[i] << '\n';
}

inline void write_reference_csv(std::ostream& os, const Binning& b, const ReferenceDensity& ref) {
  os << "bin_lo,bin_hi,mass\n";
  os.precision(17);
  const auto m = reference_masses(ref, b);
  for (std::size_t i = 0; i < m.size(); ++i) os << b.edges[i] << ',' << b.edges[i + 1] << ',' << m[i] << '\n';
}

}  // namespace ppe
