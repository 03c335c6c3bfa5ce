#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ppe/config.hpp"
#include "ppe/experiments.hpp"
#include "ppe/types.hpp"

namespace ppe {

/// ⟨Δ⟩(t) for one L_E, sorted by t.
struct Curve {
  std::vector<double> t;
  std::vector<double> delta;

  std::size_t size() const { return t.size(); }
};

using CurveSet = std::map<int, Curve>;  // keyed by L_E

/// Mean-Δ curves for one (family, L_R, L_S) slice of an aggregate table.
/// `ghs` selects the Δ_gHS column instead.
inline CurveSet curves_from_aggregate(const std::vector<AggregateRow>& rows, int l_r, int l_s,
                                      bool ghs = false) {
  CurveSet set;
  for (const auto& a : rows) {
    if (a.l_r != l_r || a.l_s != l_s) continue;
    auto& c = set[a.l_e];
    c.t.push_back(a.t);
    c.delta.push_back(ghs ? a.delta_ghs.mean : a.delta.mean);
  }
  for (auto& [le, c] : set) {
    std::vector<std::size_t> idx(c.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return c.t[a] < c.t[b]; });
    Curve s;
    for (auto i : idx) {
      s.t.push_back(c.t[i]);
      s.delta.push_back(c.delta[i]);
    }
    c = std::move(s);
  }
  return set;
}

/// Average of Δ over the window t ∈ [start·T_max, T_max].
inline double plateau(const Curve& c, double start = 0.5) {
  if (c.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  const double lo = start * c.t.back();
  CompensatedSum s;
  std::size_t n = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c.t[i] >= lo) {
      s.add(c.delta[i]);
      ++n;
    }
  return s.value() / static_cast<double>(n);
}

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};

/// Ordinary least squares y = a + b x. R² is 1 when y is constant.
inline LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw FitRefused("least squares needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) throw FitRefused("least squares needs distinct abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    ss_res += r * r;
  }
  f.r2 = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

/// How Δ_th is chosen per L_E.
struct OnsetThreshold {
  enum class Kind { Absolute, RelativeToPlateau };
  Kind kind = Kind::Absolute;
  double value = 1e-9;
  double plateau_start = 0.5;

  static OnsetThreshold absolute(double v) { return {Kind::Absolute, v, 0.5}; }
  static OnsetThreshold relative(double fraction, double plateau_start = 0.5) {
    return {Kind::RelativeToPlateau, fraction, plateau_start};
  }

  double for_curve(const Curve& c) const {
    return kind == Kind::Absolute ? value : value * plateau(c, plateau_start);
  }
};

/// Family defaults: 1e-9 absolute for ergodic and self-dual runs, 0.1 Δ∞(L_E)
/// for localized ones. An explicit config threshold wins.
inline OnsetThreshold default_threshold(const ExperimentConfig& c) {
  if (c.onset_threshold) return OnsetThreshold::absolute(*c.onset_threshold);
  if (c.family == Family::Ergodic || c.family == Family::SelfDual) return OnsetThreshold::absolute(1e-9);
  return OnsetThreshold::relative(c.onset_relative, c.plateau_start);
}

/// First time ⟨Δ⟩ exceeds `th`, interpolated linearly in (ln t, ln Δ) between
/// the bracketing grid points. A bracket from Δ = 0 (or t = 0) snaps to the
/// upper point. NaN when the curve never crosses.
inline double crossing_time(const Curve& c, double th) {
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (!(c.delta[k] > th)) continue;
    if (k == 0) return c.t[0];
    const double t0 = c.t[k - 1], t1 = c.t[k], d0 = c.delta[k - 1], d1 = c.delta[k];
    if (!(d0 > 0) || !(t0 > 0)) return t1;
    const double u = (std::log(th) - std::log(d0)) / (std::log(d1) - std::log(d0));
    return std::exp(std::log(t0) + u * (std::log(t1) - std::log(t0)));
  }
  return std::numeric_limits<double>::quiet_NaN();
}

struct OnsetFit {
  std::vector<std::pair<int, double>> onsets;  // (L_E, t*)
  std::vector<std::pair<int, double>> thresholds;
  std::vector<int> omitted;                    // L_E without a crossing
  double t0 = std::numeric_limits<double>::quiet_NaN();
  double xi_t = std::numeric_limits<double>::quiet_NaN();
  double slope = std::numeric_limits<double>::quiet_NaN();  // d ln t* / d L_E
  double r2 = std::numeric_limits<double>::quiet_NaN();
  bool xi_infinite = false;  // t* independent of L_E
  bool fitted = false;       // fewer than two onsets leaves the fit empty
};

/// Onset times per L_E and the exponential fit t* = t0 e^{L_E/ξ_t}.
inline OnsetFit fit_onset(const CurveSet& curves, const OnsetThreshold& th) {
  OnsetFit f;
  std::vector<double> x, y;
  for (const auto& [le, c] : curves) {
    const double d_th = th.for_curve(c);
    f.thresholds.push_back({le, d_th});
    const double ts = crossing_time(c, d_th);
    if (std::isnan(ts) || !(ts > 0)) {
      f.omitted.push_back(le);
      continue;
    }
    f.onsets.push_back({le, ts});
    x.push_back(le);
    y.push_back(std::log(ts));
  }
  if (x.size() < 2) return f;
  const LinearFit lf = least_squares(x, y);
  f.fitted = true;
  f.slope = lf.slope;
  f.r2 = lf.r2;
  f.t0 = std::exp(lf.intercept);
  if (std::abs(lf.slope) < 1e-12) {
    f.xi_infinite = true;
    f.xi_t = std::numeric_limits<double>::infinity();
  } else {
    f.xi_t = 1.0 / lf.slope;
  }
  return f;
}

struct ScalingFit {
  OnsetFit onset;
  std::vector<std::pair<int, double>> delta_inf;  // (L_E, Δ∞)
  double delta_inf_log2_slope = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<int, double>> tau;        // (L_E, τ*), smallest L_E pinned to 1
  double xi_tau = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<int, double>> t_sat;      // t*·τ*
  double residual = 0;                            // mean squared mismatch after collapse
};

namespace detail {

// Piecewise-linear interpolation of (x, y) at u; NaN outside the range.
inline double interp(const std::vector<double>& x, const std::vector<double>& y, double u) {
  if (x.empty() || u < x.front() || u > x.back()) return std::numeric_limits<double>::quiet_NaN();
  auto it = std::upper_bound(x.begin(), x.end(), u);
  if (it == x.end()) return y.back();
  const auto k = static_cast<std::size_t>(it - x.begin());
  if (k == 0) return y.front();
  const double w = (u - x[k - 1]) / (x[k] - x[k - 1]);
  return y[k - 1] + w * (y[k] - y[k - 1]);
}

// Mean squared difference between curve b shifted left by s and curve a on
// their overlap. Infinity without overlap.
inline double collapse_cost(const std::vector<double>& ax, const std::vector<double>& ay,
                            const std::vector<double>& bx, const std::vector<double>& by, double s) {
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < bx.size(); ++i) {
    const double ya = interp(ax, ay, bx[i] - s);
    if (std::isnan(ya)) continue;
    sum += (by[i] - ya) * (by[i] - ya);
    ++n;
  }
  return n < 2 ? std::numeric_limits<double>::infinity() : sum / static_cast<double>(n);
}

template <class F>
double golden_section(F&& f, double a, double b, double tol = 1e-8) {
  const double g = (std::sqrt(5.0) - 1) / 2;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return (a + b) / 2;
}

}  // namespace detail

/// Scaling collapse Δ/Δ∞ against t/(t*·τ*). Refuses when a curve has no
/// plateau: a non-positive Δ∞ or a window whose halves differ by more than
/// `plateau_tolerance` relative.
inline ScalingFit fit_collapse(const CurveSet& curves, const OnsetThreshold& th,
                               double plateau_tolerance = 0.25) {
  if (curves.size() < 2) throw FitRefused("collapse needs at least two L_E curves");
  ScalingFit fit;
  for (const auto& [le, c] : curves) {
    const double lo = th.plateau_start * c.t.back();
    std::vector<double> w;
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c.t[i] >= lo) w.push_back(c.delta[i]);
    const double inf = plateau(c, th.plateau_start);
    if (w.size() < 2 || !(inf > 0))
      throw FitRefused("no plateau for L_E = " + std::to_string(le) + " within the time grid");
    const std::size_t h = w.size() / 2;
    double m1 = 0, m2 = 0;
    for (std::size_t i = 0; i < h; ++i) m1 += w[i];
    for (std::size_t i = h; i < w.size(); ++i) m2 += w[i];
    m1 /= static_cast<double>(h);
    m2 /= static_cast<double>(w.size() - h);
    if (std::abs(m1 - m2) > plateau_tolerance * std::max(std::abs(m1), std::abs(m2)))
      throw FitRefused("Δ still drifting in the plateau window for L_E = " + std::to_string(le) +
                       " (halves " + std::to_string(m1) + " vs " + std::to_string(m2) + ")");
    fit.delta_inf.push_back({le, inf});
  }
  fit.onset = fit_onset(curves, th);
  if (!fit.onset.omitted.empty() || fit.onset.onsets.size() != curves.size())
    throw FitRefused("onset missing for some L_E; collapse needs every curve to cross");

  std::vector<double> lx, ly;
  for (const auto& [le, d] : fit.delta_inf) {
    lx.push_back(le);
    ly.push_back(std::log2(d));
  }
  fit.delta_inf_log2_slope = least_squares(lx, ly).slope;

  // Rescaled curves in x = ln(t / t*) with t > 0, y = Δ / Δ∞.
  std::vector<std::vector<double>> xs, ys;
  std::vector<int> les;
  std::size_t k = 0;
  for (const auto& [le, c] : curves) {
    const double ts = fit.onset.onsets[k].second;
    const double inf = fit.delta_inf[k].second;
    ++k;
    std::vector<double> x, y;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (!(c.t[i] > 0)) continue;
      x.push_back(std::log(c.t[i] / ts));
      y.push_back(c.delta[i] / inf);
    }
    xs.push_back(std::move(x));
    ys.push_back(std::move(y));
    les.push_back(le);
  }

  // Each curve is aligned to the reference (smallest L_E) by a shift s = ln τ*;
  // a coarse scan brackets the minimum, golden-section refines it.
  std::vector<double> log_tau{0.0};
  double total = 0;
  for (std::size_t j = 1; j < xs.size(); ++j) {
    const double span = std::max(xs[0].back() - xs[0].front(), xs[j].back() - xs[j].front());
    auto cost = [&](double s) { return detail::collapse_cost(xs[0], ys[0], xs[j], ys[j], s); };
    constexpr int kScan = 400;
    double best = 0, best_cost = cost(0);
    for (int i = 0; i <= kScan; ++i) {
      const double s = -span + 2 * span * i / kScan;
      const double v = cost(s);
      if (v < best_cost) {
        best_cost = v;
        best = s;
      }
    }
    const double step = 2 * span / kScan;
    const double s = detail::golden_section(cost, best - step, best + step);
    const double v = cost(s) < best_cost ? cost(s) : best_cost;
    log_tau.push_back(cost(s) < best_cost ? s : best);
    total += v;
  }
  fit.residual = xs.size() > 1 ? total / static_cast<double>(xs.size() - 1) : 0.0;

  std::vector<double> ex, ey;
  for (std::size_t j = 0; j < les.size(); ++j) {
    fit.tau.push_back({les[j], std::exp(log_tau[j])});
    fit.t_sat.push_back({les[j], fit.onset.onsets[j].second * std::exp(log_tau[j])});
    ex.push_back(les[j]);
    ey.push_back(log_tau[j]);
  }
  const double b = least_squares(ex, ey).slope;
  fit.xi_tau = std::abs(b) < 1e-12 ? std::numeric_limits<double>::infinity() : -1.0 / b;
  return fit;
}

}  // namespace ppe
