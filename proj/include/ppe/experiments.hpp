#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "ppe/circuits.hpp"
#include "ppe/config.hpp"
#include "ppe/ensemble.hpp"
#include "ppe/lbit.hpp"
#include "ppe/parallel.hpp"

namespace ppe {

struct DeltaRow {
  std::string family;
  std::uint64_t seed = 0;  // cell seed
  int l_r = 0, l_e = 0, l_s = 0;
  double t = 0;
  double delta = 0;
  double delta_ghs = std::numeric_limits<double>::quiet_NaN();  // NaN when not computed
  int realization = 0;
};

/// One sweep cell: a disorder realization on one geometry.
struct Cell {
  Tripartition part;
  int realization = 0;
};

inline std::vector<Cell> sweep_cells(const ExperimentConfig& c) {
  std::vector<Cell> cells;
  for (const auto& g : c.geometries())
    for (int r = 0; r < c.realizations; ++r) cells.push_back({g, r});
  return cells;
}

/// Child seed of a cell: SplitMix mixing of (master, realization, L_E, L_S,
/// L_R, time-grid id).
inline std::uint64_t cell_seed(const ExperimentConfig& c, const Cell& cell) {
  return derive_seed(c.seed, {static_cast<std::uint64_t>(cell.realization),
                              static_cast<std::uint64_t>(cell.part.l_e),
                              static_cast<std::uint64_t>(cell.part.l_s),
                              static_cast<std::uint64_t>(cell.part.l_r), c.time.id()});
}

inline std::uint64_t stream_seed(std::uint64_t cell, Stream s) {
  return derive_seed(cell, {static_cast<std::uint64_t>(s)});
}

/// Kicked Ising parameters of a cell.
inline KickedIsingParams cell_circuit(const ExperimentConfig& c, std::uint64_t seed, int n_sites) {
  RegimePreset p;
  p.regime = regime_of(c.family);
  p.seed = stream_seed(seed, Stream::Couplings);
  p.gamma = c.gamma;
  p.fields = c.sdki_fields;
  return p.make(n_sites);
}

inline LBitHamiltonian cell_lbit(const ExperimentConfig& c, std::uint64_t seed, int n_sites) {
  return build_lbit(n_sites, c.xi, c.max_order, stream_seed(seed, Stream::Couplings));
}

/// Receives every ensemble a sweep builds. Called from worker threads.
using EnsembleSink = std::function<void(const Cell&, double t, const PartialProjectedEnsemble&)>;

/// Runs one cell over the whole time grid.
inline std::vector<DeltaRow> run_cell(const ExperimentConfig& c, const Cell& cell,
                                      const std::vector<double>& times, const EnsembleSink& sink = {}) {
  const Tripartition& part = cell.part;
  const int n = part.total();
  const std::uint64_t seed = cell_seed(c, cell);
  const ProductStateSpec spec = c.initial_state(n, stream_seed(seed, Stream::InitialState));
  std::vector<DeltaRow> rows;
  auto emit = [&](double t, const PartialProjectedEnsemble* ens, double d) {
    DeltaRow row{to_string(c.family), seed, part.l_r, part.l_e, part.l_s, t, d,
                 std::numeric_limits<double>::quiet_NaN(), cell.realization};
    if (c.ghs && ens) row.delta_ghs = ghs_distance(*ens, part);
    if (sink && ens) sink(cell, t, *ens);
    rows.push_back(row);
  };

  if (c.family == Family::LBitZ) {
    const LBitHamiltonian h = cell_lbit(c, seed, n);
    const LBitZEnsemble z(spec, h, part);
    for (double t : times) {
      if (c.ghs || sink) {
        const auto ens = z.ensemble(t);
        emit(t, &ens, z.delta(t));
      } else {
        emit(t, nullptr, z.delta(t));
      }
    }
    return rows;
  }
  if (c.family == Family::LBitX) {
    const LBitHamiltonian h = cell_lbit(c, seed, n);
    for (double t : times) {
      const auto ens = x_ppe(spec, h, t, part);
      emit(t, &ens, delta(ens));
    }
    return rows;
  }
  const KickedIsingFloquet floquet(cell_circuit(c, seed, n));
  const MeasurementBasis basis = c.measurement_basis(part.l_s);
  PureState psi = make_product_state(spec);
  long done = 0;
  for (double t : times) {
    const auto periods = static_cast<long>(t);
    for (; done < periods; ++done) floquet.step(psi);
    const auto ens = build_ppe(psi, part, basis);
    emit(t, &ens, delta(ens));
  }
  return rows;
}

struct DeltaGridResult {
  std::vector<DeltaRow> rows;     // sorted by cell, then t
  std::vector<bool> completed;    // per cell, in sweep_cells order
  bool interrupted = false;
};

/// Sweeps every cell. Cells flagged in `skip` are not run (their rows are
/// expected to be merged back by the caller). Setting `*stop` makes workers
/// finish their current cell and return what is done.
inline DeltaGridResult run_delta_grid(const ExperimentConfig& c, const std::atomic<bool>* stop = nullptr,
                                      const std::vector<bool>* skip = nullptr, const EnsembleSink& sink = {}) {
  c.validate();
  const auto cells = sweep_cells(c);
  const auto times = c.time.points(c.integer_times());
  std::vector<std::vector<DeltaRow>> slots(cells.size());
  std::vector<char> done(cells.size(), 0);
  parallel_for(cells.size(), c.threads, [&](std::size_t i) {
    if (skip && (*skip)[i]) return;
    if (stop && stop->load()) return;
    slots[i] = run_cell(c, cells[i], times, sink);
    done[i] = 1;
  });
  DeltaGridResult res;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    res.completed.push_back(done[i] != 0);
    if (!done[i] && !(skip && (*skip)[i])) res.interrupted = true;
    for (auto& r : slots[i]) res.rows.push_back(std::move(r));
  }
  return res;
}

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
    else comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0, comp_ = 0;
};

struct MeanStderr {
  std::size_t n = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stderr_ = std::numeric_limits<double>::quiet_NaN();  // NaN for n < 2
};

/// Mean and sample-std/√N with two compensated passes.
inline MeanStderr mean_stderr(const std::vector<double>& x) {
  MeanStderr m;
  m.n = x.size();
  if (x.empty()) return m;
  CompensatedSum s;
  for (double v : x) s.add(v);
  m.mean = s.value() / static_cast<double>(x.size());
  if (x.size() < 2) return m;
  CompensatedSum ss;
  for (double v : x) ss.add((v - m.mean) * (v - m.mean));
  const double var = ss.value() / static_cast<double>(x.size() - 1);
  m.stderr_ = std::sqrt(var / static_cast<double>(x.size()));
  return m;
}

struct AggregateRow {
  std::string family;
  int l_r = 0, l_e = 0, l_s = 0;
  double t = 0;
  MeanStderr delta;
  MeanStderr delta_ghs;
};

/// Groups rows by (family, L_R, L_E, L_S, t) in sorted order.
inline std::vector<AggregateRow> aggregate(const std::vector<DeltaRow>& rows) {
  using Key = std::tuple<std::string, int, int, int, double>;
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : rows) {
    auto& g = groups[{r.family, r.l_r, r.l_e, r.l_s, r.t}];
    g.first.push_back(r.delta);
    if (!std::isnan(r.delta_ghs)) g.second.push_back(r.delta_ghs);
  }
  std::vector<AggregateRow> out;
  for (const auto& [k, v] : groups) {
    AggregateRow a;
    std::tie(a.family, a.l_r, a.l_e, a.l_s, a.t) = k;
    a.delta = mean_stderr(v.first);
    a.delta_ghs = mean_stderr(v.second);
    out.push_back(a);
  }
  return out;
}

namespace detail {

inline std::string fmt_double(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double read_double(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::istringstream is(s);
  is.imbue(std::locale::classic());
  double x;
  if (!(is >> x)) throw Error("bad number '" + s + "' in table");
  return x;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline constexpr const char* kDeltaHeader = "family,seed,L_R,L_E,L_S,t,delta,delta_ghs,realization";
inline constexpr const char* kAggregateHeader =
    "family,L_R,L_E,L_S,t,n,delta_mean,delta_stderr,delta_ghs_mean,delta_ghs_stderr";

inline void write_delta_csv(std::ostream& os, const std::vector<DeltaRow>& rows) {
  os << kDeltaHeader << '\n';
  for (const auto& r : rows)
    os << r.family << ',' << r.seed << ',' << r.l_r << ',' << r.l_e << ',' << r.l_s << ','
       << detail::fmt_double(r.t) << ',' << detail::fmt_double(r.delta) << ','
       << detail::fmt_double(r.delta_ghs) << ',' << r.realization << '\n';
}

inline std::vector<DeltaRow> read_delta_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || detail::trim(line) != kDeltaHeader) throw Error("not a delta table");
  std::vector<DeltaRow> rows;
  while (std::getline(is, line)) {
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 9) throw Error("delta table row has " + std::to_string(f.size()) + " fields");
    DeltaRow r;
    r.family = f[0];
    r.seed = std::stoull(f[1]);
    r.l_r = std::stoi(f[2]);
    r.l_e = std::stoi(f[3]);
    r.l_s = std::stoi(f[4]);
    r.t = detail::read_double(f[5]);
    r.delta = detail::read_double(f[6]);
    r.delta_ghs = detail::read_double(f[7]);
    r.realization = std::stoi(f[8]);
    rows.push_back(r);
  }
  return rows;
}

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << kAggregateHeader << '\n';
  for (const auto& a : rows)
    os << a.family << ',' << a.l_r << ',' << a.l_e << ',' << a.l_s << ',' << detail::fmt_double(a.t) << ','
       << a.delta.n << ',' << detail::fmt_double(a.delta.mean) << ',' << detail::fmt_double(a.delta.stderr_)
       << ',' << detail::fmt_double(a.delta_ghs.mean) << ',' << detail::fmt_double(a.delta_ghs.stderr_)
       << '\n';
}

inline std::vector<AggregateRow> read_aggregate_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || detail::trim(line) != kAggregateHeader) throw Error("not an aggregate table");
  std::vector<AggregateRow> rows;
  while (std::getline(is, line)) {
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 10) throw Error("aggregate row has " + std::to_string(f.size()) + " fields");
    AggregateRow a;
    a.family = f[0];
    a.l_r = std::stoi(f[1]);
    a.l_e = std::stoi(f[2]);
    a.l_s = std::stoi(f[3]);
    a.t = detail::read_double(f[4]);
    a.delta.n = std::stoull(f[5]);
    a.delta.mean = detail::read_double(f[6]);
    a.delta.stderr_ = detail::read_double(f[7]);
    a.delta_ghs.mean = detail::read_double(f[8]);
    a.delta_ghs.stderr_ = detail::read_double(f[9]);
    rows.push_back(a);
  }
  return rows;
}

/// Canonical INI text of a config; used in manifests and to match resume markers.
inline std::string config_to_ini(const ExperimentConfig& c) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  auto list = [&](const auto& v) {
    std::string s;
    for (const auto& x : v) {
      std::ostringstream e;
      e.imbue(std::locale::classic());
      e.precision(17);
      e << x;
      s += (s.empty() ? "" : ",") + e.str();
    }
    return s;
  };
  os << "[model]\nfamily = " << to_string(c.family) << "\ngamma = " << c.gamma << "\nxi = " << c.xi
     << "\nmax_order = " << c.max_order << '\n';
  if (!c.sdki_fields.empty()) os << "sdki_fields = " << list(c.sdki_fields) << '\n';
  os << "\n[geometry]\nl_r = " << list(c.l_r) << "\nl_e = " << list(c.l_e) << "\nl_s = " << list(c.l_s) << '\n';
  os << "\n[time]\ngrid = " << (c.time.kind == TimeGrid::Kind::Linear ? "linear" : "log")
     << "\nstart = " << c.time.start << "\nstop = " << c.time.stop << "\nstep = " << c.time.step
     << "\nper_decade = " << c.time.per_decade << '\n';
  os << "\n[ensemble]\nrealizations = " << c.realizations << "\ninitial_state = " << to_string(c.initial)
     << '\n';
  if (!c.state_angles.empty()) {
    std::string s;
    for (const auto& [th, ph] : c.state_angles) {
      std::ostringstream e;
      e.imbue(std::locale::classic());
      e.precision(17);
      e << th << ':' << ph;
      s += (s.empty() ? "" : ",") + e.str();
    }
    os << "state_angles = " << s << '\n';
  }
  const char* basis = c.basis.kind == SiteBasis::Kind::Z ? "z" : c.basis.kind == SiteBasis::Kind::X ? "x" : "tilted";
  os << "basis = " << basis << '\n';
  if (c.basis.kind == SiteBasis::Kind::Tilted)
    os << "basis_theta = " << c.basis.theta << "\nbasis_phi = " << c.basis.phi << '\n';
  os << "ghs = " << (c.ghs ? "true" : "false") << '\n';
  os << "\n[pop]\nbins = " << c.pop_bins << "\nmax = " << c.pop_max
     << "\nz_r = " << (c.pop_z_r.empty() ? std::string("all") : list(c.pop_z_r)) << '\n';
  os << "\n[run]\nseed = " << c.seed << "\nthreads = " << c.threads << "\nout = " << c.out
     << "\nonset_threshold = "
     << (c.onset_threshold ? detail::fmt_double(*c.onset_threshold) : std::string("auto"))
     << "\nonset_relative = " << c.onset_relative << "\nplateau_start = " << c.plateau_start << '\n';
  return os.str();
}

}  // namespace ppe
