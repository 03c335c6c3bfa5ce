#include <algorithm>
#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <tuple>

#include <CLI11.hpp>
#include <json.hpp>

#include "ppe/config.hpp"
#include "ppe/experiments.hpp"
#include "ppe/fit.hpp"
#include "ppe/pop_experiment.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";
std::atomic<bool> g_stop{false};

void on_sigint(int) { g_stop.store(true); }

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
  std::string preset;
  std::string table;
  bool dump = false;
};

std::string cell_tag(const ppe::Cell& cell) {
  return "LR" + std::to_string(cell.part.l_r) + "_LE" + std::to_string(cell.part.l_e) + "_LS" +
         std::to_string(cell.part.l_s) + "_r" + std::to_string(cell.realization);
}

// Binary ensemble per (cell, t) and, for l-bit families, the Hamiltonian of
// every cell: the (seed, xi, max_order) triple regenerates it, the coupling
// tables are for inspection.
ppe::EnsembleSink dump_outputs(const ppe::ExperimentConfig& c, const fs::path& dir) {
  fs::create_directories(dir / "ensembles");
  if (ppe::is_lbit(c.family)) {
    fs::create_directories(dir / "couplings");
    std::ofstream idx(dir / "hamiltonians.csv");
    idx << "L_R,L_E,L_S,realization,seed,xi,max_order\n";
    for (const auto& cell : ppe::sweep_cells(c)) {
      const auto seed = ppe::stream_seed(ppe::cell_seed(c, cell), ppe::Stream::Couplings);
      idx << cell.part.l_r << ',' << cell.part.l_e << ',' << cell.part.l_s << ',' << cell.realization << ','
          << seed << ',' << ppe::detail::fmt_double(c.xi) << ',' << c.max_order << '\n';
      std::ofstream f(dir / "couplings" / (cell_tag(cell) + ".csv"));
      ppe::cell_lbit(c, ppe::cell_seed(c, cell), cell.part.total()).write_coupling_csv(f);
    }
  }
  return [dir](const ppe::Cell& cell, double t, const ppe::PartialProjectedEnsemble& ens) {
    std::ofstream f(dir / "ensembles" / (cell_tag(cell) + "_t" + ppe::detail::fmt_double(t) + ".ppen"),
                    std::ios::binary);
    ppe::write_ensemble(f, ens);
  };
}

ppe::ExperimentConfig load(const Common& o) {
  ppe::ExperimentConfig c = o.preset.empty() ? ppe::ExperimentConfig{} : ppe::preset_config(o.preset);
  if (!o.config.empty()) c = ppe::load_config(o.config, c);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out = o.out;
  if (o.threads) c.threads = *o.threads;
  c.validate();
  return c;
}

// Config text that identifies a sweep independent of where and how fast it runs.
std::string sweep_identity(ppe::ExperimentConfig c) {
  c.threads = 1;
  c.out.clear();
  return ppe::config_to_ini(c);
}

json manifest(const ppe::ExperimentConfig& c, const std::string& command) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["master_seed"] = c.seed;
  m["family"] = ppe::to_string(c.family);
  m["config"] = ppe::config_to_ini(c);
  m["seed_scheme"] = "splitmix64(master; realization, L_E, L_S, L_R, grid id) then (cell; stream)";
  m["compiler"] = __VERSION__;
  m["boost"] = BOOST_LIB_VERSION;
  return m;
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream f(p);
  f << j.dump(2) << '\n';
}

// Runs (or resumes) the Δ sweep and writes delta.csv, aggregate.csv,
// manifest.json. Returns the aggregate table.
std::vector<ppe::AggregateRow> delta_grid(const ppe::ExperimentConfig& c, const std::string& command,
                                          bool dump = false) {
  const fs::path dir(c.out);
  fs::create_directories(dir);
  const auto cells = ppe::sweep_cells(c);
  auto cell_index = [&](const ppe::DeltaRow& r) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (cells[i].part.l_r == r.l_r && cells[i].part.l_e == r.l_e && cells[i].part.l_s == r.l_s &&
          cells[i].realization == r.realization)
        return i;
    return std::nullopt;
  };

  std::vector<bool> skip(cells.size(), false);
  std::vector<ppe::DeltaRow> kept;
  const fs::path marker = dir / "resume.json";
  if (fs::exists(marker)) {
    std::ifstream mf(marker);
    const json m = json::parse(mf);
    if (m.value("identity", "") == sweep_identity(c) && fs::exists(dir / "delta.csv")) {
      for (std::size_t i : m.at("completed").get<std::vector<std::size_t>>())
        if (i < skip.size()) skip[i] = true;
      std::ifstream df(dir / "delta.csv");
      for (auto& r : ppe::read_delta_csv(df)) {
        const auto idx = cell_index(r);
        if (idx && skip[*idx]) kept.push_back(r);
      }
      std::cerr << "resuming: " << std::count(skip.begin(), skip.end(), true) << " of " << cells.size()
                << " cells already done\n";
    } else {
      std::cerr << "ignoring resume marker from a different sweep\n";
    }
  }

  std::signal(SIGINT, on_sigint);
  auto res = ppe::run_delta_grid(c, &g_stop, &skip, dump ? dump_outputs(c, dir) : ppe::EnsembleSink{});
  std::signal(SIGINT, SIG_DFL);

  for (auto& r : kept) res.rows.push_back(r);
  std::vector<std::tuple<std::size_t, double, std::size_t>> order;
  for (std::size_t i = 0; i < res.rows.size(); ++i) order.emplace_back(*cell_index(res.rows[i]), res.rows[i].t, i);
  std::sort(order.begin(), order.end());
  std::vector<ppe::DeltaRow> rows;
  for (const auto& [ci, t, i] : order) rows.push_back(res.rows[i]);

  {
    std::ofstream f(dir / "delta.csv");
    ppe::write_delta_csv(f, rows);
  }
  const auto agg = ppe::aggregate(rows);
  {
    std::ofstream f(dir / "aggregate.csv");
    ppe::write_aggregate_csv(f, agg);
  }
  json m = manifest(c, command);
  m["cells"] = cells.size();
  m["rows"] = rows.size();
  m["complete"] = !res.interrupted;
  write_json(dir / "manifest.json", m);

  if (res.interrupted) {
    std::vector<std::size_t> done;
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (skip[i] || res.completed[i]) done.push_back(i);
    json r;
    r["identity"] = sweep_identity(c);
    r["completed"] = done;
    write_json(marker, r);
    std::cerr << "interrupted: " << done.size() << " of " << cells.size()
              << " cells flushed; rerun the same command to resume\n";
  } else if (fs::exists(marker)) {
    fs::remove(marker);
  }
  return agg;
}

std::vector<ppe::AggregateRow> load_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ppe::ConfigError("cannot open table '" + path + "'");
  std::string header;
  std::getline(f, header);
  f.seekg(0);
  if (ppe::detail::trim(header) == ppe::kDeltaHeader) return ppe::aggregate(ppe::read_delta_csv(f));
  return ppe::read_aggregate_csv(f);
}

std::vector<std::pair<int, int>> slices(const std::vector<ppe::AggregateRow>& agg) {
  std::vector<std::pair<int, int>> s;
  for (const auto& a : agg)
    if (std::find(s.begin(), s.end(), std::make_pair(a.l_r, a.l_s)) == s.end()) s.push_back({a.l_r, a.l_s});
  return s;
}

json pairs_json(const std::vector<std::pair<int, double>>& v) {
  json j = json::array();
  for (const auto& [le, x] : v) j.push_back({{"L_E", le}, {"value", x}});
  return j;
}

json num(double x) { return std::isfinite(x) ? json(x) : json(std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf")); }

int fit_onset_cmd(const ppe::ExperimentConfig& c, const Common& o) {
  const auto agg = o.table.empty() ? delta_grid(c, "fit-onset") : load_table(o.table);
  const fs::path dir(c.out);
  fs::create_directories(dir);
  const auto th = ppe::default_threshold(c);
  json out = json::array();
  std::ofstream csv(dir / "onset.csv");
  csv << "L_R,L_S,L_E,threshold,t_star\n";
  bool refused = false;
  for (const auto& [lr, ls] : slices(agg)) {
    const auto fit = ppe::fit_onset(ppe::curves_from_aggregate(agg, lr, ls), th);
    for (const auto& [le, d] : fit.thresholds) {
      double ts = std::numeric_limits<double>::quiet_NaN();
      for (const auto& [l, t] : fit.onsets)
        if (l == le) ts = t;
      csv << lr << ',' << ls << ',' << le << ',' << ppe::detail::fmt_double(d) << ','
          << ppe::detail::fmt_double(ts) << '\n';
    }
    json j{{"L_R", lr}, {"L_S", ls}, {"onsets", pairs_json(fit.onsets)}, {"omitted", fit.omitted},
           {"fitted", fit.fitted}, {"t0", num(fit.t0)}, {"xi_t", num(fit.xi_t)}, {"slope", num(fit.slope)},
           {"r2", num(fit.r2)}, {"xi_infinite", fit.xi_infinite}};
    out.push_back(j);
    std::cout << "L_R=" << lr << " L_S=" << ls << ": ";
    if (fit.fitted)
      std::cout << "xi_t=" << fit.xi_t << (fit.xi_infinite ? " (flagged: t* independent of L_E)" : "")
                << " t0=" << fit.t0 << " R2=" << fit.r2;
    else
      std::cout << "no fit (fewer than two onsets)";
    if (!fit.omitted.empty()) {
      std::cout << "; no crossing for L_E =";
      for (int le : fit.omitted) std::cout << ' ' << le;
    }
    std::cout << '\n';
    refused = refused || !fit.fitted;
  }
  write_json(dir / "onset.json", out);
  if (refused) throw ppe::FitRefused("onset fit needs at least two L_E with a crossing");
  return 0;
}

int fit_collapse_cmd(const ppe::ExperimentConfig& c, const Common& o) {
  const auto agg = o.table.empty() ? delta_grid(c, "fit-collapse") : load_table(o.table);
  const fs::path dir(c.out);
  fs::create_directories(dir);
  const auto th = ppe::default_threshold(c);
  json out = json::array();
  std::ofstream csv(dir / "collapse_curves.csv");
  csv << "L_R,L_S,L_E,t,x,y\n";
  for (const auto& [lr, ls] : slices(agg)) {
    const auto curves = ppe::curves_from_aggregate(agg, lr, ls);
    const auto fit = ppe::fit_collapse(curves, th);
    std::size_t k = 0;
    for (const auto& [le, cv] : curves) {
      const double ts = fit.t_sat[k].second, inf = fit.delta_inf[k].second;
      ++k;
      for (std::size_t i = 0; i < cv.size(); ++i)
        csv << lr << ',' << ls << ',' << le << ',' << ppe::detail::fmt_double(cv.t[i]) << ','
            << ppe::detail::fmt_double(cv.t[i] / ts) << ',' << ppe::detail::fmt_double(cv.delta[i] / inf) << '\n';
    }
    out.push_back({{"L_R", lr}, {"L_S", ls}, {"onsets", pairs_json(fit.onset.onsets)}, {"xi_t", num(fit.onset.xi_t)},
                   {"delta_inf", pairs_json(fit.delta_inf)}, {"delta_inf_log2_slope", num(fit.delta_inf_log2_slope)},
                   {"tau", pairs_json(fit.tau)}, {"xi_tau", num(fit.xi_tau)}, {"t_sat", pairs_json(fit.t_sat)},
                   {"residual", num(fit.residual)}});
    std::cout << "L_R=" << lr << " L_S=" << ls << ": xi_t=" << fit.onset.xi_t << " xi_tau=" << fit.xi_tau
              << " log2 slope of delta_inf=" << fit.delta_inf_log2_slope << " residual=" << fit.residual << '\n';
  }
  write_json(dir / "collapse.json", out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partial projected ensembles of kicked Ising and l-bit dynamics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Common opt;
  auto add_common = [&](CLI::App* s) {
    s->add_option("--config", opt.config, "INI config file");
    s->add_option("--seed", opt.seed, "master seed (overrides config)");
    s->add_option("--out", opt.out, "output directory (overrides config)");
    s->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
    s->add_option("--preset", opt.preset, "baseline config")->check(CLI::IsMember({"ergodic", "mbl", "sdki"}));
  };
  auto* grid = app.add_subcommand("delta-grid", "sweep Δ(t) over realizations and geometries");
  auto* pop = app.add_subcommand("pop", "probability-of-probabilities histograms");
  auto* onset = app.add_subcommand("fit-onset", "onset times and exponential fit");
  auto* collapse = app.add_subcommand("fit-collapse", "scaling collapse of Δ curves");
  auto* ghs = app.add_subcommand("ghs-distance", "Δ sweep with the gHS distance column");
  auto* lbit = app.add_subcommand("lbit-delta", "Δ sweep of the l-bit model");
  for (auto* s : {grid, pop, onset, collapse, ghs, lbit}) add_common(s);
  for (auto* s : {onset, collapse})
    s->add_option("--table", opt.table, "existing delta.csv or aggregate.csv (skips the sweep)");
  for (auto* s : {grid, ghs, lbit})
    s->add_flag("--dump", opt.dump, "also write binary ensembles (and l-bit Hamiltonians)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return e.get_exit_code() == 0 ? app.exit(e) : (app.exit(e), 2);
  }

  try {
    ppe::ExperimentConfig c = load(opt);
    if (grid->parsed()) {
      delta_grid(c, "delta-grid", opt.dump);
    } else if (ghs->parsed()) {
      c.ghs = true;
      delta_grid(c, "ghs-distance", opt.dump);
    } else if (lbit->parsed()) {
      if (!ppe::is_lbit(c.family)) {
        if (!opt.config.empty() || !opt.preset.empty())
          throw ppe::ConfigError("lbit-delta needs family lbit-z or lbit-x");
        c = ppe::parse_config_text("[model]\nfamily = lbit-z\n", c);
        c.l_r = {1};
        c.validate();
      }
      delta_grid(c, "lbit-delta", opt.dump);
    } else if (pop->parsed()) {
      const auto res = ppe::run_pop_experiment(c, c.out);
      write_json(fs::path(c.out) / "manifest.json", manifest(c, "pop"));
      std::cout << res.cells.size() << " (geometry, t) cells written to " << c.out << '\n';
    } else if (onset->parsed()) {
      return fit_onset_cmd(c, opt);
    } else if (collapse->parsed()) {
      return fit_collapse_cmd(c, opt);
    }
  } catch (const ppe::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ppe::FitRefused& e) {
    std::cerr << "fit refused: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
