#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <locale>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ppe/circuits.hpp"
#include "ppe/state.hpp"
#include "ppe/types.hpp"

namespace ppe {

enum class Family { Ergodic, MBL, SelfDual, LBitZ, LBitX };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::Ergodic: return "ergodic";
    case Family::MBL: return "mbl";
    case Family::SelfDual: return "sdki";
    case Family::LBitZ: return "lbit-z";
    case Family::LBitX: return "lbit-x";
  }
  return "?";
}

inline Family family_from_string(const std::string& s) {
  if (s == "ergodic") return Family::Ergodic;
  if (s == "mbl") return Family::MBL;
  if (s == "sdki") return Family::SelfDual;
  if (s == "lbit-z") return Family::LBitZ;
  if (s == "lbit-x") return Family::LBitX;
  throw ConfigError("unknown model family '" + s + "'");
}

inline bool is_lbit(Family f) { return f == Family::LBitZ || f == Family::LBitX; }

inline Regime regime_of(Family f) {
  switch (f) {
    case Family::Ergodic: return Regime::Ergodic;
    case Family::MBL: return Regime::MBL;
    case Family::SelfDual: return Regime::SelfDual;
    default: throw ConfigError("l-bit families have no kicked Ising regime");
  }
}

enum class InitialState { Plus, Up, Haar, Explicit };

inline std::string to_string(InitialState s) {
  switch (s) {
    case InitialState::Plus: return "plus";
    case InitialState::Up: return "up";
    case InitialState::Haar: return "haar";
    case InitialState::Explicit: return "explicit";
  }
  return "?";
}

struct TimeGrid {
  enum class Kind { Linear, Log };
  Kind kind = Kind::Linear;
  double start = 0;
  double stop = 20;
  double step = 1;        // linear
  int per_decade = 16;    // log

  /// Grid points in increasing order. Integer-period families round and
  /// deduplicate.
  std::vector<double> points(bool integer) const {
    std::vector<double> t;
    if (kind == Kind::Linear) {
      const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
      for (long k = 0; k <= n; ++k) t.push_back(start + step * static_cast<double>(k));
    } else {
      const double a = std::log10(start), b = std::log10(stop);
      const auto n = static_cast<long>(std::floor((b - a) * per_decade + 1e-9));
      for (long k = 0; k <= n; ++k) t.push_back(std::pow(10.0, a + static_cast<double>(k) / per_decade));
    }
    if (integer) {
      for (auto& x : t) x = std::round(x);
      t.erase(std::unique(t.begin(), t.end()), t.end());
    }
    return t;
  }

  /// Seed-derivation tag. Depends on the grid kind only so that extending a
  /// grid keeps existing rows.
  std::uint64_t id() const { return kind == Kind::Linear ? 1 : 2; }
};

/// Everything a sweep needs. Parsed from an INI file; see README for the schema.
struct ExperimentConfig {
  Family family = Family::Ergodic;
  double gamma = 0.15;
  double xi = 0.5;
  int max_order = 0;
  std::vector<double> sdki_fields;

  std::vector<int> l_r{1};
  std::vector<int> l_e{2, 4, 6};
  std::vector<int> l_s{8};

  TimeGrid time;

  int realizations = 20;
  InitialState initial = InitialState::Haar;
  std::vector<std::array<double, 2>> state_angles;  // (theta, phi) per site
  SiteBasis basis = SiteBasis::z();
  bool ghs = false;

  std::size_t pop_bins = 100;
  double pop_max = 4.0;
  std::vector<Index> pop_z_r;  // empty = all

  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = "results";
  std::optional<double> onset_threshold;  // absolute; default per family
  double onset_relative = 0.1;
  double plateau_start = 0.5;             // window [plateau_start T, T]

  std::vector<Tripartition> geometries() const {
    std::vector<Tripartition> g;
    for (int r : l_r)
      for (int e : l_e)
        for (int s : l_s) g.push_back({r, e, s});
    return g;
  }

  bool integer_times() const { return !is_lbit(family); }

  ProductStateSpec initial_state(int n_sites, std::uint64_t seed_state) const {
    switch (initial) {
      case InitialState::Plus: return ProductStateSpec::plus(n_sites);
      case InitialState::Up: return ProductStateSpec::all_up(n_sites);
      case InitialState::Haar: return random_product_state(seed_state, n_sites);
      case InitialState::Explicit: {
        ProductStateSpec s;
        for (int i = 0; i < n_sites; ++i) {
          const auto [th, ph] = state_angles[static_cast<std::size_t>(i)];
          s.sites.push_back({std::cos(th / 2), std::polar(std::sin(th / 2), ph)});
        }
        return s;
      }
    }
    return ProductStateSpec::plus(n_sites);
  }

  MeasurementBasis measurement_basis(int l_s_) const { return MeasurementBasis::uniform(l_s_, basis); }

  void validate() const {
    if (realizations < 1) throw ConfigError("realizations must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (l_r.empty() || l_e.empty() || l_s.empty()) throw ConfigError("geometry lists must be non-empty");
    for (const auto& g : geometries()) {
      try {
        g.validate();
      } catch (const Error& e) {
        throw ConfigError(std::string("geometry: ") + e.what());
      }
      if (initial == InitialState::Explicit && static_cast<int>(state_angles.size()) < g.total())
        throw ConfigError("explicit state lists fewer angles than sites");
      if (family == Family::SelfDual && !sdki_fields.empty() &&
          static_cast<int>(sdki_fields.size()) != g.total())
        throw ConfigError("sdki fields must list one value per site");
      if (family == Family::LBitZ && g.l_r != 1) throw ConfigError("lbit-z needs l_r = 1");
      if (is_lbit(family) && g.total() > 16 && max_order == g.total())
        throw ConfigError("all-subset l-bit couplings limited to 16 sites");
    }
    if (family == Family::LBitZ && basis.kind != SiteBasis::Kind::Z)
      throw ConfigError("lbit-z measures in the Z basis");
    if (family == Family::LBitX && basis.kind != SiteBasis::Kind::X)
      throw ConfigError("lbit-x measures in the X basis");
    if (gamma < 0 || gamma > 1) throw ConfigError("gamma must lie in [0, 1]");
    if (!(xi > 0)) throw ConfigError("xi must be positive");
    if (time.kind == TimeGrid::Kind::Linear) {
      if (!(time.step > 0) || time.stop < time.start || time.start < 0)
        throw ConfigError("linear time grid needs 0 <= start <= stop and step > 0");
    } else {
      if (!(time.start > 0) || time.stop < time.start || time.per_decade < 1)
        throw ConfigError("log time grid needs 0 < start <= stop and per_decade >= 1");
    }
    if (integer_times() && time.points(true).back() > 1e6)
      throw ConfigError("kicked Ising time grids are limited to 1e6 periods");
    if (pop_bins < 1 || !(pop_max > 0)) throw ConfigError("pop binning needs bins >= 1 and max > 0");
    if (!(plateau_start > 0 && plateau_start < 1)) throw ConfigError("plateau_start must lie in (0, 1)");
    if (!(onset_relative > 0)) throw ConfigError("onset_relative must be positive");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  is.imbue(std::locale::classic());
  T x{};
  if (!(is >> x) || !(is >> std::ws).eof()) throw ConfigError("bad value for " + key + ": '" + v + "'");
  return x;
}

// "2,3,4" or "2..6" or a mix.
inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& item : split_list(v)) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_number<int>(key, item));
    } else {
      const int a = parse_number<int>(key, trim(item.substr(0, dots)));
      const int b = parse_number<int>(key, trim(item.substr(dots + 2)));
      if (b < a) throw ConfigError("empty range in " + key);
      for (int k = a; k <= b; ++k) out.push_back(k);
    }
  }
  if (out.empty()) throw ConfigError(key + " is empty");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

}  // namespace detail

/// Baseline configs behind --preset.
inline ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  if (name == "ergodic") {
    c.family = Family::Ergodic;
    c.l_e = {2, 4, 6};
    c.l_s = {8};
    c.time = {TimeGrid::Kind::Linear, 0, 20, 1, 16};
    c.initial = InitialState::Haar;
  } else if (name == "mbl") {
    c.family = Family::MBL;
    c.l_e = {2, 3, 4};
    c.l_s = {8};
    c.time = {TimeGrid::Kind::Log, 1, 1e4, 1, 8};
    c.initial = InitialState::Haar;
  } else if (name == "sdki") {
    c.family = Family::SelfDual;
    c.l_e = {1, 2, 3};
    c.l_s = {10};
    c.time = {TimeGrid::Kind::Linear, 0, 8, 1, 16};
    c.initial = InitialState::Plus;
    c.realizations = 1;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected ergodic, mbl or sdki)");
  }
  return c;
}

/// Applies `[section] key = value` entries on top of `base`. Unknown sections
/// or keys are errors.
inline ExperimentConfig parse_config(std::istream& is, ExperimentConfig c = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  static const std::map<std::string, std::set<std::string>> schema = {
      {"model", {"family", "gamma", "xi", "max_order", "sdki_fields"}},
      {"geometry", {"l_r", "l_e", "l_s"}},
      {"time", {"grid", "start", "stop", "step", "per_decade"}},
      {"ensemble", {"realizations", "initial_state", "state_angles", "basis", "basis_theta", "basis_phi", "ghs"}},
      {"pop", {"bins", "max", "z_r"}},
      {"run", {"seed", "threads", "out", "onset_threshold", "onset_relative", "plateau_start"}},
  };
  bool family_set = false, initial_set = false, basis_set = false, grid_set = false;
  std::set<std::string> time_keys;
  double theta = 0, phi = 0;
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError("key '" + section + "' outside any section");
    const auto sec = schema.find(section);
    if (sec == schema.end()) throw ConfigError("unknown section [" + section + "]");
    for (const auto& [key, node] : body) {
      if (!sec->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      const std::string name = section + "." + key;
      if (section == "time") time_keys.insert(key);
      const std::string v = detail::trim(node.data());
      using detail::parse_number;
      if (name == "model.family") {
        c.family = family_from_string(v);
        family_set = true;
      } else if (name == "model.gamma") {
        c.gamma = parse_number<double>(name, v);
      } else if (name == "model.xi") {
        c.xi = parse_number<double>(name, v);
      } else if (name == "model.max_order") {
        c.max_order = parse_number<int>(name, v);
      } else if (name == "model.sdki_fields") {
        c.sdki_fields.clear();
        for (const auto& x : detail::split_list(v)) c.sdki_fields.push_back(parse_number<double>(name, x));
      } else if (name == "geometry.l_r") {
        c.l_r = detail::parse_int_list(name, v);
      } else if (name == "geometry.l_e") {
        c.l_e = detail::parse_int_list(name, v);
      } else if (name == "geometry.l_s") {
        c.l_s = detail::parse_int_list(name, v);
      } else if (name == "time.grid") {
        if (v == "linear") c.time.kind = TimeGrid::Kind::Linear;
        else if (v == "log") c.time.kind = TimeGrid::Kind::Log;
        else throw ConfigError("time.grid must be linear or log");
        grid_set = true;
      } else if (name == "time.start") {
        c.time.start = parse_number<double>(name, v);
      } else if (name == "time.stop") {
        c.time.stop = parse_number<double>(name, v);
      } else if (name == "time.step") {
        c.time.step = parse_number<double>(name, v);
      } else if (name == "time.per_decade") {
        c.time.per_decade = parse_number<int>(name, v);
      } else if (name == "ensemble.realizations") {
        c.realizations = parse_number<int>(name, v);
      } else if (name == "ensemble.initial_state") {
        if (v == "plus") c.initial = InitialState::Plus;
        else if (v == "up") c.initial = InitialState::Up;
        else if (v == "haar") c.initial = InitialState::Haar;
        else if (v == "explicit") c.initial = InitialState::Explicit;
        else throw ConfigError("initial_state must be plus, up, haar or explicit");
        initial_set = true;
      } else if (name == "ensemble.state_angles") {
        c.state_angles.clear();
        for (const auto& item : detail::split_list(v)) {
          const auto colon = item.find(':');
          if (colon == std::string::npos) throw ConfigError("state_angles entries are theta:phi");
          c.state_angles.push_back({parse_number<double>(name, detail::trim(item.substr(0, colon))),
                                    parse_number<double>(name, detail::trim(item.substr(colon + 1)))});
        }
      } else if (name == "ensemble.basis") {
        if (v == "z") c.basis = SiteBasis::z();
        else if (v == "x") c.basis = SiteBasis::x();
        else if (v == "tilted") c.basis = SiteBasis::tilted(0, 0);
        else throw ConfigError("basis must be z, x or tilted");
        basis_set = true;
      } else if (name == "ensemble.basis_theta") {
        theta = parse_number<double>(name, v);
      } else if (name == "ensemble.basis_phi") {
        phi = parse_number<double>(name, v);
      } else if (name == "ensemble.ghs") {
        c.ghs = detail::parse_bool(name, v);
      } else if (name == "pop.bins") {
        c.pop_bins = parse_number<std::size_t>(name, v);
      } else if (name == "pop.max") {
        c.pop_max = parse_number<double>(name, v);
      } else if (name == "pop.z_r") {
        c.pop_z_r.clear();
        if (v != "all")
          for (const auto& x : detail::split_list(v)) c.pop_z_r.push_back(parse_number<Index>(name, x));
      } else if (name == "run.seed") {
        c.seed = parse_number<std::uint64_t>(name, v);
      } else if (name == "run.threads") {
        c.threads = parse_number<int>(name, v);
      } else if (name == "run.out") {
        c.out = v;
      } else if (name == "run.onset_threshold") {
        if (v == "auto") c.onset_threshold.reset();
        else c.onset_threshold = parse_number<double>(name, v);
      } else if (name == "run.onset_relative") {
        c.onset_relative = parse_number<double>(name, v);
      } else if (name == "run.plateau_start") {
        c.plateau_start = parse_number<double>(name, v);
      }
    }
  }
  if (c.basis.kind == SiteBasis::Kind::Tilted) c.basis = SiteBasis::tilted(theta, phi);
  // Family-dependent defaults the file did not override.
  if (family_set) {
    if (!basis_set && c.family == Family::LBitX) c.basis = SiteBasis::x();
    if (!initial_set) c.initial = c.family == Family::SelfDual ? InitialState::Plus : InitialState::Haar;
    if (!grid_set && is_lbit(c.family)) {
      c.time.kind = TimeGrid::Kind::Log;
      if (!time_keys.count("start")) c.time.start = 0.1;
      if (!time_keys.count("stop")) c.time.stop = 1e8;
      if (!time_keys.count("per_decade")) c.time.per_decade = 16;
    }
  }
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base = {}) {
  std::istringstream is(text);
  return parse_config(is, std::move(base));
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(f, std::move(base));
}

}  // namespace ppe
