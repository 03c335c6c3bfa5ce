#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ppe/experiments.hpp"
#include "ppe/pop.hpp"

namespace ppe {

/// Per (geometry, t) digest of a PoP run, pooled over realizations.
struct PopCell {
  Tripartition part;
  double t = 0;
  std::vector<Index> z_r;
  std::vector<bool> delta_per_z;  // detector fired for every realization
  bool all_delta = true;
  double mean = 0;                // pooled over z_R and realizations
  double variance = 0;
  double tv_erlang = 0;           // pooled PoP_PPE vs Erlang(D_E)
  PoPHistogram pooled;            // PoP_PPE over all z_R and realizations
  std::vector<PoPHistogram> per_z;
  PoPHistogram bstr_r, bstr_s, bstr_rs, mellin;
  std::vector<double> kld;        // KLd(PoP_bstr(ρ_RS) ‖ Mellin) per realization
  bool outcome_delta = true;      // p(o_S) PoP detector over all realizations
  double tv_sdki = std::numeric_limits<double>::quiet_NaN();  // self-dual only
};

struct PopResult {
  std::vector<PopCell> cells;  // geometry-major, then t
};

namespace detail {

inline std::string pop_tag(const Tripartition& p, double t) {
  return "LR" + std::to_string(p.l_r) + "_LE" + std::to_string(p.l_e) + "_LS" + std::to_string(p.l_s) + "_t" +
         fmt_double(t);
}

inline void write_file(const std::filesystem::path& path, const auto& writer) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  writer(f);
}

// Mass-weighted pooling where each realization carries the same share.
inline void accumulate(PoPHistogram& into, const PoPHistogram& h, bool first) {
  if (first) {
    into = h;
    return;
  }
  into.merge(h);
}

}  // namespace detail

/// Builds PoP_PPE, bit-string PoPs, the Mellin product and KLd for every
/// geometry and time of the config. Writes CSVs into `out_dir` unless empty.
inline PopResult run_pop_experiment(const ExperimentConfig& c, const std::string& out_dir = "") {
  c.validate();
  if (is_lbit(c.family)) throw ConfigError("pop runs use kicked Ising families");
  const auto times = c.time.points(true);
  const Binning grid = Binning::linear(0.0, c.pop_max, c.pop_bins);
  PopResult result;

  for (const auto& part : c.geometries()) {
    std::vector<Index> zs = c.pop_z_r;
    if (zs.empty())
      for (Index z = 0; z < part.dim_r(); ++z) zs.push_back(z);
    for (Index z : zs)
      if (z >= part.dim_r()) throw ConfigError("pop.z_r entry outside R");

    // Realizations run in parallel; each slot holds per-time digests.
    struct Slot {
      std::vector<std::vector<std::optional<PoPHistogram>>> per_z;  // [t][z]
      std::vector<PoPHistogram> r, s, rs, mel;
      std::vector<double> kld;
      std::vector<bool> outcome_delta;
      std::vector<double> sum, sum_sq, mass;  // pooled p̃ moments per t
    };
    std::vector<Slot> slots(static_cast<std::size_t>(c.realizations));
    parallel_for(slots.size(), c.threads, [&](std::size_t ri) {
      const Cell cell{part, static_cast<int>(ri)};
      const std::uint64_t seed = cell_seed(c, cell);
      const int n = part.total();
      const KickedIsingFloquet floquet(cell_circuit(c, seed, n));
      PureState psi = make_product_state(c.initial_state(n, stream_seed(seed, Stream::InitialState)));
      const MeasurementBasis basis = c.measurement_basis(part.l_s);
      Slot& slot = slots[ri];
      long done = 0;
      for (double t : times) {
        for (; done < static_cast<long>(t); ++done) floquet.step(psi);
        const auto ens = build_ppe(psi, part, basis);
        std::vector<std::optional<PoPHistogram>> hz;
        double s1 = 0, s2 = 0, mass = 0;
        for (Index z : zs) {
          const auto samples = relative_conditional_probs(ens, z);
          if (!samples) {
            hz.emplace_back();
            continue;
          }
          hz.push_back(make_histogram(*samples, grid));
          for (std::size_t i = 0; i < samples->size(); ++i) {
            s1 += samples->weights[i] * samples->values[i];
            s2 += samples->weights[i] * samples->values[i] * samples->values[i];
          }
          mass += 1;
        }
        slot.per_z.push_back(std::move(hz));
        slot.sum.push_back(s1);
        slot.sum_sq.push_back(s2);
        slot.mass.push_back(mass);

        // Bit-string PoPs are taken in the computational basis.
        const auto pr = bitstring_samples(marginal_probabilities(psi, 0, part.l_r));
        const auto ps = bitstring_samples(marginal_probabilities(psi, part.first_s(), part.l_s));
        const auto prs = bitstring_samples(rs_marginal_probabilities(psi, part));
        const auto mel = mellin_convolve(pr, ps);
        slot.r.push_back(make_histogram(pr, grid));
        slot.s.push_back(make_histogram(ps, grid));
        slot.rs.push_back(make_histogram(prs, grid));
        slot.mel.push_back(make_histogram(mel, grid));
        slot.kld.push_back(kl_divergence(prs, mel));
        slot.outcome_delta.push_back(is_delta_at_one(make_histogram(ps, grid)));
      }
    });

    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      PopCell pc;
      pc.part = part;
      pc.t = times[ti];
      pc.z_r = zs;
      pc.delta_per_z.assign(zs.size(), true);
      pc.per_z.resize(zs.size());
      std::vector<bool> z_seen(zs.size(), false);
      bool pooled_seen = false;
      CompensatedSum s1, s2, mass;
      for (std::size_t ri = 0; ri < slots.size(); ++ri) {
        const Slot& slot = slots[ri];
        for (std::size_t zi = 0; zi < zs.size(); ++zi) {
          const auto& h = slot.per_z[ti][zi];
          if (!h) continue;
          if (!is_delta_at_one(*h)) pc.delta_per_z[zi] = false;
          detail::accumulate(pc.per_z[zi], *h, !z_seen[zi]);
          z_seen[zi] = true;
          detail::accumulate(pc.pooled, *h, !pooled_seen);
          pooled_seen = true;
        }
        s1.add(slot.sum[ti]);
        s2.add(slot.sum_sq[ti]);
        mass.add(slot.mass[ti]);
        detail::accumulate(pc.bstr_r, slot.r[ti], ri == 0);
        detail::accumulate(pc.bstr_s, slot.s[ti], ri == 0);
        detail::accumulate(pc.bstr_rs, slot.rs[ti], ri == 0);
        detail::accumulate(pc.mellin, slot.mel[ti], ri == 0);
        pc.kld.push_back(slot.kld[ti]);
        if (!slot.outcome_delta[ti]) pc.outcome_delta = false;
      }
      for (bool d : pc.delta_per_z) pc.all_delta = pc.all_delta && d;
      pc.mean = s1.value() / mass.value();
      pc.variance = s2.value() / mass.value() - pc.mean * pc.mean;
      if (pooled_seen) pc.tv_erlang = tv_distance(pc.pooled, ReferenceDensity::erlang(static_cast<double>(part.dim_e())));
      if (c.family == Family::SelfDual) {
        const auto ref = ReferenceDensity::sdki_beta(static_cast<int>(pc.t), part.l_r + part.l_e);
        if (ref.kind != ReferenceDensity::Kind::Delta) pc.tv_sdki = tv_distance(pc.bstr_s, ref);
      }
      result.cells.push_back(std::move(pc));
    }
  }

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    std::ofstream summary(dir / "pop_summary.csv");
    summary << "L_R,L_E,L_S,t,z_r,delta_collapse,mean,variance,tv_erlang,outcome_delta,tv_sdki\n";
    std::ofstream kld(dir / "kld.csv");
    kld << "L_R,L_E,L_S,t,realization,kld\n";
    std::map<int, bool> erlang_written;
    for (const auto& pc : result.cells) {
      const std::string tag = detail::pop_tag(pc.part, pc.t);
      for (std::size_t zi = 0; zi < pc.z_r.size(); ++zi) {
        if (pc.per_z[zi].mass.empty()) continue;
        detail::write_file(dir / ("pop_ppe_" + tag + "_zR" + std::to_string(pc.z_r[zi]) + ".csv"),
                           [&](std::ostream& os) { write_histogram_csv(os, pc.per_z[zi]); });
        summary << pc.part.l_r << ',' << pc.part.l_e << ',' << pc.part.l_s << ',' << detail::fmt_double(pc.t)
                << ',' << pc.z_r[zi] << ',' << (pc.delta_per_z[zi] ? 1 : 0) << ",,,,,\n";
      }
      if (!pc.pooled.mass.empty())
        detail::write_file(dir / ("pop_ppe_" + tag + "_zRall.csv"),
                           [&](std::ostream& os) { write_histogram_csv(os, pc.pooled); });
      summary << pc.part.l_r << ',' << pc.part.l_e << ',' << pc.part.l_s << ',' << detail::fmt_double(pc.t)
              << ",all," << (pc.all_delta ? 1 : 0) << ',' << detail::fmt_double(pc.mean) << ','
              << detail::fmt_double(pc.variance) << ',' << detail::fmt_double(pc.tv_erlang) << ','
              << (pc.outcome_delta ? 1 : 0) << ',' << detail::fmt_double(pc.tv_sdki) << '\n';
      const std::pair<const char*, const PoPHistogram*> bstr[] = {
          {"pop_bstr_R_", &pc.bstr_r}, {"pop_bstr_S_", &pc.bstr_s},
          {"pop_bstr_RS_", &pc.bstr_rs}, {"pop_mellin_", &pc.mellin}};
      for (const auto& [prefix, h] : bstr)
        detail::write_file(dir / (std::string(prefix) + tag + ".csv"),
                           [&](std::ostream& os) { write_histogram_csv(os, *h); });
      for (std::size_t ri = 0; ri < pc.kld.size(); ++ri)
        kld << pc.part.l_r << ',' << pc.part.l_e << ',' << pc.part.l_s << ',' << detail::fmt_double(pc.t) << ','
            << ri << ',' << detail::fmt_double(pc.kld[ri]) << '\n';
      if (!erlang_written[pc.part.l_e]) {
        detail::write_file(dir / ("ref_erlang_LE" + std::to_string(pc.part.l_e) + ".csv"), [&](std::ostream& os) {
          write_reference_csv(os, grid, ReferenceDensity::erlang(static_cast<double>(pc.part.dim_e())));
        });
        erlang_written[pc.part.l_e] = true;
      }
      if (c.family == Family::SelfDual) {
        const auto ref = ReferenceDensity::sdki_beta(static_cast<int>(pc.t), pc.part.l_r + pc.part.l_e);
        if (ref.kind != ReferenceDensity::Kind::Delta)
          detail::write_file(dir / ("ref_sdki_" + tag + ".csv"),
                             [&](std::ostream& os) { write_reference_csv(os, grid, ref); });
      }
    }
    detail::write_file(dir / "ref_porter_thomas.csv",
                       [&](std::ostream& os) { write_reference_csv(os, grid, ReferenceDensity::porter_thomas()); });
  }
  return result;
}

}  // namespace ppe
