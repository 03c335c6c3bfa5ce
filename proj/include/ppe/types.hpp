#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ppe {

using cplx = std::complex<double>;
using Index = std::uint64_t;

// Largest chain the dense statevector routines accept.
inline constexpr int kMaxSites = 22;

// Outcomes with Born probability below this are dropped from ensembles.
inline constexpr double kProbabilityFloor = 1e-14;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidSpec : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct SizeCapExceeded : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct FitRefused : Error {
  using Error::Error;
};

/// R|E|S split of an open chain. Sites 0..l_r-1 are R, the next l_e are E and
/// the last l_s are S. Site 0 is the most significant bit of a basis index.
struct Tripartition {
  int l_r = 1;
  int l_e = 0;
  int l_s = 1;

  int total() const { return l_r + l_e + l_s; }
  Index dim_r() const { return Index{1} << l_r; }
  Index dim_e() const { return Index{1} << l_e; }
  Index dim_s() const { return Index{1} << l_s; }
  Index dim_re() const { return Index{1} << (l_r + l_e); }
  Index dim() const { return Index{1} << total(); }

  int first_e() const { return l_r; }
  int first_s() const { return l_r + l_e; }

  void validate(int cap = kMaxSites) const {
    if (l_r < 1 || l_e < 0 || l_s < 1)
      throw InvalidSpec("tripartition needs l_r >= 1, l_e >= 0, l_s >= 1");
    if (total() > cap)
      throw SizeCapExceeded("tripartition has " + std::to_string(total()) +
                            " sites, cap is " + std::to_string(cap));
  }
};

inline bool operator==(const Tripartition& a, const Tripartition& b) {
  return a.l_r == b.l_r && a.l_e == b.l_e && a.l_s == b.l_s;
}

// Bit of `site` inside a basis index of an n-site register.
inline constexpr Index site_bit(int site, int n_sites) {
  return Index{1} << (n_sites - 1 - site);
}

}  // namespace ppe
