#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ppe/types.hpp"

namespace ppe {

/// Dense row-major complex square matrix. Dimensions in this library stay
/// small (reduced states and their tensor squares), so no expression templates.
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n) : n_(n), a_(n * n) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix projector(std::span<const cplx> v) {
    Matrix m(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = 0; j < v.size(); ++j) m(i, j) = v[i] * std::conj(v[j]);
    return m;
  }

  std::size_t dim() const { return n_; }
  cplx& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
  const cplx& operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
  std::span<cplx> data() { return a_; }
  std::span<const cplx> data() const { return a_; }

  Matrix& operator+=(const Matrix& o) {
    check_same(o);
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] += o.a_[k];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    check_same(o);
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] -= o.a_[k];
    return *this;
  }
  Matrix& operator*=(cplx s) {
    for (auto& x : a_) x *= s;
    return *this;
  }
  // Accumulates w * o without a temporary.
  void add_scaled(const Matrix& o, double w) {
    check_same(o);
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] += w * o.a_[k];
  }

  cplx trace() const {
    cplx t = 0;
    for (std::size_t i = 0; i < n_; ++i) t += (*this)(i, i);
    return t;
  }

  Matrix adjoint() const {
    Matrix m(n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) m(i, j) = std::conj((*this)(j, i));
    return m;
  }

  double max_abs_diff(const Matrix& o) const {
    check_same(o);
    double d = 0;
    for (std::size_t k = 0; k < a_.size(); ++k) d = std::max(d, std::abs(a_[k] - o.a_[k]));
    return d;
  }

  double hermiticity_error() const {
    double d = 0;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i; j < n_; ++j)
        d = std::max(d, std::abs((*this)(i, j) - std::conj((*this)(j, i))));
    return d;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  void check_same(const Matrix& o) const {
    if (o.n_ != n_) throw DimensionMismatch("matrix dimensions differ");
  }

  std::size_t n_ = 0;
  std::vector<cplx> a_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(cplx s, Matrix a) { return a *= s; }

inline Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.dim() != b.dim()) throw DimensionMismatch("matrix dimensions differ");
  const std::size_t n = a.dim();
  Matrix c(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const cplx aik = a(i, k);
      if (aik == cplx{}) continue;
      for (std::size_t j = 0; j < n; ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  const std::size_t na = a.dim(), nb = b.dim();
  Matrix c(na * nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < na; ++j) {
      const cplx aij = a(i, j);
      if (aij == cplx{}) continue;
      for (std::size_t k = 0; k < nb; ++k)
        for (std::size_t l = 0; l < nb; ++l) c(i * nb + k, j * nb + l) = aij * b(k, l);
    }
  return c;
}

/// Permutation matrix exchanging the two tensor factors of C^d ⊗ C^d.
inline Matrix swap_operator(std::size_t d) {
  Matrix s(d * d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) s(a * d + b, b * d + a) = 1.0;
  return s;
}

/// Eigenvalues of a Hermitian matrix by cyclic complex Jacobi rotations.
/// Stops once the off-diagonal Frobenius norm drops below `tol`.
inline std::vector<double> hermitian_eigenvalues(Matrix a, double tol = 1e-13,
                                                 int max_sweeps = 100) {
  const std::size_t n = a.dim();
  auto off_norm = [&] {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += std::norm(a(i, j));
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < max_sweeps && off_norm() >= tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const cplx apq = a(p, q);
        const double mag = std::abs(apq);
        if (mag < 1e-300) continue;
        // Phase-rotate column q so the pivot is real, then apply the real
        // symmetric Jacobi rotation.
        const cplx ph = apq / mag;
        const double app = a(p, p).real(), aqq = a(q, q).real();
        const double theta = (aqq - app) / (2.0 * mag);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        // G = D R restricted to (p, q), D = diag(1, conj(ph)).
        const cplx gpp = c, gpq = s, gqp = -s * std::conj(ph), gqq = c * std::conj(ph);
        // A <- A G
        for (std::size_t k = 0; k < n; ++k) {
          const cplx akp = a(k, p), akq = a(k, q);
          a(k, p) = akp * gpp + akq * gqp;
          a(k, q) = akp * gpq + akq * gqq;
        }
        // A <- G^† A
        for (std::size_t k = 0; k < n; ++k) {
          const cplx apk = a(p, k), aqk = a(q, k);
          a(p, k) = std::conj(gpp) * apk + std::conj(gqp) * aqk;
          a(q, k) = std::conj(gpq) * apk + std::conj(gqq) * aqk;
        }
        a(p, q) = 0;
        a(q, p) = 0;
        a(p, p) = a(p, p).real();
        a(q, q) = a(q, q).real();
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i).real();
  std::sort(ev.begin(), ev.end());
  return ev;
}

/// ½‖a − b‖₁ for Hermitian a, b.
inline double trace_norm_distance(const Matrix& a, const Matrix& b) {
  if (a.dim() != b.dim())
    throw DimensionMismatch("trace distance between " + std::to_string(a.dim()) + " and " +
                            std::to_string(b.dim()) + " dimensional operators");
  if (a.hermiticity_error() > 1e-9 || b.hermiticity_error() > 1e-9)
    throw InvalidSpec("trace distance needs Hermitian operators");
  // Canonical operand order makes the result exactly symmetric.
  auto less = [](const cplx& x, const cplx& y) {
    return x.real() < y.real() || (x.real() == y.real() && x.imag() < y.imag());
  };
  const bool swap = std::lexicographical_compare(b.data().begin(), b.data().end(), a.data().begin(),
                                                 a.data().end(), less);
  double s = 0;
  for (double e : hermitian_eigenvalues(swap ? b - a : a - b)) s += std::abs(e);
  return 0.5 * s;
}

}  // namespace ppe
