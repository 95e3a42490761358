#pragma once
// Closed-form material coefficient fields with exact first and second
// derivatives.  Everything downstream (operator coefficients, potentials,
// transports) consumes these through second-order jets, so no coefficient is
// ever differentiated numerically.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lamecgo/grid.hpp"

namespace lamecgo {

// ---------------------------------------------------------------------------
// Second-order jets: value, gradient, Hessian
// ---------------------------------------------------------------------------

struct Jet2 {
  double v = 0.0;
  Vec3 g = Vec3::Zero();
  Mat3 h = Mat3::Zero();

  static Jet2 constant(double c) { return Jet2{c, Vec3::Zero(), Mat3::Zero()}; }

  Jet2 operator+(const Jet2& o) const { return {v + o.v, g + o.g, h + o.h}; }
  Jet2 operator-(const Jet2& o) const { return {v - o.v, g - o.g, h - o.h}; }
  Jet2 operator*(double c) const { return {c * v, c * g, c * h}; }
  Jet2 operator+(double c) const { return {v + c, g, h}; }
  Jet2 operator-(double c) const { return {v - c, g, h}; }
  Jet2 operator*(const Jet2& o) const {
    return {v * o.v, v * o.g + o.v * g,
            v * o.h + o.v * h + g * o.g.transpose() + o.g * g.transpose()};
  }
  /// Chain rule for a scalar map f applied to this jet, given f(v), f'(v),
  /// f''(v).
  Jet2 compose(double f, double fp, double fpp) const {
    return {f, fp * g, fp * h + fpp * (g * g.transpose())};
  }

  double laplacian() const { return h.trace(); }
  /// Complex directional second derivative (theta . grad)^2 applied to the
  /// underlying scalar: theta^T H theta.
  cplx dir2(const Vec3c& th) const { return th.transpose() * h * th; }
  cplx dir1(const Vec3c& th) const { return th.dot(g.cast<cplx>()); }
};

inline Jet2 operator*(double c, const Jet2& j) { return j * c; }

inline Jet2 jet_inv(const Jet2& a) {
  const double iv = 1.0 / a.v;
  return a.compose(iv, -iv * iv, 2.0 * iv * iv * iv);
}
inline Jet2 operator/(const Jet2& a, const Jet2& b) { return a * jet_inv(b); }
inline Jet2 jet_pow(const Jet2& a, double p) {
  const double f = std::pow(a.v, p);
  return a.compose(f, p * f / a.v, p * (p - 1.0) * f / (a.v * a.v));
}
inline Jet2 jet_sqrt(const Jet2& a) { return jet_pow(a, 0.5); }

// ---------------------------------------------------------------------------
// Coefficient terms
// ---------------------------------------------------------------------------

/// One additive term of a coefficient field.  All families are smooth;
/// evenness in x3 is a property checked per term (see is_even_in_x3).
struct CoeffTerm {
  enum class Kind { Polynomial, Gaussian, Bump, Trig } kind = Kind::Gaussian;

  // Polynomial: amp * x1^e[0] * x2^e[1] * x3^e[2]
  // Gaussian:   amp * exp(-|x-center|^2 / width^2)
  // Bump:       amp * exp(1 - 1/(1-u)), u = |x-center|^2/width^2, u < 1
  // Trig:       amp * prod_i cos(k[i]*pi*x_i/period + phase[i])
  double amp = 0.0;
  Vec3 center = Vec3::Zero();
  double width = 1.0;
  std::array<int, 3> e{0, 0, 0};
  std::array<int, 3> k{0, 0, 0};
  std::array<double, 3> phase{0.0, 0.0, 0.0};
  double period = 1.0;  ///< half-width R of the periodic box (Trig only)

  Jet2 eval(const Vec3& x) const;
  bool is_even_in_x3() const;
};

/// Coefficient field: base constant plus a sum of terms.
struct Coefficient {
  double base = 0.0;
  std::vector<CoeffTerm> terms;

  Jet2 eval(const Vec3& x) const {
    Jet2 j = Jet2::constant(base);
    for (const auto& t : terms) j = j + t.eval(x);
    return j;
  }
  double value(const Vec3& x) const { return eval(x).v; }
  bool is_even_in_x3() const {
    for (const auto& t : terms)
      if (!t.is_even_in_x3()) return false;
    return true;
  }
  static Coefficient constant(double c) { return Coefficient{c, {}}; }
};

// ---------------------------------------------------------------------------
// Material pairs
// ---------------------------------------------------------------------------

/// The two moduli of one material.  Admissibility (pointwise mu > 0 and
/// 3*lambda + 2*mu > 0) is validated on grids before use; evenness in x3 is
/// what makes the reflection construction exact.
struct LamePair {
  Coefficient lambda_c;
  Coefficient mu_c;

  Jet2 lambda(const Vec3& x) const { return lambda_c.eval(x); }
  Jet2 mu(const Vec3& x) const { return mu_c.eval(x); }

  bool is_even_in_x3() const {
    return lambda_c.is_even_in_x3() && mu_c.is_even_in_x3();
  }
  /// Throws std::domain_error naming the failing condition if the moduli are
  /// inadmissible at any vertex of the grid.
  void check_admissible(const Grid& g) const;

  static LamePair homogeneous(double lam, double mu) {
    return LamePair{Coefficient::constant(lam), Coefficient::constant(mu)};
  }
};

/// b = (mu/2) * (lambda + mu) / (lambda + 2 mu): the effective scalar that
/// drives the off-diagonal transport coupling and the second uniqueness
/// functional.
inline Jet2 b_factor(const Jet2& lam, const Jet2& mu) {
  return (mu * 0.5) * (lam + mu) / (lam + 2.0 * mu);
}

}  // namespace lamecgo
