#include "lamecgo/coefficients.hpp"

namespace lamecgo {

namespace {

Jet2 eval_polynomial(const CoeffTerm& t, const Vec3& x) {
  // amp * prod x_i^{e_i}; gradient and Hessian assembled from per-axis
  // power derivatives.
  double p[3], dp[3], ddp[3];
  for (int a = 0; a < 3; ++a) {
    const int e = t.e[a];
    const double xa = x[a];
    p[a] = std::pow(xa, e);
    dp[a] = e >= 1 ? e * std::pow(xa, e - 1) : 0.0;
    ddp[a] = e >= 2 ? double(e) * (e - 1) * std::pow(xa, e - 2) : 0.0;
  }
  Jet2 j;
  j.v = t.amp * p[0] * p[1] * p[2];
  for (int a = 0; a < 3; ++a) {
    double g = t.amp;
    for (int b = 0; b < 3; ++b) g *= (b == a) ? dp[b] : p[b];
    j.g[a] = g;
    for (int b = a; b < 3; ++b) {
      double hh = t.amp;
      if (a == b) {
        for (int c = 0; c < 3; ++c) hh *= (c == a) ? ddp[c] : p[c];
      } else {
        for (int c = 0; c < 3; ++c) hh *= (c == a || c == b) ? dp[c] : p[c];
      }
      j.h(a, b) = hh;
      j.h(b, a) = hh;
    }
  }
  return j;
}

Jet2 eval_gaussian(const CoeffTerm& t, const Vec3& x) {
  const Vec3 d = x - t.center;
  const double w2 = t.width * t.width;
  const double val = t.amp * std::exp(-d.squaredNorm() / w2);
  Jet2 j;
  j.v = val;
  j.g = (-2.0 / w2) * val * d;
  j.h = val * ((4.0 / (w2 * w2)) * (d * d.transpose()) -
               (2.0 / w2) * Mat3::Identity());
  return j;
}

Jet2 eval_bump(const CoeffTerm& t, const Vec3& x) {
  // E(u) = exp(1 - 1/(1-u)) for u < 1, else 0, with u = |x-c|^2/w^2.
  // E'  = -(1-u)^{-2} E
  // E'' = ((1-u)^{-4} - 2 (1-u)^{-3}) E
  const Vec3 d = x - t.center;
  const double w2 = t.width * t.width;
  const double u = d.squaredNorm() / w2;
  Jet2 j;
  if (u >= 1.0) return j;
  const double s = 1.0 / (1.0 - u);
  const double E = std::exp(1.0 - s);
  const double Ep = -s * s * E;
  const double Epp = (s * s * s * s - 2.0 * s * s * s) * E;
  const Vec3 du = (2.0 / w2) * d;
  const Mat3 d2u = (2.0 / w2) * Mat3::Identity();
  j.v = t.amp * E;
  j.g = t.amp * Ep * du;
  j.h = t.amp * (Epp * (du * du.transpose()) + Ep * d2u);
  return j;
}

Jet2 eval_trig(const CoeffTerm& t, const Vec3& x) {
  double c[3], dc[3], ddc[3];
  for (int a = 0; a < 3; ++a) {
    const double w = t.k[a] * M_PI / t.period;
    const double arg = w * x[a] + t.phase[a];
    c[a] = std::cos(arg);
    dc[a] = -w * std::sin(arg);
    ddc[a] = -w * w * std::cos(arg);
  }
  Jet2 j;
  j.v = t.amp * c[0] * c[1] * c[2];
  for (int a = 0; a < 3; ++a) {
    double g = t.amp;
    for (int b = 0; b < 3; ++b) g *= (b == a) ? dc[b] : c[b];
    j.g[a] = g;
    for (int b = a; b < 3; ++b) {
      double hh = t.amp;
      if (a == b) {
        for (int cc = 0; cc < 3; ++cc) hh *= (cc == a) ? ddc[cc] : c[cc];
      } else {
        for (int cc = 0; cc < 3; ++cc) hh *= (cc == a || cc == b) ? dc[cc] : c[cc];
      }
      j.h(a, b) = hh;
      j.h(b, a) = hh;
    }
  }
  return j;
}

}  // namespace

Jet2 CoeffTerm::eval(const Vec3& x) const {
  switch (kind) {
    case Kind::Polynomial: return eval_polynomial(*this, x);
    case Kind::Gaussian: return eval_gaussian(*this, x);
    case Kind::Bump: return eval_bump(*this, x);
    case Kind::Trig: return eval_trig(*this, x);
  }
  return Jet2{};
}

bool CoeffTerm::is_even_in_x3() const {
  switch (kind) {
    case Kind::Polynomial: return e[2] % 2 == 0;
    case Kind::Gaussian:
    case Kind::Bump: return center[2] == 0.0;
    case Kind::Trig: return phase[2] == 0.0;  // cos(k pi x3 / R) is even
  }
  return false;
}

void LamePair::check_admissible(const Grid& g) const {
  for (int i = 0; i < g.n0(); ++i)
    for (int j = 0; j < g.n1(); ++j)
      for (int k = 0; k < g.n2(); ++k) {
        const Vec3 x = g.point(i, j, k);
        const double m = mu_c.value(x), l = lambda_c.value(x);
        if (!(m > 0.0))
          throw std::domain_error("inadmissible moduli: mu <= 0 at a vertex");
        if (!(3.0 * l + 2.0 * m > 0.0))
          throw std::domain_error(
              "inadmissible moduli: 3*lambda + 2*mu <= 0 at a vertex");
      }
}

}  // namespace lamecgo
