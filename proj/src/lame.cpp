#include "lamecgo/lame.hpp"

#include <cmath>

namespace lamecgo {

Field sample_value(const Grid& g, const Coefficient& c) {
  Field f(g, 1);
  f.fill([&](Vec3 x, cplx* out) { out[0] = c.value(x); });
  return f;
}

Field sample_gradient(const Grid& g, const Coefficient& c) {
  Field f(g, 3);
  f.fill([&](Vec3 x, cplx* out) {
    const Jet2 j = c.eval(x);
    for (int a = 0; a < 3; ++a) out[a] = j.g[a];
  });
  return f;
}

Field strain(const Field& u, Deriv backend) {
  if (u.ncomp != 3) throw std::invalid_argument("strain: expected 3 components");
  Field e(u.g, 9);
  // d[a] = derivative of all of u along axis a (3 comps each)
  Field d0 = derivative(u, 0, backend);
  Field d1 = derivative(u, 1, backend);
  Field d2 = derivative(u, 2, backend);
  const Field* d[3] = {&d0, &d1, &d2};
  const std::int64_t ns = u.g.nsites();
  for (int jr = 0; jr < 3; ++jr)
    for (int kc = 0; kc < 3; ++kc) {
      cplx* out = e.comp(3 * jr + kc);
      const cplx* djuk = d[jr]->comp(kc);
      const cplx* dkuj = d[kc]->comp(jr);
      for (std::int64_t s = 0; s < ns; ++s) out[s] = 0.5 * (djuk[s] + dkuj[s]);
    }
  return e;
}

Field divergence(const Field& u, Deriv backend) {
  if (u.ncomp != 3)
    throw std::invalid_argument("divergence: expected 3 components");
  Field out(u.g, 1);
  for (int a = 0; a < 3; ++a) {
    Field da = derivative(u.component(a), a, backend);
    const cplx* s = da.comp(0);
    cplx* d = out.comp(0);
    for (std::int64_t q = 0; q < u.g.nsites(); ++q) d[q] += s[q];
  }
  return out;
}

Field stress(const LamePair& p, const Field& u, Deriv backend) {
  Field e = strain(u, backend);
  Field dv = divergence(u, backend);
  Field mu = sample_value(u.g, p.mu_c);
  Field lam = sample_value(u.g, p.lambda_c);
  Field sig(u.g, 9);
  const std::int64_t ns = u.g.nsites();
  for (int jr = 0; jr < 3; ++jr)
    for (int kc = 0; kc < 3; ++kc) {
      cplx* out = sig.comp(3 * jr + kc);
      const cplx* ee = e.comp(3 * jr + kc);
      for (std::int64_t s = 0; s < ns; ++s) {
        out[s] = 2.0 * mu.comp(0)[s] * ee[s];
        if (jr == kc) out[s] += lam.comp(0)[s] * dv.comp(0)[s];
      }
    }
  return sig;
}

Field row_divergence(const Field& a, Deriv backend) {
  if (a.ncomp != 9)
    throw std::invalid_argument("row_divergence: expected 9 components");
  Field out(a.g, 3);
  for (int jr = 0; jr < 3; ++jr)
    for (int kc = 0; kc < 3; ++kc) {
      Field d = derivative(a.component(3 * jr + kc), kc, backend);
      const cplx* s = d.comp(0);
      cplx* o = out.comp(jr);
      for (std::int64_t q = 0; q < a.g.nsites(); ++q) o[q] += s[q];
    }
  return out;
}

Field lame_apply(const LamePair& p, const Field& u, Deriv backend) {
  return row_divergence(stress(p, u, backend), backend);
}

Field traction(const LamePair& p, const Field& u, const Vec3& n,
               Deriv backend) {
  Field sig = stress(p, u, backend);
  Field t(u.g, 3);
  const std::int64_t ns = u.g.nsites();
  for (int jr = 0; jr < 3; ++jr) {
    cplx* out = t.comp(jr);
    for (int kc = 0; kc < 3; ++kc) {
      const cplx* s = sig.comp(3 * jr + kc);
      for (std::int64_t q = 0; q < ns; ++q) out[q] += n[kc] * s[q];
    }
  }
  return t;
}

Field normal_part(const Field& f3, const Vec3& n) {
  Field out(f3.g, 3);
  const std::int64_t ns = f3.g.nsites();
  for (std::int64_t q = 0; q < ns; ++q) {
    cplx dot(0.0, 0.0);
    for (int a = 0; a < 3; ++a) dot += n[a] * f3.comp(a)[q];
    for (int a = 0; a < 3; ++a) out.comp(a)[q] = dot * n[a];
  }
  return out;
}

Field tangential_part(const Field& f3, const Vec3& n) {
  Field np = normal_part(f3, n);
  Field out(f3.g, 3);
  for (std::size_t q = 0; q < f3.v.size(); ++q) out.v[q] = f3.v[q] - np.v[q];
  return out;
}

Field simply_supported_trace_explicit(const LamePair& p, const Field& u,
                                      Deriv backend) {
  Field d0u0 = derivative(u.component(0), 0, backend);
  Field d1u1 = derivative(u.component(1), 1, backend);
  Field d2u2 = derivative(u.component(2), 2, backend);
  Field out(u.g, 3);
  const Grid& g = u.g;
  for (int i = 0; i < g.n0(); ++i)
    for (int j = 0; j < g.n1(); ++j)
      for (int k = 0; k < g.n2(); ++k) {
        const std::int64_t s = g.site(i, j, k);
        const Vec3 x = g.point(i, j, k);
        const Jet2 lam = p.lambda(x), mu = p.mu(x);
        out.comp(0)[s] = u.comp(0)[s];
        out.comp(1)[s] = u.comp(1)[s];
        out.comp(2)[s] = lam.v * (d0u0.comp(0)[s] + d1u1.comp(0)[s]) +
                         (lam.v + 2.0 * mu.v) * d2u2.comp(0)[s];
      }
  return out;
}

Field reflect_field(const Field& f, FieldKind kind, int mirror_axis) {
  Field out(f.g, f.ncomp);
  const Grid& g = f.g;
  const int n[3] = {g.n0(), g.n1(), g.n2()};
  auto sign_of = [&](int c) -> double {
    switch (kind) {
      case FieldKind::Scalar: return 1.0;
      case FieldKind::Vector3: return c == 2 ? -1.0 : 1.0;
      case FieldKind::Vector4: return c == 2 ? -1.0 : 1.0;
      case FieldKind::Matrix3: {
        const int r = c / 3, cc = c % 3;
        return ((r == 2) != (cc == 2)) ? -1.0 : 1.0;
      }
    }
    return 1.0;
  };
  for (int c = 0; c < f.ncomp; ++c) {
    const double sg = sign_of(c);
    const cplx* src = f.comp(c);
    cplx* dst = out.comp(c);
    for (int i = 0; i < n[0]; ++i)
      for (int j = 0; j < n[1]; ++j)
        for (int k = 0; k < n[2]; ++k) {
          int idx[3] = {i, j, k};
          idx[mirror_axis] = mirror_index(idx[mirror_axis], n[mirror_axis]);
          dst[g.site(i, j, k)] = sg * src[g.site(idx[0], idx[1], idx[2])];
        }
  }
  return out;
}

double evenness_defect(const Grid& g, const Coefficient& c) {
  double m = 0.0;
  for (int i = 0; i < g.n0(); ++i)
    for (int j = 0; j < g.n1(); ++j)
      for (int k = 0; k < g.n2(); ++k) {
        const Vec3 x = g.point(i, j, k);
        const Vec3 xv(x[0], x[1], -x[2]);
        m = std::max(m, std::abs(c.value(x) - c.value(xv)));
      }
  return m;
}

LamePair even_extend(const LamePair& p, const Grid& g) {
  if (!p.is_even_in_x3())
    throw std::domain_error(
        "even_extend: a coefficient term is not even in x3");
  if (evenness_defect(g, p.mu_c) != 0.0 ||
      evenness_defect(g, p.lambda_c) != 0.0)
    throw std::domain_error("even_extend: sampled evenness defect nonzero");
  return p;
}

// ---------------------------------------------------------------------------
// Cutoff
// ---------------------------------------------------------------------------

namespace {
inline double sigma_exp(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
inline double sigma_exp_d(double t) {
  return t > 0.0 ? std::exp(-1.0 / t) / (t * t) : 0.0;
}
// C-infinity step: 0 for t<=0, 1 for t>=1.
inline double smoothstep(double t) {
  const double a = sigma_exp(t), b = sigma_exp(1.0 - t);
  return a / (a + b);
}
inline double smoothstep_d(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  const double a = sigma_exp(t), b = sigma_exp(1.0 - t);
  const double ap = sigma_exp_d(t), bp = sigma_exp_d(1.0 - t);
  const double den = (a + b) * (a + b);
  return (ap * b + a * bp) / den;
}
}  // namespace

namespace {
// Half of the ErfProduct axis profile: a smooth step falling through t = c.
inline double erf_fall(double t, double c, double s) {
  return 0.5 * std::erfc((t - c) / (M_SQRT2 * s));
}
inline double erf_fall_d(double t, double c, double s) {
  const double u = (t - c) / (M_SQRT2 * s);
  return -std::exp(-u * u) / (std::sqrt(2.0 * M_PI) * s);
}
}  // namespace

double Cutoff::value(const Vec3& x) const {
  if (kind == Kind::PlaneRadial) {
    const double rho = std::hypot(x[0], x[1]);
    return 0.5 * std::erfc((rho - rho_c) / (M_SQRT2 * sigma_g));
  }
  if (kind == Kind::ErfProduct) {
    double v = 1.0;
    for (int a = 0; a < 3; ++a)
      v *= erf_fall(x[a], c3[a], s3[a]) * erf_fall(-x[a], c3[a], s3[a]);
    return v;
  }
  double v = 1.0;
  for (int a = 0; a < 3; ++a)
    v *= smoothstep((outer - std::abs(x[a])) / (outer - plateau));
  return v;
}

Vec3 Cutoff::gradient(const Vec3& x) const {
  if (kind == Kind::PlaneRadial) {
    const double rho = std::hypot(x[0], x[1]);
    const double u = (rho - rho_c) / (M_SQRT2 * sigma_g);
    const double dvdrho =
        -std::exp(-u * u) / (std::sqrt(2.0 * M_PI) * sigma_g);
    Vec3 g = Vec3::Zero();
    if (rho > 1e-300) {
      g[0] = dvdrho * x[0] / rho;
      g[1] = dvdrho * x[1] / rho;
    }
    return g;
  }
  if (kind == Kind::ErfProduct) {
    double p[3], dp[3];
    for (int a = 0; a < 3; ++a) {
      const double f = erf_fall(x[a], c3[a], s3[a]);
      const double r = erf_fall(-x[a], c3[a], s3[a]);
      p[a] = f * r;
      dp[a] = erf_fall_d(x[a], c3[a], s3[a]) * r -
              f * erf_fall_d(-x[a], c3[a], s3[a]);
    }
    Vec3 g;
    g[0] = dp[0] * p[1] * p[2];
    g[1] = p[0] * dp[1] * p[2];
    g[2] = p[0] * p[1] * dp[2];
    return g;
  }
  double p[3], dp[3];
  const double inv = 1.0 / (outer - plateau);
  for (int a = 0; a < 3; ++a) {
    const double t = (outer - std::abs(x[a])) * inv;
    p[a] = smoothstep(t);
    const double sgn = x[a] > 0.0 ? 1.0 : (x[a] < 0.0 ? -1.0 : 0.0);
    dp[a] = smoothstep_d(t) * (-sgn * inv);
  }
  Vec3 g;
  g[0] = dp[0] * p[1] * p[2];
  g[1] = p[0] * dp[1] * p[2];
  g[2] = p[0] * p[1] * dp[2];
  return g;
}

// ---------------------------------------------------------------------------
// Pairing form H
// ---------------------------------------------------------------------------

cplx h_form(const LamePair& p1, const LamePair& p2, const Field& u1,
            const Field& u2, const Region& reg, Deriv backend) {
  Field dv1 = divergence(u1, backend), dv2 = divergence(u2, backend);
  Field e1 = strain(u1, backend), e2 = strain(u2, backend);
  const Grid& g = u1.g;
  Field integrand(g, 1);
  for (int i = 0; i < g.n0(); ++i)
    for (int j = 0; j < g.n1(); ++j)
      for (int k = 0; k < g.n2(); ++k) {
        const std::int64_t s = g.site(i, j, k);
        const Vec3 x = g.point(i, j, k);
        const double dl = p2.lambda_c.value(x) - p1.lambda_c.value(x);
        const double dm = p2.mu_c.value(x) - p1.mu_c.value(x);
        cplx frob(0.0, 0.0);
        for (int c = 0; c < 9; ++c)
          frob += e1.comp(c)[s] * std::conj(e2.comp(c)[s]);
        integrand.comp(0)[s] =
            dl * dv1.comp(0)[s] * std::conj(dv2.comp(0)[s]) + 2.0 * dm * frob;
      }
  return integrate(integrand, 0, reg);
}

cplx h_form_stress_path(const LamePair& p1, const LamePair& p2, const Field& u1,
                        const Field& u2, const Region& reg, Deriv backend) {
  Field s1 = stress(p1, u1, backend), s2 = stress(p2, u1, backend);
  Field e2 = strain(u2, backend);
  const Grid& g = u1.g;
  Field integrand(g, 1);
  const std::int64_t ns = g.nsites();
  for (std::int64_t s = 0; s < ns; ++s) {
    cplx acc(0.0, 0.0);
    for (int c = 0; c < 9; ++c)
      acc += (s2.comp(c)[s] - s1.comp(c)[s]) * std::conj(e2.comp(c)[s]);
    integrand.comp(0)[s] = acc;
  }
  return integrate(integrand, 0, reg);
}

cplx green_defect(const LamePair& p, const Field& u, const Field& v) {
  const Deriv backend = Deriv::FiniteDifference;
  const Grid& g = u.g;
  Region box = Region::whole();
  for (int a = 0; a < 3; ++a) box.r[a] = AxisRange{false, 0, g.ax[a].n - 1};
  box.name = "vertex_box";

  Field sig = stress(p, u, backend);
  Field ev = strain(v, backend);
  Field lu = lame_apply(p, u, backend);

  // volume terms
  Field vol(g, 1);
  const std::int64_t ns = g.nsites();
  for (std::int64_t s = 0; s < ns; ++s) {
    cplx acc(0.0, 0.0);
    for (int c = 0; c < 9; ++c) acc += sig.comp(c)[s] * std::conj(ev.comp(c)[s]);
    for (int c = 0; c < 3; ++c) acc += lu.comp(c)[s] * std::conj(v.comp(c)[s]);
    vol.comp(0)[s] = acc;
  }
  cplx defect = integrate(vol, 0, box);

  // surface terms: 6 faces of the vertex box with outward normals
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      Vec3 n = Vec3::Zero();
      n[axis] = side == 0 ? -1.0 : 1.0;
      const int plane = side == 0 ? 0 : g.ax[axis].n - 1;
      Field bu(g, 1);
      for (int i = 0; i < g.n0(); ++i)
        for (int j = 0; j < g.n1(); ++j)
          for (int k = 0; k < g.n2(); ++k) {
            const int idx[3] = {i, j, k};
            if (idx[axis] != plane) continue;
            const std::int64_t s = g.site(i, j, k);
            cplx acc(0.0, 0.0);
            for (int jr = 0; jr < 3; ++jr) {
              cplx tr(0.0, 0.0);
              for (int kc = 0; kc < 3; ++kc)
                tr += n[kc] * sig.comp(3 * jr + kc)[s];
              acc += tr * std::conj(v.comp(jr)[s]);
            }
            bu.comp(0)[s] = acc;
          }
      // integrate over the face: collapse the face axis to the single plane
      Region face = box;
      face.r[axis] = AxisRange{false, plane, plane};
      // 2-D trapezoid: divide out the (h/2) weight the collapsed axis
      // contributes.
      const double wfix = 2.0 / g.ax[axis].h();
      defect -= wfix * integrate(bu, 0, face);
    }
  }
  return defect;
}

}  // namespace lamecgo
