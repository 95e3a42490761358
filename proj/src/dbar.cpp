#include "lamecgo/dbar.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace lamecgo {

// ---------------------------------------------------------------------------
// Directions
// ---------------------------------------------------------------------------

double Direction::defect() const {
  const double s2 = sigma * sigma;
  if (s2 == 0.0) return 1.0;
  const double d_orth = std::abs(re.dot(im)) / s2;
  const double d_len = std::abs(re.norm() - im.norm()) / sigma;
  cplx tsq = 0;  // theta.theta without conjugation
  const Vec3c th = theta();
  for (int k = 0; k < 3; ++k) tsq += th[k] * th[k];
  const double d_iso = std::abs(tsq) / s2;
  return std::max({d_orth, d_len, d_iso});
}

Direction make_direction(const Vec3& re, const Vec3& im) {
  Direction d;
  d.re = re;
  d.im = im;
  d.sigma = re.norm();
  d.real_third = std::abs(im[2]) <= 1e-14 * d.sigma;
  if (d.sigma <= 0.0) throw std::invalid_argument("direction: Re theta = 0");
  if (d.defect() > 1e-12) {
    std::ostringstream os;
    os << "direction: theta.theta != 0 (relative defect " << d.defect()
       << "); need |Re|=|Im| and Re.Im=0";
    throw std::invalid_argument(os.str());
  }
  return d;
}

Direction xi_of_t(cplx t) {
  if (std::abs(t) == 0.0) throw std::invalid_argument("xi_of_t: t = 0");
  const cplx it = 1.0 / t;
  const cplx x1 = 0.5 * (t - it);
  const cplx x2 = cplx(0, 0.5) * (t + it);
  Vec3 re(x1.real(), x2.real(), 1.0);
  Vec3 im(x1.imag(), x2.imag(), 0.0);
  return make_direction(re, im);
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

Frame make_frame(const Direction& d, const Vec3& ell0) {
  Frame fr;
  fr.dir = d;
  fr.ell0 = ell0;
  const double l = ell0.norm();
  if (l <= 0.0) throw std::invalid_argument("frame: ell0 = 0");
  const double s = d.sigma;
  if (std::abs(d.re.dot(ell0)) > 1e-12 * s * l ||
      std::abs(d.im.dot(ell0)) > 1e-12 * s * l) {
    throw std::invalid_argument(
        "frame: ell0 must be orthogonal to Re theta and Im theta");
  }
  fr.F.col(0) = d.re / s;
  fr.F.col(1) = d.im / s;
  fr.F.col(2) = ell0 / l;
  return fr;
}

std::optional<int> Frame::mirror_axis_y() const {
  Mat3 J = Mat3::Identity();
  J(2, 2) = -1.0;
  const Mat3 My = F.transpose() * J * F;
  int flip = -1;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      const double want_abs = (a == b) ? 1.0 : 0.0;
      if (std::abs(std::abs(My(a, b)) - want_abs) > 1e-12) return std::nullopt;
      if (a == b && My(a, a) < 0) {
        if (flip >= 0) return std::nullopt;  // more than one flipped axis
        flip = a;
      }
    }
  }
  if (flip < 0) return std::nullopt;
  return flip;
}

// ---------------------------------------------------------------------------
// Periodic symbol division
// ---------------------------------------------------------------------------

PiThetaResult pi_theta(const Field& f, const Vec3c& theta, double delta) {
  PiThetaResult res{f, 0};
  Fft3::forward(res.out);
  const auto& ax = res.out.g.ax;
  const double tnorm = std::sqrt(std::norm(theta[0]) + std::norm(theta[1]) +
                                 std::norm(theta[2]));
  const std::int64_t n0 = ax[0].n, n1 = ax[1].n, n2 = ax[2].n;
  const std::int64_t nsites = n0 * n1 * n2;
  std::vector<cplx> mult(static_cast<size_t>(nsites));
  for (std::int64_t i = 0; i < n0; ++i) {
    const double e0 = ax[0].freq(i);
    for (std::int64_t j = 0; j < n1; ++j) {
      const double e1 = ax[1].freq(j);
      for (std::int64_t k = 0; k < n2; ++k) {
        const double e2 = ax[2].freq(k);
        const cplx etheta = e0 * theta[0] + e1 * theta[1] + e2 * theta[2];
        const double enorm = std::sqrt(e0 * e0 + e1 * e1 + e2 * e2);
        const std::int64_t s = (i * n1 + j) * n2 + k;
        if (enorm == 0.0 || std::abs(etheta) < delta * tnorm * enorm) {
          mult[static_cast<size_t>(s)] = 0.0;
          ++res.annihilated;
        } else {
          mult[static_cast<size_t>(s)] = 1.0 / (cplx(0, 1) * etheta);
        }
      }
    }
  }
  for (int c = 0; c < res.out.ncomp; ++c) {
    cplx* v = res.out.comp(c);
    for (std::int64_t s = 0; s < nsites; ++s) v[s] *= mult[static_cast<size_t>(s)];
  }
  Fft3::inverse(res.out);
  return res;
}

// ---------------------------------------------------------------------------
// Honest in-plane inverse
// ---------------------------------------------------------------------------

namespace {

// Multiply every axis-2 slice of the in-plane FFT by mult(i,j).
template <class MultFn>
void apply_inplane_multiplier(Field& f, MultFn&& mult) {
  Fft3::forward_inplane(f);
  const auto& ax = f.g.ax;
  const std::int64_t n0 = ax[0].n, n1 = ax[1].n, n2 = ax[2].n;
  for (int c = 0; c < f.ncomp; ++c) {
    cplx* v = f.comp(c);
    for (std::int64_t i = 0; i < n0; ++i) {
      for (std::int64_t j = 0; j < n1; ++j) {
        const cplx m = mult(i, j);
        cplx* base = v + (i * n1 + j) * n2;
        for (std::int64_t k = 0; k < n2; ++k) base[k] *= m;
      }
    }
  }
  Fft3::inverse_inplane(f);
}

}  // namespace

Field dbar_pi_inplane(const Field& f, double sigma, int c) {
  if (c != 1 && c != -1)
    throw std::invalid_argument("dbar_pi_inplane: c must be +1 or -1");
  Field out = f;
  const auto& ax = out.g.ax;
  const double L = ax[0].half;  // kernel truncation radius = padded half-width
  apply_inplane_multiplier(out, [&](std::int64_t i, std::int64_t j) -> cplx {
    const double e0 = ax[0].freq(i);
    const double e1 = ax[1].freq(j);
    if (e0 == 0.0 && e1 == 0.0) return cplx(0, 0);
    const double r = std::hypot(e0, e1);
    const double num = 1.0 - std::cyl_bessel_j(0.0, L * r);
    const cplx den = cplx(0, 1) * sigma * (e0 + cplx(0, c) * e1);
    return num / den;
  });
  return out;
}

Field theta_dderiv_inplane(const Field& f, double sigma, int c) {
  Field out = f;
  const auto& ax = out.g.ax;
  apply_inplane_multiplier(out, [&](std::int64_t i, std::int64_t j) -> cplx {
    const double e0 = ax[0].freq(i);
    const double e1 = ax[1].freq(j);
    return cplx(0, 1) * sigma * (e0 + cplx(0, c) * e1);
  });
  return out;
}

// ---------------------------------------------------------------------------
// 4x4 transport
// ---------------------------------------------------------------------------

AThetaFields make_atheta(const LamePair& p, const Frame& fr, const Cutoff& cut,
                         const Grid& g, int conj_c) {
  AThetaFields A;
  A.theta_x = fr.dirvec(conj_c);
  A.u = Field(g, 3);
  A.w = Field(g, 3);
  A.btld = Field(g, 1);
  const std::int64_t n0 = g.ax[0].n, n1 = g.ax[1].n, n2 = g.ax[2].n;
  for (std::int64_t i = 0; i < n0; ++i) {
    for (std::int64_t j = 0; j < n1; ++j) {
      for (std::int64_t k = 0; k < n2; ++k) {
        const std::int64_t s = g.site(i, j, k);
        const Vec3 y = g.point(i, j, k);
        const double psi = cut.value(y);
        if (psi == 0.0) {
          for (int c = 0; c < 3; ++c) {
            A.u.comp(c)[s] = 0.0;
            A.w.comp(c)[s] = 0.0;
          }
          A.btld.comp(0)[s] = 0.0;
          continue;
        }
        const Vec3 x = fr.to_x(y);
        const Jet2 mu = p.mu(x);
        const Jet2 lam = p.lambda(x);
        const Jet2 inv_mu = jet_inv(mu);
        const double sq_mu = std::sqrt(mu.v);
        // u = -psi mu^{-1} grad mu
        const Vec3 uvec = -(psi / mu.v) * mu.g;
        // w = 2 psi mu^{1/2} ((-Hess + I Lap) mu^{-1}) theta
        const Mat3 Mop = -inv_mu.h + inv_mu.laplacian() * Mat3::Identity();
        const Vec3c wvec =
            (2.0 * psi * sq_mu) * (Mop.cast<cplx>() * A.theta_x);
        for (int c = 0; c < 3; ++c) {
          A.u.comp(c)[s] = uvec[c];
          A.w.comp(c)[s] = wvec[c];
        }
        A.btld.comp(0)[s] =
            psi * (lam.v + mu.v) / (lam.v + 2.0 * mu.v) * sq_mu;
      }
    }
  }
  return A;
}

Field apply_atheta(const AThetaFields& A, const Field& rs) {
  if (rs.ncomp != 4) throw std::invalid_argument("apply_atheta: need 4 comps");
  Field out(rs.g, 4);
  const std::int64_t nsites = rs.g.nsites();
  const cplx* r0 = rs.comp(0);
  const cplx* r1 = rs.comp(1);
  const cplx* r2 = rs.comp(2);
  const cplx* sc = rs.comp(3);
  for (std::int64_t s = 0; s < nsites; ++s) {
    const cplx tr = A.theta_x[0] * r0[s] + A.theta_x[1] * r1[s] +
                    A.theta_x[2] * r2[s];
    for (int c = 0; c < 3; ++c)
      out.comp(c)[s] = A.u.comp(c)[s] * tr + A.w.comp(c)[s] * sc[s];
    out.comp(3)[s] = A.btld.comp(0)[s] * tr;
  }
  return out;
}

namespace {

// Shared fixed-point driver: x = seed - scale * Pi(Apply(x)).
// Returns iterations; throws on non-contraction.
template <class ApplyFn>
int neumann_iterate(Field& x, const Field& seed, double scale, double sigma,
                    int conj_c, ApplyFn&& apply, double tol, int maxit,
                    const char* label) {
  double prev_inc = -1.0;
  int grew = 0;
  for (int it = 1; it <= maxit; ++it) {
    Field ax = apply(x);
    Field px = dbar_pi_inplane(ax, sigma, conj_c);
    // x_new = seed - scale * px; increment = ||x_new - x||
    double inc2 = 0.0, ref2 = 0.0;
    for (int c = 0; c < x.ncomp; ++c) {
      cplx* xv = x.comp(c);
      const cplx* sv = seed.comp(c);
      const cplx* pv = px.comp(c);
      for (std::int64_t s = 0; s < x.g.nsites(); ++s) {
        const cplx xn = sv[s] - scale * pv[s];
        inc2 += std::norm(xn - xv[s]);
        ref2 += std::norm(xn);
        xv[s] = xn;
      }
    }
    const double inc = std::sqrt(inc2), ref = std::sqrt(ref2);
    if (inc <= tol * std::max(ref, 1e-300)) return it;
    if (prev_inc >= 0.0 && inc > prev_inc) {
      if (++grew >= 3) {
        std::ostringstream os;
        os << label << ": fixed point not contracting (increment " << inc
           << " after " << it
           << " iterations); reduce coefficient amplitude or narrow the "
              "perturbation";
        throw std::runtime_error(os.str());
      }
    } else {
      grew = 0;
    }
    prev_inc = inc;
  }
  std::ostringstream os;
  os << label << ": no convergence to " << tol << " within " << maxit
     << " iterations (last increment " << prev_inc << ")";
  throw std::runtime_error(os.str());
}

void axis_bounds(const Region& reg, const Grid& g, int a, int* lo, int* hi) {
  if (reg.r[a].full) {
    *lo = 0;
    *hi = g.ax[a].n - 1;
  } else {
    *lo = reg.r[a].lo;
    *hi = reg.r[a].hi;
  }
}

}  // namespace

Transport4 solve_transport4(const LamePair& p, const Frame& fr,
                            const Cutoff& cut, const Grid& g,
                            const Region& check, int conj_c, double tol,
                            int maxit) {
  const AThetaFields A = make_atheta(p, fr, cut, g, conj_c);
  Transport4 out;
  out.C = Field(g, 16);
  const std::int64_t nsites = g.nsites();
  for (int col = 0; col < 4; ++col) {
    Field seed(g, 4);
    for (std::int64_t s = 0; s < nsites; ++s) seed.comp(col)[s] = 1.0;
    Field x = seed;
    out.iterations = std::max(
        out.iterations,
        neumann_iterate(
            x, seed, 0.5, fr.dir.sigma, conj_c,
            [&](const Field& f) { return apply_atheta(A, f); }, tol, maxit,
            "transport(4x4)"));
    for (int row = 0; row < 4; ++row) {
      cplx* dst = out.C.comp(row * 4 + col);
      const cplx* src = x.comp(row);
      for (std::int64_t s = 0; s < nsites; ++s) dst[s] = src[s];
    }
  }
  // Residual 2 theta.grad C + A C, column by column, spectrally.
  Field R(g, 16);
  for (int col = 0; col < 4; ++col) {
    Field xcol(g, 4);
    for (int row = 0; row < 4; ++row) {
      const cplx* src = out.C.comp(row * 4 + col);
      cplx* dst = xcol.comp(row);
      for (std::int64_t s = 0; s < nsites; ++s) dst[s] = src[s];
    }
    Field d = theta_dderiv_inplane(xcol, fr.dir.sigma, conj_c);
    Field ac = apply_atheta(A, xcol);
    for (int row = 0; row < 4; ++row) {
      cplx* dst = R.comp(row * 4 + col);
      const cplx* dv = d.comp(row);
      const cplx* av = ac.comp(row);
      for (std::int64_t s = 0; s < nsites; ++s) dst[s] = 2.0 * dv[s] + av[s];
    }
  }
  out.residual_rel = l2_norm(R, check) / l2_norm(out.C, check);
  // Determinant over the check region.
  double mind = std::numeric_limits<double>::infinity();
  int lo0, hi0, lo1, hi1, lo2, hi2;
  axis_bounds(check, g, 0, &lo0, &hi0);
  axis_bounds(check, g, 1, &lo1, &hi1);
  axis_bounds(check, g, 2, &lo2, &hi2);
  for (int i = lo0; i <= hi0; ++i)
    for (int j = lo1; j <= hi1; ++j)
      for (int k = lo2; k <= hi2; ++k) {
        const std::int64_t s = g.site(i, j, k);
        Eigen::Matrix4cd M;
        for (int r = 0; r < 4; ++r)
          for (int c = 0; c < 4; ++c) M(r, c) = out.C.comp(r * 4 + c)[s];
        mind = std::min(mind, std::abs(M.determinant()));
      }
  out.min_abs_det = mind;
  return out;
}

// ---------------------------------------------------------------------------
// 2x2 transport
// ---------------------------------------------------------------------------

ATilde make_atilde(const LamePair& p, const Frame& fr, int conj_c) {
  ATilde at;
  at.pair = &p;
  at.d = fr.dirvec(conj_c);
  const Jet2 l0 = Jet2::constant(p.lambda_c.base);
  const Jet2 m0 = Jet2::constant(p.mu_c.base);
  at.b0 = b_factor(l0, m0).v;
  return at;
}

Eigen::Matrix2cd Transport2::C_at(const Vec3& y, std::int64_t site) const {
  Eigen::Matrix2cd E = Eigen::Matrix2cd::Identity();
  E(1, 0) = G(y) * b0;
  Eigen::Matrix2cd Dm;
  Dm(0, 0) = D.comp(0)[site];
  Dm(0, 1) = D.comp(1)[site];
  Dm(1, 0) = D.comp(2)[site];
  Dm(1, 1) = D.comp(3)[site];
  return E * Dm;
}

Transport2 solve_transport2(const LamePair& p, const Frame& fr, int conj_c,
                            const Grid& g, const Region& check, double tol,
                            int maxit) {
  const ATilde at = make_atilde(p, fr, conj_c);
  Transport2 out;
  out.b0 = at.b0;
  out.sigma = fr.dir.sigma;
  out.conj_c = conj_c;
  const std::int64_t nsites = g.nsites();
  // F = E^{-1} (A - A0) E = [[-a g, -a], [a g^2 + db, a g]], g = G(y) b0.
  Field Ff(g, 4);
  const std::int64_t n0 = g.ax[0].n, n1 = g.ax[1].n, n2 = g.ax[2].n;
  for (std::int64_t i = 0; i < n0; ++i)
    for (std::int64_t j = 0; j < n1; ++j)
      for (std::int64_t k = 0; k < n2; ++k) {
        const std::int64_t s = g.site(i, j, k);
        const Vec3 y = g.point(i, j, k);
        const Vec3 x = fr.to_x(y);
        const cplx a = at.a(x);
        const double db = at.b(x) - at.b0;
        const cplx gg = out.G(y) * at.b0;
        Ff.comp(0)[s] = -a * gg;
        Ff.comp(1)[s] = -a;
        Ff.comp(2)[s] = a * gg * gg + db;
        Ff.comp(3)[s] = a * gg;
      }
  // D = I + Pi(F D)
  Field seed(g, 4);
  for (std::int64_t s = 0; s < nsites; ++s) {
    seed.comp(0)[s] = 1.0;
    seed.comp(3)[s] = 1.0;
  }
  auto matmul = [&](const Field& d) {
    Field r(g, 4);
    const cplx *f0 = Ff.comp(0), *f1 = Ff.comp(1), *f2 = Ff.comp(2),
               *f3 = Ff.comp(3);
    const cplx *d0 = d.comp(0), *d1 = d.comp(1), *d2 = d.comp(2),
               *d3 = d.comp(3);
    for (std::int64_t s = 0; s < nsites; ++s) {
      r.comp(0)[s] = f0[s] * d0[s] + f1[s] * d2[s];
      r.comp(1)[s] = f0[s] * d1[s] + f1[s] * d3[s];
      r.comp(2)[s] = f2[s] * d0[s] + f3[s] * d2[s];
      r.comp(3)[s] = f2[s] * d1[s] + f3[s] * d3[s];
    }
    return r;
  };
  out.D = seed;
  out.iterations = neumann_iterate(out.D, seed, -1.0, out.sigma, conj_c,
                                   matmul, tol, maxit, "transport(2x2)");
  // Residual theta.grad(C) - A C with C = E D:
  //   theta.grad C = A0 D + E (theta.grad D)   (theta.grad E = A0, constant)
  Field dD = theta_dderiv_inplane(out.D, out.sigma, conj_c);
  Field R(g, 4);
  Field Cf(g, 4);
  double mind = std::numeric_limits<double>::infinity();
  for (std::int64_t i = 0; i < n0; ++i)
    for (std::int64_t j = 0; j < n1; ++j)
      for (std::int64_t k = 0; k < n2; ++k) {
        const std::int64_t s = g.site(i, j, k);
        const Vec3 y = g.point(i, j, k);
        const Vec3 x = fr.to_x(y);
        const cplx a = at.a(x);
        const double b = at.b(x);
        const cplx gg = out.G(y) * at.b0;
        Eigen::Matrix2cd Dm, dDm;
        Dm << out.D.comp(0)[s], out.D.comp(1)[s], out.D.comp(2)[s],
            out.D.comp(3)[s];
        dDm << dD.comp(0)[s], dD.comp(1)[s], dD.comp(2)[s], dD.comp(3)[s];
        Eigen::Matrix2cd E = Eigen::Matrix2cd::Identity();
        E(1, 0) = gg;
        Eigen::Matrix2cd A0 = Eigen::Matrix2cd::Zero();
        A0(1, 0) = at.b0;
        Eigen::Matrix2cd A;
        A << 0.0, -a, b, 0.0;
        const Eigen::Matrix2cd C = E * Dm;
        const Eigen::Matrix2cd res = A0 * Dm + E * dDm - A * C;
        Cf.comp(0)[s] = C(0, 0);
        Cf.comp(1)[s] = C(0, 1);
        Cf.comp(2)[s] = C(1, 0);
        Cf.comp(3)[s] = C(1, 1);
        R.comp(0)[s] = res(0, 0);
        R.comp(1)[s] = res(0, 1);
        R.comp(2)[s] = res(1, 0);
        R.comp(3)[s] = res(1, 1);
        if (check.contains(i, j, k))
          mind = std::min(mind, std::abs(Dm.determinant()));
      }
  out.residual_rel = l2_norm(R, check) / l2_norm(Cf, check);
  out.min_abs_det = mind;
  return out;
}

}  // namespace lamecgo
