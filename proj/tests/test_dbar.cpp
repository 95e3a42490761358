#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "lamecgo/dbar.hpp"

using namespace lamecgo;

namespace {

Direction generic_direction() {
  const double gamma = 1.0, delta = 0.7;
  const Vec3 re(std::sin(gamma) * std::cos(delta),
                std::sin(gamma) * std::sin(delta), std::cos(gamma));
  Vec3 im0(0.0, 1.0, 0.3);
  im0 -= im0.dot(re) * re;  // re is unit
  const Vec3 im = im0.normalized();
  return make_direction(re, im);
}

// In-plane Gaussian times a periodic modulation in y3.
Field inplane_gaussian(const Grid& g, double w, double mod = 0.3) {
  Field f(g, 1);
  const double k3 = M_PI / g.ax[2].half;
  f.fill([&](Vec3 y, cplx* o) {
    const double rp2 = y[0] * y[0] + y[1] * y[1];
    o[0] = std::exp(-rp2 / (w * w)) * (1.0 + mod * std::cos(k3 * y[2]));
  });
  return f;
}

double max_diff_region(const Field& a, const Field& b, const Region& reg) {
  double err = 0;
  const Grid& g = a.g;
  for (int i = 0; i < g.n0(); ++i)
    for (int j = 0; j < g.n1(); ++j)
      for (int k = 0; k < g.n2(); ++k) {
        if (!reg.contains(i, j, k)) continue;
        for (int c = 0; c < a.ncomp; ++c)
          err = std::max(err, std::abs(a.at(c, i, j, k) - b.at(c, i, j, k)));
      }
  return err;
}

}  // namespace

TEST_CASE("directions: validation and the rational family") {
  CHECK_THROWS_AS(make_direction(Vec3(1, 0, 0), Vec3(0.5, 0.5, 0)),
                  std::invalid_argument);

  Direction d1 = xi_of_t(cplx(1.0, 0.0));
  CHECK((d1.re - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK((d1.im - Vec3(0, 1, 0)).norm() < 1e-15);
  CHECK(d1.sigma == doctest::Approx(1.0));
  CHECK(d1.real_third);

  Direction d2 = xi_of_t(cplx(2.0, 0.0));
  CHECK((d2.re - Vec3(0.75, 0, 1)).norm() < 1e-14);
  CHECK((d2.im - Vec3(0, 1.25, 0)).norm() < 1e-14);
  CHECK(d2.sigma == doctest::Approx(1.25));

  // |t| = 1 members rotate about the third axis and keep sigma = 1
  Direction dc = xi_of_t(std::exp(cplx(0, 0.5)));
  CHECK(dc.sigma == doctest::Approx(1.0));
  CHECK(dc.defect() < 1e-13);

  Direction dg = generic_direction();
  CHECK(dg.defect() < 1e-13);
}

TEST_CASE("frames: normal form and the mirror action") {
  Direction d = xi_of_t(cplx(1.0, 0.0));
  Frame fr = make_frame(d, Vec3(0.6, 0, 0));
  // y-axes are (e3, e2, e1)
  CHECK((fr.F.col(0) - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK((fr.F.col(1) - Vec3(0, 1, 0)).norm() < 1e-15);
  CHECK((fr.F.col(2) - Vec3(1, 0, 0)).norm() < 1e-15);
  CHECK(fr.to_y(Vec3(0.3, -0.2, 0.5)) == Vec3(0.5, -0.2, 0.3));
  auto ma = fr.mirror_axis_y();
  REQUIRE(ma.has_value());
  CHECK(*ma == 0);

  // rotated |t| = 1 frame still supports the mirror on y1
  Direction dc = xi_of_t(std::exp(cplx(0, 0.5)));
  const Vec3 l0 = dc.re.cross(dc.im).normalized() * 0.5;
  Frame frc = make_frame(dc, l0);
  auto mac = frc.mirror_axis_y();
  REQUIRE(mac.has_value());
  CHECK(*mac == 0);

  // |t| != 1 tilts Re theta out of the mirror plane: no axis-aligned action
  Direction d2 = xi_of_t(cplx(2.0, 0.0));
  const Vec3 l2 = d2.re.cross(d2.im).normalized() * 0.5;
  Frame fr2 = make_frame(d2, l2);
  CHECK(!fr2.mirror_axis_y().has_value());

  CHECK_THROWS_AS(make_frame(d, Vec3(0, 0, 1)), std::invalid_argument);
}

TEST_CASE("periodic symbol division: fixtures and kernel counting") {
  Grid g = Grid::cube(1.0, 16);
  Field f(g, 1);
  f.fill([](Vec3 x, cplx* o) { o[0] = std::exp(cplx(0, M_PI * x[0])); });

  SUBCASE("generic direction: single annihilated mode, exact inverse") {
    Direction dg = generic_direction();
    const Vec3c th = dg.theta();
    PiThetaResult r = pi_theta(f, th);
    CHECK(r.annihilated == 1);
    const cplx expect = 1.0 / (cplx(0, 1) * M_PI * th[0]);
    double err = 0;
    for (size_t s = 0; s < f.v.size(); ++s)
      err = std::max(err, std::abs(r.out.v[s] - expect * f.v[s]));
    CHECK(err < 1e-12);

    // forward o inverse = identity minus the mean, on a multi-mode field
    Field h(g, 1);
    h.fill([](Vec3 x, cplx* o) {
      o[0] = 0.4 + std::exp(cplx(0, M_PI * (2 * x[0] - x[1]))) +
             cplx(0, 0.7) * std::exp(cplx(0, M_PI * (x[1] + 3 * x[2])));
    });
    PiThetaResult rh = pi_theta(h, th);
    CHECK(rh.annihilated == 1);
    Field back(g, 1);
    for (int a = 0; a < 3; ++a) {
      Field da = spectral_derivative(rh.out, a);
      for (size_t s = 0; s < back.v.size(); ++s)
        back.v[s] += th[a] * da.v[s];
    }
    double err2 = 0;
    for (size_t s = 0; s < h.v.size(); ++s)
      err2 = std::max(err2, std::abs(back.v[s] - (h.v[s] - 0.4)));
    CHECK(err2 < 1e-11);
  }

  SUBCASE("lattice-resonant direction annihilates a full line") {
    const Vec3c th(1.0, cplx(0, 1), 0.0);
    PiThetaResult r = pi_theta(f, th);
    CHECK(r.annihilated == 16);  // all modes (0,0,k)
    // eta = (pi,0,0): eta.theta = pi, so the mode divides by i pi
    const cplx expect = 1.0 / cplx(0, M_PI);
    CHECK(std::abs(r.out.at(0, 3, 5, 7) - expect * f.at(0, 3, 5, 7)) < 1e-12);

    Field f2(g, 1);
    f2.fill([](Vec3 x, cplx* o) { o[0] = std::exp(cplx(0, M_PI * x[1])); });
    PiThetaResult r2 = pi_theta(f2, th);
    // eta = (0,pi,0): eta.theta = i pi, division by -pi
    CHECK(std::abs(r2.out.at(0, 2, 9, 4) - (-1.0 / M_PI) * f2.at(0, 2, 9, 4)) <
          1e-12);
  }
}

TEST_CASE("truncated-kernel inverse: two-sided identity on the small box") {
  Grid gp = Grid::padded_inplane(1.0, 32);
  Field f = inplane_gaussian(gp, 0.25);
  Region small = Region::box(gp, "small", Vec3(-0.99, -0.99, -0.99),
                             Vec3(0.99, 0.99, 0.99));
  const double fmax = f.max_abs();

  for (int c : {+1, -1}) {
    Field pf = dbar_pi_inplane(f, 1.0, c);
    Field dpf = theta_dderiv_inplane(pf, 1.0, c);
    CHECK(max_diff_region(dpf, f, small) < 1e-10 * fmax);

    Field df = theta_dderiv_inplane(f, 1.0, c);
    Field pdf = dbar_pi_inplane(df, 1.0, c);
    CHECK(max_diff_region(pdf, f, small) < 1e-10 * fmax);
  }

  // conjugation symmetry: Pi_{-}(f) = conj(Pi_{+}(conj f))
  Field fc = f;
  for (auto& z : fc.v) z = std::conj(z);
  Field a = dbar_pi_inplane(fc, 1.0, +1);
  for (auto& z : a.v) z = std::conj(z);
  Field b = dbar_pi_inplane(f, 1.0, -1);
  double errc = 0;
  for (size_t s = 0; s < a.v.size(); ++s)
    errc = std::max(errc, std::abs(a.v[s] - b.v[s]));
  CHECK(errc < 1e-13 * fmax);

  // scaling in sigma: Pi_{2 sigma} = Pi_sigma / 2
  Field p1 = dbar_pi_inplane(f, 1.0, +1);
  Field p2 = dbar_pi_inplane(f, 2.0, +1);
  double errs = 0;
  for (size_t s = 0; s < p1.v.size(); ++s)
    errs = std::max(errs, std::abs(p1.v[s] - 2.0 * p2.v[s]));
  CHECK(errs < 1e-13 * fmax);
}

TEST_CASE("scalar transport surrogate: closed-form solution and iteration") {
  Grid gp = Grid::padded_inplane(1.0, 32);
  Region small = Region::box(gp, "small", Vec3(-0.99, -0.99, -0.99),
                             Vec3(0.99, 0.99, 0.99));

  // The closed form exp(-phi/2) carries powers of phi whose widths shrink
  // like w/sqrt(k), so their Nyquist tails dominate the identity defect;
  // w = 0.3 pushes the cubic harmonic below 1e-9 on this grid while the
  // radius-3 circle average still misses the support by ~e^{-40}.
  auto run = [&](double amp) {
    Field phi = inplane_gaussian(gp, 0.3);
    for (auto& z : phi.v) z *= amp;
    Field a = theta_dderiv_inplane(phi, 1.0, +1);
    Field cstar(gp, 1);
    for (size_t s = 0; s < cstar.v.size(); ++s)
      cstar.v[s] = std::exp(-0.5 * phi.v[s]);
    return std::tuple<Field, Field>(std::move(a), std::move(cstar));
  };

  SUBCASE("exact solution satisfies the fixed-point equation") {
    auto [a, cstar] = run(1.0);
    Field ac(a.g, 1);
    for (size_t s = 0; s < ac.v.size(); ++s) ac.v[s] = a.v[s] * cstar.v[s];
    Field pac = dbar_pi_inplane(ac, 1.0, +1);
    Field resid(a.g, 1);
    for (size_t s = 0; s < resid.v.size(); ++s)
      resid.v[s] = cstar.v[s] - 1.0 + 0.5 * pac.v[s];
    Field zero(a.g, 1);
    CHECK(max_diff_region(resid, zero, small) < 1e-9);
  }

  SUBCASE("fixed-point iteration converges to the closed form") {
    auto [a, cstar] = run(0.3);
    Field x(a.g, 1);
    for (auto& z : x.v) z = 1.0;
    int iters = 0;
    for (; iters < 100; ++iters) {
      Field ax(a.g, 1);
      for (size_t s = 0; s < ax.v.size(); ++s) ax.v[s] = a.v[s] * x.v[s];
      Field pax = dbar_pi_inplane(ax, 1.0, +1);
      double inc = 0;
      for (size_t s = 0; s < x.v.size(); ++s) {
        const cplx xn = 1.0 - 0.5 * pax.v[s];
        inc = std::max(inc, std::abs(xn - x.v[s]));
        x.v[s] = xn;
      }
      if (inc < 1e-13) break;
    }
    CHECK(iters < 60);
    CHECK(max_diff_region(x, cstar, small) < 1e-8);
  }
}

TEST_CASE("2x2 transport: trivial background and perturbed pair") {
  Grid gp = Grid::padded_inplane(1.0, 32);
  Direction d = xi_of_t(cplx(1.0, 0.0));
  Frame fr = make_frame(d, Vec3(0.6, 0, 0));
  Region check = Region::box(gp, "core", Vec3(-0.45, -0.45, -0.45),
                             Vec3(0.45, 0.45, 0.45));

  SUBCASE("constant moduli give D = I exactly") {
    LamePair p = LamePair::homogeneous(1.0, 1.0);
    Transport2 t = solve_transport2(p, fr, +1, gp, check);
    CHECK(t.iterations <= 2);
    CHECK(std::abs(t.min_abs_det - 1.0) < 1e-14);
    double dev = 0;
    for (std::int64_t s = 0; s < gp.nsites(); ++s) {
      dev = std::max(dev, std::abs(t.D.comp(0)[s] - 1.0));
      dev = std::max(dev, std::abs(t.D.comp(1)[s]));
      dev = std::max(dev, std::abs(t.D.comp(2)[s]));
      dev = std::max(dev, std::abs(t.D.comp(3)[s] - 1.0));
    }
    CHECK(dev < 1e-14);
  }

  SUBCASE("gaussian perturbation: small residual, determinant bounded away") {
    LamePair p = LamePair::homogeneous(1.0, 1.0);
    CoeffTerm gl;
    gl.kind = CoeffTerm::Kind::Gaussian;
    gl.amp = 0.15;
    gl.center = Vec3(0.1, -0.05, 0.1);
    gl.width = 0.2;
    p.lambda_c.terms.push_back(gl);
    CoeffTerm gm = gl;
    gm.amp = -0.1;
    gm.center = Vec3(-0.1, 0.05, 0.0);
    p.mu_c.terms.push_back(gm);

    Transport2 tp = solve_transport2(p, fr, +1, gp, check);
    CHECK(tp.residual_rel < 1e-8);
    CHECK(tp.min_abs_det > 0.8);

    // Conjugate direction solves to the conjugate solution.  The discrete
    // kernels satisfy conj(K_+(-xi)) = K_-(xi) bin for bin except at the
    // unpaired Nyquist frequency, so the mismatch is bounded by the data's
    // Nyquist-band content rather than by roundoff.
    Transport2 tm = solve_transport2(p, fr, -1, gp, check);
    double errc = 0;
    for (size_t s = 0; s < tp.D.v.size(); ++s)
      errc = std::max(errc, std::abs(std::conj(tp.D.v[s]) - tm.D.v[s]));
    CHECK(errc < 2e-5);
  }
}

TEST_CASE("4x4 transport: identity background and perturbed pair") {
  Grid gp = Grid::padded_inplane(1.0, 32);
  Direction d = xi_of_t(cplx(1.0, 0.0));
  Frame fr = make_frame(d, Vec3(0.6, 0, 0));
  Cutoff cut;
  Region check = Region::box(gp, "core", Vec3(-0.45, -0.45, -0.45),
                             Vec3(0.45, 0.45, 0.45));

  SUBCASE("constant moduli: nilpotent structure solved exactly") {
    // With constant moduli every gradient entry of the matrix vanishes and
    // only the cutoff-weighted constant in the last row survives, so the
    // system is nilpotent: the iteration terminates after two applications
    // and the solution is the identity plus two entries in the last row.
    // Vector components live in the ambient frame, where the direction is
    // (0, i, 1): the live entries are (3,1) and (3,2) with ratio i, and the
    // determinant is exactly one.
    LamePair p = LamePair::homogeneous(1.0, 1.0);
    Transport4 t = solve_transport4(p, fr, cut, gp, check);
    CHECK(t.iterations <= 3);
    CHECK(std::abs(t.min_abs_det - 1.0) < 1e-12);
    double dev = 0;
    for (int row = 0; row < 4; ++row)
      for (int col = 0; col < 4; ++col) {
        if (row == 3 && (col == 1 || col == 2)) continue;  // live entries
        const cplx want = (row == col) ? 1.0 : 0.0;
        const cplx* e = t.C.comp(row * 4 + col);
        for (std::int64_t s = 0; s < gp.nsites(); ++s)
          dev = std::max(dev, std::abs(e[s] - want));
      }
    CHECK(dev < 1e-13);
    const cplx* c31 = t.C.comp(3 * 4 + 1);
    const cplx* c32 = t.C.comp(3 * 4 + 2);
    double live = 0, ratio_dev = 0;
    for (std::int64_t s = 0; s < gp.nsites(); ++s) {
      live = std::max(live, std::abs(c32[s]));
      ratio_dev = std::max(ratio_dev,
                           std::abs(c31[s] - cplx(0.0, 1.0) * c32[s]));
    }
    CHECK(live > 1e-2);
    CHECK(ratio_dev < 1e-13);
    // The residual is limited by how well this grid resolves the plateau
    // cutoff (its high-frequency tail), not by the solver; see the
    // acceptance suite for the resolved-grid figure.
    CHECK(t.residual_rel < 5e-8);
  }

  SUBCASE("gaussian perturbation at reference amplitude") {
    LamePair p = LamePair::homogeneous(1.0, 1.0);
    CoeffTerm gl;
    gl.kind = CoeffTerm::Kind::Gaussian;
    gl.amp = 0.1;
    gl.center = Vec3(0.05, -0.1, 0.1);
    gl.width = 0.17;
    p.lambda_c.terms.push_back(gl);
    CoeffTerm gm = gl;
    gm.amp = 0.1;
    gm.center = Vec3(-0.05, 0.1, 0.0);
    p.mu_c.terms.push_back(gm);

    Transport4 t = solve_transport4(p, fr, cut, gp, check);
    // Same cutoff-resolution floor as above (~1.3e-8 on this grid); the
    // acceptance suite re-runs this configuration on a finer grid where the
    // residual drops below 1e-8 with a wide margin.
    CHECK(t.residual_rel < 5e-8);
    CHECK(t.min_abs_det > 1e-3);
    CHECK(t.iterations < 30);
    MESSAGE("4x4 transport iterations: ", t.iterations,
            ", min|det| = ", t.min_abs_det,
            ", residual = ", t.residual_rel);
  }
}
