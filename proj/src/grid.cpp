#include "lamecgo/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

namespace lamecgo {

// ---------------------------------------------------------------------------
// Regions
// ---------------------------------------------------------------------------

Region Region::box(const Grid& g, const std::string& name, Vec3 lo, Vec3 hi) {
  Region s;
  s.name = name;
  for (int a = 0; a < 3; ++a) {
    const Axis& ax = g.ax[a];
    const double h = ax.h();
    int jlo = int(std::ceil((lo[a] + ax.half) / h - 1e-12));
    int jhi = int(std::floor((hi[a] + ax.half) / h + 1e-12));
    jlo = std::max(jlo, 0);
    jhi = std::min(jhi, ax.n - 1);
    if (jlo > jhi) throw std::invalid_argument("Region::box: empty range");
    s.r[a] = AxisRange{false, jlo, jhi};
  }
  return s;
}

StandardBox StandardBox::make(double R, int n, double a_frac,
                              double core_frac) {
  StandardBox b;
  b.grid = Grid::cube(R, n);
  const double a = a_frac * R, c = core_frac * R;
  b.omega_x2 = Region::box(b.grid, "omega_x2", Vec3(-a, -a, -a), Vec3(a, a, a));
  // Snap Omega / OmegaVee from the realized omega_x2 bounds so that the two
  // halves share the x3 = 0 vertex plane and mirror onto each other exactly.
  b.omega = b.omega_x2;
  b.omega.name = "omega";
  b.omega.r[2].lo = n / 2;  // x3 = 0 plane
  b.omega_vee = b.omega_x2;
  b.omega_vee.name = "omega_vee";
  b.omega_vee.r[2].hi = n / 2;
  // mirror consistency: indices [lo,hi] of omega map to [n-hi, n-lo]
  if (mirror_index(b.omega.r[2].hi, n) != b.omega_vee.r[2].lo)
    throw std::logic_error("StandardBox: mirror mismatch");
  b.core = Region::box(b.grid, "core", Vec3(-c, -c, -c), Vec3(c, c, c));
  b.whole = Region::whole();
  b.whole.name = "b_R";
  return b;
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

void Field::fill(std::function<void(Vec3, cplx*)> f) {
  std::vector<cplx> buf(ncomp);
  for (int i = 0; i < g.n0(); ++i)
    for (int j = 0; j < g.n1(); ++j)
      for (int k = 0; k < g.n2(); ++k) {
        f(g.point(i, j, k), buf.data());
        const std::int64_t s = g.site(i, j, k);
        for (int c = 0; c < ncomp; ++c) comp(c)[s] = buf[c];
      }
}

Field Field::component(int c) const {
  Field out(g, 1);
  std::copy(comp(c), comp(c) + g.nsites(), out.comp(0));
  return out;
}

double Field::max_abs() const {
  double m = 0.0;
  for (const cplx& z : v) m = std::max(m, std::abs(z));
  return m;
}

// ---------------------------------------------------------------------------
// FFT plans
// ---------------------------------------------------------------------------

namespace {

struct PlanKey {
  int n0, n1, n2, sign;
  bool inplane;
  bool operator<(const PlanKey& o) const {
    return std::tie(n0, n1, n2, sign, inplane) <
           std::tie(o.n0, o.n1, o.n2, o.sign, o.inplane);
  }
};

fftw_plan get_plan(const Grid& g, int sign, bool inplane) {
  static std::map<PlanKey, fftw_plan> cache;
  PlanKey key{g.n0(), g.n1(), g.n2(), sign, inplane};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  // Plan on a scratch buffer with FFTW_UNALIGNED so the plan may later be
  // executed on any array of the same shape (new-array execute interface).
  std::vector<cplx> scratch(std::size_t(g.nsites()));
  fftw_complex* p = reinterpret_cast<fftw_complex*>(scratch.data());
  fftw_plan plan;
  if (!inplane) {
    plan = fftw_plan_dft_3d(g.n0(), g.n1(), g.n2(), p, p, sign,
                            FFTW_ESTIMATE | FFTW_UNALIGNED);
  } else {
    // batched 2-D transforms over axes (0,1); one transform per axis-2
    // index.  Layout: site = (i*n1 + j)*n2 + k, so within one transform the
    // stride between successive j is n2 and the batch distance is 1.
    int n[2] = {g.n0(), g.n1()};
    plan = fftw_plan_many_dft(2, n, g.n2(), p, nullptr, g.n2(), 1, p, nullptr,
                              g.n2(), 1, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  if (!plan) throw std::runtime_error("FFTW planning failed");
  cache.emplace(key, plan);
  return plan;
}

void execute(Field& f, int sign, bool inplane) {
  fftw_plan plan = get_plan(f.g, sign, inplane);
  for (int c = 0; c < f.ncomp; ++c) {
    fftw_complex* p = reinterpret_cast<fftw_complex*>(f.comp(c));
    fftw_execute_dft(plan, p, p);
  }
  if (sign == FFTW_BACKWARD) {
    const double scale =
        inplane ? 1.0 / (double(f.g.n0()) * f.g.n1()) : 1.0 / double(f.g.nsites());
    for (cplx& z : f.v) z *= scale;
  }
}

}  // namespace

void Fft3::forward(Field& f) { execute(f, FFTW_FORWARD, false); }
void Fft3::inverse(Field& f) { execute(f, FFTW_BACKWARD, false); }
void Fft3::forward_inplane(Field& f) { execute(f, FFTW_FORWARD, true); }
void Fft3::inverse_inplane(Field& f) { execute(f, FFTW_BACKWARD, true); }

void apply_symbol(Field& fhat, const std::function<cplx(const Vec3&)>& sym) {
  const Grid& g = fhat.g;
  for (int c = 0; c < fhat.ncomp; ++c) {
    cplx* d = fhat.comp(c);
    for (int i = 0; i < g.n0(); ++i) {
      const double k0 = g.ax[0].freq(i);
      for (int j = 0; j < g.n1(); ++j) {
        const double k1 = g.ax[1].freq(j);
        for (int k = 0; k < g.n2(); ++k) {
          d[g.site(i, j, k)] *= sym(Vec3(k0, k1, g.ax[2].freq(k)));
        }
      }
    }
  }
}

Field spectral_derivative(const Field& f, int axis, double shift) {
  Field out = f;
  Fft3::forward(out);
  const Grid& g = out.g;
  const int n = g.ax[axis].n;
  // Precompute the per-bin multiplier; Nyquist bin is annihilated unless a
  // shift moves it off the symmetric point.
  std::vector<cplx> mul(n);
  for (int m = 0; m < n; ++m) {
    double k = g.ax[axis].freq(m);
    if (2 * m == n && shift == 0.0) k = 0.0;
    mul[m] = cplx(0.0, k + shift);
  }
  for (int c = 0; c < out.ncomp; ++c) {
    cplx* d = out.comp(c);
    for (int i = 0; i < g.n0(); ++i)
      for (int j = 0; j < g.n1(); ++j)
        for (int k = 0; k < g.n2(); ++k) {
          const int idx[3] = {i, j, k};
          d[g.site(i, j, k)] *= mul[idx[axis]];
        }
  }
  Fft3::inverse(out);
  return out;
}

Field fd_derivative(const Field& f, int axis) {
  const Grid& g = f.g;
  const int n = g.ax[axis].n;
  const double h = g.ax[axis].h();
  Field out(g, f.ncomp);
  auto shifted = [&](int i, int j, int k, int d) {
    int idx[3] = {i, j, k};
    idx[axis] += d;
    return g.site(idx[0], idx[1], idx[2]);
  };
  for (int c = 0; c < f.ncomp; ++c) {
    const cplx* s = f.comp(c);
    cplx* d = out.comp(c);
    for (int i = 0; i < g.n0(); ++i)
      for (int j = 0; j < g.n1(); ++j)
        for (int k = 0; k < g.n2(); ++k) {
          const int idx[3] = {i, j, k};
          const int m = idx[axis];
          cplx val;
          if (m == 0) {
            val = (-3.0 * s[shifted(i, j, k, 0)] + 4.0 * s[shifted(i, j, k, 1)] -
                   s[shifted(i, j, k, 2)]) /
                  (2.0 * h);
          } else if (m == n - 1) {
            val = (3.0 * s[shifted(i, j, k, 0)] - 4.0 * s[shifted(i, j, k, -1)] +
                   s[shifted(i, j, k, -2)]) /
                  (2.0 * h);
          } else {
            val = (s[shifted(i, j, k, 1)] - s[shifted(i, j, k, -1)]) / (2.0 * h);
          }
          d[g.site(i, j, k)] = val;
        }
  }
  return out;
}

Field derivative(const Field& f, int axis, Deriv backend) {
  return backend == Deriv::Spectral ? spectral_derivative(f, axis)
                                    : fd_derivative(f, axis);
}

Field upsample_double(const Field& f) {
  const Grid& g = f.g;
  Grid g2;
  for (int a = 0; a < 3; ++a) g2.ax[a] = Axis{g.ax[a].half, 2 * g.ax[a].n};
  Field hat = f;
  Fft3::forward(hat);
  Field out(g2, f.ncomp);
  // The forward transform is unnormalized and the inverse divides by the
  // site count of its own grid, so carrying coefficients across grids needs
  // the ratio of the two counts.
  const double s = double(g2.nsites()) / double(g.nsites());
  for (int c = 0; c < f.ncomp; ++c)
    for (int i = 0; i < g.n0(); ++i) {
      if (2 * i == g.ax[0].n) continue;  // source Nyquist rows dropped
      const int i2 = (g.ax[0].kindex(i) + g2.ax[0].n) % g2.ax[0].n;
      for (int j = 0; j < g.n1(); ++j) {
        if (2 * j == g.ax[1].n) continue;
        const int j2 = (g.ax[1].kindex(j) + g2.ax[1].n) % g2.ax[1].n;
        for (int k = 0; k < g.n2(); ++k) {
          if (2 * k == g.ax[2].n) continue;
          const int k2 = (g.ax[2].kindex(k) + g2.ax[2].n) % g2.ax[2].n;
          out.at(c, i2, j2, k2) = s * hat.at(c, i, j, k);
        }
      }
    }
  Fft3::inverse(out);
  return out;
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

namespace {
struct RegionIter {
  const Grid& g;
  const Region& reg;
  int lo[3], hi[3];
  RegionIter(const Grid& gr, const Region& r) : g(gr), reg(r) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = r.r[a].full ? 0 : r.r[a].lo;
      hi[a] = r.r[a].full ? g.ax[a].n - 1 : r.r[a].hi;
    }
  }
};
}  // namespace

cplx integrate(const Field& f, int c, const Region& reg) {
  RegionIter it(f.g, reg);
  const cplx* d = f.comp(c);
  cplx acc(0.0, 0.0);
  for (int i = it.lo[0]; i <= it.hi[0]; ++i) {
    const double w0 = reg.axis_weight(f.g, 0, i);
    for (int j = it.lo[1]; j <= it.hi[1]; ++j) {
      const double w01 = w0 * reg.axis_weight(f.g, 1, j);
      cplx row(0.0, 0.0);
      for (int k = it.lo[2]; k <= it.hi[2]; ++k)
        row += reg.axis_weight(f.g, 2, k) * d[f.g.site(i, j, k)];
      acc += w01 * row;
    }
  }
  return acc;
}

cplx integrate_sum(const Field& f, const Region& reg) {
  cplx acc(0.0, 0.0);
  for (int c = 0; c < f.ncomp; ++c) acc += integrate(f, c, reg);
  return acc;
}

double l2_norm_comps(const Field& f, int c0, int c1, const Region& reg) {
  RegionIter it(f.g, reg);
  double acc = 0.0;
  for (int i = it.lo[0]; i <= it.hi[0]; ++i) {
    const double w0 = reg.axis_weight(f.g, 0, i);
    for (int j = it.lo[1]; j <= it.hi[1]; ++j) {
      const double w01 = w0 * reg.axis_weight(f.g, 1, j);
      double row = 0.0;
      for (int k = it.lo[2]; k <= it.hi[2]; ++k) {
        const double w = reg.axis_weight(f.g, 2, k);
        const std::int64_t s = f.g.site(i, j, k);
        double mag = 0.0;
        for (int c = c0; c < c1; ++c) mag += std::norm(f.comp(c)[s]);
        row += w * mag;
      }
      acc += w01 * row;
    }
  }
  return std::sqrt(acc);
}

double l2_norm(const Field& f, const Region& reg) {
  return l2_norm_comps(f, 0, f.ncomp, reg);
}

double max_norm(const Field& f, const Region& reg) {
  RegionIter it(f.g, reg);
  double m = 0.0;
  for (int i = it.lo[0]; i <= it.hi[0]; ++i)
    for (int j = it.lo[1]; j <= it.hi[1]; ++j)
      for (int k = it.lo[2]; k <= it.hi[2]; ++k) {
        const std::int64_t s = f.g.site(i, j, k);
        double mag = 0.0;
        for (int c = 0; c < f.ncomp; ++c) mag += std::norm(f.comp(c)[s]);
        m = std::max(m, mag);
      }
  return std::sqrt(m);
}

namespace {

// 16-point Gauss-Legendre nodes/weights on [-1,1].
constexpr int kGL = 16;
const double kGLx[kGL] = {
    -0.9894009349916499, -0.9445750230732326, -0.8656312023878318,
    -0.7554044083550030, -0.6178762444026438, -0.4580167776572274,
    -0.2816035507792589, -0.0950125098376374, 0.0950125098376374,
    0.2816035507792589,  0.4580167776572274,  0.6178762444026438,
    0.7554044083550030,  0.8656312023878318,  0.9445750230732326,
    0.9894009349916499};
const double kGLw[kGL] = {
    0.0271524594117541, 0.0622535239386479, 0.0951585116824928,
    0.1246289712555339, 0.1495959888165767, 0.1691565193950025,
    0.1826034150449236, 0.1894506104550685, 0.1894506104550685,
    0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479,
    0.0271524594117541};

// log of int_a^b exp(2 tau x^2) dx via Gauss-Legendre in the log domain.
double log_cell_weight(double a, double b, double tau) {
  const double mid = 0.5 * (a + b), rad = 0.5 * (b - a);
  double mx = -std::numeric_limits<double>::infinity();
  double exponents[kGL];
  for (int q = 0; q < kGL; ++q) {
    const double x = mid + rad * kGLx[q];
    exponents[q] = 2.0 * tau * x * x;
    mx = std::max(mx, exponents[q]);
  }
  double s = 0.0;
  for (int q = 0; q < kGL; ++q) s += kGLw[q] * std::exp(exponents[q] - mx);
  return mx + std::log(rad * s);
}

struct LogAccumulator {
  double m = -std::numeric_limits<double>::infinity();
  double s = 0.0;
  void add(double e) {
    if (std::isinf(e) && e < 0) return;
    if (e <= m) {
      s += std::exp(e - m);
    } else {
      s = s * std::exp(m - e) + 1.0;
      m = e;
    }
  }
  double value() const {
    if (s == 0.0) return -std::numeric_limits<double>::infinity();
    return m + std::log(s);
  }
};

}  // namespace

double log_weighted_norm(const Field& f, const Region& reg, double tau) {
  RegionIter it(f.g, reg);
  // Per-axis, per-cell log weight integrals.  Cells run from index m to m+1;
  // full axes wrap (the final cell spans [x_{n-1}, x_{n-1}+h]).
  std::array<std::vector<double>, 3> cellw;
  std::array<int, 3> ncell;
  for (int a = 0; a < 3; ++a) {
    const Axis& ax = f.g.ax[a];
    ncell[a] = reg.r[a].full ? ax.n : (it.hi[a] - it.lo[a]);
    cellw[a].resize(std::max(ncell[a], 0));
    for (int m = 0; m < ncell[a]; ++m) {
      const double x0 = ax.x(it.lo[a] + m);
      cellw[a][m] = log_cell_weight(x0, x0 + ax.h(), tau);
    }
  }
  if (ncell[0] <= 0 || ncell[1] <= 0 || ncell[2] <= 0)
    return -std::numeric_limits<double>::infinity();

  const int n0 = f.g.n0(), n1 = f.g.n1(), n2 = f.g.n2();
  auto wrap = [](int i, int n) { return i >= n ? i - n : i; };
  LogAccumulator acc;
  for (int ci = 0; ci < ncell[0]; ++ci) {
    const int i0 = it.lo[0] + ci, i1 = wrap(i0 + 1, n0);
    for (int cj = 0; cj < ncell[1]; ++cj) {
      const int j0 = it.lo[1] + cj, j1 = wrap(j0 + 1, n1);
      for (int ck = 0; ck < ncell[2]; ++ck) {
        const int k0 = it.lo[2] + ck, k1 = wrap(k0 + 1, n2);
        double avg = 0.0;
        const int ii[2] = {wrap(i0, n0), i1}, jj[2] = {wrap(j0, n1), j1},
                  kk[2] = {wrap(k0, n2), k1};
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            for (int d = 0; d < 2; ++d) {
              const std::int64_t s = f.g.site(ii[a], jj[b], kk[d]);
              for (int c = 0; c < f.ncomp; ++c) avg += std::norm(f.comp(c)[s]);
            }
        avg *= 0.125;
        if (avg == 0.0) continue;
        acc.add(cellw[0][ci] + cellw[1][cj] + cellw[2][ck] + std::log(avg));
      }
    }
  }
  return 0.5 * acc.value();
}

}  // namespace lamecgo
