#pragma once
// Uniform periodic grids, complex multi-component fields, FFT-based and
// finite-difference derivatives, region-restricted quadrature, and
// exponentially weighted norms.  All heavier modules build on these types.

#include <array>
#include <cassert>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lamecgo {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Vec3c = Eigen::Vector3cd;
using Mat3 = Eigen::Matrix3d;
using Mat3c = Eigen::Matrix3cd;

// ---------------------------------------------------------------------------
// Grid geometry
// ---------------------------------------------------------------------------

/// One periodic axis: points x_j = -half + j*(2*half/n), j = 0..n-1.
struct Axis {
  double half = 1.0;  ///< half-width; the axis covers [-half, half)
  int n = 0;          ///< number of points
  double h() const { return 2.0 * half / n; }
  double x(int j) const { return -half + j * h(); }
  /// Signed integer frequency for FFT bin m (m=n/2 maps to -n/2).
  int kindex(int m) const { return (2 * m < n) ? m : m - n; }
  /// Angular frequency of FFT bin m: (pi/half)*kindex.
  double freq(int m) const { return (M_PI / half) * kindex(m); }
};

/// A 3-D periodic tensor grid.  Cubic boxes use equal axes; the in-plane
/// padded grids used by the d-bar solver keep the same spacing h but a wider
/// span on the first two axes.
struct Grid {
  std::array<Axis, 3> ax;

  static Grid cube(double R, int n) {
    Grid g;
    g.ax = {Axis{R, n}, Axis{R, n}, Axis{R, n}};
    return g;
  }
  /// Axes 0 and 1 padded to [-pad*R, pad*R) with pad*n points (same spacing
  /// h as the unpadded cube); axis 2 stays [-R,R).
  static Grid padded_inplane(double R, int n, int pad = 3) {
    Grid g;
    g.ax = {Axis{pad * R, pad * n}, Axis{pad * R, pad * n}, Axis{R, n}};
    return g;
  }

  int n0() const { return ax[0].n; }
  int n1() const { return ax[1].n; }
  int n2() const { return ax[2].n; }
  std::int64_t nsites() const {
    return std::int64_t(n0()) * n1() * n2();
  }
  std::int64_t site(int i, int j, int k) const {
    return (std::int64_t(i) * n1() + j) * n2() + k;
  }
  Vec3 point(int i, int j, int k) const {
    return Vec3(ax[0].x(i), ax[1].x(j), ax[2].x(k));
  }
  double h() const { return ax[0].h(); }
  bool same_shape(const Grid& o) const {
    for (int a = 0; a < 3; ++a)
      if (ax[a].n != o.ax[a].n || ax[a].half != o.ax[a].half) return false;
    return true;
  }
};

/// Index range along one axis: either the full periodic axis or a closed
/// vertex interval [lo,hi].
struct AxisRange {
  bool full = true;
  int lo = 0, hi = 0;
  int count(int n) const { return full ? n : hi - lo + 1; }
};

/// A named axis-aligned sub-box of a grid, with tensor-product trapezoid
/// quadrature weights: interior vertices weigh h, interval endpoints h/2,
/// full periodic axes weigh h everywhere.  Two mirror-image regions that
/// share a face therefore tile their union with exactly additive weights.
struct Region {
  std::string name;
  std::array<AxisRange, 3> r;

  static Region whole() {
    Region s;
    s.name = "all";
    return s;
  }
  /// Smallest region whose vertices all satisfy lo_x <= x <= hi_x per axis
  /// (bounds snapped inward onto the vertex lattice).
  static Region box(const Grid& g, const std::string& name, Vec3 lo, Vec3 hi);

  double axis_weight(const Grid& g, int a, int idx) const {
    const double h = g.ax[a].h();
    if (r[a].full) return h;
    return (idx == r[a].lo || idx == r[a].hi) ? 0.5 * h : h;
  }
  bool contains(int i, int j, int k) const {
    const int id[3] = {i, j, k};
    for (int a = 0; a < 3; ++a)
      if (!r[a].full && (id[a] < r[a].lo || id[a] > r[a].hi)) return false;
    return true;
  }
  std::int64_t vertex_count(const Grid& g) const {
    return std::int64_t(r[0].count(g.n0())) * r[1].count(g.n1()) *
           r[2].count(g.n2());
  }
};

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

/// Complex multi-component field sampled on a Grid.  Storage is
/// component-major; within a component the layout is row-major with the
/// third axis fastest.  ncomp is 1 (scalar), 3/4 (vectors), 9/16 (matrices
/// stored row-major).
struct Field {
  Grid g;
  int ncomp = 1;
  std::vector<cplx> v;

  Field() = default;
  Field(const Grid& grid, int nc) : g(grid), ncomp(nc) {
    v.assign(std::size_t(g.nsites()) * nc, cplx(0.0, 0.0));
  }
  cplx* comp(int c) { return v.data() + std::size_t(c) * g.nsites(); }
  const cplx* comp(int c) const {
    return v.data() + std::size_t(c) * g.nsites();
  }
  cplx& at(int c, int i, int j, int k) { return comp(c)[g.site(i, j, k)]; }
  const cplx& at(int c, int i, int j, int k) const {
    return comp(c)[g.site(i, j, k)];
  }
  void fill(std::function<void(Vec3, cplx*)> f);  ///< f writes ncomp values
  Field component(int c) const;
  double max_abs() const;
};

// ---------------------------------------------------------------------------
// FFT machinery (FFTW, deterministic ESTIMATE plans, complex-to-complex)
// ---------------------------------------------------------------------------

class Fft3 {
 public:
  /// In-place forward (e^{-ikx} analysis) transform of every component.
  static void forward(Field& f);
  /// In-place inverse transform including the 1/(n0*n1*n2) scale.
  static void inverse(Field& f);
  /// In-plane variants: batched 2-D transforms over axes 0 and 1, one per
  /// axis-2 slice.  Used by the in-plane d-bar solver.
  static void forward_inplane(Field& f);
  static void inverse_inplane(Field& f);
};

/// Multiply FFT coefficients by a frequency-dependent symbol.  `sym` receives
/// the angular frequency vector (with Nyquist bins at their negative value).
void apply_symbol(Field& fhat, const std::function<cplx(const Vec3&)>& sym);

/// Spectral partial derivative along `axis` (Nyquist bin annihilated), with
/// an optional constant frequency offset (for quasi-periodic factors
/// e^{i s.x} carried implicitly):  out = IFFT( i*(k+shift) * FFT(in) ).
Field spectral_derivative(const Field& f, int axis, double shift = 0.0);

/// Second-order centered finite-difference derivative, one-sided at the two
/// boundary layers (non-periodic reading of the same samples).  Exact on
/// quadratics everywhere; O(h^2) truncation beyond that.
Field fd_derivative(const Field& f, int axis);

/// Trigonometric interpolation onto the grid with twice the points per axis
/// (same physical box).  Every original node coincides with an even-index
/// fine node and keeps its sample value exactly -- up to the per-axis
/// Nyquist bins of the source, which have no unambiguous interpolant and are
/// dropped; keep fields Nyquist-free where that matters.
Field upsample_double(const Field& f);

enum class Deriv { Spectral, FiniteDifference };
Field derivative(const Field& f, int axis, Deriv backend);

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Tensor-trapezoid integral of one component over a region.
cplx integrate(const Field& f, int c, const Region& reg);
/// Sum over all components of integrate(f, c, reg).
cplx integrate_sum(const Field& f, const Region& reg);
/// L2 norm over a region: sqrt( sum_c integral |f_c|^2 ).
double l2_norm(const Field& f, const Region& reg);
/// Same, restricted to an explicit component range [c0,c1).
double l2_norm_comps(const Field& f, int c0, int c1, const Region& reg);
/// Max pointwise magnitude (sqrt of component sum of squares) over a region.
double max_norm(const Field& f, const Region& reg);

/// log of the exponentially weighted norm
///   ||f||_tau = ( int_reg e^{2 tau |x|^2} |f(x)|^2 dx )^{1/2},
/// computed entirely in the log domain: per-cell weight integrals use
/// 16-point Gauss-Legendre in each axis, the field factor is the average of
/// |f|^2 over the 8 cell corners (which reproduces tensor-trapezoid exactly
/// at tau = 0).  Returns -inf for the zero field.
double log_weighted_norm(const Field& f, const Region& reg, double tau);

// ---------------------------------------------------------------------------
// Mirror symmetry helpers
// ---------------------------------------------------------------------------

/// Index of the reflection x -> -x along one axis: j -> (n - j) mod n.
inline int mirror_index(int j, int n) { return j == 0 ? 0 : n - j; }

/// The standard cubic box with its named regions.  `a` is the half-width of
/// the doubled region (snapped onto the lattice); Omega is its upper half in
/// x3, OmegaVee the mirror half, K an interior core for compactly supported
/// coefficient differences, B_R the whole box.
struct StandardBox {
  Grid grid;
  Region omega, omega_vee, omega_x2, core, whole;
  static StandardBox make(double R, int n, double a_frac = 0.45,
                          double core_frac = 0.30);
};

}  // namespace lamecgo
