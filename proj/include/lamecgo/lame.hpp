#pragma once
// The isotropic elasticity operator and its boundary calculus on sampled
// fields: strain, stress, row-divergence form of the operator, traction
// split into normal/tangential parts, the mirror reflection that implements
// the half-space symmetry argument, the smooth plateau cutoff, and the
// coefficient-difference pairing form H.

#include "lamecgo/coefficients.hpp"
#include "lamecgo/grid.hpp"

namespace lamecgo {

// ---------------------------------------------------------------------------
// Sampling closed forms onto grids
// ---------------------------------------------------------------------------

/// Scalar values of a coefficient, optionally at frame-mapped points
/// x = F*y when the grid lives in rotated coordinates (F = identity here).
Field sample_value(const Grid& g, const Coefficient& c);
/// Gradient (3 components) of a coefficient.
Field sample_gradient(const Grid& g, const Coefficient& c);

// ---------------------------------------------------------------------------
// Differential operators on vector fields (3 components)
// ---------------------------------------------------------------------------

/// Symmetric gradient, 9 components row-major: e_{jk} = (d_j u_k + d_k u_j)/2.
Field strain(const Field& u, Deriv backend);
/// Divergence of a 3-component field.
Field divergence(const Field& u, Deriv backend);
/// Stress sigma(u) = 2 mu eps(u) + lambda div(u) I, 9 components.
Field stress(const LamePair& p, const Field& u, Deriv backend);
/// Row divergence of a 9-component matrix field: out_j = sum_k d_k A_{jk}.
Field row_divergence(const Field& a, Deriv backend);
/// The elasticity operator L u = div sigma(u) (row-wise divergence).
Field lame_apply(const LamePair& p, const Field& u, Deriv backend);

// ---------------------------------------------------------------------------
// Boundary operators (constant face normal n)
// ---------------------------------------------------------------------------

/// Traction B u = sigma(u) n, evaluated everywhere; restrict to the face of
/// interest when integrating.
Field traction(const LamePair& p, const Field& u, const Vec3& n, Deriv backend);
/// Pointwise normal part <n,f> n and tangential complement of a 3-field.
Field normal_part(const Field& f3, const Vec3& n);
Field tangential_part(const Field& f3, const Vec3& n);

/// The simply supported trace on the plane x3 = 0 with outward normal -e3,
/// in explicit coordinates: (u1, u2, lambda*(d1 u1 + d2 u2) + (lambda+2mu) d3 u3).
/// Used as an independent cross-check of the face-based assembly.
Field simply_supported_trace_explicit(const LamePair& p, const Field& u,
                                      Deriv backend);

// ---------------------------------------------------------------------------
// Reflection
// ---------------------------------------------------------------------------

enum class FieldKind { Scalar, Vector3, Matrix3, Vector4 };

/// Mirror image w -> w^v: samples are permuted by the exact lattice map
/// j -> (n-j) mod n along `mirror_axis` (the grid axis that carries the x3
/// coordinate), and components transform with J = diag(1,1,-1):
/// scalars are untouched, vectors get J, matrices J A J, 4-vectors J on the
/// first three components.
Field reflect_field(const Field& f, FieldKind kind, int mirror_axis = 2);

/// max_x |f(x) - f(x^v)| of a sampled scalar coefficient; zero for fields
/// built even in x3.
double evenness_defect(const Grid& g, const Coefficient& c);

/// Validates that both moduli are even in x3 (construction-level flag and
/// sampled defect); returns the pair unchanged.  Throws std::domain_error
/// when the evenness contract is violated.
LamePair even_extend(const LamePair& p, const Grid& g);

// ---------------------------------------------------------------------------
// Plateau cutoff
// ---------------------------------------------------------------------------

/// Tensor product of 1-D C-infinity plateaus: exactly 1 on [-plateau,plateau]^3,
/// exactly 0 outside [-outer,outer]^3, smooth in between (exp(-1/t) steps).
struct Cutoff {
  /// BoxProduct: per-axis product of C-infinity steps, identically 1 on
  /// [-plateau, plateau]^3 and 0 outside [-outer, outer]^3.
  /// PlaneRadial: function of the in-plane radius rho = |(x1,x2)| only
  /// (constant in x3), the Gaussian-convolved half-space profile
  /// erfc((rho - rho_c)/(sqrt(2) sigma_g))/2.  Never exactly 0 or 1, but
  /// reaches both to machine accuracy a few sigma_g away from rho_c, and its
  /// spectrum decays like exp(-(k sigma_g)^2/2) -- far below any grid's
  /// aliasing floor once sigma_g spans a couple of grid cells.
  /// ErfProduct: per-axis product of Gaussian-convolved slabs,
  /// w_a(t) = erfc((t - c_a)/(sqrt(2) s_a)) * erfc((-t - c_a)/(sqrt(2) s_a))/4,
  /// i.e. a smooth plateau |t| < c_a with transition width s_a on axis a.
  /// Combines the box kind's geometry (independent per-axis extents) with the
  /// radial kind's spectral decay exp(-(k s_a)^2/2); the box kind's
  /// exponential-step tails decay only like exp(-c sqrt(k)) and leave
  /// measurable fold-over in every spectrally differentiated product.
  enum class Kind { BoxProduct, PlaneRadial, ErfProduct };
  Kind kind = Kind::BoxProduct;
  double plateau = 0.5;
  double outer = 0.95;
  double rho_c = 2.1;     ///< PlaneRadial: centre of the transition
  double sigma_g = 0.138; ///< PlaneRadial: Gaussian smoothing width
  Vec3 c3 = Vec3(1.5, 1.5, 0.5);        ///< ErfProduct: per-axis half-extent
  Vec3 s3 = Vec3(0.15, 0.15, 0.115);    ///< ErfProduct: per-axis width
  double value(const Vec3& x) const;
  Vec3 gradient(const Vec3& x) const;

  static Cutoff plane_radial(double rho_c_, double sigma_g_) {
    Cutoff c;
    c.kind = Kind::PlaneRadial;
    c.rho_c = rho_c_;
    c.sigma_g = sigma_g_;
    return c;
  }
  static Cutoff erf_product(const Vec3& c3_, const Vec3& s3_) {
    Cutoff c;
    c.kind = Kind::ErfProduct;
    c.c3 = c3_;
    c.s3 = s3_;
    return c;
  }
};

// ---------------------------------------------------------------------------
// Coefficient-difference pairing
// ---------------------------------------------------------------------------

/// H(u1,u2) = int_reg (l2-l1) div u1 conj(div u2)
///          + 2 (m2-m1) <eps(u1), eps(u2)>_F   (conjugate on the second slot).
cplx h_form(const LamePair& p1, const LamePair& p2, const Field& u1,
            const Field& u2, const Region& reg, Deriv backend);

/// Equivalent stress-difference evaluation
/// int_reg <sigma_2(u1) - sigma_1(u1), eps(u2)> used as a cross-check.
cplx h_form_stress_path(const LamePair& p1, const LamePair& p2, const Field& u1,
                        const Field& u2, const Region& reg, Deriv backend);

/// Green identity defect on the vertex box [x_0, x_{n-1}]^3 (finite
/// differences read non-periodically):
///   int <sigma(u), eps(v)> + int (L u . conj v) - sum_faces int (sigma(u) n . conj v).
cplx green_defect(const LamePair& p, const Field& u, const Field& v);

}  // namespace lamecgo
