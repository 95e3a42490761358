#pragma once
// Complex directions with theta.theta = 0, the rotated frames they induce,
// and the d-bar machinery: the periodic symbol-division operator (with
// kernel-mode bookkeeping), an honest inverse of theta.grad built from the
// truncated Cauchy kernel on an in-plane padded grid, and the two transport
// solves (4x4 with plateau cutoff, 2x2 with constant-background splitting)
// whose solutions carry the geometric-optics amplitudes.

#include <optional>

#include "lamecgo/coefficients.hpp"
#include "lamecgo/grid.hpp"
#include "lamecgo/lame.hpp"

namespace lamecgo {

// ---------------------------------------------------------------------------
// Directions and frames
// ---------------------------------------------------------------------------

/// A complex direction theta = re + i*im with theta.theta = 0, i.e.
/// |re| = |im| and re.im = 0.  sigma = |re| is the common length.
struct Direction {
  Vec3 re = Vec3::Zero();
  Vec3 im = Vec3::Zero();
  double sigma = 0.0;
  bool real_third = false;  ///< Im(theta_3) == 0 (the family the pairing uses)

  Vec3c theta() const { return re.cast<cplx>() + cplx(0, 1) * im.cast<cplx>(); }
  Vec3c theta_bar() const {
    return re.cast<cplx>() - cplx(0, 1) * im.cast<cplx>();
  }
  /// max of the three construction defects |re.im|, ||re|-|im||, |theta.theta|
  /// relative to sigma^2.
  double defect() const;
};

/// Validates the isotropy constraints (relative tolerance 1e-12).
Direction make_direction(const Vec3& re, const Vec3& im);

/// The rational family xi(t) = ((t - 1/t)/2, i (t + 1/t)/2, 1); every member
/// satisfies xi.xi = 0 and has real third component.
Direction xi_of_t(cplx t);

/// Orthonormal frame adapted to (theta, ell0): y1 along Re theta, y2 along
/// Im theta, y3 along ell0.  Columns of F are the y-axes in x-coordinates.
/// In y-coordinates theta becomes sigma*(1, i, 0) and ell0 becomes
/// (0,0,|ell0|), so theta.grad = sigma*(d_y1 + i d_y2).
struct Frame {
  Mat3 F = Mat3::Identity();
  Direction dir;
  Vec3 ell0 = Vec3::Zero();
  Vec3 to_x(const Vec3& y) const { return F * y; }
  Vec3 to_y(const Vec3& x) const { return F.transpose() * x; }
  /// Direction vector in x-coordinates for conjugation flag c = +1 (theta)
  /// or c = -1 (theta bar).
  Vec3c dirvec(int c) const {
    return dir.re.cast<cplx>() + cplx(0, c) * dir.im.cast<cplx>();
  }
  /// If the mirror x3 -> -x3 acts on y-coordinates as a single axis flip,
  /// returns that y-axis; otherwise nullopt (reflection unsupported in that
  /// frame).
  std::optional<int> mirror_axis_y() const;
};

Frame make_frame(const Direction& d, const Vec3& ell0);

// ---------------------------------------------------------------------------
// Periodic symbol-division inverse (with kernel bookkeeping)
// ---------------------------------------------------------------------------

struct PiThetaResult {
  Field out;
  int annihilated = 0;  ///< number of lattice modes set to zero
};

/// Inverse of theta.grad on the periodic box by dividing each Fourier mode
/// by i (eta.theta).  Modes with |eta.theta| < delta*|theta||eta| plus the
/// zero mode are annihilated and counted; a count above 1 signals a
/// direction that is resonant with the frequency lattice.
PiThetaResult pi_theta(const Field& f, const Vec3c& theta, double delta = 1e-10);

// ---------------------------------------------------------------------------
// Honest in-plane d-bar inverse (truncated Cauchy kernel)
// ---------------------------------------------------------------------------

/// Inverse of sigma*(d_y1 + i*c*d_y2) by convolution with the truncated
/// fundamental solution supported in |z| <= L (L = the padded half-width of
/// axis 0).  Implemented as the exact Fourier multiplier
///     (1 - J0(L |xi|)) / (i sigma (xi_1 + i c xi_2))
/// on the in-plane FFT of each axis-2 slice.  For inputs supported in the
/// central third of the padded plane the result agrees with the true
/// convolution on the central region, and theta.grad o Pi = identity holds
/// there exactly, which is what the transport identities downstream need.
Field dbar_pi_inplane(const Field& f, double sigma, int c);

/// sigma*(d_y1 + i*c*d_y2) applied spectrally (the forward operator).
Field theta_dderiv_inplane(const Field& f, double sigma, int c);

// ---------------------------------------------------------------------------
// 4x4 transport (plateau-cut potential)
// ---------------------------------------------------------------------------

/// Structural fields of the first-order potential contracted with theta,
/// including the plateau cutoff:  acting on (r, s),
///   top rows:  u * (theta.r) + w * s
///   last row:  btld * (theta.r)
/// with u = -psi mu^{-1} grad mu, w = 2 psi mu^{1/2} ((-Hess + I Lap) mu^{-1}) theta,
/// btld = psi (lambda+mu)/(lambda+2mu) mu^{1/2}.
struct AThetaFields {
  Field u;     // 3 comps
  Field w;     // 3 comps (complex)
  Field btld;  // 1 comp
  Vec3c theta_x;
};

AThetaFields make_atheta(const LamePair& p, const Frame& fr, const Cutoff& cut,
                         const Grid& g, int conj_c = +1);

/// Apply the contracted potential to a 4-component field.
Field apply_atheta(const AThetaFields& A, const Field& rs);

struct Transport4 {
  Field C;                  // 16 comps, row-major 4x4
  double residual_rel = 0;  // ||2 theta.grad C + A C|| / ||C|| on `check`
  double min_abs_det = 0;   // over `check`
  int iterations = 0;
  double final_increment = 0;
};

/// Solve 2 theta.grad C + A_theta C = 0, C -> I at the in-plane zero mode,
/// by the Pi-preconditioned fixed point C = I - (1/2) Pi(A_theta C).
/// Throws std::runtime_error (contraction failure) if increments stop
/// decreasing before reaching `tol`.
Transport4 solve_transport4(const LamePair& p, const Frame& fr,
                            const Cutoff& cut, const Grid& g,
                            const Region& check, int conj_c = +1,
                            double tol = 1e-13, int maxit = 200);

// ---------------------------------------------------------------------------
// 2x2 transport (constant background split)
// ---------------------------------------------------------------------------

/// Solution of theta.grad C = A C for the 2x2 system
///   A = [[0, -a], [b, 0]],  a = (theta.grad)^2 mu^{-1},
///   b = (mu/2)(lambda+mu)/(lambda+2mu),
/// factored as C = E * D where E = I + G(y) A0 handles the constant
/// background A0 = [[0,0],[b0,0]] analytically (G = (y1 - i c y2)/(2 sigma),
/// so theta.grad G = 1) and D = I + Pi(F D), F = E^{-1}(A - A0)E, is the
/// compactly supported correction.  det C = det D.
struct Transport2 {
  Field D;  // 4 comps, row-major 2x2
  double b0 = 0.0;
  double sigma = 1.0;
  int conj_c = +1;
  double residual_rel = 0.0;
  double min_abs_det = 0.0;
  int iterations = 0;

  /// G(y) for this direction.
  cplx G(const Vec3& y) const {
    return (y[0] - cplx(0, conj_c) * y[1]) / (2.0 * sigma);
  }
  /// C = E*D at a grid site (E analytic, D sampled).
  Eigen::Matrix2cd C_at(const Vec3& y, std::int64_t site) const;
};

Transport2 solve_transport2(const LamePair& p, const Frame& fr, int conj_c,
                            const Grid& g, const Region& check,
                            double tol = 1e-13, int maxit = 200);

/// The 2x2 potential entries for a pair at direction flag c, as samplers.
struct ATilde {
  const LamePair* pair;
  Vec3c d;    // direction vector in x coordinates
  double b0;  // constant background of b
  cplx a(const Vec3& x) const {
    const Jet2 inv_mu = jet_inv(pair->mu(x));
    return inv_mu.dir2(d);
  }
  double b(const Vec3& x) const {
    return b_factor(pair->lambda(x), pair->mu(x)).v;
  }
};

ATilde make_atilde(const LamePair& p, const Frame& fr, int conj_c);

}  // namespace lamecgo
