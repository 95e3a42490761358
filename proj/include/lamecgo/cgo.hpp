#pragma once
// Complex-geometric-optics machinery for the reduced 4x4 system: the
// tau-family of complex phases built over a direction frame, the reduced
// operator M_gamma with its cutoff-weighted potentials, the exact splitting
// into a transport part and a lower-order part, the recursive amplitude
// construction driven by the honest in-plane d-bar inverse, the remainder
// solve on the small box (frequency-shifted so the phase symbol is uniformly
// invertible), and the assembled displacement amplitude together with its
// conjugated elasticity residual.

#include <vector>

#include "lamecgo/coefficients.hpp"
#include "lamecgo/dbar.hpp"
#include "lamecgo/grid.hpp"
#include "lamecgo/lame.hpp"

namespace lamecgo {

using Vec4c = Eigen::Matrix<cplx, 4, 1>;

// ---------------------------------------------------------------------------
// Phases
// ---------------------------------------------------------------------------

/// The pair of complex phase vectors at parameter tau over a frame.  The
/// direction is normalized to |Re theta| = |Im theta| = 1 internally (the
/// null-vector family has sigma >= 1) so that zeta.zeta = 0 holds exactly:
///   zeta  =  ell0/2 + tau*theta_hat     + tau*rho(tau)*Re theta_hat
///   zeta' = -ell0/2 + tau*conj(theta_hat) + tau*rho(tau)*Re theta_hat
///   rho   = sqrt(1 - |ell0|^2/(4 tau^2)) - 1
/// so that zeta - conj(zeta') = ell0 exactly, and
///   ell(tau)  = 2(zeta  - tau*theta_hat) =  ell0 + 2 tau rho Re theta_hat,
///   ell'(tau) = 2(zeta' - tau*conj(theta_hat)).
struct PhaseState {
  double tau = 0.0;
  double rho = 0.0;
  Vec3c theta_hat = Vec3c::Zero();  ///< unit-sigma direction, x components
  Vec3c zeta = Vec3c::Zero();
  Vec3c zeta_p = Vec3c::Zero();
  Vec3 ell_tau = Vec3::Zero();
  Vec3 ell_p_tau = Vec3::Zero();

  /// |zeta.zeta| (should be roundoff relative to tau^2).
  double isotropy_defect() const;
  /// max component of zeta - conj(zeta') - ell0 for the given ell0.
  double difference_defect(const Vec3& ell0) const;
};

/// Requires 2*tau > |ell0|; throws std::domain_error otherwise.
PhaseState make_phase(const Frame& fr, double tau);

// ---------------------------------------------------------------------------
// Reduced operator
// ---------------------------------------------------------------------------

/// Pointwise coefficient fields of the reduced operator, premultiplied by
/// the plateau cutoff psi; sampled on a y-frame grid with x-frame vector and
/// matrix components.  The operator acting on a 4-field (r, s) at constant
/// complex frequency gamma (x components) is
///   M_gamma(r,s) = Lap(r,s) + 2i gamma.grad (r,s) [- (gamma.gamma)(r,s)]
///                  + psi V1(i gamma s + grad s, i gamma.r + div r)
///                  + psi V0(r, s)
/// with
///   V1 = [[ 2 mu^{1/2}((-Hess + I Lap) mu^{-1}),  -mu^{-1} grad mu ],
///         [ 0,                     ((lambda+mu)/(lambda+2mu)) mu^{1/2} ]]
///   V0 = [[ -mu^{-1/2}((-2 Hess + I Lap) mu^{1/2}),
///           -2 mu^{-5/2}(((-Hess + I Lap) mu) grad mu) ],
///         [ -((lambda-mu)/(lambda+2mu)) (grad mu)^T,  -mu Lap(mu^{-1}) ]]
/// The quadratic term is optional because the exact two-term splitting
///   M_zeta = M_{ell(tau)/2} + i tau (2 theta_hat.grad + A.theta_hat)
/// requires the half-ell operator WITHOUT its |gamma|^2 part.
struct ReducedPotential {
  Field W1;    ///< 9 comps, row-major 3x3
  Field u1;    ///< 3 comps
  Field b1;    ///< 1 comp
  Field V0hh;  ///< 9 comps, row-major 3x3
  Field v0hf;  ///< 3 comps
  Field v0fh;  ///< 3 comps
  Field v0ff;  ///< 1 comp
};

ReducedPotential make_potential(const LamePair& p, const Frame& fr,
                                const Cutoff& cut, const Grid& g);

/// Apply M_gamma spectrally (all derivatives via the FFT on the grid the
/// field lives on).  `with_gamma_sq` includes the -(gamma.gamma) term.
Field apply_m_gamma(const ReducedPotential& pot, const Frame& fr,
                    const Vec3c& gamma_x, const Field& rs, bool with_gamma_sq);

/// Ansatz weights for assembling the displacement amplitude from (r, s):
///   W = mu^{-1/2} r + mu^{-1} (i gamma s + grad s) - s grad(mu^{-1}).
struct AnsatzFields {
  Field inv_sqrt_mu;  ///< 1 comp
  Field inv_mu;       ///< 1 comp
  Field grad_inv_mu;  ///< 3 comps (x frame)
};

AnsatzFields make_ansatz_fields(const LamePair& p, const Frame& fr,
                                const Grid& g);

Field assemble_displacement(const AnsatzFields& an, const Frame& fr,
                            const Vec3c& gamma_x, const Field& rs);

/// Conjugated elasticity operator: L_gamma W = e^{-i gamma.x} L (e^{i gamma.x} W)
/// with D_j = d/dx_j + i gamma_j replacing every derivative of the
/// variable-coefficient second-order operator.  Spectral derivatives on the
/// y-frame grid; components in the x frame.
Field lame_l_gamma(const LamePair& p, const Frame& fr, const Vec3c& gamma_x,
                   const Field& W);

// ---------------------------------------------------------------------------
// Recursive construction
// ---------------------------------------------------------------------------

/// tau-independent data shared by a family of phase solves: the transport
/// solution and its pointwise inverse, the cutoff-weighted potentials on the
/// padded and small grids, and the ansatz weights.
struct CgoContext {
  const LamePair* pair = nullptr;
  Frame fr;
  Cutoff cut;
  Grid gp;  ///< padded in-plane grid (recursion lives here)
  Grid gs;  ///< small box (remainder solve lives here)
  ReducedPotential pot_pad;
  ReducedPotential pot_small;
  AnsatzFields ansatz_pad;
  AnsatzFields ansatz_small;
  Field psi_pad;   ///< 1 comp, cutoff values
  Field corr_pad;  ///< 1 comp, window confining the forcing corrections
  Transport4 t4;
  Field C0inv;          ///< 16 comps, pointwise inverse of t4.C
  AThetaFields atheta;  ///< first-order coupling contracted with theta
  Vec4c seed = Vec4c::Zero();
};

/// Builds the padded grid (3R x 3R x R half-widths, spacing 2R/n), the small
/// cube, both potentials, the transport solution (checked over the doubled
/// core box [-0.45R, 0.45R]^3) and its pointwise inverse.  Throws if the
/// moduli are inadmissible or the transport matrix is numerically singular.
/// `cut` weights the potential (it must be ~1 wherever the moduli deviate
/// measurably from their constant background, or the displacement audit sees
/// the discarded part); `corr`, when given, shapes the separate window that
/// confines the recursion's forcing corrections, and may be much tighter
/// since those corrections vanish on the core anyway (defaults to `cut`).
CgoContext make_cgo_context(const LamePair& p, const Frame& fr,
                            const Cutoff& cut, double R, int n,
                            const Vec4c& seed, const Cutoff* corr = nullptr);

struct CgoSolution {
  double tau = 0.0;
  int order = 0;
  PhaseState phase;
  Vec3 shift_y = Vec3::Zero();        ///< remainder frequency shift, y frame
  Vec3c gamma_e = Vec3c::Zero();      ///< zeta + shift, x frame
  std::vector<double> vnorm;          ///< L2 of v_0..v_n over the doubled core
  Field vsum;                         ///< padded grid, 4 comps
  Field ve_conj;                      ///< small grid, 4 comps: e^{-is.y} v_e
  double ve_norm = 0.0;               ///< L2 of the remainder over the doubled core
  int ve_iterations = 0;
  double resid_m_rel = 0.0;  ///< ||M_zeta(v)|| / ||v|| over the doubled core
  double resid_l_rel = 0.0;  ///< ||L_zeta(W)|| / ||W|| over the doubled core;
                             ///< NaN unless the audit was requested
};

/// Run the order-n construction at parameter tau and measure both residuals
/// over `core2` (a region of the small grid, inside the cutoff plateau).
///
/// The recursion is defect-corrected: with T = 2 theta_hat.grad + A.theta_hat
/// and the exact splitting M_zeta = M_{ell/2} + i tau T, each step k solves
/// i tau T v_k = -g_k for the running forcing g_k, and the part the discrete
/// transport inverse cannot represent (circle-average junk of the truncated
/// Cauchy kernel, unpaired Nyquist modes, product-rule aliasing) is measured
/// exactly as d_k = i tau T v_k + g_k and folded into the next forcing
/// g_{k+1} = psi M_{ell/2} v_k + d_k, with g_1 = psi M_{ell/2} v_0 +
/// i tau T v_0.  The remainder then absorbs the final forcing, so the
/// measured residual of the assembled solution reduces to the remainder
/// fixed-point defect while every v_k keeps its O(tau^{-k}) size.
///
/// All reported norms integrate over the doubled core (`core2` on the small
/// grid, its coordinate image on the padded grid): the construction promises
/// smallness only inside the cutoff plateau.
///
/// `l_audit` additionally audits the assembled displacement W against the
/// conjugated elasticity operator.  This repeats the remainder solve on the
/// padded grid and evaluates the operator on a once-doubled grid while
/// norming at the original nodes only (see the implementation notes); it
/// roughly triples the cost of a run, so it is off by default and
/// `resid_l_rel` is NaN unless requested.
CgoSolution run_cgo(const CgoContext& ctx, double tau, int order,
                    const Region& core2, double ve_tol = 1e-12,
                    int ve_maxit = 200, bool l_audit = false);

/// Copy the central third (in-plane) of a padded-grid field onto the small
/// grid; the grids share axis spacing so sites coincide exactly.
Field restrict_central(const Field& f, const Grid& gs);

}  // namespace lamecgo
