//! Balance-law models: physical fluxes, sources, wave speeds, and the
//! bijective transform between conservative variables U and equilibrium
//! variables V.
//!
//! The DG unknowns are the equilibrium variables; the conservative variables
//! are recovered pointwise through `equil_to_cons`, which selects a root
//! branch according to the flow regime carried at each evaluation point.

pub mod baseline;
pub mod euler;
pub mod ripa;
pub mod ripa_iso;

pub use baseline::NonWellBalanced;
pub use euler::{Euler1d, Euler2d};
pub use ripa::{Ripa1d, Ripa2d};
pub use ripa_iso::{RipaIso1d, RipaIso2d};

use crate::error::Result;

/// Flow regime tag making the U <-> V map one-to-one. For gas dynamics the
/// indicator is the Mach number, for shallow water the Froude number; the
/// sonic/critical state separates the two root branches in either case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Subsonic,
    Supersonic,
    Sonic,
}

/// Width of the sticky band around indicator = 1 inside which a point keeps
/// its previous regime instead of switching branches.
pub const SONIC_BAND: f64 = 1e-8;

impl Regime {
    /// Classify from the Mach/Froude indicator, keeping `prev` inside the
    /// near-sonic band.
    pub fn classify(indicator: f64, prev: Option<Regime>) -> Regime {
        if (indicator - 1.0).abs() <= SONIC_BAND {
            prev.unwrap_or(Regime::Sonic)
        } else if indicator < 1.0 {
            Regime::Subsonic
        } else {
            Regime::Supersonic
        }
    }
}

/// How the per-cell nonlinear stage system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStrategy {
    /// Momentum components are linear in V; components 0 and N-1 form a
    /// coupled 2x2-per-point Newton system.
    NewtonPair,
    /// Triangular sequence of linear solves (isobaric variable set).
    LinearCascade,
    /// V = U identically (non-well-balanced reference mode).
    Direct,
}

/// A hyperbolic balance law U_t + div F(U) = r(U, grad w) together with its
/// equilibrium-variable transform. `N` is the number of components, `DIM` the
/// spatial dimension (N = DIM + 2).
pub trait BalanceLaw<const N: usize>: Sync + Send {
    const DIM: usize;

    fn name(&self) -> &'static str;

    /// Directional physical flux F_axis(U).
    fn flux(&self, u: &[f64; N], axis: usize) -> [f64; N];

    /// Analytic Jacobian of the directional flux, d F_axis / d U.
    fn flux_jacobian(&self, u: &[f64; N], axis: usize) -> [[f64; N]; N];

    /// Source term; `grad_w` holds the gradient of the potential/bathymetry.
    fn source(&self, u: &[f64; N], grad_w: [f64; 2]) -> [f64; N];

    /// |u . e_axis| + c
    fn max_wave_speed(&self, u: &[f64; N], axis: usize) -> f64;

    fn admissible(&self, u: &[f64; N]) -> bool;

    /// Mach or Froude number of the state.
    fn indicator(&self, u: &[f64; N]) -> f64;

    fn cons_to_equil(&self, u: &[f64; N], w: f64) -> Result<[f64; N]>;

    /// Invert the transform on the branch selected by `regime`. `warm` is an
    /// optional starting guess for the nonlinear root (density or height from
    /// a previous evaluation at the same point).
    fn equil_to_cons(&self, v: &[f64; N], w: f64, regime: Regime, warm: Option<f64>)
        -> Result<[f64; N]>;

    fn stage_strategy(&self) -> StageStrategy {
        StageStrategy::NewtonPair
    }

    /// For `NewtonPair` models: values and 2x2 Jacobian of (U_0, U_{N-1}) as
    /// functions of (V_0, V_{N-1}) at fixed momenta `mom` and potential `w`.
    fn uv_pair(
        &self,
        a: f64,
        b: f64,
        mom: &[f64],
        w: f64,
        regime: Regime,
        warm: Option<f64>,
    ) -> Result<([f64; 2], [[f64; 2]; 2])> {
        let _ = (a, b, mom, w, regime, warm);
        unreachable!("uv_pair is only called for NewtonPair models")
    }

    /// For `LinearCascade` models: pointwise weight s.t. U_c = weight * V_c,
    /// given the already-solved leading component value.
    fn cascade_weight(&self, comp: usize, lead: f64) -> f64 {
        let _ = (comp, lead);
        unreachable!("cascade_weight is only called for LinearCascade models")
    }

    /// Roe-type approximate Riemann solver; None means "not available here",
    /// in which case the caller falls back to the Lax-Friedrichs flux.
    fn roe_flux(&self, ul: &[f64; N], ur: &[f64; N], axis: usize) -> Option<[f64; N]> {
        let _ = (ul, ur, axis);
        None
    }

    /// Matrix whose eigenvectors define the characteristic basis for slope
    /// limiting of the equilibrium variables; None selects component-wise
    /// limiting.
    fn limiter_matrix(&self, u_mean: &[f64; N], w_mean: f64, axis: usize)
        -> Option<[[f64; N]; N]>;

    fn cons_names(&self) -> [&'static str; N];
    fn equil_names(&self) -> [&'static str; N];
    fn derived_names(&self) -> Vec<&'static str>;
    fn derived(&self, u: &[f64; N], w: f64) -> Vec<f64>;
}

/// Mirror boundary: flip the flow component normal to the wall. Every
/// variable set stores its flow components (momentum, discharge or velocity)
/// at indices 1..=DIM, so one rule covers all models.
pub fn mirror_equil<const N: usize>(v: &[f64; N], axis: usize) -> [f64; N] {
    let mut out = *v;
    out[1 + axis] = -out[1 + axis];
    out
}

/// Dense small-matrix product helper used by limiter-matrix assembly.
pub(crate) fn matmul<const N: usize>(a: &[[f64; N]; N], b: &[[f64; N]; N]) -> [[f64; N]; N] {
    let mut c = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..N {
            let mut s = 0.0;
            for (k, bk) in b.iter().enumerate() {
                s += a[i][k] * bk[j];
            }
            c[i][j] = s;
        }
    }
    c
}

/// Inverse via nalgebra LU; None if singular.
pub(crate) fn invert<const N: usize>(a: &[[f64; N]; N]) -> Option<[[f64; N]; N]> {
    let m = nalgebra::DMatrix::from_fn(N, N, |i, j| a[i][j]);
    let inv = m.try_inverse()?;
    let mut out = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..N {
            out[i][j] = inv[(i, j)];
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_uses_band_and_previous() {
        assert_eq!(Regime::classify(0.5, None), Regime::Subsonic);
        assert_eq!(Regime::classify(2.0, None), Regime::Supersonic);
        assert_eq!(Regime::classify(1.0 + 1e-9, Some(Regime::Subsonic)), Regime::Subsonic);
        assert_eq!(Regime::classify(1.0 - 1e-9, Some(Regime::Supersonic)), Regime::Supersonic);
        assert_eq!(Regime::classify(1.0, None), Regime::Sonic);
        assert_eq!(Regime::classify(1.0 + 1e-6, Some(Regime::Subsonic)), Regime::Supersonic);
    }

    #[test]
    fn mirror_flips_normal_component_only() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mirror_equil(&v, 0), [1.0, -2.0, 3.0, 4.0]);
        assert_eq!(mirror_equil(&v, 1), [1.0, 2.0, -3.0, 4.0]);
    }
}
