//! Non-well-balanced reference mode: the same DG machinery run on the
//! conservative variables directly (V = U), with plain numerical fluxes and
//! pointwise source quadrature. Used for comparison runs only.

use super::{BalanceLaw, Regime, StageStrategy};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct NonWellBalanced<M> {
    pub inner: M,
}

impl<M> NonWellBalanced<M> {
    pub fn new(inner: M) -> Self {
        Self { inner }
    }
}

impl<M: BalanceLaw<N>, const N: usize> BalanceLaw<N> for NonWellBalanced<M> {
    const DIM: usize = M::DIM;

    fn name(&self) -> &'static str {
        "baseline-nwb"
    }

    fn flux(&self, u: &[f64; N], axis: usize) -> [f64; N] {
        self.inner.flux(u, axis)
    }

    fn flux_jacobian(&self, u: &[f64; N], axis: usize) -> [[f64; N]; N] {
        self.inner.flux_jacobian(u, axis)
    }

    fn source(&self, u: &[f64; N], grad_w: [f64; 2]) -> [f64; N] {
        self.inner.source(u, grad_w)
    }

    fn max_wave_speed(&self, u: &[f64; N], axis: usize) -> f64 {
        self.inner.max_wave_speed(u, axis)
    }

    fn admissible(&self, u: &[f64; N]) -> bool {
        self.inner.admissible(u)
    }

    fn indicator(&self, u: &[f64; N]) -> f64 {
        self.inner.indicator(u)
    }

    // identity transform: with V = U the hydrostatic reconstruction collapses
    // and the interface flux reduces to the plain numerical flux
    fn cons_to_equil(&self, u: &[f64; N], _w: f64) -> Result<[f64; N]> {
        Ok(*u)
    }

    fn equil_to_cons(
        &self,
        v: &[f64; N],
        _w: f64,
        _regime: Regime,
        _warm: Option<f64>,
    ) -> Result<[f64; N]> {
        Ok(*v)
    }

    fn stage_strategy(&self) -> StageStrategy {
        StageStrategy::Direct
    }

    fn roe_flux(&self, ul: &[f64; N], ur: &[f64; N], axis: usize) -> Option<[f64; N]> {
        self.inner.roe_flux(ul, ur, axis)
    }

    fn limiter_matrix(&self, u_mean: &[f64; N], _w_mean: f64, axis: usize) -> Option<[[f64; N]; N]> {
        if !self.inner.admissible(u_mean) {
            return None;
        }
        Some(self.inner.flux_jacobian(u_mean, axis))
    }

    fn cons_names(&self) -> [&'static str; N] {
        self.inner.cons_names()
    }

    fn equil_names(&self) -> [&'static str; N] {
        self.inner.cons_names()
    }

    fn derived_names(&self) -> Vec<&'static str> {
        self.inner.derived_names()
    }

    fn derived(&self, u: &[f64; N], w: f64) -> Vec<f64> {
        self.inner.derived(u, w)
    }
}
