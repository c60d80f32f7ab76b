//! Scheme-level configuration shared by the 1D and 2D solvers, and the
//! per-cell nonlinear stage solve.
//!
//! Each SSP-RK stage requires recovering equilibrium-variable coefficients V
//! from target modal moments of U(V). Momentum components are linear and read
//! off directly; the remaining two components form a coupled Newton system
//! per cell (or, for the isobaric set, a triangular sequence of linear
//! solves).

use crate::basis::dot;
use crate::error::{Error, Result};
use crate::model::{BalanceLaw, Regime, StageStrategy};
use nalgebra::{DMatrix, DVector};

/// Interface numerical flux selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxScheme {
    /// Lax-Friedrichs with a globally recomputed dissipation speed.
    LaxFriedrichs,
    /// Roe solver where the model provides one; falls back to LF.
    Roe,
    /// Velocity-gated LF dissipation, used with the isobaric variable set;
    /// no hydrostatic reconstruction is applied.
    IsobaricModified,
}

#[derive(Debug, Clone, Copy)]
pub struct LimiterConfig {
    pub enabled: bool,
    /// TVB constant M; deviations below M dx^2 are left untouched.
    pub m_tvb: f64,
}

impl Default for LimiterConfig {
    fn default() -> Self {
        LimiterConfig { enabled: true, m_tvb: 0.0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub degree: usize,
    pub cfl: f64,
    pub flux: FluxScheme,
    pub limiter: LimiterConfig,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            degree: 2,
            cfl: 0.1,
            flux: FluxScheme::LaxFriedrichs,
            limiter: LimiterConfig::default(),
            // tighter than the 1e-12 stage contract so conservation errors
            // from accepted stage residuals stay below 1e-12 over long runs
            newton_tol: 1e-13,
            newton_max_iter: 50,
        }
    }
}

/// Reference-cell quadrature/basis access shared by the stage solver.
pub trait CellQuad {
    fn npts(&self) -> usize;
    fn nmodes(&self) -> usize;
    fn weight(&self, q: usize) -> f64;
    fn phi(&self, q: usize) -> &[f64];
    /// Symmetric-accumulation modal projection of point samples.
    fn project_samples(&self, samples: &[f64], coeffs: &mut [f64]);
}

impl CellQuad for crate::basis::Tables1d {
    fn npts(&self) -> usize {
        self.quad.len()
    }
    fn nmodes(&self) -> usize {
        self.basis.nmodes
    }
    fn weight(&self, q: usize) -> f64 {
        self.quad.weights[q]
    }
    fn phi(&self, q: usize) -> &[f64] {
        self.phi_row(q)
    }
    fn project_samples(&self, samples: &[f64], coeffs: &mut [f64]) {
        self.project(samples, coeffs);
    }
}

impl CellQuad for crate::basis::Tables2d {
    fn npts(&self) -> usize {
        self.npts
    }
    fn nmodes(&self) -> usize {
        self.basis.nmodes
    }
    fn weight(&self, q: usize) -> f64 {
        self.wvol[q]
    }
    fn phi(&self, q: usize) -> &[f64] {
        self.phi_row(q)
    }
    fn project_samples(&self, samples: &[f64], coeffs: &mut [f64]) {
        self.project(samples, coeffs);
    }
}

/// Solve one cell's stage system: find coefficients of V whose U-moments
/// match `target`. `guess` supplies the warm start (previous stage), `w_vol`
/// and `regimes` the frozen per-point potential values and regime tags, and
/// `warm` the per-point root cache.
#[allow(clippy::too_many_arguments)]
pub fn solve_stage_cell<M: BalanceLaw<N>, const N: usize>(
    model: &M,
    tables: &impl CellQuad,
    target: &[f64],
    guess: &[f64],
    w_vol: &[f64],
    regimes: &[Regime],
    warm: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let l = tables.nmodes();
    debug_assert_eq!(target.len(), N * l);
    match model.stage_strategy() {
        StageStrategy::Direct => Ok(target.to_vec()),
        StageStrategy::LinearCascade => cascade_solve(model, tables, target),
        StageStrategy::NewtonPair => {
            newton_pair_solve(model, tables, target, guess, w_vol, regimes, warm, tol, max_iter)
        }
    }
}

fn cascade_solve<M: BalanceLaw<N>, const N: usize>(
    model: &M,
    tables: &impl CellQuad,
    target: &[f64],
) -> Result<Vec<f64>> {
    let l = tables.nmodes();
    let nq = tables.npts();
    let mut out = vec![0.0; N * l];
    // leading component is linear
    out[..l].copy_from_slice(&target[..l]);
    let lead: Vec<f64> = (0..nq).map(|q| dot(&out[..l], tables.phi(q))).collect();
    if lead.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::state("leading stage component not positive at a quadrature point"));
    }
    // each remaining component c satisfies sum_q w_q weight(h_q) V_c(q) phi_j(q) = T_j
    for comp in 1..N {
        let mut a = DMatrix::zeros(l, l);
        for q in 0..nq {
            let wgt = tables.weight(q) * model.cascade_weight(comp, lead[q]);
            let phi = tables.phi(q);
            for j in 0..l {
                for i in 0..l {
                    a[(j, i)] += wgt * phi[i] * phi[j];
                }
            }
        }
        let rhs = DVector::from_column_slice(&target[comp * l..(comp + 1) * l]);
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Convergence("singular cascade matrix".into()))?;
        out[comp * l..(comp + 1) * l].copy_from_slice(sol.as_slice());
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn newton_pair_solve<M: BalanceLaw<N>, const N: usize>(
    model: &M,
    tables: &impl CellQuad,
    target: &[f64],
    guess: &[f64],
    w_vol: &[f64],
    regimes: &[Regime],
    warm: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let l = tables.nmodes();
    let nq = tables.npts();
    let dim = N - 2;
    let last = N - 1;

    let mut out = guess.to_vec();
    // momenta are linear: their moments are the coefficients
    for d in 0..dim {
        out[(1 + d) * l..(2 + d) * l].copy_from_slice(&target[(1 + d) * l..(2 + d) * l]);
    }
    let mut mom_q = vec![[0.0; 2]; nq];
    for (q, m) in mom_q.iter_mut().enumerate() {
        for d in 0..dim {
            m[d] = dot(&out[(1 + d) * l..(2 + d) * l], tables.phi(q));
        }
    }

    let mut a: Vec<f64> = out[..l].to_vec();
    let mut b: Vec<f64> = out[last * l..(last + 1) * l].to_vec();
    let scale_a = target[..l].iter().fold(1.0f64, |s, t| s.max(t.abs()));
    let scale_b = target[last * l..].iter().fold(1.0f64, |s, t| s.max(t.abs()));

    let mut u0 = vec![0.0; nq];
    let mut un = vec![0.0; nq];
    let mut jac_q = vec![[[0.0; 2]; 2]; nq];
    let mut ga = vec![0.0; l];
    let mut gb = vec![0.0; l];

    let eval_point = |a: &[f64], b: &[f64], q: usize, warm_q: f64| -> Result<([f64; 2], [[f64; 2]; 2])> {
        let av = dot(a, tables.phi(q));
        let bv = dot(b, tables.phi(q));
        let hint = if warm_q > 0.0 { Some(warm_q) } else { None };
        model.uv_pair(av, bv, &mom_q[q][..dim], w_vol[q], regimes[q], hint)
    };

    // evaluate at the warm start
    for q in 0..nq {
        let (vals, jq) = eval_point(&a, &b, q, warm[q])?;
        u0[q] = vals[0];
        un[q] = vals[1];
        jac_q[q] = jq;
        warm[q] = vals[0];
    }

    for iter in 0..=max_iter {
        tables.project_samples(&u0, &mut ga);
        tables.project_samples(&un, &mut gb);
        for j in 0..l {
            ga[j] -= target[j];
            gb[j] -= target[last * l + j];
        }
        let res_a = ga.iter().fold(0.0f64, |s, g| s.max(g.abs()));
        let res_b = gb.iter().fold(0.0f64, |s, g| s.max(g.abs()));
        if res_a <= tol * scale_a && res_b <= tol * scale_b {
            out[..l].copy_from_slice(&a);
            out[last * l..].copy_from_slice(&b);
            return Ok(out);
        }
        if iter == max_iter {
            return Err(Error::Convergence(format!(
                "stage iteration stalled: residuals ({res_a:.3e}, {res_b:.3e}) vs scales ({scale_a:.3e}, {scale_b:.3e})"
            )));
        }

        // assemble the 2l x 2l system
        let mut jm = DMatrix::zeros(2 * l, 2 * l);
        for q in 0..nq {
            let wq = tables.weight(q);
            let phi = tables.phi(q);
            let jq = &jac_q[q];
            for j in 0..l {
                let wphi_j = wq * phi[j];
                for i in 0..l {
                    let p = wphi_j * phi[i];
                    jm[(j, i)] += p * jq[0][0];
                    jm[(j, l + i)] += p * jq[0][1];
                    jm[(l + j, i)] += p * jq[1][0];
                    jm[(l + j, l + i)] += p * jq[1][1];
                }
            }
        }
        let mut rhs = DVector::zeros(2 * l);
        for j in 0..l {
            rhs[j] = -ga[j];
            rhs[l + j] = -gb[j];
        }
        let delta = jm
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Convergence("singular stage Jacobian".into()))?;

        // damped update: halve the step until every point stays admissible
        let mut lambda = 1.0;
        let mut accepted = false;
        'damp: for _ in 0..20 {
            let at: Vec<f64> = a.iter().enumerate().map(|(j, &v)| v + lambda * delta[j]).collect();
            let bt: Vec<f64> = b.iter().enumerate().map(|(j, &v)| v + lambda * delta[l + j]).collect();
            let mut u0_t = vec![0.0; nq];
            let mut un_t = vec![0.0; nq];
            let mut jac_t = vec![[[0.0; 2]; 2]; nq];
            for q in 0..nq {
                match eval_point(&at, &bt, q, warm[q]) {
                    Ok((vals, jq)) => {
                        u0_t[q] = vals[0];
                        un_t[q] = vals[1];
                        jac_t[q] = jq;
                    }
                    Err(_) => {
                        lambda *= 0.5;
                        continue 'damp;
                    }
                }
            }
            a = at;
            b = bt;
            u0 = u0_t;
            un = un_t;
            jac_q = jac_t;
            for q in 0..nq {
                warm[q] = u0[q];
            }
            accepted = true;
            break;
        }
        if !accepted {
            return Err(Error::state(
                "stage update could not be damped into the admissible set",
            ));
        }
    }
    unreachable!()
}
