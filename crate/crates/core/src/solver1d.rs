//! One-dimensional solver: semi-discrete DG residual in equilibrium
//! variables with hydrostatic-reconstruction interface fluxes, SSP-RK3 time
//! stepping with per-cell nonlinear stage solves, and TVB limiting.

use crate::basis::{Tables1d, MEAN_FACTOR_1D};
use crate::error::{Error, Result};
use crate::field::DgField;
use crate::limiter::{CharMap, CellLimit};
use crate::mesh::Mesh1d;
use crate::model::{mirror_equil, BalanceLaw, Regime};
use crate::omega::Omega;
use crate::scheme::{solve_stage_cell, FluxScheme, SolverConfig};
use rayon::prelude::*;
use std::sync::Arc;

/// Pointwise conservative state as a function of (x, omega(x)). Equilibrium
/// profiles must be expressed through the omega value the solver hands them,
/// so that the discrete data is in equilibrium with the discretized
/// potential.
pub type StateFn1d<const N: usize> = Arc<dyn Fn(f64, f64) -> [f64; N] + Send + Sync>;
pub type RegimeFn1d = Arc<dyn Fn(f64) -> Regime + Send + Sync>;
/// Ghost-state function of (face coordinate, omega at the face, time).
pub type GhostFn1d<const N: usize> = Arc<dyn Fn(f64, f64, f64) -> [f64; N] + Send + Sync>;

/// Initial data: either constant equilibrium variables (stored exactly, mode
/// zero only) or a pointwise conservative-state profile projected cell by
/// cell.
#[derive(Clone)]
pub enum Init1d<const N: usize> {
    EquilConstant([f64; N]),
    ConsFn(StateFn1d<N>),
}

#[derive(Clone)]
pub enum Boundary1d<const N: usize> {
    Periodic,
    Transmissive,
    SolidWall,
    Reflective,
    /// Exterior state supplied by a function (typically the initial profile,
    /// possibly time-dependent).
    Ghost(GhostFn1d<N>),
    /// Overwrite selected conservative components of the interior trace:
    /// `hu` replaces the momentum/discharge, `h` replaces the leading
    /// component keeping the trailing ratio (the temperature) fixed.
    InflowOutflow { h: Option<f64>, hu: Option<f64> },
}

/// Immutable discretization context.
pub struct Ctx1d<M, const N: usize> {
    pub model: M,
    pub mesh: Mesh1d,
    pub tables: Tables1d,
    pub omega: Omega,
    pub boundary: [Boundary1d<N>; 2],
    pub cfg: SolverConfig,
    x_vol: Vec<f64>,
    /// per-cell modal coefficients of the projected potential
    w_coeffs: Vec<f64>,
    w_vol: Vec<f64>,
    gw_vol: Vec<f64>,
    x_face: Vec<f64>,
    /// one-sided traces of the projected potential per interface
    w_face: Vec<[f64; 2]>,
}

/// Per-point mutable solver state: frozen-per-step regime tags and warm-start
/// roots for the pointwise transforms.
struct PointCaches {
    regimes_vol: Vec<Regime>,
    warm_vol: Vec<f64>,
    regimes_face: Vec<[Regime; 2]>,
    warm_face: Vec<[f64; 2]>,
}

pub struct Solver1d<M: BalanceLaw<N>, const N: usize> {
    pub ctx: Ctx1d<M, N>,
    points: PointCaches,
    pub field: DgField,
    pub t: f64,
    pub steps: usize,
    pub newton_iterations: u64,
    regime_fn: Option<RegimeFn1d>,
}

/// One residual evaluation: normalized RHS (d coeffs/dt), the modal moments
/// of U(V), and the global dissipation speed.
pub struct StageEval {
    pub rhs: DgField,
    pub moments: DgField,
    pub alpha: f64,
}

impl<M: BalanceLaw<N> + Clone, const N: usize> Solver1d<M, N> {
    pub fn new(
        model: M,
        mesh: Mesh1d,
        omega: Omega,
        boundary: [Boundary1d<N>; 2],
        cfg: SolverConfig,
    ) -> Self {
        let tables = Tables1d::new(cfg.degree, 2 * cfg.degree + 1);
        let nq = tables.npts();
        let l = tables.nmodes();
        let nx = mesh.nx;
        // the potential is carried as its per-cell L2 projection: values,
        // traces and the source gradient all come from the same polynomial,
        // so equilibrium integrands stay polynomial and the interface flux
        // absorbs the projection's jumps at cell boundaries
        let mut x_vol = vec![0.0; nx * nq];
        let mut w_coeffs = vec![0.0; nx * l];
        let mut w_vol = vec![0.0; nx * nq];
        let mut gw_vol = vec![0.0; nx * nq];
        let mut samples = vec![0.0; nq];
        for j in 0..nx {
            for q in 0..nq {
                let x = mesh.point(j, tables.quad.nodes[q]);
                x_vol[j * nq + q] = x;
                samples[q] = omega.eval_sided_1d(x, true);
            }
            tables.project(&samples, &mut w_coeffs[j * l..(j + 1) * l]);
            for q in 0..nq {
                let mut val = 0.0;
                let mut der = 0.0;
                for m in 0..l {
                    val += w_coeffs[j * l + m] * tables.phi[q * l + m];
                    der += w_coeffs[j * l + m] * tables.dphi[q * l + m];
                }
                w_vol[j * nq + q] = val;
                gw_vol[j * nq + q] = der * 2.0 / mesh.dx;
            }
        }
        let mut x_face = vec![0.0; nx + 1];
        let mut w_face = vec![[0.0; 2]; nx + 1];
        for f in 0..=nx {
            x_face[f] = mesh.interface(f);
            let left_cell = if f > 0 { f - 1 } else { 0 };
            let right_cell = if f < nx { f } else { nx - 1 };
            let trace = |cell: usize, phi: &[f64]| -> f64 {
                (0..l).map(|m| w_coeffs[cell * l + m] * phi[m]).sum()
            };
            let wl = trace(left_cell, if f > 0 { &tables.phi_right } else { &tables.phi_left });
            let wr = trace(right_cell, if f < nx { &tables.phi_left } else { &tables.phi_right });
            // at the domain ends both sides carry the interior trace
            w_face[f] = if f == 0 { [wr, wr] } else if f == nx { [wl, wl] } else { [wl, wr] };
        }
        let nmodes = tables.nmodes();
        let field = DgField::zeros(nx, N, nmodes);
        Solver1d {
            ctx: Ctx1d {
                model,
                mesh,
                tables,
                omega,
                boundary,
                cfg,
                x_vol,
                w_coeffs,
                w_vol,
                gw_vol,
                x_face,
                w_face,
            },
            points: PointCaches {
                regimes_vol: vec![Regime::Subsonic; nx * nq],
                warm_vol: vec![0.0; nx * nq],
                regimes_face: vec![[Regime::Subsonic; 2]; nx + 1],
                warm_face: vec![[0.0; 2]; nx + 1],
            },
            field,
            t: 0.0,
            steps: 0,
            newton_iterations: 0,
            regime_fn: None,
        }
    }

    pub fn nq(&self) -> usize {
        self.ctx.tables.npts()
    }

    pub fn x_vol(&self) -> &[f64] {
        &self.ctx.x_vol
    }

    pub fn w_vol(&self) -> &[f64] {
        &self.ctx.w_vol
    }

    /// Project the initial data and set the per-point regime tags.
    pub fn init(&mut self, init: &Init1d<N>, regime_fn: Option<RegimeFn1d>) -> Result<()> {
        let nx = self.ctx.mesh.nx;
        let nq = self.nq();
        let l = self.ctx.tables.nmodes();
        match init {
            Init1d::EquilConstant(v) => {
                for (c, &val) in v.iter().enumerate() {
                    self.field.set_constant(c, val);
                }
                // the branch cannot be inferred from constants alone
                let rf = regime_fn
                    .clone()
                    .unwrap_or_else(|| Arc::new(|_x| Regime::Subsonic));
                for j in 0..nx {
                    for q in 0..nq {
                        self.points.regimes_vol[j * nq + q] = rf(self.ctx.x_vol[j * nq + q]);
                    }
                }
                // the two sides of a face may sit on different branches
                // (stationary shocks, transcritical crests): evaluate the
                // regime nudged into the owning cell
                let eps = 1e-9 * self.ctx.mesh.dx;
                for f in 0..=nx {
                    let x = self.ctx.x_face[f];
                    self.points.regimes_face[f] = [rf(x - eps), rf(x + eps)];
                }
            }
            Init1d::ConsFn(f) => {
                let mut samples = vec![0.0; nq];
                for j in 0..nx {
                    let mut vq = vec![[0.0; N]; nq];
                    for q in 0..nq {
                        let x = self.ctx.x_vol[j * nq + q];
                        let w = self.ctx.w_vol[j * nq + q];
                        let u = f(x, w);
                        vq[q] = self.ctx.model.cons_to_equil(&u, w).map_err(|e| e.in_cell(j))?;
                        self.points.regimes_vol[j * nq + q] = match &regime_fn {
                            Some(rf) => rf(x),
                            None => Regime::classify(self.ctx.model.indicator(&u), None),
                        };
                    }
                    for c in 0..N {
                        for q in 0..nq {
                            samples[q] = vq[q][c];
                        }
                        let off = (j * N + c) * l;
                        self.ctx.tables.project(&samples, &mut self.field.data[off..off + l]);
                    }
                }
                let eps = 1e-9 * self.ctx.mesh.dx;
                for fc in 0..=nx {
                    let x = self.ctx.x_face[fc];
                    let side_regime = |xs: f64, w: f64| match &regime_fn {
                        Some(rf) => rf(xs),
                        None => {
                            let u = f(xs, w);
                            Regime::classify(self.ctx.model.indicator(&u), None)
                        }
                    };
                    self.points.regimes_face[fc] = [
                        side_regime(x - eps, self.ctx.w_face[fc][0]),
                        side_regime(x + eps, self.ctx.w_face[fc][1]),
                    ];
                }
            }
        }
        self.regime_fn = regime_fn;
        Ok(())
    }

    /// Interior trace of all components of a cell: side 0 is the left edge,
    /// side 1 the right edge.
    fn trace(&self, field: &DgField, cell: usize, side: usize) -> [f64; N] {
        let phi = if side == 0 {
            &self.ctx.tables.phi_left
        } else {
            &self.ctx.tables.phi_right
        };
        let mut v = [0.0; N];
        field.values(cell, phi, &mut v);
        v
    }

    /// Exterior trace state at a boundary (side 0 = left end, 1 = right end):
    /// equilibrium variables and regime of the ghost.
    fn exterior(
        &self,
        side: usize,
        v_int: &[f64; N],
        regime_int: Regime,
        warm_int: f64,
        t: f64,
    ) -> Result<([f64; N], Regime)> {
        let f = if side == 0 { 0 } else { self.ctx.mesh.nx };
        let w_int = if side == 0 {
            self.ctx.w_face[f][1]
        } else {
            self.ctx.w_face[f][0]
        };
        let x = self.ctx.x_face[f];
        let ghost_regime = if side == 0 {
            self.points.regimes_face[0][0]
        } else {
            self.points.regimes_face[self.ctx.mesh.nx][1]
        };
        match &self.ctx.boundary[side] {
            Boundary1d::Periodic => {
                // handled by the caller as a wrap-around face
                unreachable!("periodic boundaries are paired faces")
            }
            Boundary1d::Transmissive => Ok((*v_int, regime_int)),
            Boundary1d::SolidWall | Boundary1d::Reflective => {
                Ok((mirror_equil(v_int, 0), regime_int))
            }
            Boundary1d::Ghost(g) => {
                let u = g(x, w_int, t);
                let v = self.ctx.model.cons_to_equil(&u, w_int)?;
                Ok((v, ghost_regime))
            }
            Boundary1d::InflowOutflow { h, hu } => {
                let warm = if warm_int > 0.0 { Some(warm_int) } else { None };
                let mut u = self.ctx.model.equil_to_cons(v_int, w_int, regime_int, warm)?;
                if let Some(hu) = hu {
                    u[1] = *hu;
                }
                if let Some(h) = h {
                    let ratio = u[N - 1] / u[0];
                    u[0] = *h;
                    u[N - 1] = h * ratio;
                }
                let v = self.ctx.model.cons_to_equil(&u, w_int)?;
                Ok((v, ghost_regime))
            }
        }
    }

    /// Re-derive the regime tags from the current field; called once per time
    /// step so all stages solve on consistent branches.
    pub fn update_regimes(&mut self, t: f64) -> Result<()> {
        let nx = self.ctx.mesh.nx;
        let nq = self.nq();
        let ctx = &self.ctx;
        let field = &self.field;
        // volume points
        for j in 0..nx {
            for q in 0..nq {
                let idx = j * nq + q;
                let mut v = [0.0; N];
                field.values(j, ctx.tables.phi_row(q), &mut v);
                let prev = self.points.regimes_vol[idx];
                let warm = opt(self.points.warm_vol[idx]);
                if let Ok(u) = ctx.model.equil_to_cons(&v, ctx.w_vol[idx], prev, warm) {
                    self.points.warm_vol[idx] = u[0];
                    self.points.regimes_vol[idx] =
                        Regime::classify(ctx.model.indicator(&u), Some(prev));
                }
            }
        }
        // interior face traces
        for f in 0..=nx {
            for side in 0..2 {
                let (cell, edge) = if side == 0 {
                    if f == 0 {
                        continue;
                    }
                    (f - 1, 1)
                } else {
                    if f == nx {
                        continue;
                    }
                    (f, 0)
                };
                let v = self.trace(field, cell, edge);
                let prev = self.points.regimes_face[f][side];
                let warm = opt(self.points.warm_face[f][side]);
                if let Ok(u) = ctx.model.equil_to_cons(&v, ctx.w_face[f][side], prev, warm) {
                    self.points.warm_face[f][side] = u[0];
                    self.points.regimes_face[f][side] =
                        Regime::classify(ctx.model.indicator(&u), Some(prev));
                }
            }
        }
        // boundary exterior sides
        for side in 0..2 {
            let f = if side == 0 { 0 } else { nx };
            let ext = if side == 0 { 0 } else { 1 };
            let int = 1 - ext;
            if matches!(self.ctx.boundary[side], Boundary1d::Periodic) {
                let src = if side == 0 { self.points.regimes_face[nx][0] } else { self.points.regimes_face[0][1] };
                self.points.regimes_face[f][ext] = src;
                continue;
            }
            let (cell, edge) = if side == 0 { (0, 0) } else { (nx - 1, 1) };
            let v_int = self.trace(field, cell, edge);
            let regime_int = self.points.regimes_face[f][int];
            let warm_int = self.points.warm_face[f][int];
            if let Ok((v_ext, _)) = self.exterior(side, &v_int, regime_int, warm_int, t) {
                let prev = self.points.regimes_face[f][ext];
                let w_int = self.ctx.w_face[f][int];
                if let Ok(u) = ctx.model.equil_to_cons(&v_ext, w_int, prev, None) {
                    self.points.regimes_face[f][ext] =
                        Regime::classify(ctx.model.indicator(&u), Some(prev));
                }
            }
        }
        Ok(())
    }

    /// Evaluate U(V) at every volume quadrature point; returns the cache and
    /// the global maximum wave speed.
    fn volume_states(&mut self, field: &DgField) -> Result<(Vec<f64>, f64)> {
        let nx = self.ctx.mesh.nx;
        let nq = self.nq();
        let ctx = &self.ctx;
        let regimes = &self.points.regimes_vol;
        let mut ucache = vec![0.0; nx * nq * N];
        let warm = &mut self.points.warm_vol;
        let alphas: Result<Vec<f64>> = ucache
            .par_chunks_mut(nq * N)
            .zip(warm.par_chunks_mut(nq))
            .enumerate()
            .map(|(j, (uc, wc))| {
                let mut local: f64 = 0.0;
                for q in 0..nq {
                    let idx = j * nq + q;
                    let mut v = [0.0; N];
                    field.values(j, ctx.tables.phi_row(q), &mut v);
                    let u = ctx
                        .model
                        .equil_to_cons(&v, ctx.w_vol[idx], regimes[idx], opt(wc[q]))
                        .map_err(|e| e.in_cell(j))?;
                    wc[q] = u[0];
                    if !ctx.model.admissible(&u) {
                        return Err(Error::state(format!(
                            "inadmissible state at x = {:.6}",
                            ctx.x_vol[idx]
                        ))
                        .in_cell(j));
                    }
                    local = local.max(ctx.model.max_wave_speed(&u, 0));
                    uc[q * N..(q + 1) * N].copy_from_slice(&u);
                }
                Ok(local)
            })
            .collect();
        let alphas = alphas?;
        let alpha = alphas.into_iter().fold(0.0f64, f64::max);
        Ok((ucache, alpha))
    }

    fn lf_flux(&self, ul: &[f64; N], ur: &[f64; N], alpha: f64) -> [f64; N] {
        let fl = self.ctx.model.flux(ul, 0);
        let fr = self.ctx.model.flux(ur, 0);
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = 0.5 * (fl[i] + fr[i] - alpha * (ur[i] - ul[i]));
        }
        out
    }

    fn inner_flux(&self, ul: &[f64; N], ur: &[f64; N], alpha: f64) -> [f64; N] {
        match self.ctx.cfg.flux {
            FluxScheme::LaxFriedrichs => self.lf_flux(ul, ur, alpha),
            FluxScheme::Roe => match self.ctx.model.roe_flux(ul, ur, 0) {
                Some(f) => f,
                None => {
                    warn_roe_fallback();
                    self.lf_flux(ul, ur, alpha)
                }
            },
            FluxScheme::IsobaricModified => {
                let un_l = ul[1] / ul[0];
                let un_r = ur[1] / ur[0];
                let delta = isobaric_delta(un_l, un_r);
                let fl = self.ctx.model.flux(ul, 0);
                let fr = self.ctx.model.flux(ur, 0);
                let mut out = [0.0; N];
                for i in 0..N {
                    out[i] = 0.5 * (fl[i] + fr[i] - alpha * delta * (ur[i] - ul[i]));
                }
                out
            }
        }
    }

    /// Fluxes on every face, as seen by the left and right cells. The two
    /// differ in the hydrostatic-reconstruction correction terms; the shared
    /// conservative components cancel across the face by construction.
    fn face_fluxes(
        &mut self,
        field: &DgField,
        t: f64,
        alpha: f64,
    ) -> Result<(Vec<[f64; N]>, Vec<[f64; N]>)> {
        let nx = self.ctx.mesh.nx;
        let mut flux_l = vec![[0.0; N]; nx + 1];
        let mut flux_r = vec![[0.0; N]; nx + 1];
        let periodic = matches!(self.ctx.boundary[0], Boundary1d::Periodic);

        for f in 0..=nx {
            if f == nx && periodic {
                flux_l[nx] = flux_l[0];
                flux_r[nx] = flux_r[0];
                continue;
            }
            let (vl, vr, wl, wr, rl, rr, warml, warmr);
            if f > 0 && f < nx {
                vl = self.trace(field, f - 1, 1);
                vr = self.trace(field, f, 0);
                wl = self.ctx.w_face[f][0];
                wr = self.ctx.w_face[f][1];
                [rl, rr] = self.points.regimes_face[f];
                [warml, warmr] = self.points.warm_face[f];
            } else if f == 0 && periodic {
                vl = self.trace(field, nx - 1, 1);
                vr = self.trace(field, 0, 0);
                wl = self.ctx.w_face[nx][0];
                wr = self.ctx.w_face[0][1];
                rl = self.points.regimes_face[nx][0];
                rr = self.points.regimes_face[0][1];
                warml = self.points.warm_face[nx][0];
                warmr = self.points.warm_face[0][1];
            } else if f == 0 {
                vr = self.trace(field, 0, 0);
                wr = self.ctx.w_face[0][1];
                rr = self.points.regimes_face[0][1];
                warmr = self.points.warm_face[0][1];
                let (ve, re) = self.exterior(0, &vr, rr, warmr, t)?;
                vl = ve;
                rl = re;
                wl = wr;
                warml = self.points.warm_face[0][0];
            } else {
                vl = self.trace(field, nx - 1, 1);
                wl = self.ctx.w_face[nx][0];
                rl = self.points.regimes_face[nx][0];
                warml = self.points.warm_face[nx][0];
                let (ve, re) = self.exterior(1, &vl, rl, warml, t)?;
                vr = ve;
                rr = re;
                wr = wl;
                warmr = self.points.warm_face[nx][1];
            }

            let reco = |v: &[f64; N], w: f64, r: Regime, warm: f64| -> Result<[f64; N]> {
                self.ctx
                    .model
                    .equil_to_cons(v, w, r, opt(warm))
                    .map_err(|e| Error::Reconstruction {
                        face: f,
                        x: self.ctx.x_face[f],
                        source: Box::new(e),
                    })
            };

            let ul = reco(&vl, wl, rl, warml)?;
            let ur = reco(&vr, wr, rr, warmr)?;
            self.points.warm_face[f][0] = ul[0];
            self.points.warm_face[f][1] = ur[0];

            if self.ctx.cfg.flux == FluxScheme::IsobaricModified {
                let fhat = self.inner_flux(&ul, &ur, alpha);
                flux_l[f] = fhat;
                flux_r[f] = fhat;
            } else {
                let wstar = wl.max(wr);
                let (ul_star, ur_star) = if wl == wr {
                    (ul, ur)
                } else {
                    (reco(&vl, wstar, rl, ul[0])?, reco(&vr, wstar, rr, ur[0])?)
                };
                let fhat = self.inner_flux(&ul_star, &ur_star, alpha);
                let fl_star = self.ctx.model.flux(&ul_star, 0);
                let fr_star = self.ctx.model.flux(&ur_star, 0);
                let fl_int = self.ctx.model.flux(&ul, 0);
                let fr_int = self.ctx.model.flux(&ur, 0);
                for i in 0..N {
                    flux_l[f][i] = fhat[i] - fl_star[i] + fl_int[i];
                    flux_r[f][i] = fhat[i] - fr_star[i] + fr_int[i];
                }
            }
        }
        Ok((flux_l, flux_r))
    }

    /// One semi-discrete evaluation: normalized RHS, U-moments, global alpha.
    pub fn rhs_stage(&mut self, field: &DgField, t: f64) -> Result<StageEval> {
        let (ucache, alpha) = self.volume_states(field)?;
        let (flux_l, flux_r) = self.face_fluxes(field, t, alpha)?;

        let nx = self.ctx.mesh.nx;
        let nq = self.nq();
        let l = self.ctx.tables.nmodes();
        let ctx = &self.ctx;
        let det_j = 0.5 * ctx.mesh.dx;

        let mut rhs = DgField::zeros(nx, N, l);
        let mut moments = DgField::zeros(nx, N, l);

        rhs.data
            .par_chunks_mut(N * l)
            .zip(moments.data.par_chunks_mut(N * l))
            .enumerate()
            .for_each(|(j, (rhs_cell, mom_cell))| {
                let uc = &ucache[j * nq * N..(j + 1) * nq * N];
                let mut fx = vec![0.0; nq];
                let mut src = vec![0.0; nq];
                let mut samples = vec![0.0; nq];
                let mut fluxes = vec![[0.0; N]; nq];
                let mut sources = vec![[0.0; N]; nq];
                for q in 0..nq {
                    let u: &[f64; N] = uc[q * N..(q + 1) * N].try_into().unwrap();
                    fluxes[q] = ctx.model.flux(u, 0);
                    sources[q] = ctx.model.source(u, [ctx.gw_vol[j * nq + q], 0.0]);
                }
                for c in 0..N {
                    for q in 0..nq {
                        fx[q] = fluxes[q][c];
                        src[q] = sources[q][c];
                        samples[q] = uc[q * N + c];
                    }
                    for m in 0..l {
                        let mut vol = 0.0;
                        let mut s = 0.0;
                        for q in 0..nq {
                            let wq = ctx.tables.quad.weights[q];
                            vol += wq * fx[q] * ctx.tables.dphi[q * l + m];
                            s += wq * src[q] * ctx.tables.phi[q * l + m];
                        }
                        let surf = flux_l[j + 1][c] * ctx.tables.phi_right[m]
                            - flux_r[j][c] * ctx.tables.phi_left[m];
                        rhs_cell[c * l + m] = (vol - surf) / det_j + s;
                    }
                    ctx.tables.project(&samples, &mut mom_cell[c * l..(c + 1) * l]);
                }
            });

        Ok(StageEval { rhs, moments, alpha })
    }

    /// Solve every cell's stage system for the given target moments.
    pub fn solve_stages(&mut self, target: &DgField, guess: &DgField) -> Result<DgField> {
        let nx = self.ctx.mesh.nx;
        let nq = self.nq();
        let l = self.ctx.tables.nmodes();
        let ctx = &self.ctx;
        let regimes = &self.points.regimes_vol;
        let mut out = DgField::zeros(nx, N, l);
        let tol = ctx.cfg.newton_tol;
        let max_iter = ctx.cfg.newton_max_iter;
        out.data
            .par_chunks_mut(N * l)
            .zip(self.points.warm_vol.par_chunks_mut(nq))
            .enumerate()
            .map(|(j, (cell_out, warm))| {
                let sol = solve_stage_cell(
                    &ctx.model,
                    &ctx.tables,
                    target.cell(j),
                    guess.cell(j),
                    &ctx.w_vol[j * nq..(j + 1) * nq],
                    &regimes[j * nq..(j + 1) * nq],
                    warm,
                    tol,
                    max_iter,
                )
                .map_err(|e| e.in_cell(j))?;
                cell_out.copy_from_slice(&sol);
                Ok(())
            })
            .collect::<Result<Vec<()>>>()?;
        Ok(out)
    }

    /// TVB limiting on local characteristic fields of V.
    pub fn apply_limiter(&mut self, field: &mut DgField, t: f64) -> Result<()> {
        if !self.ctx.cfg.limiter.enabled || self.ctx.cfg.degree < 1 {
            return Ok(());
        }
        let nx = self.ctx.mesh.nx;
        let l = self.ctx.tables.nmodes();
        let threshold = self.ctx.cfg.limiter.m_tvb * self.ctx.mesh.dx * self.ctx.mesh.dx;
        let periodic = matches!(self.ctx.boundary[0], Boundary1d::Periodic);

        // cell averages and traces from the pre-limit snapshot
        let mut avg = vec![[0.0; N]; nx];
        for (j, a) in avg.iter_mut().enumerate() {
            for c in 0..N {
                a[c] = field.coeffs(j, c)[0] * MEAN_FACTOR_1D;
            }
        }
        // ghost neighbour averages: wrap for periodic, exterior trace state
        // otherwise
        let (ghost_lo, ghost_hi);
        if periodic {
            ghost_lo = avg[nx - 1];
            ghost_hi = avg[0];
        } else {
            let v_int = self.trace(field, 0, 0);
            let r_int = self.points.regimes_face[0][1];
            let w_int = self.points.warm_face[0][1];
            ghost_lo = self.exterior(0, &v_int, r_int, w_int, t)?.0;
            let v_int = self.trace(field, nx - 1, 1);
            let r_int = self.points.regimes_face[nx][0];
            let w_int = self.points.warm_face[nx][0];
            ghost_hi = self.exterior(1, &v_int, r_int, w_int, t)?.0;
        }

        // characteristic maps per face from the mean of the trace states
        let ctx = &self.ctx;
        let points = &self.points;
        let maps: Vec<CharMap> = (0..=nx)
            .into_par_iter()
            .map(|f| {
                let (vl, rl, wl, warml) = if f > 0 {
                    (
                        self.trace(field, f - 1, 1),
                        points.regimes_face[f][0],
                        ctx.w_face[f][0],
                        points.warm_face[f][0],
                    )
                } else if periodic {
                    (
                        self.trace(field, nx - 1, 1),
                        points.regimes_face[nx][0],
                        ctx.w_face[nx][0],
                        points.warm_face[nx][0],
                    )
                } else {
                    (ghost_lo, points.regimes_face[0][0], ctx.w_face[0][1], 0.0)
                };
                let (vr, rr, wr, warmr) = if f < nx {
                    (
                        self.trace(field, f, 0),
                        points.regimes_face[f][1],
                        ctx.w_face[f][1],
                        points.warm_face[f][1],
                    )
                } else if periodic {
                    (
                        self.trace(field, 0, 0),
                        points.regimes_face[0][1],
                        ctx.w_face[0][1],
                        points.warm_face[0][1],
                    )
                } else {
                    (ghost_hi, points.regimes_face[nx][1], ctx.w_face[nx][0], 0.0)
                };
                let ul = ctx.model.equil_to_cons(&vl, wl, rl, opt(warml));
                let ur = ctx.model.equil_to_cons(&vr, wr, rr, opt(warmr));
                match (ul, ur) {
                    (Ok(a), Ok(b)) => {
                        let mut mean = [0.0; N];
                        for i in 0..N {
                            mean[i] = 0.5 * (a[i] + b[i]);
                        }
                        CharMap::build(&ctx.model, &mean, 0.5 * (wl + wr), 0)
                    }
                    _ => CharMap::Identity,
                }
            })
            .collect();

        let phi1_right = self.ctx.tables.phi_right[1];
        let updates: Vec<Option<(usize, [f64; N])>> = (0..nx)
            .into_par_iter()
            .map(|j| {
                let tr_l = self.trace(field, j, 0);
                let tr_r = self.trace(field, j, 1);
                let a = avg[j];
                let am = if j > 0 { avg[j - 1] } else { ghost_lo };
                let ap = if j + 1 < nx { avg[j + 1] } else { ghost_hi };
                let mut dev_l = [0.0; N];
                let mut dev_r = [0.0; N];
                let mut dplus = [0.0; N];
                let mut dminus = [0.0; N];
                for c in 0..N {
                    dev_l[c] = a[c] - tr_l[c];
                    dev_r[c] = tr_r[c] - a[c];
                    dplus[c] = ap[c] - a[c];
                    dminus[c] = a[c] - am[c];
                }
                let lim: CellLimit<N> = crate::limiter::limit_cell(
                    &maps[j],
                    &maps[j + 1],
                    &dev_l,
                    &dev_r,
                    &dplus,
                    &dminus,
                    threshold,
                );
                if lim.troubled {
                    Some((j, lim.slope_deviation))
                } else {
                    None
                }
            })
            .collect();

        for upd in updates.into_iter().flatten() {
            let (j, slope_dev) = upd;
            for c in 0..N {
                let coeffs = field.coeffs_mut(j, c);
                coeffs[1] = slope_dev[c] / phi1_right;
                for m in 2..l {
                    coeffs[m] = 0.0;
                }
            }
        }
        Ok(())
    }

    /// Time-step size from the CFL rule.
    pub fn compute_dt(&self, alpha: f64) -> f64 {
        self.ctx.cfg.cfl * self.ctx.mesh.dx / alpha
    }

    /// Global maximum wave speed over the volume quadrature points.
    pub fn current_max_speed(&mut self) -> Result<f64> {
        let field = self.field.clone();
        let (_, alpha) = self.volume_states(&field)?;
        Ok(alpha)
    }

    /// Forward-Euler substep (the SSP-RK building block): solve the stage for
    /// moments(V) + dt * RHS(V).
    pub fn forward_euler_step(&mut self, field: &DgField, t: f64, dt: f64) -> Result<DgField> {
        let eval = self.rhs_stage(field, t)?;
        let mut target = eval.moments;
        for (m, r) in target.data.iter_mut().zip(&eval.rhs.data) {
            *m += dt * r;
        }
        let mut out = self.solve_stages(&target, field)?;
        self.apply_limiter(&mut out, t + dt)?;
        Ok(out)
    }

    /// One SSP-RK3 step. Returns the dt actually taken (it may halve on a
    /// failed stage, at most 5 times).
    pub fn step(&mut self, dt_cap: f64) -> Result<f64> {
        self.update_regimes(self.t)?;
        let field0 = self.field.clone();
        let eval0 = self.rhs_stage(&field0, self.t)?;
        let mut dt = self.compute_dt(eval0.alpha).min(dt_cap);

        let mut retries = 0usize;
        loop {
            match self.try_rk3(&field0, &eval0, dt) {
                Ok(field) => {
                    self.field = field;
                    self.t += dt;
                    self.steps += 1;
                    return Ok(dt);
                }
                Err(e) => {
                    retries += 1;
                    if retries > 5 {
                        return Err(Error::Step {
                            t: self.t,
                            retries: retries - 1,
                            source: Box::new(e),
                        });
                    }
                    dt *= 0.5;
                }
            }
        }
    }

    fn try_rk3(&mut self, field0: &DgField, eval0: &StageEval, dt: f64) -> Result<DgField> {
        let m0 = &eval0.moments;
        // stage 1
        let mut t1 = m0.clone();
        for (m, r) in t1.data.iter_mut().zip(&eval0.rhs.data) {
            *m += dt * r;
        }
        let mut f1 = self.solve_stages(&t1, field0)?;
        self.apply_limiter(&mut f1, self.t + dt)?;
        // stage 2
        let eval1 = self.rhs_stage(&f1, self.t + dt)?;
        let mut t2 = m0.clone();
        for ((m, m1), r1) in t2.data.iter_mut().zip(&eval1.moments.data).zip(&eval1.rhs.data) {
            *m = 0.75 * *m + 0.25 * (m1 + dt * r1);
        }
        let mut f2 = self.solve_stages(&t2, &f1)?;
        self.apply_limiter(&mut f2, self.t + 0.5 * dt)?;
        // stage 3
        let eval2 = self.rhs_stage(&f2, self.t + 0.5 * dt)?;
        let mut t3 = m0.clone();
        for ((m, m2), r2) in t3.data.iter_mut().zip(&eval2.moments.data).zip(&eval2.rhs.data) {
            *m = *m / 3.0 + 2.0 / 3.0 * (m2 + dt * r2);
        }
        let mut f3 = self.solve_stages(&t3, &f2)?;
        self.apply_limiter(&mut f3, self.t + dt)?;
        Ok(f3)
    }

    /// Advance to the given time, clamping the final step.
    pub fn advance_to(&mut self, t_final: f64) -> Result<()> {
        let eps = 1e-12 * t_final.abs().max(1.0);
        while self.t < t_final - eps {
            self.step(t_final - self.t)?;
        }
        Ok(())
    }

    /// Conservative and equilibrium values at every volume quadrature point.
    pub fn sample_states(&mut self) -> Result<(Vec<[f64; N]>, Vec<[f64; N]>)> {
        let field = self.field.clone();
        let (ucache, _) = self.volume_states(&field)?;
        let nx = self.ctx.mesh.nx;
        let nq = self.nq();
        let mut us = Vec::with_capacity(nx * nq);
        let mut vs = Vec::with_capacity(nx * nq);
        for j in 0..nx {
            for q in 0..nq {
                let u: [f64; N] = ucache[(j * nq + q) * N..(j * nq + q + 1) * N].try_into().unwrap();
                let mut v = [0.0; N];
                field.values(j, self.ctx.tables.phi_row(q), &mut v);
                us.push(u);
                vs.push(v);
            }
        }
        Ok((us, vs))
    }

    /// Totals of the conserved quantities by quadrature.
    pub fn total_conserved(&mut self) -> Result<[f64; N]> {
        let field = self.field.clone();
        let (ucache, _) = self.volume_states(&field)?;
        let nq = self.nq();
        let det_j = 0.5 * self.ctx.mesh.dx;
        let mut tot = [0.0; N];
        for j in 0..self.ctx.mesh.nx {
            for q in 0..nq {
                let wq = self.ctx.tables.quad.weights[q];
                for c in 0..N {
                    tot[c] += det_j * wq * ucache[(j * nq + q) * N + c];
                }
            }
        }
        Ok(tot)
    }

    /// Evaluate the equilibrium-variable polynomial at an arbitrary point.
    pub fn eval_equil_at(&self, x: f64) -> [f64; N] {
        let mesh = &self.ctx.mesh;
        let j = (((x - mesh.x_min) / mesh.dx).floor() as isize).clamp(0, mesh.nx as isize - 1) as usize;
        let xi = 2.0 * (x - mesh.center(j)) / mesh.dx;
        let mut phi = vec![0.0; self.ctx.tables.nmodes()];
        self.ctx.tables.basis.eval(xi.clamp(-1.0, 1.0), &mut phi);
        let mut v = [0.0; N];
        self.field.values(j, &phi, &mut v);
        v
    }

    /// Conservative state at an arbitrary point, using the regime of the
    /// nearest volume quadrature point of the containing cell.
    pub fn eval_cons_at(&self, x: f64) -> Result<[f64; N]> {
        let mesh = &self.ctx.mesh;
        let j = (((x - mesh.x_min) / mesh.dx).floor() as isize).clamp(0, mesh.nx as isize - 1) as usize;
        let nq = self.nq();
        let xi = (2.0 * (x - mesh.center(j)) / mesh.dx).clamp(-1.0, 1.0);
        let mut best = (f64::INFINITY, 0usize);
        for q in 0..nq {
            let d = (self.ctx.tables.quad.nodes[q] - xi).abs();
            if d < best.0 {
                best = (d, q);
            }
        }
        let regime = self.points.regimes_vol[j * nq + best.1];
        let v = self.eval_equil_at(x);
        self.ctx.model.equil_to_cons(&v, self.eval_omega_at(x), regime, None)
    }

    /// Projected-potential value at an arbitrary point.
    pub fn eval_omega_at(&self, x: f64) -> f64 {
        let mesh = &self.ctx.mesh;
        let l = self.ctx.tables.nmodes();
        let j = (((x - mesh.x_min) / mesh.dx).floor() as isize).clamp(0, mesh.nx as isize - 1) as usize;
        let xi = (2.0 * (x - mesh.center(j)) / mesh.dx).clamp(-1.0, 1.0);
        let mut phi = vec![0.0; l];
        self.ctx.tables.basis.eval(xi, &mut phi);
        (0..l).map(|m| self.ctx.w_coeffs[j * l + m] * phi[m]).sum()
    }
}

fn opt(warm: f64) -> Option<f64> {
    if warm > 0.0 {
        Some(warm)
    } else {
        None
    }
}

/// Velocity-gated dissipation factor of the isobaric flux, in [0, 1]; zero
/// at rest so the central flux preserves pressure equilibria across height
/// and temperature jumps.
pub fn isobaric_delta(un_int: f64, un_ext: f64) -> f64 {
    let a = -un_int.min(0.0) / un_int.abs().max(1.0);
    let b = un_ext.max(0.0) / un_ext.abs().max(1.0);
    a.max(b)
}

fn warn_roe_fallback() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| {
        eprintln!("warning: model provides no Roe solver, falling back to Lax-Friedrichs");
    });
}
