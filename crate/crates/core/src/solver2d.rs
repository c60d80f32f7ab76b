//! Two-dimensional solver on rectangular grids: total-degree P^k modal DG in
//! equilibrium variables, hydrostatic-reconstruction fluxes on axis-aligned
//! faces, SSP-RK3 with per-cell stage solves, and direction-by-direction TVB
//! limiting.

use crate::basis::{Face2d, Tables2d, MEAN_FACTOR_2D};
use crate::error::{Error, Result};
use crate::field::DgField;
use crate::limiter::CharMap;
use crate::mesh::Mesh2d;
use crate::model::{mirror_equil, BalanceLaw, Regime};
use crate::omega::Omega;
use crate::scheme::{solve_stage_cell, FluxScheme, SolverConfig};
use rayon::prelude::*;
use std::sync::Arc;

/// Pointwise conservative state as a function of (x, y, omega(x, y)), with
/// omega the projected potential value the solver hands in.
pub type StateFn2d<const N: usize> = Arc<dyn Fn(f64, f64, f64) -> [f64; N] + Send + Sync>;
/// Ghost-state function of (x, y, omega, t) in conservative variables.
pub type GhostFn2d<const N: usize> = Arc<dyn Fn(f64, f64, f64, f64) -> [f64; N] + Send + Sync>;

#[derive(Clone)]
pub enum Init2d<const N: usize> {
    EquilConstant([f64; N]),
    ConsFn(StateFn2d<N>),
}

#[derive(Clone)]
pub enum Boundary2d<const N: usize> {
    Periodic,
    Transmissive,
    SolidWall,
    Reflective,
    Ghost(GhostFn2d<N>),
}

/// Sides in the order XLo, XHi, YLo, YHi.
pub type Boundaries2d<const N: usize> = [Boundary2d<N>; 4];

pub struct Ctx2d<M, const N: usize> {
    pub model: M,
    pub mesh: Mesh2d,
    pub tables: Tables2d,
    pub omega: Omega,
    pub boundary: Boundaries2d<N>,
    pub cfg: SolverConfig,
    x_vol: Vec<f64>,
    y_vol: Vec<f64>,
    /// per-cell modal coefficients of the projected potential
    w_coeffs: Vec<f64>,
    w_vol: Vec<f64>,
    gw_vol: Vec<[f64; 2]>,
    /// face points: coordinates and the one-sided traces of the projected
    /// potential
    xf_coord: Vec<(f64, f64)>,
    xf_w: Vec<[f64; 2]>,
    yf_coord: Vec<(f64, f64)>,
    yf_w: Vec<[f64; 2]>,
}

struct PointCaches {
    regimes_vol: Vec<Regime>,
    warm_vol: Vec<f64>,
    regimes_xf: Vec<[Regime; 2]>,
    warm_xf: Vec<[f64; 2]>,
    regimes_yf: Vec<[Regime; 2]>,
    warm_yf: Vec<[f64; 2]>,
}

pub struct Solver2d<M: BalanceLaw<N>, const N: usize> {
    pub ctx: Ctx2d<M, N>,
    points: PointCaches,
    pub field: DgField,
    pub t: f64,
    pub steps: usize,
}

pub struct StageEval2d {
    pub rhs: DgField,
    pub moments: DgField,
    pub alpha: [f64; 2],
}

impl<M: BalanceLaw<N> + Clone, const N: usize> Solver2d<M, N> {
    pub fn new(
        model: M,
        mesh: Mesh2d,
        omega: Omega,
        boundary: Boundaries2d<N>,
        cfg: SolverConfig,
    ) -> Self {
        let tables = Tables2d::new(cfg.degree, 2 * cfg.degree + 1);
        let nq1 = tables.nq1;
        let npts = tables.npts;
        let ncells = mesh.ncells();
        let l = tables.nmodes();
        let mut x_vol = vec![0.0; ncells * npts];
        let mut y_vol = vec![0.0; ncells * npts];
        let mut w_coeffs = vec![0.0; ncells * l];
        let mut w_vol = vec![0.0; ncells * npts];
        let mut gw_vol = vec![[0.0; 2]; ncells * npts];
        let mut samples = vec![0.0; npts];
        for j in 0..mesh.ny {
            for i in 0..mesh.nx {
                let cell = mesh.cell(i, j);
                for qy in 0..nq1 {
                    for qx in 0..nq1 {
                        let q = qy * nq1 + qx;
                        let (x, y) =
                            mesh.point(i, j, tables.quad1.nodes[qx], tables.quad1.nodes[qy]);
                        let idx = cell * npts + q;
                        x_vol[idx] = x;
                        y_vol[idx] = y;
                        samples[q] = omega.eval(x, y);
                    }
                }
                // the potential enters as its per-cell projection: values,
                // traces and gradient from one polynomial
                tables.project(&samples, &mut w_coeffs[cell * l..(cell + 1) * l]);
                for q in 0..npts {
                    let mut val = 0.0;
                    let mut dxi = 0.0;
                    let mut deta = 0.0;
                    for m in 0..l {
                        let c = w_coeffs[cell * l + m];
                        val += c * tables.phi[q * l + m];
                        dxi += c * tables.dxi[q * l + m];
                        deta += c * tables.deta[q * l + m];
                    }
                    let idx = cell * npts + q;
                    w_vol[idx] = val;
                    gw_vol[idx] = [dxi * 2.0 / mesh.dx, deta * 2.0 / mesh.dy];
                }
            }
        }
        let face_w = |cell: usize, face: Face2d, qt: usize| -> f64 {
            let row = tables.face_phi_row(face, qt);
            (0..l).map(|m| w_coeffs[cell * l + m] * row[m]).sum()
        };
        // x-faces: (nx + 1) * ny faces, nq1 points each (along y)
        let nxf = (mesh.nx + 1) * mesh.ny;
        let mut xf_coord = vec![(0.0, 0.0); nxf * nq1];
        let mut xf_w = vec![[0.0; 2]; nxf * nq1];
        for j in 0..mesh.ny {
            for i in 0..=mesh.nx {
                let f = j * (mesh.nx + 1) + i;
                let x = mesh.x_interface(i);
                let yc = mesh.y_min + (j as f64 + 0.5) * mesh.dy;
                let cl = if i > 0 { mesh.cell(i - 1, j) } else { mesh.cell(0, j) };
                let cr = if i < mesh.nx { mesh.cell(i, j) } else { mesh.cell(mesh.nx - 1, j) };
                for qt in 0..nq1 {
                    let y = yc + 0.5 * mesh.dy * tables.quad1.nodes[qt];
                    xf_coord[f * nq1 + qt] = (x, y);
                    let wl = face_w(cl, if i > 0 { Face2d::XHi } else { Face2d::XLo }, qt);
                    let wr = face_w(cr, if i < mesh.nx { Face2d::XLo } else { Face2d::XHi }, qt);
                    xf_w[f * nq1 + qt] = if i == 0 {
                        [wr, wr]
                    } else if i == mesh.nx {
                        [wl, wl]
                    } else {
                        [wl, wr]
                    };
                }
            }
        }
        let nyf = mesh.nx * (mesh.ny + 1);
        let mut yf_coord = vec![(0.0, 0.0); nyf * nq1];
        let mut yf_w = vec![[0.0; 2]; nyf * nq1];
        for j in 0..=mesh.ny {
            for i in 0..mesh.nx {
                let f = j * mesh.nx + i;
                let y = mesh.y_interface(j);
                let xc = mesh.x_min + (i as f64 + 0.5) * mesh.dx;
                let cl = if j > 0 { mesh.cell(i, j - 1) } else { mesh.cell(i, 0) };
                let cr = if j < mesh.ny { mesh.cell(i, j) } else { mesh.cell(i, mesh.ny - 1) };
                for qt in 0..nq1 {
                    let x = xc + 0.5 * mesh.dx * tables.quad1.nodes[qt];
                    yf_coord[f * nq1 + qt] = (x, y);
                    let wl = face_w(cl, if j > 0 { Face2d::YHi } else { Face2d::YLo }, qt);
                    let wr = face_w(cr, if j < mesh.ny { Face2d::YLo } else { Face2d::YHi }, qt);
                    yf_w[f * nq1 + qt] = if j == 0 {
                        [wr, wr]
                    } else if j == mesh.ny {
                        [wl, wl]
                    } else {
                        [wl, wr]
                    };
                }
            }
        }
        let field = DgField::zeros(ncells, N, tables.nmodes());
        Solver2d {
            ctx: Ctx2d {
                model,
                mesh,
                tables,
                omega,
                boundary,
                cfg,
                x_vol,
                y_vol,
                w_coeffs,
                w_vol,
                gw_vol,
                xf_coord,
                xf_w,
                yf_coord,
                yf_w,
            },
            points: PointCaches {
                regimes_vol: vec![Regime::Subsonic; ncells * npts],
                warm_vol: vec![0.0; ncells * npts],
                regimes_xf: vec![[Regime::Subsonic; 2]; nxf * nq1],
                warm_xf: vec![[0.0; 2]; nxf * nq1],
                regimes_yf: vec![[Regime::Subsonic; 2]; nyf * nq1],
                warm_yf: vec![[0.0; 2]; nyf * nq1],
            },
            field,
            t: 0.0,
            steps: 0,
        }
    }

    pub fn npts(&self) -> usize {
        self.ctx.tables.npts
    }

    pub fn coords_vol(&self) -> (&[f64], &[f64]) {
        (&self.ctx.x_vol, &self.ctx.y_vol)
    }

    pub fn w_vol(&self) -> &[f64] {
        &self.ctx.w_vol
    }

    pub fn init(&mut self, init: &Init2d<N>, regime_fn: Option<Arc<dyn Fn(f64, f64) -> Regime + Send + Sync>>) -> Result<()> {
        let ncells = self.ctx.mesh.ncells();
        let npts = self.npts();
        let l = self.ctx.tables.nmodes();
        match init {
            Init2d::EquilConstant(v) => {
                for (c, &val) in v.iter().enumerate() {
                    self.field.set_constant(c, val);
                }
                let rf = regime_fn.unwrap_or_else(|| Arc::new(|_, _| Regime::Subsonic));
                for cell in 0..ncells {
                    for q in 0..npts {
                        let idx = cell * npts + q;
                        self.points.regimes_vol[idx] =
                            rf(self.ctx.x_vol[idx], self.ctx.y_vol[idx]);
                    }
                }
                for (idx, &(x, y)) in self.ctx.xf_coord.iter().enumerate() {
                    let r = rf(x, y);
                    self.points.regimes_xf[idx] = [r, r];
                }
                for (idx, &(x, y)) in self.ctx.yf_coord.iter().enumerate() {
                    let r = rf(x, y);
                    self.points.regimes_yf[idx] = [r, r];
                }
            }
            Init2d::ConsFn(f) => {
                let mut samples = vec![0.0; npts];
                for cell in 0..ncells {
                    let mut vq = vec![[0.0; N]; npts];
                    for q in 0..npts {
                        let idx = cell * npts + q;
                        let u = f(self.ctx.x_vol[idx], self.ctx.y_vol[idx], self.ctx.w_vol[idx]);
                        vq[q] = self
                            .ctx
                            .model
                            .cons_to_equil(&u, self.ctx.w_vol[idx])
                            .map_err(|e| e.in_cell(cell))?;
                        self.points.regimes_vol[idx] = match &regime_fn {
                            Some(rf) => rf(self.ctx.x_vol[idx], self.ctx.y_vol[idx]),
                            None => Regime::classify(self.ctx.model.indicator(&u), None),
                        };
                    }
                    for c in 0..N {
                        for q in 0..npts {
                            samples[q] = vq[q][c];
                        }
                        let off = (cell * N + c) * l;
                        self.ctx.tables.project(&samples, &mut self.field.data[off..off + l]);
                    }
                }
                for (idx, &(x, y)) in self.ctx.xf_coord.iter().enumerate() {
                    let r = match &regime_fn {
                        Some(rf) => rf(x, y),
                        None => {
                            let u = f(x, y, self.ctx.xf_w[idx][0]);
                            Regime::classify(self.ctx.model.indicator(&u), None)
                        }
                    };
                    self.points.regimes_xf[idx] = [r, r];
                }
                for (idx, &(x, y)) in self.ctx.yf_coord.iter().enumerate() {
                    let r = match &regime_fn {
                        Some(rf) => rf(x, y),
                        None => {
                            let u = f(x, y, self.ctx.yf_w[idx][0]);
                            Regime::classify(self.ctx.model.indicator(&u), None)
                        }
                    };
                    self.points.regimes_yf[idx] = [r, r];
                }
            }
        }
        Ok(())
    }

    /// U(V) at all volume points plus the per-direction maximum wave speeds.
    fn volume_states(&mut self, field: &DgField) -> Result<(Vec<f64>, [f64; 2])> {
        let npts = self.npts();
        let ctx = &self.ctx;
        let regimes = &self.points.regimes_vol;
        let mut ucache = vec![0.0; ctx.mesh.ncells() * npts * N];
        let speeds: Result<Vec<[f64; 2]>> = ucache
            .par_chunks_mut(npts * N)
            .zip(self.points.warm_vol.par_chunks_mut(npts))
            .enumerate()
            .map(|(cell, (uc, wc))| {
                let mut local = [0.0f64; 2];
                for q in 0..npts {
                    let idx = cell * npts + q;
                    let mut v = [0.0; N];
                    field.values(cell, ctx.tables.phi_row(q), &mut v);
                    let u = ctx
                        .model
                        .equil_to_cons(&v, ctx.w_vol[idx], regimes[idx], opt(wc[q]))
                        .map_err(|e| e.in_cell(cell))?;
                    wc[q] = u[0];
                    if !ctx.model.admissible(&u) {
                        return Err(Error::state(format!(
                            "inadmissible state at ({:.4}, {:.4})",
                            ctx.x_vol[idx], ctx.y_vol[idx]
                        ))
                        .in_cell(cell));
                    }
                    local[0] = local[0].max(ctx.model.max_wave_speed(&u, 0));
                    local[1] = local[1].max(ctx.model.max_wave_speed(&u, 1));
                    uc[q * N..(q + 1) * N].copy_from_slice(&u);
                }
                Ok(local)
            })
            .collect();
        let speeds = speeds?;
        let alpha = speeds
            .into_iter()
            .fold([0.0f64; 2], |a, s| [a[0].max(s[0]), a[1].max(s[1])]);
        Ok((ucache, alpha))
    }

    /// Exterior equilibrium trace at a boundary face point.
    #[allow(clippy::too_many_arguments)]
    fn exterior(
        &self,
        side: usize,
        v_int: &[f64; N],
        regime_int: Regime,
        x: f64,
        y: f64,
        w_int: f64,
        t: f64,
        prev_ext: Regime,
    ) -> Result<([f64; N], Regime)> {
        exterior_of(&self.ctx, side, v_int, regime_int, x, y, w_int, t, prev_ext)
    }

    /// Fluxes on x- or y-faces as seen from both sides.
    #[allow(clippy::type_complexity)]
    fn face_fluxes(
        &mut self,
        field: &DgField,
        axis: usize,
        t: f64,
        alpha: f64,
    ) -> Result<(Vec<[f64; N]>, Vec<[f64; N]>)> {
        let mesh = &self.ctx.mesh;
        let nq1 = self.ctx.tables.nq1;
        let (nfaces_axis, ny_like) = if axis == 0 {
            (mesh.nx + 1, mesh.ny)
        } else {
            (mesh.ny + 1, mesh.nx)
        };
        let total_pts = nfaces_axis * ny_like * nq1;
        let mut flux_l = vec![[0.0; N]; total_pts];
        let mut flux_r = vec![[0.0; N]; total_pts];
        let periodic = matches!(self.ctx.boundary[axis * 2], Boundary2d::Periodic);

        // split caches so the parallel loop can mutate warm starts per face
        let (regimes_f, warm_f) = if axis == 0 {
            (&self.points.regimes_xf, &mut self.points.warm_xf)
        } else {
            (&self.points.regimes_yf, &mut self.points.warm_yf)
        };
        let ctx = &self.ctx;
        let coords = if axis == 0 { &ctx.xf_coord } else { &ctx.yf_coord };
        let wface = if axis == 0 { &ctx.xf_w } else { &ctx.yf_w };

        let results: Result<Vec<()>> = flux_l
            .par_chunks_mut(nq1)
            .zip(flux_r.par_chunks_mut(nq1))
            .zip(warm_f.par_chunks_mut(nq1))
            .enumerate()
            .map(|(f, ((fl_chunk, fr_chunk), warm_chunk))| {
                // face index -> (interface index along axis, row index)
                let (iface, row) = if axis == 0 {
                    (f % (mesh.nx + 1), f / (mesh.nx + 1))
                } else {
                    (f / mesh.nx, f % mesh.nx)
                };
                let last = if axis == 0 { mesh.nx } else { mesh.ny };
                if iface == last && periodic {
                    // filled afterwards by copying from the mate at index 0
                    return Ok(());
                }
                let (cell_l, cell_r, face_l, face_r) = if axis == 0 {
                    let cl = if iface > 0 { Some(mesh.cell(iface - 1, row)) } else { None };
                    let cr = if iface < mesh.nx { Some(mesh.cell(iface, row)) } else { None };
                    (cl, cr, Face2d::XHi, Face2d::XLo)
                } else {
                    let cl = if iface > 0 { Some(mesh.cell(row, iface - 1)) } else { None };
                    let cr = if iface < mesh.ny { Some(mesh.cell(row, iface)) } else { None };
                    (cl, cr, Face2d::YHi, Face2d::YLo)
                };
                let (wrap_l, wrap_r) = if axis == 0 {
                    (mesh.cell(mesh.nx - 1, row), mesh.cell(0, row))
                } else {
                    (mesh.cell(row, mesh.ny - 1), mesh.cell(row, 0))
                };

                for qt in 0..nq1 {
                    let pt = f * nq1 + qt;
                    let (x, y) = coords[pt];
                    let [wl, wr] = wface[pt];
                    let [rl0, rr0] = regimes_f[pt];
                    let (vl, rl) = match cell_l {
                        Some(c) => (face_trace_of(&ctx.tables, field, c, face_l, qt), rl0),
                        None if periodic => {
                            (face_trace_of(&ctx.tables, field, wrap_l, face_l, qt), rl0)
                        }
                        None => {
                            let vr = face_trace_of(&ctx.tables, field, cell_r.unwrap(), face_r, qt);
                            exterior_of(ctx, axis * 2, &vr, rr0, x, y, wr, t, rl0)?
                        }
                    };
                    let (vr, rr) = match cell_r {
                        Some(c) => (face_trace_of(&ctx.tables, field, c, face_r, qt), rr0),
                        None if periodic => {
                            (face_trace_of(&ctx.tables, field, wrap_r, face_r, qt), rr0)
                        }
                        None => {
                            let vl_in = face_trace_of(&ctx.tables, field, cell_l.unwrap(), face_l, qt);
                            exterior_of(ctx, axis * 2 + 1, &vl_in, rl0, x, y, wl, t, rr0)?
                        }
                    };

                    let reco = |v: &[f64; N], wv: f64, r: Regime, warm: f64| {
                        ctx.model.equil_to_cons(v, wv, r, opt(warm)).map_err(|e| {
                            Error::Reconstruction { face: f, x, source: Box::new(e) }
                        })
                    };
                    let ul = reco(&vl, wl, rl, warm_chunk[qt][0])?;
                    let ur = reco(&vr, wr, rr, warm_chunk[qt][1])?;
                    warm_chunk[qt][0] = ul[0];
                    warm_chunk[qt][1] = ur[0];

                    if ctx.cfg.flux == FluxScheme::IsobaricModified {
                        let fhat = numerical_flux_of(ctx, &ul, &ur, axis, alpha);
                        fl_chunk[qt] = fhat;
                        fr_chunk[qt] = fhat;
                    } else {
                        // evaluate both traces at the common potential value
                        let wstar = wl.max(wr);
                        let (ul_star, ur_star) = if wl == wr {
                            (ul, ur)
                        } else {
                            (reco(&vl, wstar, rl, ul[0])?, reco(&vr, wstar, rr, ur[0])?)
                        };
                        let fhat = numerical_flux_of(ctx, &ul_star, &ur_star, axis, alpha);
                        let fls = ctx.model.flux(&ul_star, axis);
                        let frs = ctx.model.flux(&ur_star, axis);
                        let fli = ctx.model.flux(&ul, axis);
                        let fri = ctx.model.flux(&ur, axis);
                        for i in 0..N {
                            fl_chunk[qt][i] = fhat[i] - fls[i] + fli[i];
                            fr_chunk[qt][i] = fhat[i] - frs[i] + fri[i];
                        }
                    }
                }
                Ok(())
            })
            .collect();
        results?;

        if periodic {
            // copy the shared face fluxes to the wrapped index
            if axis == 0 {
                for row in 0..mesh.ny {
                    let src = row * (mesh.nx + 1);
                    let dst = row * (mesh.nx + 1) + mesh.nx;
                    for qt in 0..nq1 {
                        flux_l[dst * nq1 + qt] = flux_l[src * nq1 + qt];
                        flux_r[dst * nq1 + qt] = flux_r[src * nq1 + qt];
                    }
                }
            } else {
                for col in 0..mesh.nx {
                    let src = col;
                    let dst = mesh.ny * mesh.nx + col;
                    for qt in 0..nq1 {
                        flux_l[dst * nq1 + qt] = flux_l[src * nq1 + qt];
                        flux_r[dst * nq1 + qt] = flux_r[src * nq1 + qt];
                    }
                }
            }
        }
        Ok((flux_l, flux_r))
    }

    pub fn rhs_stage(&mut self, field: &DgField, t: f64) -> Result<StageEval2d> {
        let (ucache, alpha) = self.volume_states(field)?;
        let (xfl, xfr) = self.face_fluxes(field, 0, t, alpha[0])?;
        let (yfl, yfr) = self.face_fluxes(field, 1, t, alpha[1])?;

        let mesh = &self.ctx.mesh;
        let ctx = &self.ctx;
        let npts = self.npts();
        let nq1 = ctx.tables.nq1;
        let l = ctx.tables.nmodes();
        let det_j = 0.25 * mesh.dx * mesh.dy;
        let half_dy = 0.5 * mesh.dy;
        let half_dx = 0.5 * mesh.dx;

        let mut rhs = DgField::zeros(mesh.ncells(), N, l);
        let mut moments = DgField::zeros(mesh.ncells(), N, l);

        rhs.data
            .par_chunks_mut(N * l)
            .zip(moments.data.par_chunks_mut(N * l))
            .enumerate()
            .for_each(|(cell, (rhs_cell, mom_cell))| {
                let i = cell % mesh.nx;
                let j = cell / mesh.nx;
                let uc = &ucache[cell * npts * N..(cell + 1) * npts * N];
                let mut fx = vec![[0.0; N]; npts];
                let mut fy = vec![[0.0; N]; npts];
                let mut src = vec![[0.0; N]; npts];
                for q in 0..npts {
                    let u: &[f64; N] = uc[q * N..(q + 1) * N].try_into().unwrap();
                    fx[q] = ctx.model.flux(u, 0);
                    fy[q] = ctx.model.flux(u, 1);
                    src[q] = ctx.model.source(u, ctx.gw_vol[cell * npts + q]);
                }
                let fxlo = j * (mesh.nx + 1) + i;
                let fxhi = j * (mesh.nx + 1) + i + 1;
                let fylo = j * mesh.nx + i;
                let fyhi = (j + 1) * mesh.nx + i;
                let mut samples = vec![0.0; npts];
                for c in 0..N {
                    for m in 0..l {
                        let mut vol = 0.0;
                        let mut s = 0.0;
                        for q in 0..npts {
                            let wq = ctx.tables.wvol[q];
                            vol += wq
                                * (fx[q][c] * ctx.tables.dxi[q * l + m] * half_dy
                                    + fy[q][c] * ctx.tables.deta[q * l + m] * half_dx);
                            s += wq * src[q][c] * ctx.tables.phi[q * l + m];
                        }
                        let mut surf = 0.0;
                        for qt in 0..nq1 {
                            let wq = ctx.tables.quad1.weights[qt];
                            surf += wq
                                * half_dy
                                * (xfl[fxhi * nq1 + qt][c]
                                    * ctx.tables.face_phi[Face2d::XHi as usize][qt * l + m]
                                    - xfr[fxlo * nq1 + qt][c]
                                        * ctx.tables.face_phi[Face2d::XLo as usize][qt * l + m]);
                            surf += wq
                                * half_dx
                                * (yfl[fyhi * nq1 + qt][c]
                                    * ctx.tables.face_phi[Face2d::YHi as usize][qt * l + m]
                                    - yfr[fylo * nq1 + qt][c]
                                        * ctx.tables.face_phi[Face2d::YLo as usize][qt * l + m]);
                        }
                        rhs_cell[c * l + m] = (vol - surf) / det_j + s;
                    }
                    for q in 0..npts {
                        samples[q] = uc[q * N + c];
                    }
                    ctx.tables.project(&samples, &mut mom_cell[c * l..(c + 1) * l]);
                }
            });

        Ok(StageEval2d { rhs, moments, alpha })
    }

    pub fn update_regimes(&mut self, t: f64) -> Result<()> {
        let npts = self.npts();
        let ctx = &self.ctx;
        let field = &self.field;
        for cell in 0..ctx.mesh.ncells() {
            for q in 0..npts {
                let idx = cell * npts + q;
                let mut v = [0.0; N];
                field.values(cell, ctx.tables.phi_row(q), &mut v);
                let prev = self.points.regimes_vol[idx];
                if let Ok(u) =
                    ctx.model.equil_to_cons(&v, ctx.w_vol[idx], prev, opt(self.points.warm_vol[idx]))
                {
                    self.points.warm_vol[idx] = u[0];
                    self.points.regimes_vol[idx] =
                        Regime::classify(ctx.model.indicator(&u), Some(prev));
                }
            }
        }
        for axis in 0..2 {
            let mesh = &ctx.mesh;
            let nq1 = ctx.tables.nq1;
            let periodic = matches!(ctx.boundary[axis * 2], Boundary2d::Periodic);
            let (nfa, rows) = if axis == 0 { (mesh.nx + 1, mesh.ny) } else { (mesh.ny + 1, mesh.nx) };
            for f in 0..nfa * rows {
                let (iface, row) = if axis == 0 {
                    (f % (mesh.nx + 1), f / (mesh.nx + 1))
                } else {
                    (f / mesh.nx, f % mesh.nx)
                };
                let last = if axis == 0 { mesh.nx } else { mesh.ny };
                for qt in 0..nq1 {
                    let pt = f * nq1 + qt;
                    for side in 0..2 {
                        // pick the owning cell (wrap for periodic)
                        let cell = if side == 0 {
                            if iface > 0 {
                                Some(if axis == 0 { mesh.cell(iface - 1, row) } else { mesh.cell(row, iface - 1) })
                            } else if periodic {
                                Some(if axis == 0 { mesh.cell(mesh.nx - 1, row) } else { mesh.cell(row, mesh.ny - 1) })
                            } else {
                                None
                            }
                        } else if iface < last {
                            Some(if axis == 0 { mesh.cell(iface, row) } else { mesh.cell(row, iface) })
                        } else if periodic {
                            Some(if axis == 0 { mesh.cell(0, row) } else { mesh.cell(row, 0) })
                        } else {
                            None
                        };
                        let face = match (axis, side) {
                            (0, 0) => Face2d::XHi,
                            (0, 1) => Face2d::XLo,
                            (1, 0) => Face2d::YHi,
                            _ => Face2d::YLo,
                        };
                        let (regs, warms) = if axis == 0 {
                            (&mut self.points.regimes_xf, &mut self.points.warm_xf)
                        } else {
                            (&mut self.points.regimes_yf, &mut self.points.warm_yf)
                        };
                        let prev = regs[pt][side];
                        let wv = if axis == 0 { ctx.xf_w[pt][side] } else { ctx.yf_w[pt][side] };
                        match cell {
                            Some(c) => {
                                let v = face_trace_of(&ctx.tables, field, c, face, qt);
                                if let Ok(u) =
                                    ctx.model.equil_to_cons(&v, wv, prev, opt(warms[pt][side]))
                                {
                                    warms[pt][side] = u[0];
                                    regs[pt][side] =
                                        Regime::classify(ctx.model.indicator(&u), Some(prev));
                                }
                            }
                            None => {
                                // ghost side: derive from the BC state
                                let (x, y) = if axis == 0 { ctx.xf_coord[pt] } else { ctx.yf_coord[pt] };
                                let bside = axis * 2 + side;
                                let int_side = 1 - side;
                                let int_cell = if side == 0 {
                                    if axis == 0 { mesh.cell(0, row) } else { mesh.cell(row, 0) }
                                } else if axis == 0 {
                                    mesh.cell(mesh.nx - 1, row)
                                } else {
                                    mesh.cell(row, mesh.ny - 1)
                                };
                                let int_face = match (axis, side) {
                                    (0, 0) => Face2d::XLo,
                                    (0, 1) => Face2d::XHi,
                                    (1, 0) => Face2d::YLo,
                                    _ => Face2d::YHi,
                                };
                                let v_int = face_trace_of(&ctx.tables, field, int_cell, int_face, qt);
                                let r_int = regs[pt][int_side];
                                if let Ok((v_ext, _)) =
                                    exterior_of(ctx, bside, &v_int, r_int, x, y, wv, t, prev)
                                {
                                    if let Ok(u) = ctx.model.equil_to_cons(&v_ext, wv, prev, None) {
                                        regs[pt][side] =
                                            Regime::classify(ctx.model.indicator(&u), Some(prev));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn solve_stages(&mut self, target: &DgField, guess: &DgField) -> Result<DgField> {
        let npts = self.npts();
        let l = self.ctx.tables.nmodes();
        let ctx = &self.ctx;
        let regimes = &self.points.regimes_vol;
        let mut out = DgField::zeros(ctx.mesh.ncells(), N, l);
        out.data
            .par_chunks_mut(N * l)
            .zip(self.points.warm_vol.par_chunks_mut(npts))
            .enumerate()
            .map(|(cell, (cell_out, warm))| {
                let sol = solve_stage_cell(
                    &ctx.model,
                    &ctx.tables,
                    target.cell(cell),
                    guess.cell(cell),
                    &ctx.w_vol[cell * npts..(cell + 1) * npts],
                    &regimes[cell * npts..(cell + 1) * npts],
                    warm,
                    ctx.cfg.newton_tol,
                    ctx.cfg.newton_max_iter,
                )
                .map_err(|e| e.in_cell(cell))?;
                cell_out.copy_from_slice(&sol);
                Ok(())
            })
            .collect::<Result<Vec<()>>>()?;
        Ok(out)
    }

    /// Direction-by-direction TVB limiting on characteristic fields of the
    /// face-mean equilibrium variables. Detection reads the pre-limit
    /// snapshot; flagged cells keep their average, rebuild the directional
    /// linear modes, and drop all higher modes.
    pub fn apply_limiter(&mut self, field: &mut DgField, t: f64) -> Result<()> {
        if !self.ctx.cfg.limiter.enabled || self.ctx.cfg.degree < 1 {
            return Ok(());
        }
        let ctx = &self.ctx;
        let mesh = &ctx.mesh;
        let modes = &ctx.tables.basis.modes;

        let mut avg = vec![[0.0; N]; mesh.ncells()];
        for (cell, a) in avg.iter_mut().enumerate() {
            for c in 0..N {
                a[c] = field.coeffs(cell, c)[0] * MEAN_FACTOR_2D;
            }
        }

        // face-mean traces per cell per side
        let mean_trace = |cell: usize, face: Face2d| -> [f64; N] {
            let mut v = [0.0; N];
            field.values(cell, &ctx.tables.face_mean[face as usize], &mut v);
            v
        };

        // neighbour average in direction axis, handling wrap and ghosts
        let neighbor_avg = |i: usize, j: usize, axis: usize, dir: isize| -> Result<[f64; N]> {
            let (ni, nj) = if axis == 0 { (i as isize + dir, j as isize) } else { (i as isize, j as isize + dir) };
            let (n, lastx, lasty) = (mesh.nx as isize, mesh.nx as isize - 1, mesh.ny as isize - 1);
            let _ = n;
            let inside = ni >= 0 && ni <= lastx && nj >= 0 && nj <= lasty;
            if inside {
                return Ok(avg[mesh.cell(ni as usize, nj as usize)]);
            }
            let side = axis * 2 + usize::from(dir > 0);
            if matches!(ctx.boundary[side], Boundary2d::Periodic) {
                let wi = ni.rem_euclid(mesh.nx as isize) as usize;
                let wj = nj.rem_euclid(mesh.ny as isize) as usize;
                return Ok(avg[mesh.cell(wi, wj)]);
            }
            // exterior trace state at the face midpoint
            let cell = mesh.cell(i, j);
            let face = match (axis, dir > 0) {
                (0, false) => Face2d::XLo,
                (0, true) => Face2d::XHi,
                (1, false) => Face2d::YLo,
                _ => Face2d::YHi,
            };
            let v_int = mean_trace(cell, face);
            let (xc, yc) = mesh.center(i, j);
            let (x, y) = match face {
                Face2d::XLo => (mesh.x_interface(i), yc),
                Face2d::XHi => (mesh.x_interface(i + 1), yc),
                Face2d::YLo => (xc, mesh.y_interface(j)),
                Face2d::YHi => (xc, mesh.y_interface(j + 1)),
            };
            let w = omega_face_mean(ctx, cell, face);
            let prev = Regime::Subsonic;
            Ok(self.exterior(side, &v_int, prev, x, y, w, t, prev)?.0)
        };

        let threshold_x = ctx.cfg.limiter.m_tvb * mesh.dx * mesh.dx;
        let threshold_y = ctx.cfg.limiter.m_tvb * mesh.dy * mesh.dy;

        let mode10 = modes.iter().position(|&m| m == (1, 0)).unwrap();
        let mode01 = modes.iter().position(|&m| m == (0, 1)).unwrap();
        // face-mean of phi_{10} at XHi equals phi1(1)/sqrt(2); same for eta
        let lin_face_mean = ctx.tables.face_mean[Face2d::XHi as usize][mode10];

        let updates: Result<Vec<Option<(usize, [f64; 2], [bool; 2], [[f64; N]; 2])>>> = (0..mesh
            .ncells())
            .into_par_iter()
            .map(|cell| {
                let i = cell % mesh.nx;
                let j = cell / mesh.nx;
                let a = avg[cell];
                let mut troubled = [false; 2];
                let mut slopes = [[0.0; N]; 2];
                for axis in 0..2 {
                    let (face_lo, face_hi) = if axis == 0 {
                        (Face2d::XLo, Face2d::XHi)
                    } else {
                        (Face2d::YLo, Face2d::YHi)
                    };
                    let tr_lo = mean_trace(cell, face_lo);
                    let tr_hi = mean_trace(cell, face_hi);
                    let am = neighbor_avg(i, j, axis, -1)?;
                    let ap = neighbor_avg(i, j, axis, 1)?;
                    let mut dev_l = [0.0; N];
                    let mut dev_r = [0.0; N];
                    let mut dp = [0.0; N];
                    let mut dm = [0.0; N];
                    for c in 0..N {
                        dev_l[c] = a[c] - tr_lo[c];
                        dev_r[c] = tr_hi[c] - a[c];
                        dp[c] = ap[c] - a[c];
                        dm[c] = a[c] - am[c];
                    }
                    // characteristic maps at the two face-mean states
                    let map_for = |face: Face2d, other: Result<[f64; N]>| -> CharMap {
                        let v_own = mean_trace(cell, face);
                        let Ok(v_other) = other else {
                            return CharMap::Identity;
                        };
                        let w_own = omega_face_mean(ctx, cell, face);
                        let r = self.points.regimes_vol[cell * ctx.tables.npts];
                        let u_own = ctx.model.equil_to_cons(&v_own, w_own, r, None);
                        let u_other = ctx.model.equil_to_cons(&v_other, w_own, r, None);
                        match (u_own, u_other) {
                            (Ok(p), Ok(q)) => {
                                let mut mean = [0.0; N];
                                for c in 0..N {
                                    mean[c] = 0.5 * (p[c] + q[c]);
                                }
                                CharMap::build(&ctx.model, &mean, w_own, axis)
                            }
                            _ => CharMap::Identity,
                        }
                    };
                    // the neighbour's facing mean trace
                    let other_lo: Result<[f64; N]> = {
                        let (ni, nj) = if axis == 0 { (i as isize - 1, j as isize) } else { (i as isize, j as isize - 1) };
                        if ni >= 0 && nj >= 0 {
                            Ok(mean_trace(mesh.cell(ni as usize, nj as usize), face_hi))
                        } else {
                            neighbor_avg(i, j, axis, -1)
                        }
                    };
                    let other_hi: Result<[f64; N]> = {
                        let (ni, nj) = if axis == 0 { (i + 1, j) } else { (i, j + 1) };
                        if (axis == 0 && ni < mesh.nx) || (axis == 1 && nj < mesh.ny) {
                            Ok(mean_trace(mesh.cell(ni, nj), face_lo))
                        } else {
                            neighbor_avg(i, j, axis, 1)
                        }
                    };
                    let map_lo = map_for(face_lo, other_lo);
                    let map_hi = map_for(face_hi, other_hi);
                    let threshold = if axis == 0 { threshold_x } else { threshold_y };
                    let lim = crate::limiter::limit_cell(
                        &map_lo, &map_hi, &dev_l, &dev_r, &dp, &dm, threshold,
                    );
                    if lim.troubled {
                        troubled[axis] = true;
                        slopes[axis] = lim.slope_deviation;
                    }
                }
                if troubled[0] || troubled[1] {
                    Ok(Some((cell, [0.0; 2], troubled, slopes)))
                } else {
                    Ok(None)
                }
            })
            .collect();

        for upd in updates?.into_iter().flatten() {
            let (cell, _, troubled, slopes) = upd;
            for c in 0..N {
                let coeffs = field.coeffs_mut(cell, c);
                if troubled[0] {
                    coeffs[mode10] = slopes[0][c] / lin_face_mean;
                }
                if troubled[1] {
                    coeffs[mode01] = slopes[1][c] / lin_face_mean;
                }
                for (m, &(mx, my)) in modes.iter().enumerate() {
                    if mx + my >= 2 {
                        coeffs[m] = 0.0;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn compute_dt(&self, alpha: [f64; 2]) -> f64 {
        let h_m = self.ctx.mesh.dx.min(self.ctx.mesh.dy);
        self.ctx.cfg.cfl * h_m / alpha[0].max(alpha[1])
    }

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
                        return Err(Error::Step { t: self.t, retries: retries - 1, source: Box::new(e) });
                    }
                    dt *= 0.5;
                }
            }
        }
    }

    fn try_rk3(&mut self, field0: &DgField, eval0: &StageEval2d, dt: f64) -> Result<DgField> {
        let m0 = &eval0.moments;
        let mut t1 = m0.clone();
        for (m, r) in t1.data.iter_mut().zip(&eval0.rhs.data) {
            *m += dt * r;
        }
        let mut f1 = self.solve_stages(&t1, field0)?;
        self.apply_limiter(&mut f1, self.t + dt)?;

        let eval1 = self.rhs_stage(&f1, self.t + dt)?;
        let mut t2 = m0.clone();
        for ((m, m1), r1) in t2.data.iter_mut().zip(&eval1.moments.data).zip(&eval1.rhs.data) {
            *m = 0.75 * *m + 0.25 * (m1 + dt * r1);
        }
        let mut f2 = self.solve_stages(&t2, &f1)?;
        self.apply_limiter(&mut f2, self.t + 0.5 * dt)?;

        let eval2 = self.rhs_stage(&f2, self.t + 0.5 * dt)?;
        let mut t3 = m0.clone();
        for ((m, m2), r2) in t3.data.iter_mut().zip(&eval2.moments.data).zip(&eval2.rhs.data) {
            *m = *m / 3.0 + 2.0 / 3.0 * (m2 + dt * r2);
        }
        let mut f3 = self.solve_stages(&t3, &f2)?;
        self.apply_limiter(&mut f3, self.t + dt)?;
        Ok(f3)
    }

    pub fn advance_to(&mut self, t_final: f64) -> Result<()> {
        let eps = 1e-12 * t_final.abs().max(1.0);
        while self.t < t_final - eps {
            self.step(t_final - self.t)?;
        }
        Ok(())
    }

    pub fn sample_states(&mut self) -> Result<(Vec<[f64; N]>, Vec<[f64; N]>)> {
        let field = self.field.clone();
        let (ucache, _) = self.volume_states(&field)?;
        let npts = self.npts();
        let ncells = self.ctx.mesh.ncells();
        let mut us = Vec::with_capacity(ncells * npts);
        let mut vs = Vec::with_capacity(ncells * npts);
        for cell in 0..ncells {
            for q in 0..npts {
                let u: [f64; N] =
                    ucache[(cell * npts + q) * N..(cell * npts + q + 1) * N].try_into().unwrap();
                let mut v = [0.0; N];
                field.values(cell, self.ctx.tables.phi_row(q), &mut v);
                us.push(u);
                vs.push(v);
            }
        }
        Ok((us, vs))
    }

    pub fn total_conserved(&mut self) -> Result<[f64; N]> {
        let field = self.field.clone();
        let (ucache, _) = self.volume_states(&field)?;
        let npts = self.npts();
        let det_j = 0.25 * self.ctx.mesh.dx * self.ctx.mesh.dy;
        let mut tot = [0.0; N];
        for cell in 0..self.ctx.mesh.ncells() {
            for q in 0..npts {
                let wq = self.ctx.tables.wvol[q];
                for c in 0..N {
                    tot[c] += det_j * wq * ucache[(cell * npts + q) * N + c];
                }
            }
        }
        Ok(tot)
    }

    /// Equilibrium-variable polynomial value at an arbitrary point.
    pub fn eval_equil_at(&self, x: f64, y: f64) -> [f64; N] {
        let mesh = &self.ctx.mesh;
        let i = (((x - mesh.x_min) / mesh.dx).floor() as isize).clamp(0, mesh.nx as isize - 1) as usize;
        let j = (((y - mesh.y_min) / mesh.dy).floor() as isize).clamp(0, mesh.ny as isize - 1) as usize;
        let (xc, yc) = mesh.center(i, j);
        let xi = (2.0 * (x - xc) / mesh.dx).clamp(-1.0, 1.0);
        let eta = (2.0 * (y - yc) / mesh.dy).clamp(-1.0, 1.0);
        let mut phi = vec![0.0; self.ctx.tables.nmodes()];
        self.ctx.tables.basis.eval(xi, eta, &mut phi);
        let mut v = [0.0; N];
        self.field.values(mesh.cell(i, j), &phi, &mut v);
        v
    }

    pub fn eval_cons_at(&self, x: f64, y: f64) -> Result<[f64; N]> {
        let mesh = &self.ctx.mesh;
        let i = (((x - mesh.x_min) / mesh.dx).floor() as isize).clamp(0, mesh.nx as isize - 1) as usize;
        let j = (((y - mesh.y_min) / mesh.dy).floor() as isize).clamp(0, mesh.ny as isize - 1) as usize;
        let cell = mesh.cell(i, j);
        let regime = self.points.regimes_vol[cell * self.ctx.tables.npts];
        let v = self.eval_equil_at(x, y);
        self.ctx.model.equil_to_cons(&v, self.eval_omega_at(x, y), regime, None)
    }

    /// Projected-potential value at an arbitrary point.
    pub fn eval_omega_at(&self, x: f64, y: f64) -> f64 {
        let mesh = &self.ctx.mesh;
        let l = self.ctx.tables.nmodes();
        let i = (((x - mesh.x_min) / mesh.dx).floor() as isize).clamp(0, mesh.nx as isize - 1) as usize;
        let j = (((y - mesh.y_min) / mesh.dy).floor() as isize).clamp(0, mesh.ny as isize - 1) as usize;
        let cell = mesh.cell(i, j);
        let (xc, yc) = mesh.center(i, j);
        let xi = (2.0 * (x - xc) / mesh.dx).clamp(-1.0, 1.0);
        let eta = (2.0 * (y - yc) / mesh.dy).clamp(-1.0, 1.0);
        let mut phi = vec![0.0; l];
        self.ctx.tables.basis.eval(xi, eta, &mut phi);
        (0..l).map(|m| self.ctx.w_coeffs[cell * l + m] * phi[m]).sum()
    }
}

fn omega_face_mean<M: BalanceLaw<N>, const N: usize>(
    ctx: &Ctx2d<M, N>,
    cell: usize,
    face: Face2d,
) -> f64 {
    let l = ctx.tables.nmodes();
    let row = &ctx.tables.face_mean[face as usize];
    (0..l).map(|m| ctx.w_coeffs[cell * l + m] * row[m]).sum()
}

fn lf<M: BalanceLaw<N>, const N: usize>(
    model: &M,
    ul: &[f64; N],
    ur: &[f64; N],
    axis: usize,
    alpha: f64,
) -> [f64; N] {
    let fl = model.flux(ul, axis);
    let fr = model.flux(ur, axis);
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = 0.5 * (fl[i] + fr[i] - alpha * (ur[i] - ul[i]));
    }
    out
}

fn opt(warm: f64) -> Option<f64> {
    if warm > 0.0 {
        Some(warm)
    } else {
        None
    }
}

fn face_trace_of<const N: usize>(
    tables: &Tables2d,
    field: &DgField,
    cell: usize,
    face: Face2d,
    qt: usize,
) -> [f64; N] {
    let mut v = [0.0; N];
    field.values(cell, tables.face_phi_row(face, qt), &mut v);
    v
}

#[allow(clippy::too_many_arguments)]
fn exterior_of<M: BalanceLaw<N>, const N: usize>(
    ctx: &Ctx2d<M, N>,
    side: usize,
    v_int: &[f64; N],
    regime_int: Regime,
    x: f64,
    y: f64,
    w_int: f64,
    t: f64,
    prev_ext: Regime,
) -> Result<([f64; N], Regime)> {
    let axis = side / 2;
    match &ctx.boundary[side] {
        Boundary2d::Periodic => unreachable!("periodic boundaries are paired faces"),
        Boundary2d::Transmissive => Ok((*v_int, regime_int)),
        Boundary2d::SolidWall | Boundary2d::Reflective => Ok((mirror_equil(v_int, axis), regime_int)),
        Boundary2d::Ghost(g) => {
            let u = g(x, y, w_int, t);
            let v = ctx.model.cons_to_equil(&u, w_int)?;
            Ok((v, prev_ext))
        }
    }
}

fn numerical_flux_of<M: BalanceLaw<N>, const N: usize>(
    ctx: &Ctx2d<M, N>,
    ul: &[f64; N],
    ur: &[f64; N],
    axis: usize,
    alpha: f64,
) -> [f64; N] {
    let model = &ctx.model;
    match ctx.cfg.flux {
        FluxScheme::LaxFriedrichs => lf(model, ul, ur, axis, alpha),
        FluxScheme::Roe => match model.roe_flux(ul, ur, axis) {
            Some(f) => f,
            None => lf(model, ul, ur, axis, alpha),
        },
        FluxScheme::IsobaricModified => {
            let un_l = ul[1 + axis] / ul[0];
            let un_r = ur[1 + axis] / ur[0];
            let delta = crate::solver1d::isobaric_delta(un_l, un_r);
            lf(model, ul, ur, axis, alpha * delta)
        }
    }
}
