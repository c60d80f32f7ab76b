//! Orthonormal modal Legendre bases on the reference cell.
//!
//! The 1D modes are phi_j(xi) = sqrt((2j+1)/2) P_j(xi) on [-1, 1], so the
//! reference-cell mass matrix is the identity and modal projection needs no
//! linear solve. The 2D space is the total-degree space P^k spanned by
//! phi_m(xi) phi_n(eta) with m + n <= k, of dimension (k+1)(k+2)/2.
//!
//! Evaluation goes through the three-term recurrence, which is parity-exact
//! in floating point: phi_j(-xi) is bitwise +/- phi_j(xi). Together with the
//! mirror-symmetric quadrature this keeps modal projections of constants free
//! of odd-mode round-off.

use crate::quadrature::Quadrature;

/// Legendre values P_0..P_k at x.
fn legendre_values(k: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if k == 0 {
        return;
    }
    out[1] = x;
    for j in 1..k {
        let jf = j as f64;
        out[j + 1] = ((2.0 * jf + 1.0) * x * out[j] - jf * out[j - 1]) / (jf + 1.0);
    }
}

/// Legendre values and derivatives at x, via P'_{j+1} = P'_{j-1} + (2j+1) P_j.
fn legendre_values_derivs(k: usize, x: f64, val: &mut [f64], der: &mut [f64]) {
    legendre_values(k, x, val);
    der[0] = 0.0;
    if k == 0 {
        return;
    }
    der[1] = 1.0;
    for j in 1..k {
        der[j + 1] = der[j - 1] + (2.0 * j as f64 + 1.0) * val[j];
    }
}

/// One-dimensional modal basis of degree k (k + 1 modes).
#[derive(Debug, Clone)]
pub struct Basis1d {
    pub degree: usize,
    pub nmodes: usize,
    norms: Vec<f64>,
}

/// Factor mapping the first modal coefficient to the cell mean in 1D.
pub const MEAN_FACTOR_1D: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// Factor mapping the (0,0) modal coefficient to the cell mean in 2D.
pub const MEAN_FACTOR_2D: f64 = 0.5;

impl Basis1d {
    pub fn new(degree: usize) -> Self {
        let norms = (0..=degree)
            .map(|j| ((2.0 * j as f64 + 1.0) / 2.0).sqrt())
            .collect();
        Basis1d {
            degree,
            nmodes: degree + 1,
            norms,
        }
    }

    /// Mode values at a reference coordinate.
    pub fn eval(&self, xi: f64, out: &mut [f64]) {
        legendre_values(self.degree, xi, out);
        for (v, n) in out.iter_mut().zip(&self.norms) {
            *v *= n;
        }
    }

    /// Mode values and reference-coordinate derivatives.
    pub fn eval_with_deriv(&self, xi: f64, val: &mut [f64], der: &mut [f64]) {
        legendre_values_derivs(self.degree, xi, val, der);
        for j in 0..self.nmodes {
            val[j] *= self.norms[j];
            der[j] *= self.norms[j];
        }
    }

    /// Coefficient that represents the constant `v` in mode 0 (phi_0 = 1/sqrt(2)).
    pub fn constant_coefficient(v: f64) -> f64 {
        v * std::f64::consts::SQRT_2
    }
}

/// Precomputed 1D basis tables on a quadrature rule.
#[derive(Debug, Clone)]
pub struct Tables1d {
    pub basis: Basis1d,
    pub quad: Quadrature,
    /// phi[q * nmodes + j]
    pub phi: Vec<f64>,
    /// d phi / d xi at the quadrature nodes
    pub dphi: Vec<f64>,
    /// traces at xi = -1 and xi = +1
    pub phi_left: Vec<f64>,
    pub phi_right: Vec<f64>,
}

impl Tables1d {
    pub fn new(degree: usize, npts: usize) -> Self {
        let basis = Basis1d::new(degree);
        let quad = Quadrature::gauss_legendre(npts);
        let l = basis.nmodes;
        let mut phi = vec![0.0; npts * l];
        let mut dphi = vec![0.0; npts * l];
        for (q, &x) in quad.nodes.iter().enumerate() {
            let mut val = vec![0.0; l];
            let mut der = vec![0.0; l];
            basis.eval_with_deriv(x, &mut val, &mut der);
            phi[q * l..(q + 1) * l].copy_from_slice(&val);
            dphi[q * l..(q + 1) * l].copy_from_slice(&der);
        }
        let mut phi_right = vec![0.0; l];
        basis.eval(1.0, &mut phi_right);
        // phi_j(-1) = (-1)^j phi_j(1), bitwise, so the two traces of a
        // symmetric polynomial cancel exactly.
        let phi_left: Vec<f64> = phi_right
            .iter()
            .enumerate()
            .map(|(j, &v)| if j % 2 == 0 { v } else { -v })
            .collect();
        Tables1d {
            basis,
            quad,
            phi,
            dphi,
            phi_left,
            phi_right,
        }
    }

    pub fn nmodes(&self) -> usize {
        self.basis.nmodes
    }

    pub fn npts(&self) -> usize {
        self.quad.len()
    }

    pub fn phi_row(&self, q: usize) -> &[f64] {
        let l = self.nmodes();
        &self.phi[q * l..(q + 1) * l]
    }

    pub fn dphi_row(&self, q: usize) -> &[f64] {
        let l = self.nmodes();
        &self.dphi[q * l..(q + 1) * l]
    }

    /// Value of the polynomial with the given coefficients at node q.
    pub fn value_at(&self, coeffs: &[f64], q: usize) -> f64 {
        dot(coeffs, self.phi_row(q))
    }

    /// L2 projection of samples at the quadrature nodes onto the modes.
    /// Symmetric accumulation: projecting a constant gives exact zeros on
    /// every odd mode.
    pub fn project(&self, samples: &[f64], coeffs: &mut [f64]) {
        let l = self.nmodes();
        for (j, c) in coeffs.iter_mut().enumerate().take(l) {
            *c = self
                .quad
                .sum_symmetric(|q| self.quad.weights[q] * samples[q] * self.phi[q * l + j]);
        }
    }
}

/// Two-dimensional total-degree basis P^k with tensor-product Legendre modes.
#[derive(Debug, Clone)]
pub struct Basis2d {
    pub degree: usize,
    pub nmodes: usize,
    /// (m, n) exponents per mode, graded lexicographic
    pub modes: Vec<(usize, usize)>,
    basis1: Basis1d,
}

impl Basis2d {
    pub fn new(degree: usize) -> Self {
        let mut modes = Vec::new();
        for total in 0..=degree {
            for m in (0..=total).rev() {
                modes.push((m, total - m));
            }
        }
        let nmodes = modes.len();
        debug_assert_eq!(nmodes, (degree + 1) * (degree + 2) / 2);
        Basis2d {
            degree,
            nmodes,
            modes,
            basis1: Basis1d::new(degree),
        }
    }

    pub fn eval(&self, xi: f64, eta: f64, out: &mut [f64]) {
        let l1 = self.degree + 1;
        let mut px = vec![0.0; l1];
        let mut py = vec![0.0; l1];
        self.basis1.eval(xi, &mut px);
        self.basis1.eval(eta, &mut py);
        for (j, &(m, n)) in self.modes.iter().enumerate() {
            out[j] = px[m] * py[n];
        }
    }
}

/// Cell faces of a rectangular cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face2d {
    XLo = 0,
    XHi = 1,
    YLo = 2,
    YHi = 3,
}

/// Precomputed 2D basis tables: volume nodes are the tensor grid of a 1D rule
/// (x fastest), face nodes reuse the same 1D rule along each edge.
#[derive(Debug, Clone)]
pub struct Tables2d {
    pub basis: Basis2d,
    pub quad1: Quadrature,
    pub nq1: usize,
    pub npts: usize,
    /// volume weights w_qx * w_qy, matching the point ordering
    pub wvol: Vec<f64>,
    pub phi: Vec<f64>,
    pub dxi: Vec<f64>,
    pub deta: Vec<f64>,
    /// per face: phi at the nq1 face nodes, [nq1 * nmodes]
    pub face_phi: [Vec<f64>; 4],
    /// per face: exact mean of each mode over the face
    pub face_mean: [Vec<f64>; 4],
}

impl Tables2d {
    pub fn new(degree: usize, npts1: usize) -> Self {
        let basis = Basis2d::new(degree);
        let quad1 = Quadrature::gauss_legendre(npts1);
        let l = basis.nmodes;
        let l1 = degree + 1;
        let nq1 = quad1.len();
        let npts = nq1 * nq1;

        let mut val1 = vec![0.0; nq1 * l1];
        let mut der1 = vec![0.0; nq1 * l1];
        let b1 = Basis1d::new(degree);
        for (q, &x) in quad1.nodes.iter().enumerate() {
            let mut v = vec![0.0; l1];
            let mut d = vec![0.0; l1];
            b1.eval_with_deriv(x, &mut v, &mut d);
            val1[q * l1..(q + 1) * l1].copy_from_slice(&v);
            der1[q * l1..(q + 1) * l1].copy_from_slice(&d);
        }

        let mut wvol = vec![0.0; npts];
        let mut phi = vec![0.0; npts * l];
        let mut dxi = vec![0.0; npts * l];
        let mut deta = vec![0.0; npts * l];
        for qy in 0..nq1 {
            for qx in 0..nq1 {
                let q = qy * nq1 + qx;
                wvol[q] = quad1.weights[qx] * quad1.weights[qy];
                for (j, &(m, n)) in basis.modes.iter().enumerate() {
                    phi[q * l + j] = val1[qx * l1 + m] * val1[qy * l1 + n];
                    dxi[q * l + j] = der1[qx * l1 + m] * val1[qy * l1 + n];
                    deta[q * l + j] = val1[qx * l1 + m] * der1[qy * l1 + n];
                }
            }
        }

        let mut edge_plus = vec![0.0; l1];
        b1.eval(1.0, &mut edge_plus);
        let edge_minus: Vec<f64> = edge_plus
            .iter()
            .enumerate()
            .map(|(j, &v)| if j % 2 == 0 { v } else { -v })
            .collect();

        let mut face_phi: [Vec<f64>; 4] = Default::default();
        let mut face_mean: [Vec<f64>; 4] = Default::default();
        for face in 0..4 {
            let mut fphi = vec![0.0; nq1 * l];
            let mut fmean = vec![0.0; l];
            for qt in 0..nq1 {
                for (j, &(m, n)) in basis.modes.iter().enumerate() {
                    fphi[qt * l + j] = match face {
                        0 => edge_minus[m] * val1[qt * l1 + n],
                        1 => edge_plus[m] * val1[qt * l1 + n],
                        2 => val1[qt * l1 + m] * edge_minus[n],
                        _ => val1[qt * l1 + m] * edge_plus[n],
                    };
                }
            }
            // mean over the face: the tangential factor integrates to
            // sqrt(2) delta_{j0}, i.e. mean factor 1/sqrt(2) on the first mode
            for (j, &(m, n)) in basis.modes.iter().enumerate() {
                let f = std::f64::consts::FRAC_1_SQRT_2;
                fmean[j] = match face {
                    0 => {
                        if n == 0 {
                            edge_minus[m] * f
                        } else {
                            0.0
                        }
                    }
                    1 => {
                        if n == 0 {
                            edge_plus[m] * f
                        } else {
                            0.0
                        }
                    }
                    2 => {
                        if m == 0 {
                            edge_minus[n] * f
                        } else {
                            0.0
                        }
                    }
                    _ => {
                        if m == 0 {
                            edge_plus[n] * f
                        } else {
                            0.0
                        }
                    }
                };
            }
            face_phi[face] = fphi;
            face_mean[face] = fmean;
        }

        Tables2d {
            basis,
            quad1,
            nq1,
            npts,
            wvol,
            phi,
            dxi,
            deta,
            face_phi,
            face_mean,
        }
    }

    pub fn nmodes(&self) -> usize {
        self.basis.nmodes
    }

    pub fn phi_row(&self, q: usize) -> &[f64] {
        let l = self.nmodes();
        &self.phi[q * l..(q + 1) * l]
    }

    pub fn face_phi_row(&self, face: Face2d, qt: usize) -> &[f64] {
        let l = self.nmodes();
        &self.face_phi[face as usize][qt * l..(qt + 1) * l]
    }

    /// Volume projection with symmetric accumulation in both directions.
    pub fn project(&self, samples: &[f64], coeffs: &mut [f64]) {
        let l = self.nmodes();
        let nq = self.nq1;
        for (j, c) in coeffs.iter_mut().enumerate().take(l) {
            *c = self.quad1.sum_symmetric(|qy| {
                let inner = self.quad1.sum_symmetric(|qx| {
                    let q = qy * nq + qx;
                    self.quad1.weights[qx] * samples[q] * self.phi[q * l + j]
                });
                self.quad1.weights[qy] * inner
            });
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_matrix_is_identity_1d() {
        let t = Tables1d::new(2, 5);
        let l = t.nmodes();
        for i in 0..l {
            for j in 0..l {
                let g: f64 = (0..t.npts())
                    .map(|q| t.quad.weights[q] * t.phi[q * l + i] * t.phi[q * l + j])
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - expect).abs() <= 1e-13, "G[{i}][{j}] = {g}");
            }
        }
    }

    #[test]
    fn gram_matrix_is_identity_2d() {
        let t = Tables2d::new(2, 5);
        let l = t.nmodes();
        assert_eq!(l, 6);
        for i in 0..l {
            for j in 0..l {
                let g: f64 = (0..t.npts)
                    .map(|q| t.wvol[q] * t.phi[q * l + i] * t.phi[q * l + j])
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - expect).abs() <= 1e-13, "G[{i}][{j}] = {g}");
            }
        }
    }

    #[test]
    fn constant_projects_to_mode_zero_only() {
        let t = Tables1d::new(2, 5);
        let samples = vec![3.25; t.npts()];
        let mut c = vec![0.0; t.nmodes()];
        t.project(&samples, &mut c);
        // mode 0 carries the constant: c0 * phi_0 = 3.25
        assert!((c[0] * std::f64::consts::FRAC_1_SQRT_2 - 3.25).abs() <= 1e-14);
        // odd modes cancel bitwise under symmetric accumulation
        assert_eq!(c[1], 0.0);
        assert!(c[2].abs() <= 1e-15);
    }

    #[test]
    fn polynomial_reproduction_1d() {
        // project a quadratic; evaluation must reproduce it to round-off
        let t = Tables1d::new(2, 5);
        let f = |x: f64| 0.3 - 1.7 * x + 0.9 * x * x;
        let samples: Vec<f64> = t.quad.nodes.iter().map(|&x| f(x)).collect();
        let mut c = vec![0.0; t.nmodes()];
        t.project(&samples, &mut c);
        for &x in &[-1.0, -0.33, 0.0, 0.71, 1.0] {
            let mut phi = vec![0.0; 3];
            t.basis.eval(x, &mut phi);
            let v = dot(&c, &phi);
            assert!((v - f(x)).abs() <= 1e-14);
        }
    }

    #[test]
    fn linear_projection_has_no_quadratic_mode() {
        let t = Tables1d::new(2, 5);
        let samples: Vec<f64> = t.quad.nodes.iter().map(|&x| 2.0 * x + 1.0).collect();
        let mut c = vec![0.0; t.nmodes()];
        t.project(&samples, &mut c);
        assert!(c[2].abs() <= 1e-15);
    }

    #[test]
    fn polynomial_reproduction_2d() {
        let t = Tables2d::new(2, 5);
        let f = |x: f64, y: f64| 1.0 + 0.5 * x - y + 0.25 * x * y + x * x - 0.4 * y * y;
        let mut samples = vec![0.0; t.npts];
        for qy in 0..t.nq1 {
            for qx in 0..t.nq1 {
                samples[qy * t.nq1 + qx] = f(t.quad1.nodes[qx], t.quad1.nodes[qy]);
            }
        }
        let mut c = vec![0.0; t.nmodes()];
        t.project(&samples, &mut c);
        let mut phi = vec![0.0; t.nmodes()];
        for &(x, y) in &[(-1.0, -1.0), (0.3, -0.7), (1.0, 1.0), (0.0, 0.0)] {
            t.basis.eval(x, y, &mut phi);
            assert!((dot(&c, &phi) - f(x, y)).abs() <= 1e-13);
        }
    }

    #[test]
    fn traces_match_endpoint_evaluation() {
        let t = Tables1d::new(2, 5);
        let c = [0.4, -0.9, 1.3];
        let left = dot(&c, &t.phi_left);
        let right = dot(&c, &t.phi_right);
        let mut phi = vec![0.0; 3];
        t.basis.eval(-1.0, &mut phi);
        assert!((left - dot(&c, &phi)).abs() <= 1e-15);
        t.basis.eval(1.0, &mut phi);
        assert!((right - dot(&c, &phi)).abs() <= 1e-15);
    }

    #[test]
    fn projection_is_idempotent() {
        let t = Tables1d::new(2, 5);
        let samples: Vec<f64> = t.quad.nodes.iter().map(|&x| (1.3 * x).sin()).collect();
        let mut c1 = vec![0.0; 3];
        t.project(&samples, &mut c1);
        let resampled: Vec<f64> = (0..t.npts()).map(|q| t.value_at(&c1, q)).collect();
        let mut c2 = vec![0.0; 3];
        t.project(&resampled, &mut c2);
        for j in 0..3 {
            assert!((c1[j] - c2[j]).abs() <= 2e-14 * (1.0 + c1[j].abs()));
        }
    }

    #[test]
    fn sine_projection_error_is_third_order() {
        // project sin(2 pi x) on a cell of width 0.01 and compare against a
        // dense sampling of the interval
        let t = Tables1d::new(2, 5);
        let (x0, dx) = (0.0, 0.01);
        let f = |x: f64| (2.0 * std::f64::consts::PI * x).sin();
        let samples: Vec<f64> = t
            .quad
            .nodes
            .iter()
            .map(|&xi| f(x0 + 0.5 * dx * (xi + 1.0)))
            .collect();
        let mut c = vec![0.0; 3];
        t.project(&samples, &mut c);
        let mut err_max: f64 = 0.0;
        let mut phi = vec![0.0; 3];
        for i in 0..=1000 {
            let xi = -1.0 + 2.0 * i as f64 / 1000.0;
            t.basis.eval(xi, &mut phi);
            let x = x0 + 0.5 * dx * (xi + 1.0);
            err_max = err_max.max((dot(&c, &phi) - f(x)).abs());
        }
        // |f'''| ~ (2 pi)^3 ~ 248; C dx^3 with a generous constant
        assert!(err_max <= 248.0 * dx.powi(3), "L-inf projection error {err_max}");
    }
}
