//! Shallow water equations with horizontal temperature gradients over
//! bathymetry b(x), pressure p = g h^2 theta / 2.
//!
//! Moving-water equilibrium variables V = (E, q, theta):
//!   E     = |q|^2 / (2 h^2) + g theta (h + b)
//!   q     = h u                       (discharge, copied)
//!   theta = (h theta) / h
//!
//! Inverting the transform solves the cubic
//!   g theta h^3 - (E - g b theta) h^2 + |q|^2 / 2 = 0,
//! whose three real roots h1 < 0 < h2 < h3 have closed trigonometric forms;
//! h2 is the supercritical and h3 the subcritical branch.

use super::{matmul, invert, BalanceLaw, Regime};
use crate::error::{Error, Result};

/// Absolute slack on the arccos argument at the admissibility boundary.
const ARG_SLACK: f64 = 1e-14;

/// Closed-form roots of g theta h^3 - (E - g b theta) h^2 + |q|^2/2 = 0 for
/// nonzero discharge, ordered h1 < 0 < h2 <= h3, with a guarded one-step
/// Newton polish on the positive roots (the trigonometric evaluation loses
/// digits near the double root).
pub fn cubic_roots(e: f64, q_abs: f64, theta: f64, b: f64, g: f64) -> Result<(f64, f64, f64)> {
    let gt = g * theta;
    let e_eff = e - g * b * theta;
    if !(gt > 0.0) {
        return Err(Error::state(format!("g*theta = {gt} must be positive")));
    }
    if !(e_eff > 0.0) {
        return Err(Error::NoEquilibrium(format!(
            "E - g b theta = {e_eff} not positive"
        )));
    }
    let msq = q_abs * q_abs;
    let l = -1.0 + 6.75 * gt * gt * msq / (e_eff * e_eff * e_eff);
    if l > 1.0 + ARG_SLACK || l < -1.0 - ARG_SLACK {
        return Err(Error::NoEquilibrium(format!(
            "energy below the critical value (arccos argument {l})"
        )));
    }
    let t = l.clamp(-1.0, 1.0).acos();
    let c = e_eff / (3.0 * gt);
    let (s3, c3) = (t / 3.0).sin_cos();
    let h1 = c * (1.0 - 2.0 * c3);
    let mut h2 = c * (1.0 + c3 - 3f64.sqrt() * s3);
    let mut h3 = c * (1.0 + c3 + 3f64.sqrt() * s3);

    let f = |h: f64| gt * h * h * h - e_eff * h * h + 0.5 * msq;
    let fp = |h: f64| 3.0 * gt * h * h - 2.0 * e_eff * h;
    let polish = |h: &mut f64| {
        for _ in 0..2 {
            let r = f(*h);
            let d = fp(*h);
            if r == 0.0 || d == 0.0 {
                break;
            }
            let cand = *h - r / d;
            if cand > 0.0 && f(cand).abs() < r.abs() {
                *h = cand;
            } else {
                break;
            }
        }
    };
    polish(&mut h2);
    polish(&mut h3);

    let scale = e_eff * e_eff * e_eff / (gt * gt);
    for h in [h2, h3] {
        if f(h).abs() > 1e-11 * scale {
            return Err(Error::Convergence(format!(
                "cubic residual {} exceeds bound at h = {h}",
                f(h).abs()
            )));
        }
    }
    Ok((h1, h2, h3))
}

/// Height solving the transform for the given regime.
pub fn solve_height(e: f64, q_abs: f64, theta: f64, b: f64, g: f64, regime: Regime) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::state(format!("temperature {theta} must be positive")));
    }
    if q_abs == 0.0 {
        let h = e / (g * theta) - b;
        if !(h > 0.0) {
            return Err(Error::state(format!(
                "still-water height {h} not positive (E = {e}, b = {b})"
            )));
        }
        return Ok(h);
    }
    if regime == Regime::Sonic {
        return Ok((q_abs * q_abs / (g * theta)).powf(1.0 / 3.0));
    }
    let (_, h2, h3) = cubic_roots(e, q_abs, theta, b, g)?;
    // supercritical flow takes the small root, subcritical the large one
    Ok(match regime {
        Regime::Supersonic => h2,
        Regime::Subsonic => h3,
        Regime::Sonic => unreachable!(),
    })
}

macro_rules! ripa_model {
    ($name:ident, $n:literal, $dim:literal, $label:literal, $cons:expr, $equil:expr) => {
        #[derive(Debug, Clone, Copy)]
        pub struct $name {
            pub g: f64,
        }

        impl $name {
            pub fn new(g: f64) -> Self {
                Self { g }
            }

            fn qsq(u: &[f64; $n]) -> f64 {
                let mut s = 0.0;
                for d in 0..$dim {
                    s += u[1 + d] * u[1 + d];
                }
                s
            }

            pub fn pressure(&self, u: &[f64; $n]) -> f64 {
                // p = g h^2 theta / 2 = g h (h theta) / 2
                0.5 * self.g * u[0] * u[$n - 1]
            }

            pub fn celerity(&self, u: &[f64; $n]) -> f64 {
                // c^2 = g h theta = g (h theta)
                (self.g * u[$n - 1]).sqrt()
            }
        }

        impl BalanceLaw<$n> for $name {
            const DIM: usize = $dim;

            fn name(&self) -> &'static str {
                $label
            }

            fn flux(&self, u: &[f64; $n], axis: usize) -> [f64; $n] {
                let h = u[0];
                let un = u[1 + axis] / h;
                let mut f = [0.0; $n];
                f[0] = u[1 + axis];
                for d in 0..$dim {
                    f[1 + d] = u[1 + d] * un;
                }
                f[1 + axis] += self.pressure(u);
                f[$n - 1] = u[$n - 1] * un;
                f
            }

            fn flux_jacobian(&self, u: &[f64; $n], axis: usize) -> [[f64; $n]; $n] {
                let h = u[0];
                let ht = u[$n - 1];
                let mut vel = [0.0; $dim];
                for d in 0..$dim {
                    vel[d] = u[1 + d] / h;
                }
                let a = vel[axis];
                let mut j = [[0.0; $n]; $n];
                j[0][1 + axis] = 1.0;
                for d in 0..$dim {
                    j[1 + d][0] = -vel[d] * a + if d == axis { 0.5 * self.g * ht } else { 0.0 };
                    for e in 0..$dim {
                        j[1 + d][1 + e] = if d == axis && e == axis {
                            2.0 * a
                        } else if d == e {
                            a
                        } else if e == axis {
                            vel[d]
                        } else {
                            0.0
                        };
                    }
                    if d == axis {
                        j[1 + d][$n - 1] = 0.5 * self.g * h;
                    }
                }
                j[$n - 1][0] = -ht * a / h;
                j[$n - 1][1 + axis] = ht / h;
                j[$n - 1][$n - 1] = a;
                j
            }

            fn source(&self, u: &[f64; $n], grad_w: [f64; 2]) -> [f64; $n] {
                // momentum source -g h theta b_x = -g (h theta) b_x
                let mut r = [0.0; $n];
                for d in 0..$dim {
                    r[1 + d] = -self.g * u[$n - 1] * grad_w[d];
                }
                r
            }

            fn max_wave_speed(&self, u: &[f64; $n], axis: usize) -> f64 {
                (u[1 + axis] / u[0]).abs() + self.celerity(u)
            }

            fn admissible(&self, u: &[f64; $n]) -> bool {
                u[0] > 0.0 && u[$n - 1] > 0.0
            }

            fn indicator(&self, u: &[f64; $n]) -> f64 {
                let speed = Self::qsq(u).sqrt() / u[0];
                speed / self.celerity(u)
            }

            fn cons_to_equil(&self, u: &[f64; $n], w: f64) -> Result<[f64; $n]> {
                let h = u[0];
                if !(h > 0.0) {
                    return Err(Error::state(format!("water height {h} not positive")));
                }
                let theta = u[$n - 1] / h;
                if !(theta > 0.0) {
                    return Err(Error::state(format!("temperature {theta} not positive")));
                }
                let e = 0.5 * Self::qsq(u) / (h * h) + self.g * theta * (h + w);
                let mut v = *u;
                v[0] = e;
                v[$n - 1] = theta;
                Ok(v)
            }

            fn equil_to_cons(
                &self,
                v: &[f64; $n],
                w: f64,
                regime: Regime,
                _warm: Option<f64>,
            ) -> Result<[f64; $n]> {
                let q_abs = Self::qsq(v).sqrt();
                let h = solve_height(v[0], q_abs, v[$n - 1], w, self.g, regime)?;
                let mut u = *v;
                u[0] = h;
                u[$n - 1] = h * v[$n - 1];
                Ok(u)
            }

            fn uv_pair(
                &self,
                e: f64,
                theta: f64,
                mom: &[f64],
                w: f64,
                regime: Regime,
                _warm: Option<f64>,
            ) -> Result<([f64; 2], [[f64; 2]; 2])> {
                let msq: f64 = mom.iter().map(|m| m * m).sum();
                let q_abs = msq.sqrt();
                let h = solve_height(e, q_abs, theta, w, self.g, regime)?;
                let g = self.g;
                let (dh_de, dh_dtheta);
                if q_abs == 0.0 {
                    dh_de = 1.0 / (g * theta);
                    dh_dtheta = -e / (g * theta * theta);
                } else {
                    let e_eff = e - g * w * theta;
                    let fh = 3.0 * g * theta * h * h - 2.0 * e_eff * h;
                    dh_de = h * h / fh;
                    dh_dtheta = -(g * h * h * h + g * w * h * h) / fh;
                }
                let jac = [
                    [dh_de, dh_dtheta],
                    [theta * dh_de, h + theta * dh_dtheta],
                ];
                Ok(([h, h * theta], jac))
            }

            fn limiter_matrix(
                &self,
                u_mean: &[f64; $n],
                w_mean: f64,
                axis: usize,
            ) -> Option<[[f64; $n]; $n]> {
                if !self.admissible(u_mean) {
                    return None;
                }
                // A = (dV/dW) (dF/dW) (dV/dW)^-1 with W = (h, q, theta)
                let h = u_mean[0];
                let theta = u_mean[$n - 1] / h;
                let g = self.g;
                let mut vel = [0.0; $dim];
                for d in 0..$dim {
                    vel[d] = u_mean[1 + d] / h;
                }
                let qsq = Self::qsq(u_mean);

                // dF_axis/dW
                let mut bm = [[0.0; $n]; $n];
                let a = vel[axis];
                bm[0][1 + axis] = 1.0;
                for d in 0..$dim {
                    bm[1 + d][0] = -vel[d] * a + if d == axis { g * h * theta } else { 0.0 };
                    for e in 0..$dim {
                        bm[1 + d][1 + e] = if d == axis && e == axis {
                            2.0 * a
                        } else if d == e {
                            a
                        } else if e == axis {
                            vel[d]
                        } else {
                            0.0
                        };
                    }
                    if d == axis {
                        bm[1 + d][$n - 1] = 0.5 * g * h * h;
                    }
                }
                bm[$n - 1][1 + axis] = theta;
                bm[$n - 1][$n - 1] = u_mean[1 + axis];

                // dV/dW
                let mut s = [[0.0; $n]; $n];
                s[0][0] = -qsq / (h * h * h) + g * theta;
                for d in 0..$dim {
                    s[0][1 + d] = u_mean[1 + d] / (h * h);
                    s[1 + d][1 + d] = 1.0;
                }
                s[0][$n - 1] = g * (h + w_mean);
                s[$n - 1][$n - 1] = 1.0;

                let s_inv = invert(&s)?;
                Some(matmul(&s, &matmul(&bm, &s_inv)))
            }

            fn cons_names(&self) -> [&'static str; $n] {
                $cons
            }

            fn equil_names(&self) -> [&'static str; $n] {
                $equil
            }

            fn derived_names(&self) -> Vec<&'static str> {
                if $dim == 1 {
                    vec!["p", "u", "surface"]
                } else {
                    vec!["p", "u", "v", "surface"]
                }
            }

            fn derived(&self, u: &[f64; $n], w: f64) -> Vec<f64> {
                let mut out = vec![self.pressure(u)];
                for d in 0..$dim {
                    out.push(u[1 + d] / u[0]);
                }
                out.push(u[0] + w);
                out
            }
        }
    };
}

ripa_model!(Ripa1d, 3, 1, "ripa-1d", ["h", "hu", "htheta"], ["E", "hu", "theta"]);
ripa_model!(
    Ripa2d,
    4,
    2,
    "ripa-2d",
    ["h", "hu", "hv", "htheta"],
    ["E", "hu", "hv", "theta"]
);

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn state(h: f64, u: f64, theta: f64) -> [f64; 3] {
        [h, h * u, h * theta]
    }

    #[test]
    fn lake_at_rest_flux() {
        let m = Ripa1d::new(1.0);
        assert_eq!(m.flux(&state(1.0, 0.0, 1.0), 0), [0.0, 0.5, 0.0]);
    }

    #[test]
    fn dam_break_left_state_mass_flux() {
        let m = Ripa1d::new(9.812);
        let f = m.flux(&state(2.0, 0.75, 1.0), 0);
        assert!((f[0] - 1.5).abs() <= 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences_and_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = Ripa1d::new(9.812);
        for _ in 0..50 {
            let h = rng.random_range(0.3..4.0);
            let u = rng.random_range(-3.0..3.0);
            let theta = rng.random_range(0.3..6.0);
            let s = state(h, u, theta);
            let j = m.flux_jacobian(&s, 0);
            let step = 1e-6;
            for col in 0..3 {
                let mut up = s;
                let mut um = s;
                let scale = s[col].abs().max(1.0);
                up[col] += step * scale;
                um[col] -= step * scale;
                let fp = m.flux(&up, 0);
                let fm = m.flux(&um, 0);
                for row in 0..3 {
                    let fd = (fp[row] - fm[row]) / (2.0 * step * scale);
                    assert!(
                        (j[row][col] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                        "J[{row}][{col}] = {} vs fd {fd}",
                        j[row][col]
                    );
                }
            }
            // u +- c are eigenvalues of the flux Jacobian
            let c = m.celerity(&s);
            for lambda in [u - c, u + c, u] {
                let a = nalgebra::Matrix3::from_fn(|r, cc| j[r][cc] - if r == cc { lambda } else { 0.0 });
                let svd = a.svd(false, false);
                let smin = svd.singular_values.min();
                let smax = svd.singular_values.max();
                assert!(smin <= 1e-8 * smax.max(1.0), "lambda {lambda} not an eigenvalue");
            }
        }
    }

    #[test]
    fn bathymetry_source_values() {
        let m1 = Ripa1d::new(1.0);
        assert_eq!(m1.source(&state(1.0, 0.0, 1.0), [0.0, 0.0]), [0.0; 3]);
        assert_eq!(m1.source(&state(1.0, 0.0, 1.0), [1.0, 0.0]), [0.0, -1.0, 0.0]);
        let m2 = Ripa1d::new(9.812);
        let r = m2.source(&state(2.0, 0.0, 5.0), [0.05, 0.0]);
        assert!((r[1] + 4.906).abs() <= 1e-12);
    }

    #[test]
    fn moving_equilibrium_variables_examples() {
        let m = Ripa1d::new(9.812);
        let v = m.cons_to_equil(&state(2.0, 0.0, 5.0), 0.0).unwrap();
        assert!((v[0] - 98.12).abs() <= 1e-12);
        assert!((v[2] - 5.0).abs() <= 1e-15);

        // subcritical channel state: E(x, 0) = 22.06605 * 5 at h = 2, b = 0
        let hu = 4.42 * 5.0f64.sqrt();
        let u = [2.0, hu, 10.0];
        let v = m.cons_to_equil(&u, 0.0).unwrap();
        assert!((v[0] - 22.06605 * 5.0).abs() <= 1e-9, "E = {}", v[0]);
    }

    #[test]
    fn cubic_roots_satisfy_polynomial_and_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut checked = 0;
        while checked < 1000 {
            let g = if rng.random_bool(0.5) { 9.812 } else { 1.0 };
            let theta = rng.random_range(0.3..6.0);
            let hu: f64 = rng.random_range(-20.0..20.0);
            let b = rng.random_range(0.0..0.4);
            let e_min = 1.5 * (g * theta * hu.abs()).powf(2.0 / 3.0) + g * b * theta;
            let e = e_min * rng.random_range(1.001..3.0);
            if hu == 0.0 {
                continue;
            }
            let (h1, h2, h3) = match cubic_roots(e, hu.abs(), theta, b, g) {
                Ok(r) => r,
                Err(_) => continue,
            };
            checked += 1;
            assert!(h1 < 0.0 && 0.0 < h2 && h2 < h3, "ordering {h1} {h2} {h3}");
            let e_eff = e - g * b * theta;
            let scale = e_eff * e_eff * e_eff / (g * theta * g * theta);
            for h in [h1, h2, h3] {
                let res = g * theta * h * h * h - e_eff * h * h + 0.5 * hu * hu;
                assert!(res.abs() <= 1e-11 * scale, "residual {res} at h = {h}");
            }
        }
    }

    #[test]
    fn double_root_at_critical_energy() {
        // g = theta = 1, hu = 1: E = 3/2 gives the sonic double root h = 1
        let (_, h2, h3) = cubic_roots(1.5, 1.0, 1.0, 0.0, 1.0).unwrap();
        assert!((h2 - 1.0).abs() <= 1e-7, "h2 = {h2}");
        assert!((h3 - 1.0).abs() <= 1e-7, "h3 = {h3}");
        let h_sonic = solve_height(1.5, 1.0, 1.0, 0.0, 1.0, Regime::Sonic).unwrap();
        assert!((h_sonic - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn admissibility_boundary_matches_arccos_domain() {
        // just below the critical energy the transform must fail
        let e_min = 1.5f64;
        assert!(cubic_roots(e_min * (1.0 - 1e-6), 1.0, 1.0, 0.0, 1.0).is_err());
        // at and slightly above it must succeed
        assert!(cubic_roots(e_min, 1.0, 1.0, 0.0, 1.0).is_ok());
        assert!(cubic_roots(e_min * (1.0 + 1e-12), 1.0, 1.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn still_water_height() {
        let m = Ripa1d::new(1.0);
        let u = m.equil_to_cons(&[2.0, 0.0, 1.0], 0.0, Regime::Subsonic, None).unwrap();
        assert_eq!(u[0], 2.0);
        assert_eq!(u[2], 2.0);
    }

    #[test]
    fn subcritical_boundary_height_is_two() {
        // the subcritical root at the channel outflow (b = 0) recovers h = 2
        let m = Ripa1d::new(9.812);
        let hu = 4.42 * 5.0f64.sqrt();
        let v = [22.06605 * 5.0, hu, 5.0];
        let u = m.equil_to_cons(&v, 0.0, Regime::Subsonic, None).unwrap();
        assert!((u[0] - 2.0).abs() <= 1e-9, "h = {}", u[0]);
    }

    #[test]
    fn round_trip_randomized_per_regime() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = Ripa1d::new(9.812);
        let mut done = [0usize; 2];
        while done[0] < 1000 || done[1] < 1000 {
            let h = rng.random_range(0.1..5.0);
            let u: f64 = rng.random_range(-6.0..6.0);
            let theta = rng.random_range(0.2..6.0);
            let b = rng.random_range(0.0..0.4);
            let s = state(h, u, theta);
            let fr = m.indicator(&s);
            if (fr - 1.0).abs() < 1e-2 {
                continue;
            }
            let regime = if fr < 1.0 { Regime::Subsonic } else { Regime::Supersonic };
            let idx = if fr < 1.0 { 0 } else { 1 };
            if done[idx] >= 1000 {
                continue;
            }
            done[idx] += 1;
            let v = m.cons_to_equil(&s, b).unwrap();
            let back = m.equil_to_cons(&v, b, regime, None).unwrap();
            for i in 0..3 {
                assert!(
                    (back[i] - s[i]).abs() <= 1e-12 * (1.0 + s[i].abs()),
                    "state {s:?} regime {regime:?} back {back:?}"
                );
            }
        }
    }

    #[test]
    fn froude_classification_matches_root_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let m = Ripa1d::new(9.812);
        let mut checked = 0;
        while checked < 200 {
            let theta = rng.random_range(0.3..6.0);
            let hu: f64 = rng.random_range(-10.0..10.0);
            if hu.abs() < 0.1 {
                continue;
            }
            let e_min = 1.5 * (9.812 * theta * hu.abs()).powf(2.0 / 3.0);
            let e = e_min * rng.random_range(1.01..2.5);
            let (_, h2, h3) = cubic_roots(e, hu.abs(), theta, 0.0, 9.812).unwrap();
            checked += 1;
            let u2 = [h2, hu, h2 * theta];
            let u3 = [h3, hu, h3 * theta];
            assert!(m.indicator(&u2) > 1.0, "small root must be supercritical");
            assert!(m.indicator(&u3) < 1.0, "large root must be subcritical");
        }
    }

    #[test]
    fn root_sensitivity_matches_implicit_derivative() {
        let m = Ripa1d::new(9.812);
        let v = [110.33025, 4.42 * 5.0f64.sqrt(), 5.0];
        let b = 0.1;
        let h = m.equil_to_cons(&v, b, Regime::Subsonic, None).unwrap()[0];
        let (_, jac) = m.uv_pair(v[0], v[2], &[v[1]], b, Regime::Subsonic, None).unwrap();
        let step = 1e-6;
        let hp = m.equil_to_cons(&[v[0] + step, v[1], v[2]], b, Regime::Subsonic, None).unwrap()[0];
        let hm = m.equil_to_cons(&[v[0] - step, v[1], v[2]], b, Regime::Subsonic, None).unwrap()[0];
        let fd = (hp - hm) / (2.0 * step);
        assert!((jac[0][0] - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "dh/dE {} vs {fd}", jac[0][0]);
        let _ = h;
    }

    #[test]
    fn pair_jacobian_matches_finite_differences() {
        let m = Ripa1d::new(9.812);
        for (v, regime) in [
            ([110.33025, 4.42 * 5.0f64.sqrt(), 5.0], Regime::Subsonic),
            ([458.12, 24.0 * 5.0f64.sqrt(), 5.0], Regime::Supersonic),
            ([98.12, 0.0, 5.0], Regime::Subsonic),
        ] {
            let b = 0.12;
            let mom = [v[1]];
            let (_, jac) = m.uv_pair(v[0], v[2], &mom, b, regime, None).unwrap();
            let step = 1e-6;
            for (col, (da, db)) in [(step, 0.0), (0.0, step)].iter().enumerate() {
                let (vp, _) = m.uv_pair(v[0] + da, v[2] + db, &mom, b, regime, None).unwrap();
                let (vm, _) = m.uv_pair(v[0] - da, v[2] - db, &mom, b, regime, None).unwrap();
                for row in 0..2 {
                    let fd = (vp[row] - vm[row]) / (2.0 * step);
                    assert!(
                        (jac[row][col] - fd).abs() <= 1e-4 * (1.0 + fd.abs()),
                        "pair J[{row}][{col}] {} vs {fd} (regime {regime:?})",
                        jac[row][col]
                    );
                }
            }
        }
    }

    #[test]
    fn still_water_profile_has_constant_equilibrium_variables() {
        // h + b = 3, theta = 4/3 over a smooth bump
        let m = Ripa2d::new(9.812);
        let bot = crate::omega::Omega::TwoGaussians;
        let (mut emin, mut emax) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..=50 {
            for j in 0..=50 {
                let x = -1.0 + 2.0 * i as f64 / 50.0;
                let y = -1.0 + 2.0 * j as f64 / 50.0;
                let b = bot.eval(x, y);
                let h = 3.0 - b;
                let u = [h, 0.0, 0.0, h * 4.0 / 3.0];
                let v = m.cons_to_equil(&u, b).unwrap();
                emin = emin.min(v[0]);
                emax = emax.max(v[0]);
            }
        }
        assert!(emax - emin <= 1e-13 * emax.abs(), "E spread {}", emax - emin);
    }
}
