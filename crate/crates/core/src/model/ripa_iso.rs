//! Isobaric equilibrium variables for the Ripa model: V = (h, u, p) resp.
//! (h, u, v, p) with p = g h^2 theta / 2. The transform is algebraic in both
//! directions, and the per-cell stage system factors into a triangular
//! sequence of linear solves: h directly, then each velocity against the
//! weight h, then p against the weight (2/g)/h.

use super::{BalanceLaw, Regime, StageStrategy};
use crate::error::{Error, Result};
use crate::model::ripa::{Ripa1d, Ripa2d};

macro_rules! ripa_iso_model {
    ($name:ident, $inner:ident, $n:literal, $dim:literal, $label:literal, $equil:expr) => {
        #[derive(Debug, Clone, Copy)]
        pub struct $name {
            pub g: f64,
            inner: $inner,
        }

        impl $name {
            pub fn new(g: f64) -> Self {
                Self {
                    g,
                    inner: $inner::new(g),
                }
            }
        }

        impl BalanceLaw<$n> for $name {
            const DIM: usize = $dim;

            fn name(&self) -> &'static str {
                $label
            }

            fn flux(&self, u: &[f64; $n], axis: usize) -> [f64; $n] {
                self.inner.flux(u, axis)
            }

            fn flux_jacobian(&self, u: &[f64; $n], axis: usize) -> [[f64; $n]; $n] {
                self.inner.flux_jacobian(u, axis)
            }

            fn source(&self, u: &[f64; $n], grad_w: [f64; 2]) -> [f64; $n] {
                self.inner.source(u, grad_w)
            }

            fn max_wave_speed(&self, u: &[f64; $n], axis: usize) -> f64 {
                self.inner.max_wave_speed(u, axis)
            }

            fn admissible(&self, u: &[f64; $n]) -> bool {
                self.inner.admissible(u)
            }

            fn indicator(&self, u: &[f64; $n]) -> f64 {
                self.inner.indicator(u)
            }

            fn cons_to_equil(&self, u: &[f64; $n], _w: f64) -> Result<[f64; $n]> {
                let h = u[0];
                if !(h > 0.0) {
                    return Err(Error::state(format!("water height {h} not positive")));
                }
                let mut v = [0.0; $n];
                v[0] = h;
                for d in 0..$dim {
                    v[1 + d] = u[1 + d] / h;
                }
                v[$n - 1] = 0.5 * self.g * h * u[$n - 1];
                Ok(v)
            }

            fn equil_to_cons(
                &self,
                v: &[f64; $n],
                _w: f64,
                _regime: Regime,
                _warm: Option<f64>,
            ) -> Result<[f64; $n]> {
                let h = v[0];
                if !(h > 0.0) {
                    return Err(Error::state(format!("water height {h} not positive")));
                }
                let mut u = [0.0; $n];
                u[0] = h;
                for d in 0..$dim {
                    u[1 + d] = h * v[1 + d];
                }
                u[$n - 1] = 2.0 / self.g * v[$n - 1] / h;
                Ok(u)
            }

            fn stage_strategy(&self) -> StageStrategy {
                StageStrategy::LinearCascade
            }

            fn cascade_weight(&self, comp: usize, lead: f64) -> f64 {
                if comp == $n - 1 {
                    2.0 / (self.g * lead)
                } else {
                    lead
                }
            }

            fn limiter_matrix(
                &self,
                _u_mean: &[f64; $n],
                _w_mean: f64,
                _axis: usize,
            ) -> Option<[[f64; $n]; $n]> {
                // component-wise limiting for the isobaric variable set
                None
            }

            fn cons_names(&self) -> [&'static str; $n] {
                self.inner.cons_names()
            }

            fn equil_names(&self) -> [&'static str; $n] {
                $equil
            }

            fn derived_names(&self) -> Vec<&'static str> {
                self.inner.derived_names()
            }

            fn derived(&self, u: &[f64; $n], w: f64) -> Vec<f64> {
                self.inner.derived(u, w)
            }
        }
    };
}

ripa_iso_model!(RipaIso1d, Ripa1d, 3, 1, "ripa-iso-1d", ["h", "u", "p"]);
ripa_iso_model!(RipaIso2d, Ripa2d, 4, 2, "ripa-iso-2d", ["h", "u", "v", "p"]);

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_pressure_across_the_jump() {
        let m = RipaIso1d::new(1.0);
        // (h, u, theta) = (2 sqrt(2), 0, 1) and (1, 0, 8) both give p = 4
        let left = [2.0 * 2.0f64.sqrt(), 0.0, 2.0 * 2.0f64.sqrt()];
        let right = [1.0, 0.0, 8.0];
        let vl = m.cons_to_equil(&left, 0.0).unwrap();
        let vr = m.cons_to_equil(&right, 0.0).unwrap();
        assert!((vl[2] - 4.0).abs() <= 1e-14);
        assert!((vr[2] - 4.0).abs() <= 1e-14);
    }

    #[test]
    fn transforms_are_exact_mutual_inverses() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = RipaIso1d::new(9.812);
        for _ in 0..1000 {
            let h = rng.random_range(0.1..5.0);
            let u = rng.random_range(-4.0..4.0);
            let theta = rng.random_range(0.2..6.0);
            let s = [h, h * u, h * theta];
            let v = m.cons_to_equil(&s, 0.0).unwrap();
            let back = m.equil_to_cons(&v, 0.0, Regime::Subsonic, None).unwrap();
            for i in 0..3 {
                assert!((back[i] - s[i]).abs() <= 1e-15 * (1.0 + s[i].abs()) * 8.0);
            }
        }
    }

    #[test]
    fn cascade_weights_reproduce_the_transform() {
        let m = RipaIso2d::new(2.5);
        let h = 1.7;
        let v = [h, 0.3, -0.2, 4.1];
        let u = m.equil_to_cons(&v, 0.0, Regime::Subsonic, None).unwrap();
        for comp in 1..4 {
            let w = m.cascade_weight(comp, h);
            assert!((w * v[comp] - u[comp]).abs() <= 1e-14 * (1.0 + u[comp].abs()));
        }
    }
}
