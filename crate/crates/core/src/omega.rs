//! Gravitational potentials and bottom topographies.
//!
//! The potential enters the scheme only through pointwise values at
//! quadrature and trace points, evaluated analytically (never projected into
//! the DG space). Discontinuous bathymetries are evaluated one-sidedly at
//! faces; their jumps must sit on cell interfaces.

/// sin(z)/z with a series branch near zero.
pub fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

/// d/dz [sin(z)/z] / z = (z cos z - sin z) / z^3, series branch near zero.
pub fn sinc_deriv_over_z(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        -1.0 / 3.0 + z2 / 30.0 - z2 * z2 / 840.0
    } else {
        (z * z.cos() - z.sin()) / (z * z * z)
    }
}

/// Named analytic potential/bathymetry profiles.
#[derive(Debug, Clone, PartialEq)]
pub enum Omega {
    Zero,
    /// a*x + b*y
    Linear { a: f64, b: f64 },
    /// x^2 / 2
    HalfSquare,
    /// sin(2 pi x)
    Sine2Pi,
    /// bump 0.2 - 0.05 (x - 10)^2 on [8, 12], zero elsewhere
    ChannelBump,
    /// two cosine bumps on [-0.4,-0.2] and [0.2, 0.4]
    TwoCosineBumps,
    /// rectangular step of the given height on [lo, hi] (discontinuous)
    RectStep { lo: f64, hi: f64, height: f64 },
    /// -2 rho_c sin(alpha r)/(alpha r), r = |x|
    SincWell { rho_c: f64, alpha: f64 },
    /// two Gaussian mounds split at x = 0
    TwoGaussians,
    /// sin(2 pi x) + cos(2 pi y)
    SinPlusCos,
    /// 3 exp(-5 (x-0.9)^2 - 50 (y-0.5)^2)
    EllipticGaussian,
}

impl Omega {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            Omega::Zero => 0.0,
            Omega::Linear { a, b } => a * x + b * y,
            Omega::HalfSquare => 0.5 * x * x,
            Omega::Sine2Pi => (2.0 * std::f64::consts::PI * x).sin(),
            Omega::ChannelBump => {
                if (8.0..=12.0).contains(&x) {
                    0.2 - 0.05 * (x - 10.0) * (x - 10.0)
                } else {
                    0.0
                }
            }
            Omega::TwoCosineBumps => {
                let pi = std::f64::consts::PI;
                if (-0.4..=-0.2).contains(&x) {
                    0.5 * ((10.0 * pi * (x + 0.3)).cos() + 1.0)
                } else if (0.2..=0.4).contains(&x) {
                    0.75 * ((10.0 * pi * (x - 0.3)).cos() + 1.0)
                } else {
                    0.0
                }
            }
            Omega::RectStep { lo, hi, height } => {
                if (lo..=hi).contains(&x) {
                    height
                } else {
                    0.0
                }
            }
            Omega::SincWell { rho_c, alpha } => {
                let r = (x * x + y * y).sqrt();
                -2.0 * rho_c * sinc(alpha * r)
            }
            Omega::TwoGaussians => {
                if x < 0.0 {
                    0.5 * (-100.0 * ((x + 0.5) * (x + 0.5) + (y + 0.5) * (y + 0.5))).exp()
                } else {
                    0.6 * (-100.0 * ((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5))).exp()
                }
            }
            Omega::SinPlusCos => {
                let two_pi = 2.0 * std::f64::consts::PI;
                (two_pi * x).sin() + (two_pi * y).cos()
            }
            Omega::EllipticGaussian => {
                3.0 * (-5.0 * (x - 0.9) * (x - 0.9) - 50.0 * (y - 0.5) * (y - 0.5)).exp()
            }
        }
    }

    /// Gradient at interior points. Piecewise profiles return the gradient of
    /// the smooth piece containing (x, y); the step profile is flat a.e.
    pub fn grad(&self, x: f64, y: f64) -> [f64; 2] {
        match *self {
            Omega::Zero => [0.0, 0.0],
            Omega::Linear { a, b } => [a, b],
            Omega::HalfSquare => [x, 0.0],
            Omega::Sine2Pi => {
                let two_pi = 2.0 * std::f64::consts::PI;
                [two_pi * (two_pi * x).cos(), 0.0]
            }
            Omega::ChannelBump => {
                if (8.0..=12.0).contains(&x) {
                    [-0.1 * (x - 10.0), 0.0]
                } else {
                    [0.0, 0.0]
                }
            }
            Omega::TwoCosineBumps => {
                let pi = std::f64::consts::PI;
                if (-0.4..=-0.2).contains(&x) {
                    [-5.0 * pi * (10.0 * pi * (x + 0.3)).sin(), 0.0]
                } else if (0.2..=0.4).contains(&x) {
                    [-7.5 * pi * (10.0 * pi * (x - 0.3)).sin(), 0.0]
                } else {
                    [0.0, 0.0]
                }
            }
            Omega::RectStep { .. } => [0.0, 0.0],
            Omega::SincWell { rho_c, alpha } => {
                let r = (x * x + y * y).sqrt();
                let factor = -2.0 * rho_c * alpha * alpha * sinc_deriv_over_z(alpha * r);
                [factor * x, factor * y]
            }
            Omega::TwoGaussians => {
                if x < 0.0 {
                    let e = 0.5 * (-100.0 * ((x + 0.5) * (x + 0.5) + (y + 0.5) * (y + 0.5))).exp();
                    [-200.0 * (x + 0.5) * e, -200.0 * (y + 0.5) * e]
                } else {
                    let e = 0.6 * (-100.0 * ((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5))).exp();
                    [-200.0 * (x - 0.5) * e, -200.0 * (y - 0.5) * e]
                }
            }
            Omega::SinPlusCos => {
                let two_pi = 2.0 * std::f64::consts::PI;
                [two_pi * (two_pi * x).cos(), -two_pi * (two_pi * y).sin()]
            }
            Omega::EllipticGaussian => {
                let e = self.eval(x, y);
                [-10.0 * (x - 0.9) * e, -100.0 * (y - 0.5) * e]
            }
        }
    }

    /// One-sided value at a 1D face coordinate. `from_right` selects the
    /// limit from above. Only the step profile is actually discontinuous.
    pub fn eval_sided_1d(&self, x: f64, from_right: bool) -> f64 {
        match *self {
            Omega::RectStep { lo, hi, height } => {
                let inside = if from_right { x >= lo && x < hi } else { x > lo && x <= hi };
                if inside {
                    height
                } else {
                    0.0
                }
            }
            _ => self.eval(x, 0.0),
        }
    }

    /// Canonical name and parameters for config files and run hashes.
    pub fn describe(&self) -> String {
        match *self {
            Omega::Zero => "zero".to_string(),
            Omega::Linear { a, b } => format!("linear({a},{b})"),
            Omega::HalfSquare => "half-square".to_string(),
            Omega::Sine2Pi => "sine-2pi".to_string(),
            Omega::ChannelBump => "channel-bump".to_string(),
            Omega::TwoCosineBumps => "two-cosine-bumps".to_string(),
            Omega::RectStep { lo, hi, height } => format!("rect-step({lo},{hi},{height})"),
            Omega::SincWell { rho_c, alpha } => format!("sinc-well({rho_c},{alpha})"),
            Omega::TwoGaussians => "two-gaussians".to_string(),
            Omega::SinPlusCos => "sin-plus-cos".to_string(),
            Omega::EllipticGaussian => "elliptic-gaussian".to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_match_finite_differences() {
        let profiles = [
            Omega::Linear { a: 1.0, b: 0.5 },
            Omega::HalfSquare,
            Omega::Sine2Pi,
            Omega::ChannelBump,
            Omega::TwoCosineBumps,
            Omega::SincWell { rho_c: 1.0, alpha: (2.0 * std::f64::consts::PI).sqrt() },
            Omega::TwoGaussians,
            Omega::SinPlusCos,
            Omega::EllipticGaussian,
        ];
        let pts = [(0.31, 0.42), (-0.37, 0.11), (9.3, 0.0), (0.25, 0.75), (10.7, 0.0)];
        let h = 1e-6;
        for p in &profiles {
            for &(x, y) in &pts {
                let g = p.grad(x, y);
                let fdx = (p.eval(x + h, y) - p.eval(x - h, y)) / (2.0 * h);
                let fdy = (p.eval(x, y + h) - p.eval(x, y - h)) / (2.0 * h);
                assert!((g[0] - fdx).abs() <= 2e-5 * (1.0 + fdx.abs()), "{p:?} at ({x},{y})");
                assert!((g[1] - fdy).abs() <= 2e-5 * (1.0 + fdy.abs()), "{p:?} at ({x},{y})");
            }
        }
    }

    #[test]
    fn channel_bump_is_continuous_at_ends() {
        let b = Omega::ChannelBump;
        assert!((b.eval(8.0, 0.0)).abs() <= 1e-15);
        assert!((b.eval(12.0, 0.0)).abs() <= 1e-15);
        assert!((b.eval(10.0, 0.0) - 0.2).abs() <= 1e-15);
    }

    #[test]
    fn rect_step_sided_traces() {
        let b = Omega::RectStep { lo: 225.0, hi: 375.0, height: 8.0 };
        assert_eq!(b.eval_sided_1d(225.0, false), 0.0);
        assert_eq!(b.eval_sided_1d(225.0, true), 8.0);
        assert_eq!(b.eval_sided_1d(375.0, false), 8.0);
        assert_eq!(b.eval_sided_1d(375.0, true), 0.0);
        assert_eq!(b.eval_sided_1d(300.0, true), 8.0);
        assert_eq!(b.eval_sided_1d(100.0, false), 0.0);
    }

    #[test]
    fn sinc_well_is_smooth_at_origin() {
        let w = Omega::SincWell { rho_c: 1.0, alpha: (2.0 * std::f64::consts::PI).sqrt() };
        let g0 = w.grad(0.0, 0.0);
        assert_eq!(g0, [0.0, 0.0]);
        assert!((w.eval(0.0, 0.0) + 2.0).abs() <= 1e-12);
        // series and direct branches agree where they meet
        let z = 1e-4;
        assert!((sinc(z * 0.999) - (z * 0.999f64).sin() / (z * 0.999)).abs() < 1e-15);
    }
}
