//! Gauss-Legendre quadrature on the reference interval [-1, 1].
//!
//! Nodes are the roots of the Legendre polynomial P_n, found by Newton
//! iteration from the Chebyshev initial guess; weights follow from
//! w_i = 2 / ((1 - x_i^2) P_n'(x_i)^2). An n-point rule integrates
//! polynomials of degree <= 2n - 1 exactly.

/// Value and derivative of the Legendre polynomial P_n at x.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for m in 1..n {
        let m = m as f64;
        let p_next = ((2.0 * m + 1.0) * x * p - m * p_prev) / (m + 1.0);
        p_prev = p;
        p = p_next;
    }
    // (1 - x^2) P_n' = n (P_{n-1} - x P_n)
    let dp = if (x.abs() - 1.0).abs() < 1e-30 {
        // limit value at the endpoints, only used defensively
        let n = n as f64;
        x.powi(n as i32 + 1) * n * (n + 1.0) / 2.0
    } else {
        n as f64 * (p_prev - x * p) / (1.0 - x * x)
    };
    (p, dp)
}

#[derive(Debug, Clone)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    /// n-point Gauss-Legendre rule on [-1, 1].
    ///
    /// Nodes are computed for one half of the interval and mirrored, so the
    /// rule is exactly symmetric: `nodes[n-1-i] == -nodes[i]` bitwise and the
    /// matching weights are identical. Sums of odd functions over the rule
    /// then cancel exactly when accumulated pairwise (see `sum_symmetric`).
    pub fn gauss_legendre(npts: usize) -> Self {
        assert!(npts >= 1, "quadrature rule needs at least one point");
        let mut nodes = vec![0.0; npts];
        let mut weights = vec![0.0; npts];
        let n = npts;
        for i in 0..n / 2 {
            // Chebyshev-like initial guess for the i-th root (descending order).
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-15 {
                    // a couple of polishing steps to reach round-off
                    let (p2, d2) = legendre(n, x);
                    x -= p2 / d2;
                    let (p3, d3) = legendre(n, x);
                    x -= p3 / d3;
                    dp = legendre(n, x).1;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // roots come out in descending magnitude; store positive side high
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = w;
            nodes[i] = -x;
            weights[i] = w;
        }
        if n % 2 == 1 {
            let (_, dp) = legendre(n, 0.0);
            nodes[n / 2] = 0.0;
            weights[n / 2] = 2.0 / (dp * dp);
        }
        Quadrature { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature sum accumulated symmetrically: mirrored node pairs are added
    /// together before the outer accumulation. For f odd in the node index the
    /// pair contributions cancel bitwise, which keeps projections of constants
    /// free of spurious odd-mode coefficients.
    pub fn sum_symmetric(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        let n = self.len();
        let mut total = if n % 2 == 1 { f(n / 2) } else { 0.0 };
        for i in 0..n / 2 {
            total += f(i) + f(n - 1 - i);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_rule_is_midpoint() {
        let q = Quadrature::gauss_legendre(1);
        assert_eq!(q.nodes, vec![0.0]);
        assert_eq!(q.weights, vec![2.0]);
    }

    #[test]
    fn two_point_rule_matches_closed_form() {
        let q = Quadrature::gauss_legendre(2);
        let r = 1.0 / 3.0_f64.sqrt();
        assert!((q.nodes[0] + r).abs() < 1e-15);
        assert!((q.nodes[1] - r).abs() < 1e-15);
        assert!((q.weights[0] - 1.0).abs() < 1e-15);
        assert!((q.weights[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn five_point_rule_integrates_x8() {
        let q = Quadrature::gauss_legendre(5);
        let integral: f64 = (0..5).map(|i| q.weights[i] * q.nodes[i].powi(8)).sum();
        assert!((integral - 2.0 / 9.0).abs() <= 1e-14);
    }

    #[test]
    fn exactness_up_to_degree_2n_minus_1() {
        for n in 1..=12 {
            let q = Quadrature::gauss_legendre(n);
            for p in 0..=(2 * n - 1) {
                let num: f64 = (0..n).map(|i| q.weights[i] * q.nodes[i].powi(p as i32)).sum();
                let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
                assert!(
                    (num - exact).abs() <= 2e-14,
                    "n = {n}, monomial degree {p}: {num} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn nodes_are_mirror_symmetric_bitwise() {
        for n in 1..=9 {
            let q = Quadrature::gauss_legendre(n);
            for i in 0..n {
                assert_eq!(q.nodes[i], -q.nodes[n - 1 - i]);
                assert_eq!(q.weights[i], q.weights[n - 1 - i]);
            }
        }
    }

    #[test]
    fn weights_sum_to_interval_length() {
        for n in 1..=12 {
            let q = Quadrature::gauss_legendre(n);
            let s: f64 = q.weights.iter().sum();
            assert!((s - 2.0).abs() <= 1e-14);
        }
    }
}
