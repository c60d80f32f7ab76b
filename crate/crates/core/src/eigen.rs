//! Real eigendecomposition of small dense matrices via the Schur form.
//!
//! The characteristic limiter needs right-eigenvector matrices of interface
//! Jacobians (3x3 or 4x4). The matrices are expected to be diagonalizable
//! with real spectra; anything else is reported as `None` and callers fall
//! back to component-wise limiting.

use nalgebra::DMatrix;

/// Right eigenvectors (columns of R) and eigenvalues of `a`, or None if the
/// spectrum is not real and well-separated enough to extract.
pub fn real_eigen<const N: usize>(a: &[[f64; N]; N]) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let m = DMatrix::from_fn(N, N, |i, j| a[i][j]);
    let norm = m.amax().max(1.0);
    let schur = m.clone().try_schur(1e-13, 200)?;
    let (q, t) = schur.unpack();

    // 2x2 blocks on the diagonal of T indicate complex pairs
    for i in 0..N - 1 {
        if t[(i + 1, i)].abs() > 1e-9 * norm {
            return None;
        }
    }
    let eigvals: Vec<f64> = (0..N).map(|i| t[(i, i)]).collect();

    // null vector of the upper-triangular T - lambda_i I by back substitution
    let mut r = DMatrix::zeros(N, N);
    for (i, &lambda) in eigvals.iter().enumerate() {
        let mut y = vec![0.0; N];
        y[i] = 1.0;
        for j in (0..i).rev() {
            let mut s = 0.0;
            for k in (j + 1)..=i {
                s += t[(j, k)] * y[k];
            }
            let d = t[(j, j)] - lambda;
            if d.abs() <= 1e-12 * norm {
                // (near-)repeated eigenvalue: treat as defective
                return None;
            }
            y[j] = -s / d;
        }
        let x = &q * DMatrix::from_column_slice(N, 1, &y);
        let len = x.norm();
        if !(len > 0.0) {
            return None;
        }
        for row in 0..N {
            r[(row, i)] = x[(row, 0)] / len;
        }
    }

    // validate: A R = R diag(lambda) and R invertible
    let a_mat = DMatrix::from_fn(N, N, |i, j| a[i][j]);
    let lam = DMatrix::from_fn(N, N, |i, j| if i == j { eigvals[i] } else { 0.0 });
    let resid = (&a_mat * &r - &r * &lam).amax();
    if resid > 1e-8 * norm {
        return None;
    }
    Some((eigvals, r))
}
