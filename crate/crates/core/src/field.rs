//! Modal coefficient storage for the DG unknowns.
//!
//! A `DgField` holds, per cell, the modal coefficients of every component of
//! the equilibrium-variable vector. Layout is cell-major then component:
//! `data[(cell * ncomp + comp) * nmodes + mode]`.

#[derive(Debug, Clone)]
pub struct DgField {
    pub ncells: usize,
    pub ncomp: usize,
    pub nmodes: usize,
    pub data: Vec<f64>,
}

impl DgField {
    pub fn zeros(ncells: usize, ncomp: usize, nmodes: usize) -> Self {
        DgField {
            ncells,
            ncomp,
            nmodes,
            data: vec![0.0; ncells * ncomp * nmodes],
        }
    }

    #[inline]
    pub fn coeffs(&self, cell: usize, comp: usize) -> &[f64] {
        let off = (cell * self.ncomp + comp) * self.nmodes;
        &self.data[off..off + self.nmodes]
    }

    #[inline]
    pub fn coeffs_mut(&mut self, cell: usize, comp: usize) -> &mut [f64] {
        let off = (cell * self.ncomp + comp) * self.nmodes;
        &mut self.data[off..off + self.nmodes]
    }

    /// All coefficients of one cell (ncomp x nmodes).
    #[inline]
    pub fn cell(&self, cell: usize) -> &[f64] {
        let stride = self.ncomp * self.nmodes;
        &self.data[cell * stride..(cell + 1) * stride]
    }

    #[inline]
    pub fn cell_mut(&mut self, cell: usize) -> &mut [f64] {
        let stride = self.ncomp * self.nmodes;
        &mut self.data[cell * stride..(cell + 1) * stride]
    }

    /// Disjoint mutable views of every cell, for parallel per-cell updates.
    pub fn cells_mut(&mut self) -> std::slice::ChunksMut<'_, f64> {
        self.data.chunks_mut(self.ncomp * self.nmodes)
    }

    /// Set one component to an exact constant: mode 0 carries the value, all
    /// higher modes are exactly zero in every cell.
    pub fn set_constant(&mut self, comp: usize, value: f64) {
        let c0 = crate::basis::Basis1d::constant_coefficient(value);
        for cell in 0..self.ncells {
            let co = self.coeffs_mut(cell, comp);
            co.fill(0.0);
            co[0] = c0;
        }
    }

    /// Value of one component at a point given the mode values there.
    #[inline]
    pub fn value(&self, cell: usize, comp: usize, phi: &[f64]) -> f64 {
        crate::basis::dot(self.coeffs(cell, comp), phi)
    }

    /// Evaluate every component at a point given the mode values there.
    #[inline]
    pub fn values(&self, cell: usize, phi: &[f64], out: &mut [f64]) {
        for comp in 0..self.ncomp {
            out[comp] = self.value(cell, comp, phi);
        }
    }

    /// a*x + b*y stored into self (used by the SSP-RK convex combinations).
    pub fn linear_combination(&mut self, a: f64, x: &DgField, b: f64, y: &DgField) {
        for ((d, xv), yv) in self.data.iter_mut().zip(&x.data).zip(&y.data) {
            *d = a * xv + b * yv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Tables1d;

    #[test]
    fn constant_component_evaluates_exactly() {
        let t = Tables1d::new(2, 5);
        let mut f = DgField::zeros(3, 2, 3);
        f.set_constant(1, 4.5);
        for cell in 0..3 {
            for q in 0..t.npts() {
                let v = f.value(cell, 1, t.phi_row(q));
                assert!((v - 4.5).abs() <= 1e-15);
            }
            // traces of the two neighbours agree bitwise
            let left = f.value(cell, 1, &t.phi_left);
            let right = f.value(cell, 1, &t.phi_right);
            assert_eq!(left, right);
        }
    }

    #[test]
    fn component_blocks_are_disjoint() {
        let mut f = DgField::zeros(2, 3, 3);
        f.coeffs_mut(1, 2)[0] = 7.0;
        assert_eq!(f.coeffs(1, 2)[0], 7.0);
        assert_eq!(f.coeffs(1, 1)[0], 0.0);
        assert_eq!(f.coeffs(0, 2)[0], 0.0);
    }
}
