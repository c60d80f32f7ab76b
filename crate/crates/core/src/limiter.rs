//! TVB minmod slope limiting on local characteristic fields of the
//! equilibrium variables.
//!
//! A cell is flagged when the minmod-modified interface deviations of the
//! characteristic variables differ from the unmodified ones; flagged cells
//! are reduced to their limited linear part (cell average untouched, modes
//! above degree one zeroed). On a constant field every deviation vanishes
//! and the limiter is the identity, so equilibria are never disturbed.

use crate::eigen::real_eigen;
use crate::model::BalanceLaw;
use nalgebra::DMatrix;

/// TVB-modified minmod: deviations below the threshold pass through.
pub fn tvb_minmod(a1: f64, a2: f64, a3: f64, threshold: f64) -> f64 {
    if a1.abs() <= threshold {
        return a1;
    }
    minmod(a1, a2, a3)
}

pub fn minmod(a1: f64, a2: f64, a3: f64) -> f64 {
    if a1 > 0.0 && a2 > 0.0 && a3 > 0.0 {
        a1.min(a2).min(a3)
    } else if a1 < 0.0 && a2 < 0.0 && a3 < 0.0 {
        a1.max(a2).max(a3)
    } else {
        0.0
    }
}

/// Change of basis for limiting: characteristic (from an interface Jacobian
/// eigen-decomposition) or component-wise.
pub enum CharMap {
    Identity,
    Matrix { r: DMatrix<f64>, rinv: DMatrix<f64> },
}

impl CharMap {
    /// Build the map at an interface mean state; falls back to the identity
    /// when the model opts out or the eigen-decomposition fails.
    pub fn build<M: BalanceLaw<N>, const N: usize>(
        model: &M,
        u_mean: &[f64; N],
        w_mean: f64,
        axis: usize,
    ) -> CharMap {
        let Some(a) = model.limiter_matrix(u_mean, w_mean, axis) else {
            return CharMap::Identity;
        };
        match real_eigen(&a).and_then(|(_, r)| {
            let rinv = r.clone().try_inverse()?;
            Some((r, rinv))
        }) {
            Some((r, rinv)) => CharMap::Matrix { r, rinv },
            None => {
                warn_component_fallback();
                CharMap::Identity
            }
        }
    }

    pub fn to_char<const N: usize>(&self, v: &[f64; N]) -> [f64; N] {
        match self {
            CharMap::Identity => *v,
            CharMap::Matrix { rinv, .. } => apply(rinv, v),
        }
    }

    pub fn from_char<const N: usize>(&self, v: &[f64; N]) -> [f64; N] {
        match self {
            CharMap::Identity => *v,
            CharMap::Matrix { r, .. } => apply(r, v),
        }
    }
}

fn apply<const N: usize>(m: &DMatrix<f64>, v: &[f64; N]) -> [f64; N] {
    let mut out = [0.0; N];
    for i in 0..N {
        let mut s = 0.0;
        for (j, vj) in v.iter().enumerate() {
            s += m[(i, j)] * vj;
        }
        out[i] = s;
    }
    out
}

fn warn_component_fallback() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| {
        eprintln!("warning: interface eigen-decomposition failed, limiting component-wise");
    });
}

/// Limit one cell in characteristic space.
///
/// Inputs are the deviations of the interface traces from the cell average
/// and the neighbour average differences; the output, when the cell is
/// flagged, is the limited linear deviation (at the right face) to rebuild
/// the slope from, averaged over the two faces.
pub struct CellLimit<const N: usize> {
    pub troubled: bool,
    pub slope_deviation: [f64; N],
}

#[allow(clippy::too_many_arguments)]
pub fn limit_cell<const N: usize>(
    map_l: &CharMap,
    map_r: &CharMap,
    dev_l: &[f64; N],
    dev_r: &[f64; N],
    dplus: &[f64; N],
    dminus: &[f64; N],
    threshold: f64,
) -> CellLimit<N> {
    let cl = map_l.to_char(dev_l);
    let cl_p = map_l.to_char(dplus);
    let cl_m = map_l.to_char(dminus);
    let cr = map_r.to_char(dev_r);
    let cr_p = map_r.to_char(dplus);
    let cr_m = map_r.to_char(dminus);

    let mut ml = [0.0; N];
    let mut mr = [0.0; N];
    let mut troubled = false;
    for i in 0..N {
        ml[i] = tvb_minmod(cl[i], cl_p[i], cl_m[i], threshold);
        mr[i] = tvb_minmod(cr[i], cr_p[i], cr_m[i], threshold);
        if ml[i] != cl[i] || mr[i] != cr[i] {
            troubled = true;
        }
    }
    if !troubled {
        return CellLimit { troubled: false, slope_deviation: [0.0; N] };
    }
    let dl = map_l.from_char(&ml);
    let dr = map_r.from_char(&mr);
    let mut slope = [0.0; N];
    for i in 0..N {
        slope[i] = 0.5 * (dl[i] + dr[i]);
    }
    CellLimit { troubled: true, slope_deviation: slope }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minmod_basics() {
        assert_eq!(minmod(0.5, 2.0, 1.0), 0.5);
        assert_eq!(minmod(-0.5, -2.0, -1.0), -0.5);
        assert_eq!(minmod(0.5, -2.0, 1.0), 0.0);
        assert_eq!(minmod(0.0, 2.0, 1.0), 0.0);
        assert_eq!(minmod(2.0, 0.5, 1.0), 0.5);
    }

    #[test]
    fn tvb_threshold_passes_small_deviations() {
        assert_eq!(tvb_minmod(0.01, -1.0, 1.0, 0.02), 0.01);
        assert_eq!(tvb_minmod(0.01, -1.0, 1.0, 0.001), 0.0);
    }

    #[test]
    fn zero_deviations_never_flag() {
        let id = CharMap::Identity;
        let out = limit_cell::<3>(&id, &id, &[0.0; 3], &[0.0; 3], &[1.0; 3], &[-1.0; 3], 0.0);
        assert!(!out.troubled);
    }

    #[test]
    fn sawtooth_averages_flag_a_sloped_cell() {
        // averages (+1, -1, +1): neighbour differences have mixed signs, so a
        // nonzero interface deviation must be cut to zero
        let id = CharMap::Identity;
        let dev = [0.5, 0.0, 0.0];
        let dplus = [2.0, 0.0, 0.0];
        let dminus = [-2.0, 0.0, 0.0];
        let out = limit_cell::<3>(&id, &id, &dev, &dev, &dplus, &dminus, 0.0);
        assert!(out.troubled);
        assert_eq!(out.slope_deviation[0], 0.0);
    }

    #[test]
    fn monotone_linear_data_is_untouched() {
        // linear field: deviation = s dx/2, neighbour differences = s dx
        let id = CharMap::Identity;
        let dev = [0.5, -0.25, 0.1];
        let dplus = [1.0, -0.5, 0.2];
        let dminus = [1.0, -0.5, 0.2];
        let out = limit_cell::<3>(&id, &id, &dev, &dev, &dplus, &dminus, 0.0);
        assert!(!out.troubled);
    }

    #[test]
    fn matrix_map_round_trips() {
        let r = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0]);
        let rinv = r.clone().try_inverse().unwrap();
        let map = CharMap::Matrix { r, rinv };
        let v = [0.3, -0.7, 0.2];
        let back = map.from_char(&map.to_char(&v));
        for i in 0..3 {
            assert!((back[i] - v[i]).abs() <= 1e-14);
        }
    }
}
