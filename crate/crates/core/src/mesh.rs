//! Uniform interval and rectangular meshes.

use crate::error::{Error, Result};

/// Uniform partition of [x_min, x_max] into nx cells.
#[derive(Debug, Clone)]
pub struct Mesh1d {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub dx: f64,
}

impl Mesh1d {
    pub fn new(x_min: f64, x_max: f64, nx: usize) -> Result<Self> {
        if nx < 1 {
            return Err(Error::config(format!("mesh needs at least one cell, got nx = {nx}")));
        }
        if !(x_max > x_min) {
            return Err(Error::config(format!(
                "invalid extents: x_min = {x_min}, x_max = {x_max}"
            )));
        }
        Ok(Mesh1d {
            x_min,
            x_max,
            nx,
            dx: (x_max - x_min) / nx as f64,
        })
    }

    /// Coordinate of interface i (0..=nx).
    pub fn interface(&self, i: usize) -> f64 {
        if i == self.nx {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx
        }
    }

    pub fn center(&self, j: usize) -> f64 {
        self.x_min + (j as f64 + 0.5) * self.dx
    }

    /// Physical coordinate of reference point xi in cell j.
    pub fn point(&self, j: usize, xi: f64) -> f64 {
        self.center(j) + 0.5 * self.dx * xi
    }
}

/// Uniform rectangular grid of nx-by-ny cells.
#[derive(Debug, Clone)]
pub struct Mesh2d {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Mesh2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 1 || ny < 1 {
            return Err(Error::config(format!("mesh needs positive cell counts, got {nx} x {ny}")));
        }
        if !(x_max > x_min) || !(y_max > y_min) {
            return Err(Error::config("invalid rectangular extents".to_string()));
        }
        Ok(Mesh2d {
            x_min,
            x_max,
            y_min,
            y_max,
            nx,
            ny,
            dx: (x_max - x_min) / nx as f64,
            dy: (y_max - y_min) / ny as f64,
        })
    }

    pub fn ncells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x_min + (i as f64 + 0.5) * self.dx,
            self.y_min + (j as f64 + 0.5) * self.dy,
        )
    }

    pub fn x_interface(&self, i: usize) -> f64 {
        if i == self.nx {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx
        }
    }

    pub fn y_interface(&self, j: usize) -> f64 {
        if j == self.ny {
            self.y_max
        } else {
            self.y_min + j as f64 * self.dy
        }
    }

    pub fn point(&self, i: usize, j: usize, xi: f64, eta: f64) -> (f64, f64) {
        let (xc, yc) = self.center(i, j);
        (xc + 0.5 * self.dx * xi, yc + 0.5 * self.dy * eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_quarters() {
        let m = Mesh1d::new(0.0, 1.0, 4).unwrap();
        let expect = [0.0, 0.25, 0.5, 0.75, 1.0];
        for (i, &e) in expect.iter().enumerate() {
            assert!((m.interface(i) - e).abs() <= 1e-16);
        }
    }

    #[test]
    fn channel_spacing() {
        let m = Mesh1d::new(0.0, 25.0, 200).unwrap();
        assert_eq!(m.dx, 0.125);
    }

    #[test]
    fn single_cell() {
        let m = Mesh1d::new(8.0, 12.0, 1).unwrap();
        assert_eq!(m.interface(0), 8.0);
        assert_eq!(m.interface(1), 12.0);
        assert_eq!(m.center(0), 10.0);
    }

    #[test]
    fn bad_extents_are_rejected() {
        assert!(Mesh1d::new(1.0, 0.0, 4).is_err());
        assert!(Mesh1d::new(0.0, 1.0, 0).is_err());
        assert!(Mesh2d::new(0.0, 1.0, 0.0, 0.0, 2, 2).is_err());
    }

    #[test]
    fn partition_covers_domain_exactly() {
        let m = Mesh1d::new(-1.0, 1.0, 7).unwrap();
        assert_eq!(m.interface(0), -1.0);
        assert_eq!(m.interface(7), 1.0);
        for i in 0..7 {
            assert!(m.interface(i) < m.interface(i + 1));
        }
    }
}
