//! Well-balanced discontinuous Galerkin solver for hyperbolic balance laws.
//!
//! The scheme approximates the *equilibrium variables* of each model in a
//! modal DG space instead of the conservative ones. Combined with a
//! hydrostatic-reconstruction interface flux this preserves moving
//! equilibria of the 1D Euler equations with gravity and of the Ripa model,
//! and hydrostatic equilibria in 2D, to round-off on any mesh.

pub mod basis;
pub mod error;
pub mod field;
pub mod mesh;
pub mod model;
pub mod omega;
pub mod eigen;
pub mod limiter;
pub mod quadrature;
pub mod scheme;
pub mod solver1d;
pub mod solver2d;

pub use error::{Error, Result};

/// Initialise the global worker pool, honouring `BALANCE_DG_THREADS`
/// (unset or 0 selects the core count). Returns the pool size. Safe to call
/// more than once.
pub fn init_threads() -> usize {
    let requested = std::env::var("BALANCE_DG_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(0);
    if requested > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(requested)
            .build_global();
    }
    rayon::current_num_threads()
}
