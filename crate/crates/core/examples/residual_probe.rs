// Scaling probe: equilibrium residual of the 2D still-water case vs mesh.
use eqdg::mesh::Mesh2d;
use eqdg::model::Ripa2d;
use eqdg::omega::Omega;
use eqdg::scheme::SolverConfig;
use eqdg::solver2d::{Boundary2d, Init2d, Solver2d};
use std::sync::Arc;

fn main() {
    for n in [10usize, 20, 40, 80] {
        let mesh = Mesh2d::new(-1.0, 1.0, -1.0, 1.0, n, n).unwrap();
        let omega = Omega::TwoGaussians;
        let mut solver = Solver2d::new(
            Ripa2d::new(9.812),
            mesh,
            omega,
            [
                Boundary2d::SolidWall,
                Boundary2d::SolidWall,
                Boundary2d::SolidWall,
                Boundary2d::SolidWall,
            ],
            SolverConfig::default(),
        );
        solver
            .init(
                &Init2d::ConsFn(Arc::new(move |_x, _y, w| {
                    let h = 3.0 - w;
                    [h, 0.0, 0.0, h * 4.0 / 3.0]
                })),
                None,
            )
            .unwrap();
        solver.update_regimes(0.0).unwrap();
        let field = solver.field.clone();
        let eval = solver.rhs_stage(&field, 0.0).unwrap();
        let mut max = [0.0f64; 4];
        for cell in 0..solver.ctx.mesh.ncells() {
            for c in 0..4 {
                for m in 0..eval.rhs.nmodes {
                    max[c] = max[c].max(eval.rhs.coeffs(cell, c)[m].abs());
                }
            }
        }
        println!("n = {n:3}: residual by component {max:?}");
    }
}
