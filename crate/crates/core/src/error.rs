use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the solver. Variants carry enough context (cell/face
/// indices, coordinates) to locate the failure in the mesh.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-admissible state: {0}")]
    State(String),

    #[error("no equilibrium exists: {0}")]
    NoEquilibrium(String),

    #[error("iteration failed to converge: {0}")]
    Convergence(String),

    #[error("interface reconstruction failed at face {face} (x = {x:.6}): {source}")]
    Reconstruction {
        face: usize,
        x: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("stage solve failed in cell {cell}: {source}")]
    Stage {
        cell: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("time step failed at t = {t:.6} after {retries} dt halvings: {source}")]
    Step {
        t: f64,
        retries: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn in_cell(self, cell: usize) -> Self {
        Error::Stage {
            cell,
            source: Box::new(self),
        }
    }
}
