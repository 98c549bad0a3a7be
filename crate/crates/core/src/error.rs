use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("star-shape violation: {0}")]
    StarShape(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("incompressibility singularity: plane-strain matrix undefined for nu = {0}")]
    Incompressible(f64),

    #[error("conflicting constraints on dof {dof}: {first} vs {second}")]
    ConstraintConflict { dof: usize, first: f64, second: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_frame(self, frame: usize) -> Error {
        Error::Frame {
            frame,
            source: Box::new(self),
        }
    }
}
