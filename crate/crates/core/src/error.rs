use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed representation: {0}")]
    Representation(String),
    #[error("unsupported order n = {0}")]
    UnsupportedOrder(usize),
    #[error("input error: {0}")]
    Input(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("integrator failed near x = {x}: step size underflow (achieved error {achieved:e})")]
    Accuracy { x: f64, achieved: f64 },
    #[error("root search for k = {k}: {detail}")]
    RootSearch { k: usize, detail: String },
    #[error("multiple root suspected near lambda = {re} + {im}i for k = {k}")]
    Multiplicity { k: usize, re: f64, im: f64 },
    #[error("linear system is singular or ill-conditioned (pivot {pivot:e})")]
    Singular { pivot: f64 },
    #[error("residue circle around {re} + {im}i is too small or crowded (radius {radius:e})")]
    Radius { re: f64, im: f64, radius: f64 },
    #[error("weight matrix at {re} + {im}i violates the expected structure (off-pattern ratio {ratio:e})")]
    Structure { re: f64, im: f64, ratio: f64 },
    #[error("weight number vanishes at l = {l}, k = {k}")]
    DegenerateWeight { l: usize, k: usize },
    #[error("kernel evaluated too close to its pole (|lambda - mu| = {gap:e})")]
    PoleProximity { gap: f64 },
    #[error("solvability alarm at x = {x}: smallest singular value {sigma_min:e}")]
    Solvability { x: f64, sigma_min: f64 },
    #[error("asymptotic fit failed: {0}")]
    Fit(String),
    #[error("validation failed: {}", .0.join(", "))]
    Validation(Vec<String>),
    #[error("recovered coefficients are inconsistent: {0}")]
    Inconsistent(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Io { .. } | Error::Representation(_) | Error::UnsupportedOrder(_) => 2,
            Error::Validation(_) => 3,
            Error::Solvability { .. } => 4,
            Error::Fit(_) => 5,
            _ => 1,
        }
    }
}
