use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("label `{0}` not found in tensor")]
    LabelNotFound(String),

    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is empty")]
    EmptyMatrix,

    #[error("bond dimension cap must be at least 1")]
    InvalidChi,

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NonHermitian(f64),

    #[error("MPS is not injective: dominant fixed point has rank {rank} < {chi}")]
    RankDeficient { rank: usize, chi: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("unsupported Hamiltonian: {0}")]
    UnsupportedHamiltonian(String),

    #[error("MPO channel layout mismatch: {0}")]
    Layout(String),

    #[error("numerical inconsistency: {0}")]
    NumericalInconsistency(String),

    #[error("operator annihilates the state (norm {0:.3e})")]
    Annihilated(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear algebra backend failure: {0}")]
    Backend(String),
}

pub type Result<T> = std::result::Result<T, Error>;
