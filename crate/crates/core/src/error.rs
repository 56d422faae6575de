use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("Fock cutoff {dim} too small for |alpha|^2 = {mean_photons}: leakage {leakage:e}")]
    CutoffTooSmall {
        dim: usize,
        mean_photons: f64,
        leakage: f64,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("negative probability {0}")]
    NegativeProbability(f64),

    #[error("probabilities sum to {sum}, expected 1")]
    Normalization { sum: f64 },

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not symmetric (max deviation {0:e})")]
    NotSymmetric(f64),

    #[error("expectation value has imaginary part {0:e}")]
    ComplexExpectation(f64),

    #[error("invalid constellation: {0}")]
    InvalidConstellation(String),

    #[error("constellation points {first} and {second} coincide")]
    DuplicatePoint { first: usize, second: usize },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("density matrix has no eigenvalue above the clip threshold")]
    EmptySpectrum,

    #[error("{name} = {value} is out of range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("index {index} out of range for {len} constellation points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("covariance matrix of a standard QAM source deviates from standard form by {0:e}")]
    NonStandardForm(f64),

    #[error("standard-form reduction failed: residual {0:e}")]
    StandardForm(f64),

    #[error("unphysical covariance matrix: {0}")]
    Unphysical(String),

    #[error("kappa block violates the uncertainty relation (min eigenvalue {0:e})")]
    InfeasibleKappa(f64),

    #[error("no feasible kappa candidate found")]
    NoFeasiblePoint,

    #[error("entropy integral not converged: grid doubling changed I_AB by {0:e}")]
    IntegrationNotConverged(f64),

    #[error("key rate is not positive at zero excess noise")]
    NoPositiveRate,

    #[error("{0}")]
    Numerical(String),
}

impl Error {
    /// Short machine-readable class name.
    pub fn class(&self) -> &'static str {
        match self {
            Error::CutoffTooSmall { .. } => "cutoff_too_small",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NegativeProbability(_) => "negative_probability",
            Error::Normalization { .. } => "normalization",
            Error::NotHermitian(_) => "not_hermitian",
            Error::NotSymmetric(_) => "not_symmetric",
            Error::ComplexExpectation(_) => "complex_expectation",
            Error::InvalidConstellation(_) => "invalid_constellation",
            Error::DuplicatePoint { .. } => "duplicate_point",
            Error::Calibration(_) => "calibration",
            Error::EmptySpectrum => "empty_spectrum",
            Error::OutOfRange { .. } => "out_of_range",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::NonStandardForm(_) => "non_standard_form",
            Error::StandardForm(_) => "standard_form",
            Error::Unphysical(_) => "unphysical",
            Error::InfeasibleKappa(_) => "infeasible_kappa",
            Error::NoFeasiblePoint => "no_feasible_point",
            Error::IntegrationNotConverged(_) => "integration_not_converged",
            Error::NoPositiveRate => "no_positive_rate",
            Error::Numerical(_) => "numerical",
        }
    }

    /// True for errors caused by invalid user input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::NegativeProbability(_)
                | Error::Normalization { .. }
                | Error::InvalidConstellation(_)
                | Error::DuplicatePoint { .. }
                | Error::OutOfRange { .. }
                | Error::IndexOutOfRange { .. }
                | Error::CutoffTooSmall { .. }
        )
    }
}
