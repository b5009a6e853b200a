//! Error taxonomy for the whole crate.
//!
//! Variant names follow the domain vocabulary used throughout the library
//! (resonance, windows, spirals, contours) so that callers and the CLI can
//! report them verbatim.

use num_complex::Complex64;
use thiserror::Error;

/// Witness of a resonance: a slope pair `(i, j)` together with eigenvalues
/// `alpha` of `A_i` and `beta` of `A_j` whose ratio degenerates a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceWitness {
    pub i: usize,
    pub j: usize,
    pub delta: i64,
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl std::fmt::Display for ResonanceWitness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "blocks ({},{}) level {} with alpha={}, beta={}",
            self.i + 1,
            self.j + 1,
            self.delta,
            self.alpha,
            self.beta
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    // ---- core_algebra ----
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("ResonantSylvester: operator singular to tolerance (sigma_min={sigma_min:.3e}) at lambda={lambda}")]
    ResonantSylvester { lambda: Complex64, sigma_min: f64 },
    #[error("NotUnipotent: deviation {0:.3e} from unipotent block shape")]
    NotUnipotent(f64),
    #[error("NotNilpotent: deviation {0:.3e} from nilpotent block shape")]
    NotNilpotent(f64),
    #[error("EmptyWindow: no degree of the result is fully determined")]
    EmptyWindow,
    #[error("SingularMatrix: pivot {0:.3e} below tolerance")]
    SingularMatrix(f64),
    #[error("NonFinite: {0}")]
    NonFinite(String),
    #[error("ZeroArgument: {0}")]
    ZeroArgument(String),

    // ---- qsystem ----
    #[error("IllConditionedEigenproblem: {0}")]
    IllConditionedEigenproblem(String),
    #[error("WindowExhausted: {0}")]
    WindowExhausted(String),
    #[error("InvalidSystem: {0}")]
    InvalidSystem(String),

    // ---- summation ----
    #[error("ResonantDirection: direction at distance {distance:.3e} from resonance locus of {witness}")]
    ResonantDirection {
        witness: ResonanceWitness,
        distance: f64,
    },
    #[error("OnPoleSpiral: evaluation point on the pole spiral [-c;q] (distance {0:.3e})")]
    OnPoleSpiral(f64),
    #[error("BasepointOnSpiral: basepoint incompatible with directions (distance {0:.3e})")]
    BasepointOnSpiral(f64),
    #[error("GradedMismatch: {0}")]
    GradedMismatch(String),
    #[error("InsufficientData: {0}")]
    InsufficientData(String),

    // ---- galois ----
    #[error("ContourHitsResonance: resonance locus of {witness} at distance {distance:.3e} from the contour ring")]
    ContourHitsResonance {
        witness: ResonanceWitness,
        distance: f64,
    },
    #[error("BasepointIncompatible: {0}")]
    BasepointIncompatible(String),
    #[error("QuadratureNotConverged: doubling samples changed the result by {0:.3e}")]
    QuadratureNotConverged(f64),
    #[error("DunfordFailure: {0}")]
    DunfordFailure(String),
    #[error("MissingCharacterValue: no character value for eigenvalue class of {0}")]
    MissingCharacterValue(Complex64),

    // ---- reconstruction ----
    #[error("SingularTransferMap: condition estimate {0:.3e} beyond tolerance")]
    SingularTransferMap(f64),
    #[error("TargetOutsideRange: {0}")]
    TargetOutsideRange(String),
    #[error("UnsupportedGaugeSearch: only the identity constant gauge is supported")]
    UnsupportedGaugeSearch,

    // ---- cli / files ----
    #[error("ParseError: {0}")]
    Parse(String),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code class per the CLI contract: 2 for parse errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
