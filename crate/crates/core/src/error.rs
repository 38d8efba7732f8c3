//! Crate-wide error type.
//!
//! Variants are grouped the way the CLI maps them to exit codes: configuration
//! problems, malformed input data, physical-regime violations, and fit
//! failures are all distinguishable by the caller.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's arguments was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// The low-gain approximation does not hold for the requested operating
    /// point; multi-pair corrections are not modeled.
    #[error("regime error: mean pair number per pulse mu = {mu:.4e} >= 0.5; \
             the low-gain model is invalid here, reduce pump power or gamma_eff")]
    Regime { mu: f64 },

    /// Input data carry no usable structure (e.g. an all-zero histogram).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Nonlinear fit did not converge within the iteration budget.
    #[error("fit failed to converge after {iterations} iterations \
             (last residual norm {residual_norm:.6e})")]
    FitFailure {
        iterations: usize,
        residual_norm: f64,
    },

    /// The weighted design matrix is rank deficient.
    #[error("singular design: {0}")]
    SingularDesign(String),

    /// A fitted coefficient has the wrong sign for the physical model.
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    /// The accidental window is empty, so the coincidence-to-accidental
    /// ratio is undefined. Both raw counts are reported instead of a ratio.
    #[error("undefined CAR: accidental window is empty \
             (central counts = {central_counts}, accidental counts = {accidental_counts})")]
    UndefinedCar {
        central_counts: u64,
        accidental_counts: f64,
    },

    /// Repeated-measurement statistics need at least two repeats.
    #[error("insufficient repeats: got {got}, need at least 2")]
    InsufficientRepeats { got: usize },

    /// Run-configuration file problems (missing fields, bad values, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed data file, with the offending row when known.
    #[error("data error in {path}{}: {msg}", fmt_row(*.row))]
    Data {
        path: String,
        row: Option<usize>,
        msg: String,
    },

    /// A pipeline stage failed; carries the stage name and point context.
    #[error("stage '{stage}' failed ({context}): {source}")]
    Stage {
        stage: &'static str,
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_row(row: Option<usize>) -> String {
    match row {
        Some(r) => format!(", row {r}"),
        None => String::new(),
    }
}

impl Error {
    /// Wrap an error with pipeline stage context.
    pub fn in_stage(self, stage: &'static str, context: impl Into<String>) -> Self {
        Error::Stage {
            stage,
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
