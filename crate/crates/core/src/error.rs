use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the admissible domain of an operation.
    Domain(String),
    /// Requested interval is shorter than the minimal profile period.
    BelowMinimalLength { r: f64, r_max: f64 },
    /// Adaptive quadrature did not reach the requested tolerance.
    Quadrature { requested: f64, achieved: f64 },
    /// Potential or damping fails its structural checks.
    InvalidModel(String),
    Config(String),
    /// Asymptotic fit residual too large.
    Calibration { residual: f64 },
    /// Matrix D lost diagonal dominance.
    Degenerate(String),
    ProjectionFailure { iterations: usize, residual: f64 },
    OutOfDomain(String),
    /// Number of tracked zero crossings differs from the number of layers.
    Annihilation { found: usize, expected: usize },
    BlowUp { t: f64 },
    NoEquilibrium(String),
    Structural(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::BelowMinimalLength { r, r_max } => {
                write!(f, "below minimal length: ratio {r} exceeds {r_max}")
            }
            Error::Quadrature { requested, achieved } => write!(
                f,
                "quadrature did not converge: requested {requested:e}, achieved {achieved:e}"
            ),
            Error::InvalidModel(m) => write!(f, "invalid model: {m}"),
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Calibration { residual } => {
                write!(f, "asymptotic calibration residual {residual:e} too large")
            }
            Error::Degenerate(m) => write!(f, "degenerate configuration: {m}"),
            Error::ProjectionFailure { iterations, residual } => write!(
                f,
                "projection failed after {iterations} iterations (residual {residual:e})"
            ),
            Error::Annihilation { found, expected } => {
                write!(f, "crossing count {found} differs from {expected} layers")
            }
            Error::OutOfDomain(m) => write!(f, "left the layer domain: {m}"),
            Error::BlowUp { t } => write!(f, "non-finite state after t = {t}"),
            Error::NoEquilibrium(m) => write!(f, "no equilibrium: {m}"),
            Error::Structural(m) => write!(f, "structural error: {m}"),
        }
    }
}

impl core::error::Error for Error {}

impl Error {
    /// True for errors caused by the caller's configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidModel(_) | Error::Domain(_) | Error::BelowMinimalLength { .. }
        )
    }
}
