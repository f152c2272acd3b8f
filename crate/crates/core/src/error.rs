use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A table or vector does not have the size implied by the MDP dimensions.
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A probability table or distribution violates its invariant.
    InvalidDistribution { what: &'static str, detail: String },
    /// A scalar parameter is outside its admissible range.
    InvalidParameter { what: &'static str, detail: String },
    /// `|S|·|X|·|A|` exceeds the dense storage cap.
    TooLarge { entries: usize, cap: usize },
    /// Exhaustive policy enumeration would exceed its budget.
    EnumerationTooLarge { required: f64, cap: usize },
    /// Value iteration did not reach the requested residual within its cap.
    NonConvergence { iterations: usize, residual: f64 },
    /// The linear system for an occupancy measure was singular or inaccurate.
    Singular { residual: f64 },
    /// A variational ascent produced a non-finite objective.
    AscentDiverged { step: usize, objective: f64 },
    /// NaN in an input.
    NotANumber { what: &'static str },
    Empty { what: &'static str },
    /// The trajectory has zero likelihood under every context.
    ZeroLikelihood,
    /// A theorem precondition does not hold for the given instance.
    Precondition { what: &'static str, detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected {expected} entries, found {found}"),
            Error::InvalidDistribution { what, detail } => {
                write!(f, "invalid distribution {what}: {detail}")
            }
            Error::InvalidParameter { what, detail } => {
                write!(f, "invalid parameter {what}: {detail}")
            }
            Error::TooLarge { entries, cap } => {
                write!(f, "instance has {entries} table entries, cap is {cap}")
            }
            Error::EnumerationTooLarge { required, cap } => write!(
                f,
                "instance too large for enumeration: needs {required:.3e} evaluations, cap is {cap}"
            ),
            Error::NonConvergence {
                iterations,
                residual,
            } => write!(
                f,
                "value iteration did not converge after {iterations} iterations (residual {residual:.3e})"
            ),
            Error::Singular { residual } => {
                write!(f, "occupancy linear system is singular (residual {residual:.3e})")
            }
            Error::AscentDiverged { step, objective } => {
                write!(f, "variational ascent diverged at step {step} (objective {objective})")
            }
            Error::NotANumber { what } => write!(f, "{what} contains NaN"),
            Error::Empty { what } => write!(f, "{what} is empty"),
            Error::ZeroLikelihood => {
                write!(f, "trajectory has zero likelihood under every context")
            }
            Error::Precondition { what, detail } => {
                write!(f, "precondition violated ({what}): {detail}")
            }
        }
    }
}

impl core::error::Error for Error {}
