use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, ClearingError>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClearingError {
    #[error("expected a {expected}x{expected} matrix, got {rows}x{cols}")]
    Shape {
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("{what}: expected length {expected}, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("network needs at least one bank")]
    EmptyNetwork,
    #[error("non-finite value at [{row}][{col}]")]
    NonFinite { row: usize, col: usize },
    #[error("negative value {value} at [{row}][{col}]")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("self-obligation {value} on the diagonal at [{index}][{index}]")]
    NonzeroDiagonal { index: usize, value: f64 },
    #[error("society has an obligation {value} at [0][{col}]")]
    SocietyLiability { col: usize, value: f64 },
    #[error("negative external asset {value} at [{index}]")]
    NegativeAsset { index: usize, value: f64 },
    #[error("singular clearing system (distressed set {distressed:?})")]
    Singular { distressed: Vec<usize> },
    #[error("fixed-point iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("Brownian-bridge drift evaluated at t = {t}, past the horizon guard")]
    HorizonGuard { t: f64 },
    #[error("step size {dt} fell below the floor {floor} at t = {t} ({context})")]
    StepUnderflow {
        t: f64,
        dt: f64,
        floor: f64,
        context: String,
    },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Non-fatal diagnostics. Solvers still return a result, but uniqueness or
/// boundedness of that result is no longer guaranteed.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Bank owes nothing to society (`L[i][0] == 0`); the network is not regular.
    NoSocietyObligation { node: usize, step: Option<i64> },
    /// Net cash flow falls below the level implied by interbank liabilities.
    CashFlowBelowInterbank {
        node: usize,
        step: Option<i64>,
        shortfall: f64,
    },
    /// Minimum relative obligation to society over active windows is not positive.
    NonPositiveSocietyShare { delta: f64 },
    /// Initial wealth is exactly zero for this node.
    ZeroInitialWealth { node: usize },
    /// The distress refinement loop hit its iteration cap at time `t`.
    DistressLoopCap { t: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::NoSocietyObligation { node, step } => match step {
                Some(s) => write!(f, "bank {node} owes nothing to society at step {s}; uniqueness not guaranteed"),
                None => write!(f, "bank {node} owes nothing to society; uniqueness not guaranteed"),
            },
            Warning::CashFlowBelowInterbank { node, step, shortfall } => write!(
                f,
                "node {node} cash flow is {shortfall} below its interbank level at step {}; uniqueness not guaranteed",
                step.unwrap_or(0)
            ),
            Warning::NonPositiveSocietyShare { delta } => write!(
                f,
                "minimum relative obligation to society is {delta}; uniqueness/boundedness unguaranteed"
            ),
            Warning::ZeroInitialWealth { node } => {
                write!(f, "node {node} starts with zero wealth")
            }
            Warning::DistressLoopCap { t } => {
                write!(f, "distress refinement loop hit its cap at t = {t}")
            }
        }
    }
}
