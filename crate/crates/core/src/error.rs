use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// One failed parameter inequality, with both sides evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (lhs = {}, rhs = {})", self.name, self.lhs, self.rhs)
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("parameter constraints violated: {}", format_violations(.0))]
    ConstraintViolation(Vec<Violation>),

    #[error("invalid parameter record: {0}")]
    InvalidParams(String),

    #[error("point {point:?} is not in the image of branch {branch} (excess {excess:e})")]
    BranchMiss {
        point: [f64; 3],
        branch: u8,
        excess: f64,
    },

    #[error("series depth {depth} is too small (available {available}, tail bound {tail:e})")]
    DepthTooSmall {
        depth: usize,
        available: usize,
        tail: f64,
    },

    #[error("operator is not a contraction: eta = {0}")]
    NotContracting(f64),

    #[error("fixed-point iteration did not converge within {0} sweeps")]
    NoConvergence(usize),

    #[error("transversality constant needs rho < 1/3, got rho = {0}")]
    InvalidRho(f64),

    #[error("audit depth {depth} is below the required {required}")]
    InsufficientDepth { depth: usize, required: usize },

    #[error("too few atoms per ball at r = {r}: {per_ball:.2} < {required}")]
    AtomStarvation {
        r: f64,
        per_ball: f64,
        required: f64,
    },

    #[error("invalid radius scan: {0}")]
    InvalidScan(String),

    #[error("decay fit degenerate: only {usable} usable points")]
    FitDegenerate { usable: usize },

    #[error("operation not available for this example: {0}")]
    Unsupported(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// Names of the violated constraints, empty for other variants.
    pub fn violated_names(&self) -> Vec<&str> {
        match self {
            Error::ConstraintViolation(v) => v.iter().map(|x| x.name.as_str()).collect(),
            _ => Vec::new(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
