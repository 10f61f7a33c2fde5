use thiserror::Error;

use crate::geodesic::PathGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid size must be even and at least 8, got {0}")]
    InvalidSize(usize),
    #[error("expected {expected} values, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
}

/// The potential left the space of Kähler potentials (ρ ≤ margin somewhere).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("density {min_rho:.3e} at index {index} is not above the positivity margin {margin:.1e}")]
    Positivity {
        min_rho: f64,
        index: usize,
        margin: f64,
    },
    #[error("straight path leaves the space of potentials at tau = {tau}: {source}")]
    PathPositivity {
        tau: f64,
        #[source]
        source: Box<GeometryError>,
    },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("{which} endpoint is not a valid potential: {source}")]
    Endpoint {
        which: &'static str,
        #[source]
        source: GeometryError,
    },
    #[error("eps = {eps:.3e}: iterate left the convex cone (min rho {min_rho:.3e}, min phi_tt {min_phitt:.3e}) after {newton_steps} Newton steps")]
    Positivity {
        eps: f64,
        min_rho: f64,
        min_phitt: f64,
        newton_steps: usize,
        iterate: Box<PathGrid>,
    },
    #[error("eps = {eps:.3e}: Newton stalled at residual {residual:.3e} after {newton_steps} steps")]
    Convergence {
        eps: f64,
        residual: f64,
        newton_steps: usize,
        iterate: Box<PathGrid>,
    },
    #[error("invalid solver input: {0}")]
    Invalid(String),
}

impl SolveError {
    /// Regularization level at which the failure happened, if any.
    pub fn eps(&self) -> Option<f64> {
        match self {
            SolveError::Positivity { eps, .. } | SolveError::Convergence { eps, .. } => Some(*eps),
            _ => None,
        }
    }

    /// Last Newton iterate, for post-mortem inspection.
    pub fn iterate(&self) -> Option<&PathGrid> {
        match self {
            SolveError::Positivity { iterate, .. } | SolveError::Convergence { iterate, .. } => {
                Some(iterate)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("flow left the space of potentials at s = {s:.6e} (step size too large?): {source}")]
    Positivity {
        s: f64,
        #[source]
        source: GeometryError,
    },
    #[error("implicit step failed at s = {s:.6e}: {reason}")]
    Step { s: f64, reason: String },
    #[error("{quantity} increased by {increase:.3e} at s = {s:.6e}")]
    Monotonicity {
        quantity: &'static str,
        s: f64,
        increase: f64,
    },
    #[error("invalid flow input: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum LabError {
    #[error("geodesic solve for leg {leg} failed: {source}")]
    Solve {
        leg: String,
        #[source]
        source: SolveError,
    },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("Jacobi field is degenerate: |Y|(1) = {norm:.3e}")]
    Degenerate { norm: f64 },
    #[error("invalid experiment input: {0}")]
    Invalid(String),
}

impl LabError {
    pub(crate) fn leg(leg: impl Into<String>) -> impl FnOnce(SolveError) -> LabError {
        let leg = leg.into();
        move |source| LabError::Solve { leg, source }
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}")]
    Magic { expected: &'static str },
    #[error("truncated record")]
    Truncated,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
