use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {what}: {source}")]
    Parse {
        what: String,
        #[source]
        source: serde_json::Error,
    },

    /// A configuration value violates one of the model invariants.
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("invalid override `{key}`: {reason}")]
    Override { key: String, reason: String },

    #[error("body pitch {pitch} rad is at the Euler-angle singularity (|pitch| must stay below pi/2)")]
    GimbalLock { pitch: f64 },

    #[error("airspeed {airspeed} m/s is below the freestream floor of {floor} m/s required by the unsteady model")]
    DegenerateFreestream { airspeed: f64, floor: f64 },

    #[error("normalized time must be non-negative, got {0}")]
    NegativeNormalizedTime(f64),

    #[error("collocation matrix is singular (condition estimate {condition:e})")]
    Collocation { condition: f64 },

    #[error("mass matrix is not symmetric positive definite; check segment masses and inertias")]
    MassMatrix,

    #[error("constraint Gram matrix J M^-1 J^T is singular")]
    ConstraintDegenerate,

    #[error("unknown attachment point {0}")]
    UnknownAttachment(String),

    #[error("thruster mixing failed: {0}")]
    Mixing(String),

    #[error("state diverged at t = {time} s: `{component}` is not finite")]
    Divergence { time: f64, component: String },

    /// Any runtime failure, stamped with the simulation time it occurred at.
    #[error("simulation failed at t = {time} s: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("cannot write output: {0}")]
    Output(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for problems with the inputs (files, schema, invariants, overrides)
    /// as opposed to failures while integrating.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Parse { .. } | Error::Validation { .. } | Error::Override { .. }
        )
    }

    /// Simulation time attached to a runtime failure, if any.
    pub fn time(&self) -> Option<f64> {
        match self {
            Error::Divergence { time, .. } | Error::AtTime { time, .. } => Some(*time),
            _ => None,
        }
    }
}
