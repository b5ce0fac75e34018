use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlatoonError {
    #[error("platoon needs at least one follower")]
    NoFollowers,

    #[error("asymmetry {name} = {value} is outside [0, 1]")]
    AsymmetryOutOfRange { name: &'static str, value: f64 },

    #[error("parameter {name} = {value} is invalid: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("agent index {agent} out of range for {n_vehicles} vehicles")]
    AgentOutOfRange { agent: usize, n_vehicles: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("phase {0} rad is outside the open interval (0, 2π)")]
    PhaseOutOfRange(f64),

    #[error("phase grid must be strictly increasing and non-empty")]
    InvalidPhaseGrid,

    #[error("parameters violate the circular stability conditions: {0}")]
    Unstable(String),

    #[error("velocity asymmetry beta_v = 0 makes the transient criterion singular")]
    SingularCriterion,

    #[error("no zero crossing of the last spacing error found within the trace")]
    NoCrossing,

    #[error("trace too short: {windows} full half-period window(s) fit, need at least 2")]
    TraceTooShort { windows: usize },

    #[error("trace diverged at t = {0}")]
    Diverged(f64),

    #[error("non-convergent tail: measured amplitude ratio {0} >= 1")]
    NonConvergentTail(f64),

    #[error("measured value is zero")]
    ZeroMeasurement,

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PlatoonError>;
