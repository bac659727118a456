use thiserror::Error;

/// Errors surfaced by game construction, conversion, and solving.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("perfect recall violation: {0}")]
    PerfectRecallViolation(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("strategy enumeration would produce {count} strategies, over the cap of {cap}")]
    CombinatorialLimit { count: u128, cap: u128 },

    #[error("epsilon {eps} outside (0, {max}]")]
    InvalidEpsilon { eps: f64, max: f64 },

    #[error("realization plan touches the boundary: player {player} sequence `{label}` has mass {mass:e}")]
    BoundaryPlan {
        player: usize,
        label: String,
        mass: f64,
    },

    #[error("{0} outside the admissible domain")]
    DomainError(String),

    #[error("operation requires t <= 1, got t = {0}")]
    PhaseError(f64),

    #[error("generated game would have {leaves} terminal histories, over the cap of {cap}")]
    SizeLimit { leaves: u128, cap: u128 },

    #[error("start plan is not strictly above the perturbation at `{label}` (player {player})")]
    DivisionByZero { player: usize, label: String },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
