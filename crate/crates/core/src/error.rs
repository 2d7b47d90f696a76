use crate::Position;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("vector dimension must be at least 1")]
    EmptyVector,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("plan set for agent {agent} is empty")]
    EmptyPlanSet { agent: usize },
    #[error("non-finite value in plan set for agent {agent}")]
    NonFinite { agent: usize },
    #[error("lambda must lie in [0, 1), got {0}")]
    InvalidLambda(f64),
    #[error("a tree needs at least one agent")]
    NoAgents,
    #[error("children per node must be at least 2, got {0}")]
    InvalidFanout(usize),
    #[error("{0}")]
    Config(&'static str),
    #[error("branch {branch} out of range, root has {degree} children")]
    BranchOutOfRange { branch: usize, degree: usize },
    #[error("position {0} does not exist in the topology")]
    UnknownPosition(Position),
    #[error("no plan set for agent {0}")]
    MissingPlans(usize),
    #[error("enumeration of {combinations} combinations exceeds the limit of {limit}")]
    EnumerationTooLarge { combinations: u128, limit: u128 },
}
