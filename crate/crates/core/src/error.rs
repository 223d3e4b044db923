use crate::expr::RvId;

/// Faults raised by the symbolic runtime.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("random variable {0} is not bound in the symbolic state")]
    UnboundVariable(RvId),

    #[error("{parent} is not a parent of {child}")]
    NotParent { parent: RvId, child: RvId },

    #[error("division by zero while folding constants")]
    DivisionByZero,

    #[error("square root of negative constant {0}")]
    NegativeSqrt(f64),

    #[error("distribution parameter is not a constant: {0}")]
    NotClosed(String),

    #[error("invalid distribution parameter: {0}")]
    InvalidParam(String),

    #[error("dependency cycle detected among random variables")]
    CycleDetected,

    /// The `can_swap` assertion inside hoisting failed. This is a bug in the
    /// runtime, never a modeling error.
    #[error("internal invariant violated: swapping {parent} and {child} would create a cycle")]
    InternalCycle { parent: RvId, child: RvId },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("particle count must be at least 1")]
    InvalidParticleCount,

    #[error("every particle has zero weight (impossible observation)")]
    AllParticlesDead,

    #[error("operator {op} expects {expected} arguments, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
