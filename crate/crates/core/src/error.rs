use thiserror::Error;

/// Everything that can go wrong inside the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("kernel matrix is not diagonalizable (eigenvector condition estimate {condition:.3e})")]
    NonDiagonalizable { condition: f64 },

    #[error("kernel eigenvalue {index} has positive real part {real:.3e}; parameters are not dissipative")]
    GrowingMode { index: usize, real: f64 },

    #[error("exponent {exponent:.3e} in loop-amplitude propagation exceeds the representable range")]
    OverflowGuard { exponent: f64 },

    #[error("history does not cover step {step}")]
    HistoryGap { step: usize },

    #[error("loop integral I_{channel} = {value:.3e} is negative beyond tolerance")]
    NegativeLoopIntegral { channel: usize, value: f64 },

    #[error("selected {kind} jump has zero probability")]
    ZeroNormAfterJump { kind: &'static str },

    #[error("no-click probability {denominator:.3e} too small to condition on")]
    DegenerateConditioning { denominator: f64 },

    #[error("fast no-drive path not applicable: {0}")]
    FastPathNotApplicable(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
