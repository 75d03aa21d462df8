use num_complex::Complex64;
use thiserror::Error;

use crate::sim::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("kernel transform pole reached at lambda = {0}")]
    PoleReached(Complex64),

    #[error("the Dirac kernel has no density to discretize")]
    DiracNotDiscretizable,

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("no positive root of the frequency cubic")]
    NoPositiveRoot,

    #[error("no sign change of F - G on (0, {omega0}]: H(0) = {h_at_zero:e}, H(omega0) = {h_at_omega0:e}")]
    BracketNotFound {
        omega0: f64,
        h_at_zero: f64,
        h_at_omega0: f64,
    },

    #[error("singular linear system: {0}")]
    SingularSystem(&'static str),

    #[error("characteristic function vanishes on the contour after {nudges} nudges")]
    BoundaryRoot { nudges: usize },

    #[error("root polishing failed to converge: {0}")]
    ConvergenceFailure(String),

    #[error("no stability crossing found for E up to {e_max}")]
    NoCrossingFound { e_max: f64 },

    #[error("equilibrium is not stable at E = 0; no crossing to locate")]
    UnstableAtZero,

    #[error("non-simple root: |dG/dlambda| = {0:e}")]
    DegenerateRoot(f64),

    #[error("linear chain reduction requires an Erlang kernel")]
    NotErlang,

    #[error("step dt = {dt} too coarse for lag {lag} (need dt <= lag/20)")]
    StepTooCoarse { dt: f64, lag: f64 },

    #[error("simulation blew up at t = {time}")]
    BlowUp { time: f64, partial: Box<Trajectory> },

    #[error("population left the positive cone at t = {time}")]
    PositivityLost { time: f64, partial: Box<Trajectory> },

    #[error("trajectory too short for cycle metrics: {0}")]
    TooShort(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}
