use thiserror::Error;

/// Errors raised anywhere in the modelling, linearization and synthesis pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("longitudinal speed {speed} m/s is below the slip guard {v_min} m/s")]
    DegenerateSpeed { speed: f64, v_min: f64 },
    #[error("tire load must be positive, got {0} N")]
    NonpositiveLoad(f64),
    #[error("singular denominator in effective stiffness")]
    SingularDenominator,
    #[error("logistic bounds are empty: upper {upper} <= lower {lower}")]
    InvalidBounds { upper: f64, lower: f64 },
    #[error("axle geometry is singular (ell_f + ell_r = {0})")]
    SingularGeometry(f64),
    #[error("algebraic loop did not converge after {iterations} iterations (residual {residual:e})")]
    LoopDiverged { iterations: usize, residual: f64 },
    #[error("maneuver infeasible: {0}")]
    ManeuverInfeasible(&'static str),
    #[error("closed-loop simulation diverged at t = {time} s")]
    Diverged { time: f64 },
    #[error("I - D_sigma K_sigma is ill-conditioned (condition number {0:e})")]
    SingularLoop(f64),
    #[error("no matrix entry varies along the trajectory family")]
    DegenerateFamily,
    #[error("{0} varying parameters exceed the vertex-explosion guard of 12")]
    TooManyParameters(usize),
    #[error("invalid strip: need lambda_min < lambda_max < 0, got ({lambda_min}, {lambda_max})")]
    InvalidStrip { lambda_min: f64, lambda_max: f64 },
    #[error("semidefinite solver stalled after {iterations} iterations (best max eigenvalue {best:e})")]
    SolverStalled { iterations: usize, best: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
