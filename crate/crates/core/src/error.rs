use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("n must be even (got {0})")]
    OddSize(usize),
    #[error("n must be at least 8 (got {0})")]
    TooSmall(usize),
    #[error("half width must be positive and finite (got {0})")]
    BadHalfWidth(f64),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("field contains non-finite values")]
    NonFinite,
    #[error("fields live on different grids")]
    Mismatch,
    #[error("unknown kernel id `{0}`")]
    UnknownKernel(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpsError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("weight order {0} outside [-64, 64]")]
    WeightOrder(f64),
    #[error("bessel order must be non-negative (got {0})")]
    NegativeOrder(f64),
    #[error("bessel scale must be positive (got {0})")]
    NonPositiveScale(f64),
    #[error("mollifier radius {delta} exceeds L/4 = {limit}")]
    MollifierTooWide { delta: f64, limit: f64 },
    #[error("mollifier radius {delta} spans fewer than 4 cells of width {spacing}")]
    MollifierTooNarrow { delta: f64, spacing: f64 },
    #[error("mollifier radius must be positive (got {0})")]
    MollifierRadius(f64),
    #[error("input has negative values (min {0:e})")]
    Negative(f64),
    #[error("mass {0:e} outside the admissible range")]
    Mass(f64),
    #[error("coefficient matrix is indefinite (min eigenvalue {value:e} at index {index})")]
    Indefinite { value: f64, index: usize },
    #[error("L^p exponent must be at least 1 (got {0})")]
    Exponent(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Ops(#[from] OpsError),
    #[error("time step underflow (dt = {dt:e}, lambda_max = {lambda_max:e})")]
    StepUnderflow { dt: f64, lambda_max: f64 },
    #[error("non-finite values after step {step} at t = {time}")]
    NonFinite { step: usize, time: f64 },
    #[error("undershoot {min:e} below tolerance at t = {time}")]
    Undershoot { min: f64, time: f64 },
    #[error("final time must be positive (got {0})")]
    BadHorizon(f64),
    #[error("cfl safety must lie in (0, 1] (got {0})")]
    BadCfl(f64),
}

impl From<GridError> for SolverError {
    fn from(e: GridError) -> Self {
        SolverError::Ops(OpsError::Grid(e))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{0}")]
    Input(String),
}

impl From<OpsError> for VerifyError {
    fn from(e: OpsError) -> Self {
        VerifyError::Solver(SolverError::Ops(e))
    }
}

impl From<GridError> for VerifyError {
    fn from(e: GridError) -> Self {
        VerifyError::Solver(SolverError::from(e))
    }
}
