use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("density matrix trace is {trace}, expected 1")]
    NonUnitTrace { trace: f64 },

    #[error("Bloch vector norm {norm} lies outside the unit ball")]
    Unphysical { norm: f64 },

    #[error("state has vanishing purity Tr[rho^2] = {purity}")]
    ZeroNorm { purity: f64 },

    #[error("{what} is outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step size underflow at t = {t} s (rate magnitude {rate})")]
    StepUnderflow { t: f64, rate: f64 },

    #[error("integration invariant violated at t = {t} s: {what} = {value}")]
    IntegrationDefect { t: f64, what: &'static str, value: f64 },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid magnetization series: {0}")]
    InvalidSeries(String),

    #[error("degenerate Jacobian: {0}")]
    DegenerateJacobian(String),

    #[error("input is not a thermal state of the form I0 + eps*Iz (defect {defect})")]
    NotThermal { defect: f64 },

    #[error("need at least {needed} inputs, got {got}")]
    TooFewInputs { needed: usize, got: usize },
}
