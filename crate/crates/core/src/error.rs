use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("truncation error: kernel mass {missing:e} lies outside the sampling grid")]
    Truncation { missing: f64 },
    #[error("law is not monostable: {0}")]
    NotMonostable(String),
    #[error("speed {c} is not in the admissible set (E_c > 0 on the whole window)")]
    NotAdmissible { c: f64 },
    #[error("critical speed not bracketed inside [{lo}, {hi}]")]
    ScanRange { lo: f64, hi: f64 },
    #[error("tail level {level:e} is unattainable: {reason}")]
    Level { level: f64, reason: String },
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("instability at t={t}: {diagnostic}")]
    Instability { t: f64, diagnostic: String },
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("stationarity not reached by t={horizon} (last increments {tail:?})")]
    NonConvergence {
        horizon: f64,
        tail: Vec<f64>,
        history: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
