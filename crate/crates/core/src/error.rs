use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} must be even and at least 8")]
    InvalidGrid(usize),
    #[error("grid mismatch: {0} vs {1}")]
    GridMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("time window [{lo}, {hi}] outside sampled range [{min}, {max}]")]
    WindowOutOfRange { lo: f64, hi: f64, min: f64, max: f64 },
    #[error("resolution too low: {0}")]
    Resolution(String),
    #[error("pipe placement failed: best min distance {best_distance:.4} (r0 would be {best_r0:.4})")]
    PlacementFailed { best_distance: f64, best_r0: f64 },
    #[error("degenerate flow chart: det grad Gamma = {det:.4} at t = {t:.4}")]
    DegenerateChart { det: f64, t: f64 },
    #[error("fixed point did not converge after {iters} iterations (last difference {diff:.3e})")]
    NoConvergence { iters: usize, diff: f64 },
    #[error("Nyquist violation: lambda * |m| = {freq} reaches the grid limit {limit}")]
    Nyquist { freq: f64, limit: f64 },
    #[error("degenerate phase gradient: |grad xi| = {value:.3e} below {bound:.3e}")]
    DegeneratePhase { value: f64, bound: f64 },
    #[error("amplitude radicand {value:.4e} not positive (step budget exceeded)")]
    Radicand { value: f64 },
    #[error("local Euler solve failed: {0}")]
    EulerSolve(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("inadmissible stage {stage}: {inequality} fails (margin {margin:.4e})")]
    Inadmissible { stage: usize, inequality: String, margin: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
