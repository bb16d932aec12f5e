use thiserror::Error;

/// Errors produced anywhere in the coupling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate critical point at x = {x:.6e} (F''(x) = {curvature:.3e})")]
    DegenerateCriticalPoint { x: f64, curvature: f64 },

    #[error("potential has no local minimum")]
    NoMinima,

    #[error("growth assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("grid invalid: {0}")]
    InvalidGrid(String),

    #[error("inverse iteration for eigenvalue {eigenvalue:.6e} did not converge (residual {residual:.3e})")]
    InverseIterationFailed { eigenvalue: f64, residual: f64 },

    #[error("truncation or resolution error: lambda_0 = {lambda0:.3e} exceeds 1e-8 * lambda_1 = {lambda1:.3e}")]
    Truncation { lambda0: f64, lambda1: f64 },

    #[error("inverse eigenvalue synthesis did not converge after {iterations} iterations (residual {residual:.3e}); try a different stationary distribution")]
    SynthesisDiverged { iterations: usize, residual: f64 },

    #[error("target spectrum is infeasible for the birth-death family: {0}")]
    InfeasibleSpectrum(String),

    #[error("eigenvector problem is defective or has repeated eigenvalue {0:.6e}")]
    DefectiveEigenvector(f64),

    #[error("eigenvalue mismatch at k = {k}: chain {chain:.10e} vs diffusion {diffusion:.10e}")]
    EigenvalueMismatch { k: usize, chain: f64, diffusion: f64 },

    #[error("positivity violated: min alpha = {0:.6e}")]
    NonPositiveAlpha(f64),

    #[error("alpha({state}, .) has total mass {mass:.15} instead of 1")]
    Normalization { state: usize, mass: f64 },

    #[error("state space too large: {0} product states (limit 1e6)")]
    TooLarge(usize),

    #[error("time step {dt:.3e} exceeds stability bound {bound:.3e}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("path blew up at t = {t:.4} (|x| = {x:.3e}); reduce dt")]
    BlowUp { t: f64, x: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("ensemble failed on {} path(s): {}", .0.len(), summarize_paths(.0))]
    Ensemble(Vec<(usize, String)>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize_paths(failures: &[(usize, String)]) -> String {
    failures
        .iter()
        .take(5)
        .map(|(i, msg)| format!("#{i}: {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
