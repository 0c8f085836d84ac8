use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RlsError {
    #[error("[dirac_algebra] degenerate input: {0}")]
    Degenerate(String),
    #[error("[dirac_algebra] resolvent pole: z = {0} lies on the spectrum of H0(q)")]
    Pole(Complex64),
    #[error("[green_kernel] kernel is singular at r = 0")]
    Singular,
    #[error("[green_kernel] spectral parameter {lambda} is not beyond the mass gap (m = {m})")]
    Threshold { lambda: f64, m: f64 },
    #[error("[green_kernel] no square-root branch of mu^2 - m^2 with positive imaginary part (mu = {0})")]
    Branch(Complex64),
    #[error("[green_kernel] quadrature budget exhausted: error estimate {estimate:e} above tolerance {tol:e}")]
    QuadratureBudget { estimate: f64, tol: f64 },
    #[error("[grid] invalid grid: {0}")]
    Grid(String),
    #[error("[potential] matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("[potential] invalid potential specification: {0}")]
    Potential(String),
    #[error("[rls_solver] memory budget: {points} grid points exceed the cap of {cap}")]
    MemoryBudget { points: usize, cap: usize },
    #[error("[rls_solver] near-singular system at lambda = {lambda}: sigma_min = {sigma:e} below threshold {threshold:e}")]
    Exceptional { lambda: f64, sigma: f64, threshold: f64 },
    #[error("[rls_solver] Born iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("[rls_solver] {0}")]
    Solver(String),
    #[error("[scattering] {0}")]
    Scattering(String),
    #[error("[dynamics] wave packet reached the grid boundary (edge weight {edge_weight:e}) at t = {t}")]
    BoxEscape { t: f64, edge_weight: f64 },
    #[error("[dynamics] {0}")]
    Dynamics(String),
    #[error("[cli_io] config: {0}")]
    Config(String),
    #[error("[cli_io] io: {0}")]
    Io(#[from] std::io::Error),
}

impl RlsError {
    /// Numerical failures (as opposed to bad input) map to a distinct exit status.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            RlsError::Exceptional { .. }
                | RlsError::NonConvergence { .. }
                | RlsError::QuadratureBudget { .. }
                | RlsError::BoxEscape { .. }
                | RlsError::Solver(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, RlsError>;
