use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("basis size {size} exceeds configured maximum {max}")]
    BasisTooLarge { size: u128, max: u128 },

    #[error("quadrature node budget exceeded: {requested} nodes > budget {budget}")]
    NodeBudgetExceeded { requested: u128, budget: u128 },

    #[error("evaluation failed at quadrature node {node}: {reason}")]
    NodeEvaluation { node: usize, reason: String },

    #[error("definiteness certification failed for {matrix}: smallest eigenvalue {lambda_min:.3e}")]
    Certification { matrix: String, lambda_min: f64 },

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("system is not asymptotically stable (max Re(lambda) = {max_re:.3e})")]
    Unstable { max_re: f64 },

    #[error("Lyapunov solve residual {residual:.3e} above tolerance {tol:.3e}")]
    LyapunovResidual { residual: f64, tol: f64 },

    #[error("solver failed at t = {t:.6e}: {reason}")]
    Solver { t: f64, reason: String },

    #[error("singular pencil at s = {s} (condition estimate {cond:.3e})")]
    SingularPencil { s: String, cond: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
