use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("matrix is not Hermitian (asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },
    #[error("matrix is rank deficient (sigma_min/sigma_max = {ratio:e})")]
    RankDeficient { ratio: f64 },
    #[error("matrix is not positive semi-definite (lambda_min = {lambda_min:e})")]
    NotPsd { lambda_min: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("matrix is numerically singular")]
    Singular,
    #[error("matrix is not unitary (residual {residual:e})")]
    NotUnitary { residual: f64 },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("matrix is ill-conditioned (condition number {cond:e})")]
    IllConditioned { cond: f64 },
    #[error("target is not reduced to a non-negative diagonal")]
    NotReduced,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
