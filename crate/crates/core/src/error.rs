use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point has no image under the map")]
    Undefined,
    #[error("point lies on a non-differentiable interface of the map ({0})")]
    Interface(&'static str),
    #[error("jacobian is singular (|det J| = {0:e})")]
    SingularJacobian(f64),
    #[error("metric determinant is not finite or not positive ({0})")]
    SingularMetric(f64),
    #[error("material tensor is singular at grid index {0}")]
    SingularTensor(usize),
    #[error("in-plane permeability is singular at {0}")]
    SingularMu(String),
    #[error("polarization is not transverse: |pol·k|/(|pol||k|) = {0:e}")]
    NonTransversePolarization(f64),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("mode set is not orthonormal (max deviation {0:e} > {1:e})")]
    NonOrthonormalBasis(f64, f64),
    #[error("frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("tensor field is not z-invariant (cross block {0:e})")]
    NotZInvariant(f64),
    #[error("solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
