//! Numerical kernels shared by the estimators: Halton sequences, the inverse
//! normal CDF, central finite differences and a BFGS minimizer.

mod diff;
mod halton;
mod normal;
mod optimize;

use thiserror::Error;

pub use diff::{finite_diff_grad, finite_diff_jacobian};
pub use halton::{halton, halton_matrix, is_prime, HaltonConfig, HaltonDraws};
pub use normal::{inv_normal_cdf, normal_cdf, normal_two_sided_p};
pub use optimize::{bfgs_minimize, bfgs_minimize_with, ConvergenceStatus, Minimum, OptimizerOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("halton base {0} is not prime")]
    NonPrimeBase(u64),
    #[error("halton index must be >= 1")]
    ZeroIndex,
    #[error("invalid halton configuration: {0}")]
    InvalidHalton(String),
    #[error("inverse normal CDF is defined on (0, 1), got {0}")]
    Domain(f64),
    #[error("finite difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("non-finite objective while differencing coordinate {0}")]
    NonFiniteAt(usize),
    #[error("non-finite objective or gradient at the starting point")]
    NonFiniteStart,
    #[error("invalid optimizer options: {0}")]
    InvalidOptions(String),
}
