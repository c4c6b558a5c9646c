//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// `p` admits no factorization `p = n1 * n2` obeying the direction rule.
    #[error("no valid direction factorization for p = {0}")]
    NoValidFactorization(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Interior block of a subdomain form lost positive definiteness.
    #[error("singular interior block in subdomain {subdomain}: pivot {pivot:.3e} at local index {index}")]
    SingularInterior {
        subdomain: usize,
        index: usize,
        pivot: f64,
    },

    /// The complementary interface block eliminated for an `S̄` glob block is
    /// numerically singular.
    #[error("singular elimination block for glob {glob} in subdomain {subdomain}")]
    SingularEliminationBlock { glob: usize, subdomain: usize },

    /// The dual-dual block of the partially assembled operator must be PD.
    #[error("singular dual block in subdomain {subdomain} at level {level}")]
    SingularDualBlock { level: usize, subdomain: usize },

    /// Deluxe scaling needs the sum of the glob's Schur blocks to be PD.
    #[error("singular deluxe scaling sum on glob {0}")]
    SingularDeluxeSum(usize),

    /// PCG guard: `p^H S p` must be real for a Hermitian operator.
    #[error("non-Hermitian operator detected in PCG: relative imaginary part {0:.3e}")]
    NonHermitianDetected(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Dense oracle refuses configurations above its size cap.
    #[error("dense oracle size cap exceeded: {dofs} dofs > {cap}")]
    SizeCapExceeded { dofs: usize, cap: usize },

    /// The assembled primal (coarse-level) matrix must be PD.
    #[error("singular coarse matrix at level {0}")]
    SingularCoarseMatrix(usize),

    /// Multilevel merge needs the subdomain count per axis to halve cleanly.
    #[error("coarse level {level}: {n} subdomains per axis not divisible by the merge factor 2")]
    NotDivisible { level: usize, n: usize },

    #[error("eigenvalue solve failed on glob {0}")]
    EigenFailure(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
